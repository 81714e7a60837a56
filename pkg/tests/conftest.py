import struct

import numpy as np
import pytest

from btprint.features import FilterSpec, Signature, N_BINS
from btprint.records import Direction, HciPacketType, PacketRecord, Protocol, RawHciRecord
from btprint.selection import LabeledSession
from btprint.synth import DeviceProfile, LengthBucket, LognormalComponent


def acl(handle, pb, body):
    return struct.pack("<HH", handle | (pb << 12), len(body)) + body


def l2cap(cid, body):
    return struct.pack("<HH", len(body), cid) + body


def raw_acl(ts, payload, direction=Direction.SENT):
    return RawHciRecord(ts, direction, HciPacketType.ACL_DATA, payload)


def packets(timestamps, proto=Protocol.RFCOMM, length=50, sid="s"):
    return [PacketRecord(int(t), Direction.SENT, proto, length, sid) for t in timestamps]


def point_mass_signature(bin_index, label, f=FilterSpec("all", 0), t_max=1.0, sid=""):
    v = np.zeros(N_BINS)
    v[bin_index] = 1.0
    return Signature(v, label, f, sid, t_max)


def simple_profile(name, mu, sigma=0.3, lengths=((1.0, 20, 200),), mix=None):
    return DeviceProfile(
        name=name,
        iat_model=(LognormalComponent(1.0, mu, sigma),),
        length_model=tuple(LengthBucket(w, lo, hi) for w, lo, hi in lengths),
        protocol_mix=tuple((mix or {Protocol.RFCOMM: 1.0}).items()),
    )


def sessions_from_profiles(profiles, n_sessions, n_messages, seed=0):
    from btprint.synth import generate_session
    out = []
    for pi, p in enumerate(profiles):
        for i in range(n_sessions):
            sid = f"{pi}-{i}"
            recs = generate_session(p, n_messages, seed * 100003 + pi * 1009 + i, session_id=sid)
            out.append(LabeledSession(sid, p.name, tuple(recs)))
    return out


@pytest.fixture
def separable_sessions():
    profiles = [simple_profile("fast", np.log(0.002), 0.1), simple_profile("slow", np.log(0.05), 0.1)]
    return sessions_from_profiles(profiles, 6, 60)


# lines recorded by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number, ok, text):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
