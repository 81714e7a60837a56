"""Seed-deterministic synthetic sessions and their btsnoop encoding.

A device profile is a lognormal mixture over inter-arrival times plus
categorical length and protocol models. Sessions written with
``emit_btsnoop`` carry an L2CAP signaling preamble, so parsing and
demultiplexing them recovers every record's protocol label.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .btsnoop import write_btsnoop
from .errors import InvalidProfile
from .l2cap import (CONNECTION_REQUEST, CONNECTION_RESPONSE, PB_CONTINUATION,
                    PB_FIRST_FLUSHABLE, PSM_RFCOMM, PSM_SDP, RESULT_SUCCESS, SIGNALING_CID)
from .records import Direction, HciPacketType, PacketRecord, Protocol, RawHciRecord

SYNTH_PROTOCOLS = (Protocol.L2CAP, Protocol.RFCOMM, Protocol.SDP)
_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class LognormalComponent:
    weight: float
    mu: float       # log-seconds
    sigma: float


@dataclass(frozen=True)
class LengthBucket:
    weight: float
    lo: int
    hi: int


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    iat_model: tuple[LognormalComponent, ...]
    length_model: tuple[LengthBucket, ...]
    protocol_mix: tuple[tuple[Protocol, float], ...]

    def validate(self) -> None:
        for what, weights in (("iat_model", [c.weight for c in self.iat_model]),
                              ("length_model", [b.weight for b in self.length_model]),
                              ("protocol_mix", [w for _, w in self.protocol_mix])):
            if not weights:
                raise InvalidProfile(f"{self.name}: {what} is empty")
            if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > _WEIGHT_TOL:
                raise InvalidProfile(f"{self.name}: {what} weights must be >= 0 and sum to 1")
        if any(not c.sigma > 0 for c in self.iat_model):
            raise InvalidProfile(f"{self.name}: lognormal sigmas must be > 0")
        if any(b.lo < 0 or b.hi < b.lo for b in self.length_model):
            raise InvalidProfile(f"{self.name}: length buckets need 0 <= lo <= hi")
        if any(p not in SYNTH_PROTOCOLS for p, _ in self.protocol_mix):
            raise InvalidProfile(f"{self.name}: protocol_mix is over L2CAP, RFCOMM, SDP")

    def iat_cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        pos = x > 0
        logx = np.log(x[pos])
        for c in self.iat_model:
            out[pos] += c.weight * ndtr((logx - c.mu) / c.sigma)
        return out

    def iat_mean(self) -> float:
        return float(sum(c.weight * np.exp(c.mu + c.sigma ** 2 / 2) for c in self.iat_model))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "iat_model": [{"weight": c.weight, "mu": c.mu, "sigma": c.sigma} for c in self.iat_model],
            "length_model": [{"weight": b.weight, "lo": b.lo, "hi": b.hi} for b in self.length_model],
            "protocol_mix": {p.value: w for p, w in self.protocol_mix},
        }

    @classmethod
    def from_json(cls, obj: dict) -> DeviceProfile:
        try:
            profile = cls(
                name=str(obj["name"]),
                iat_model=tuple(LognormalComponent(float(c["weight"]), float(c["mu"]),
                                                   float(c["sigma"])) for c in obj["iat_model"]),
                length_model=tuple(LengthBucket(float(b["weight"]), int(b["lo"]), int(b["hi"]))
                                   for b in obj["length_model"]),
                protocol_mix=tuple((Protocol(p), float(w)) for p, w in obj["protocol_mix"].items()),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidProfile(f"bad profile entry: {exc}") from None
        profile.validate()
        return profile


def load_fleet(path: str | Path | None = None) -> list[DeviceProfile]:
    """Profiles from a ``{"profiles": [...]}`` file; the bundled fleet if no path."""
    if path is None:
        text = resources.files("btprint").joinpath("data/default_fleet.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return [DeviceProfile.from_json(p) for p in json.loads(text)["profiles"]]


def default_fleet() -> list[DeviceProfile]:
    return load_fleet()


def fleet_to_json(profiles: Sequence[DeviceProfile]) -> dict:
    return {"profiles": [p.to_json() for p in profiles]}


def generate_session(p: DeviceProfile, n_messages: int, seed: int,
                     session_id: str | None = None) -> list[PacketRecord]:
    if n_messages < 2:
        raise ValueError("n_messages must be >= 2")
    p.validate()
    rng = np.random.default_rng(seed)
    sid = session_id if session_id is not None else f"{p.name}-{seed}"

    w = np.array([c.weight for c in p.iat_model])
    comp = rng.choice(len(w), size=n_messages - 1, p=w / w.sum())
    mu = np.array([c.mu for c in p.iat_model])[comp]
    sigma = np.array([c.sigma for c in p.iat_model])[comp]
    iat_s = np.exp(mu + sigma * rng.standard_normal(n_messages - 1))
    # round the running sum, not each gap, so rounding error does not accumulate
    ts = np.concatenate([[0], np.round(np.cumsum(iat_s) * 1e6)]).astype(np.int64)

    lw = np.array([b.weight for b in p.length_model])
    bucket = rng.choice(len(lw), size=n_messages, p=lw / lw.sum())
    lo = np.array([b.lo for b in p.length_model])[bucket]
    hi = np.array([b.hi for b in p.length_model])[bucket]
    lengths = rng.integers(lo, hi + 1)

    protos = [proto for proto, _ in p.protocol_mix]
    pw = np.array([wt for _, wt in p.protocol_mix])
    proto_idx = rng.choice(len(protos), size=n_messages, p=pw / pw.sum())

    directions = (Direction.SENT, Direction.RECEIVED)
    return [PacketRecord(int(ts[i]), directions[i % 2], protos[proto_idx[i]], int(lengths[i]), sid)
            for i in range(n_messages)]


# -- btsnoop encoding

DATA_HANDLE = 0x0001
ORPHAN_HANDLE = 0x0002      # carries HCI_ACL-only records as stray continuation fragments
UNNEGOTIATED_CID = 0x0070

# psm -> (local cid, remote cid)
_CHANNELS = {PSM_SDP: (0x0040, 0x0041), PSM_RFCOMM: (0x0042, 0x0043)}
_PROTO_PSM = {Protocol.SDP: PSM_SDP, Protocol.RFCOMM: PSM_RFCOMM}


def _acl(handle: int, pb: int, body: bytes) -> bytes:
    return struct.pack("<HH", handle | (pb << 12), len(body)) + body


def _l2cap(cid: int, body: bytes) -> bytes:
    return struct.pack("<HH", len(body), cid) + body


def _signaling_preamble(ts: int, psms: Sequence[int]) -> list[RawHciRecord]:
    out = []
    for ident, psm in enumerate(psms, start=1):
        local, remote = _CHANNELS[psm]
        req = struct.pack("<BBHHH", CONNECTION_REQUEST, ident, 4, psm, local)
        rsp = struct.pack("<BBHHHHH", CONNECTION_RESPONSE, ident, 8, remote, local,
                          RESULT_SUCCESS, 0)
        for direction, cmd in ((Direction.SENT, req), (Direction.RECEIVED, rsp)):
            pdu = _l2cap(SIGNALING_CID, cmd)
            out.append(RawHciRecord(ts, direction, HciPacketType.ACL_DATA,
                                    _acl(DATA_HANDLE, PB_FIRST_FLUSHABLE, pdu)))
    return out


def _encode_packet(rec: PacketRecord) -> RawHciRecord:
    n = rec.length_bytes
    if rec.protocol is Protocol.OTHER:
        payload = (bytes([0xFF, min(max(n - 2, 0), 255)]) + bytes(max(n - 2, 0)))[:n]
        return RawHciRecord(rec.timestamp_us, rec.direction, HciPacketType.EVENT, payload)
    if rec.protocol is Protocol.HCI_ACL:
        if n < 4:
            raise ValueError(f"HCI_ACL record needs >= 4 bytes, got {n}")
        payload = _acl(ORPHAN_HANDLE, PB_CONTINUATION, bytes(n - 4))
    else:
        if n < 8:
            raise ValueError(f"{rec.protocol.value} record needs >= 8 bytes, got {n}")
        if n - 4 > 0xFFFF:
            raise ValueError(f"record of {n} bytes exceeds one ACL packet")
        if rec.protocol is Protocol.L2CAP:
            cid = UNNEGOTIATED_CID
        else:
            local, remote = _CHANNELS[_PROTO_PSM[rec.protocol]]
            cid = remote if rec.direction is Direction.SENT else local
        payload = _acl(DATA_HANDLE, PB_FIRST_FLUSHABLE, _l2cap(cid, bytes(n - 8)))
    return RawHciRecord(rec.timestamp_us, rec.direction, HciPacketType.ACL_DATA, payload)


def to_raw_records(session: Sequence[PacketRecord]) -> list[RawHciRecord]:
    if not session:
        return []
    used = {r.protocol for r in session}
    psms = [psm for proto, psm in ((Protocol.SDP, PSM_SDP), (Protocol.RFCOMM, PSM_RFCOMM))
            if proto in used]
    return _signaling_preamble(session[0].timestamp_us, psms) + [_encode_packet(r) for r in session]


def emit_btsnoop(session: Sequence[PacketRecord]) -> bytes:
    return write_btsnoop(to_raw_records(session))
