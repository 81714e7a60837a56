"""Stateful walk of HCI ACL -> L2CAP -> RFCOMM/SDP.

ACL fragments are reassembled per (connection handle, direction). Complete
PDUs on the signaling channel drive a per-link channel table; data PDUs are
labeled from the PSM their CID was negotiated against.
"""
from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass

from .records import Direction, HciPacketType, PacketRecord, Protocol, RawHciRecord

logger = logging.getLogger(__name__)

SIGNALING_CID = 0x0001

PSM_SDP = 0x0001
PSM_RFCOMM = 0x0003

CONNECTION_REQUEST = 0x02
CONNECTION_RESPONSE = 0x03
DISCONNECTION_REQUEST = 0x06
DISCONNECTION_RESPONSE = 0x07

RESULT_SUCCESS = 0x0000
RESULT_PENDING = 0x0001

# packet-boundary flag values in the ACL header
PB_FIRST_NON_FLUSHABLE = 0b00
PB_CONTINUATION = 0b01
PB_FIRST_FLUSHABLE = 0b10
PB_COMPLETE = 0b11

_PSM_LABELS = {PSM_SDP: Protocol.SDP, PSM_RFCOMM: Protocol.RFCOMM}


@dataclass
class L2capChannelState:
    cid_local: int
    cid_remote: int
    psm: int | None
    open: bool = True


@dataclass
class _Partial:
    timestamp_us: int
    expected: int
    data: bytearray
    hci_bytes: int


class L2capDemuxer:
    """Feed RawHciRecords in capture order; get labeled PacketRecords back.

    ``keep_signaling`` controls whether signaling-channel PDUs are emitted
    (as L2CAP) or consumed silently after updating the channel table.
    """

    def __init__(self, session_id: str, keep_signaling: bool = False):
        self.session_id = session_id
        self.keep_signaling = keep_signaling
        # handle -> cid -> channel; both CIDs of a channel point at one object
        self.channels: dict[int, dict[int, L2capChannelState]] = {}
        # (handle, requester's source CID) -> (psm, requester direction)
        self.pending: dict[tuple[int, int], tuple[int, Direction]] = {}
        self.diagnostics: Counter[str] = Counter()
        self._partials: dict[tuple[int, Direction], _Partial] = {}

    def open_channels(self) -> list[L2capChannelState]:
        seen: dict[int, L2capChannelState] = {}
        for table in self.channels.values():
            for ch in table.values():
                seen[id(ch)] = ch
        return list(seen.values())

    def feed(self, rec: RawHciRecord) -> PacketRecord | None:
        if rec.hci_packet_type is not HciPacketType.ACL_DATA:
            return self._emit(rec.timestamp_us, rec.direction, Protocol.OTHER, len(rec.payload))

        payload = rec.payload
        if len(payload) < 4:
            self.diagnostics["malformed_acl"] += 1
            return self._emit(rec.timestamp_us, rec.direction, Protocol.OTHER, len(payload))
        handle_flags, acl_len = struct.unpack_from("<HH", payload, 0)
        handle = handle_flags & 0x0FFF
        pb = (handle_flags >> 12) & 0x3
        data = payload[4:4 + acl_len]
        key = (handle, rec.direction)

        if pb == PB_CONTINUATION:
            partial = self._partials.get(key)
            if partial is None:
                self.diagnostics["orphan_continuation"] += 1
                return self._emit(rec.timestamp_us, rec.direction, Protocol.HCI_ACL, len(payload))
            partial.data += data
            partial.hci_bytes += len(payload)
            partial.timestamp_us = rec.timestamp_us
            if len(partial.data) < partial.expected:
                return None
            del self._partials[key]
            return self._complete(handle, rec.direction, partial.timestamp_us,
                                  bytes(partial.data[:partial.expected]), partial.hci_bytes)

        if key in self._partials:
            del self._partials[key]
            self.diagnostics["incomplete_pdu"] += 1
        if len(data) < 4:
            self.diagnostics["malformed_l2cap"] += 1
            return self._emit(rec.timestamp_us, rec.direction, Protocol.OTHER, len(payload))
        (l2cap_len,) = struct.unpack_from("<H", data, 0)
        expected = l2cap_len + 4
        if len(data) < expected:
            self._partials[key] = _Partial(rec.timestamp_us, expected, bytearray(data), len(payload))
            return None
        return self._complete(handle, rec.direction, rec.timestamp_us, data[:expected], len(payload))

    def finish(self) -> None:
        if self._partials:
            self.diagnostics["incomplete_pdu"] += len(self._partials)
            self._partials.clear()

    # -- internals

    def _emit(self, ts: int, direction: Direction, proto: Protocol, length: int) -> PacketRecord:
        return PacketRecord(ts, direction, proto, length, self.session_id)

    def _complete(self, handle: int, direction: Direction, ts: int, pdu: bytes,
                  hci_bytes: int) -> PacketRecord | None:
        cid = struct.unpack_from("<H", pdu, 2)[0]
        if cid == SIGNALING_CID:
            self._signaling(handle, direction, pdu[4:])
            if not self.keep_signaling:
                return None
            return self._emit(ts, direction, Protocol.L2CAP, hci_bytes)
        channel = self.channels.get(handle, {}).get(cid)
        proto = Protocol.L2CAP
        if channel is not None and channel.psm is not None:
            proto = _PSM_LABELS.get(channel.psm, Protocol.L2CAP)
        return self._emit(ts, direction, proto, hci_bytes)

    def _signaling(self, handle: int, direction: Direction, data: bytes) -> None:
        # a signaling PDU may carry several commands back to back
        pos = 0
        while len(data) - pos >= 4:
            code, _ident, length = struct.unpack_from("<BBH", data, pos)
            body = data[pos + 4:pos + 4 + length]
            pos += 4 + length
            if len(body) < length:
                self.diagnostics["truncated_signaling"] += 1
                return
            if code == CONNECTION_REQUEST and len(body) >= 4:
                psm, scid = struct.unpack_from("<HH", body, 0)
                self.pending[(handle, scid)] = (psm, direction)
            elif code == CONNECTION_RESPONSE and len(body) >= 6:
                dcid, scid, result = struct.unpack_from("<HHH", body, 0)
                self._connection_response(handle, dcid, scid, result)
            elif code in (DISCONNECTION_REQUEST, DISCONNECTION_RESPONSE) and len(body) >= 4:
                dcid, scid = struct.unpack_from("<HH", body, 0)
                if code == DISCONNECTION_RESPONSE:
                    self._close(handle, dcid, scid)

    def _connection_response(self, handle: int, dcid: int, scid: int, result: int) -> None:
        key = (handle, scid)
        if key not in self.pending:
            self.diagnostics["unmatched_response"] += 1
            return
        if result == RESULT_PENDING:
            return
        psm, req_direction = self.pending.pop(key)
        if result != RESULT_SUCCESS:
            return
        # the requester's SCID is local when the capturing host sent the request
        if req_direction is Direction.SENT:
            channel = L2capChannelState(cid_local=scid, cid_remote=dcid, psm=psm)
        else:
            channel = L2capChannelState(cid_local=dcid, cid_remote=scid, psm=psm)
        table = self.channels.setdefault(handle, {})
        for cid in (scid, dcid):
            old = table.get(cid)
            if old is not None:
                self._drop(table, old)
        table[scid] = channel
        table[dcid] = channel

    def _close(self, handle: int, dcid: int, scid: int) -> None:
        table = self.channels.get(handle)
        if not table:
            return
        for cid in (dcid, scid):
            channel = table.get(cid)
            if channel is not None:
                self._drop(table, channel)
        if not table:
            del self.channels[handle]

    @staticmethod
    def _drop(table: dict[int, L2capChannelState], channel: L2capChannelState) -> None:
        channel.open = False
        for cid in (channel.cid_local, channel.cid_remote):
            if table.get(cid) is channel:
                del table[cid]


def demux_protocols(records: list[RawHciRecord], session_id: str,
                    keep_signaling: bool = False) -> list[PacketRecord]:
    demuxer = L2capDemuxer(session_id, keep_signaling=keep_signaling)
    out = [r for r in map(demuxer.feed, records) if r is not None]
    demuxer.finish()
    if demuxer.diagnostics:
        logger.debug("demux %s diagnostics: %s", session_id, dict(demuxer.diagnostics))
    return out
