import struct

from hypothesis import given, strategies as st

from btprint.l2cap import (CONNECTION_REQUEST, CONNECTION_RESPONSE, DISCONNECTION_REQUEST,
                           DISCONNECTION_RESPONSE, PB_CONTINUATION, PB_FIRST_FLUSHABLE,
                           L2capDemuxer, demux_protocols)
from btprint.records import Direction, HciPacketType, Protocol, RawHciRecord

from conftest import acl, l2cap, raw_acl

H = 0x000B


def sig(code, ident, body):
    return raw_acl(0, acl(H, PB_FIRST_FLUSHABLE, l2cap(1, struct.pack("<BBH", code, ident, len(body)) + body)))


def conn_req(psm, scid, ident=1):
    return sig(CONNECTION_REQUEST, ident, struct.pack("<HH", psm, scid))


def conn_rsp(dcid, scid, result=0, ident=1):
    r = sig(CONNECTION_RESPONSE, ident, struct.pack("<HHHH", dcid, scid, result, 0))
    return RawHciRecord(r.timestamp_us, Direction.RECEIVED, r.hci_packet_type, r.payload)


def data(cid, n=10, ts=5):
    return raw_acl(ts, acl(H, PB_FIRST_FLUSHABLE, l2cap(cid, bytes(n))))


def test_empty():
    assert demux_protocols([], "s") == []


def test_rfcomm_channel_labels_data():
    out = demux_protocols([conn_req(3, 0x40), conn_rsp(0x41, 0x40), data(0x41)], "s")
    assert [r.protocol for r in out] == [Protocol.RFCOMM]
    assert out[0].length_bytes == 4 + 4 + 10


def test_sdp_channel_both_cids():
    out = demux_protocols([conn_req(1, 0x40), conn_rsp(0x41, 0x40), data(0x41), data(0x40)], "s")
    assert [r.protocol for r in out] == [Protocol.SDP, Protocol.SDP]


def test_unnegotiated_cid_is_l2cap():
    assert demux_protocols([data(0x55)], "s")[0].protocol is Protocol.L2CAP


def test_failed_response_leaves_channel_closed():
    d = L2capDemuxer("s")
    for r in (conn_req(3, 0x40), conn_rsp(0x41, 0x40, result=2), data(0x41)):
        out = d.feed(r)
    assert out.protocol is Protocol.L2CAP
    assert d.open_channels() == [] and d.pending == {}


def test_pending_then_success():
    out = demux_protocols([conn_req(3, 0x40), conn_rsp(0x41, 0x40, result=1),
                           conn_rsp(0x41, 0x40), data(0x40)], "s")
    assert out[0].protocol is Protocol.RFCOMM


def test_disconnect_clears_table():
    d = L2capDemuxer("s")
    seq = [conn_req(3, 0x40), conn_rsp(0x41, 0x40),
           sig(DISCONNECTION_REQUEST, 2, struct.pack("<HH", 0x41, 0x40)),
           sig(DISCONNECTION_RESPONSE, 2, struct.pack("<HH", 0x41, 0x40))]
    for r in seq:
        d.feed(r)
    assert d.channels == {} and d.open_channels() == []
    assert d.feed(data(0x41)).protocol is Protocol.L2CAP


@given(st.lists(st.tuples(st.sampled_from([1, 3, 0x19]), st.integers(0x40, 0x7F)),
                max_size=8, unique_by=lambda t: t[1]))
def test_balanced_signaling_leaves_table_empty(chans):
    d = L2capDemuxer("s")
    for i, (psm, scid) in enumerate(chans):
        d.feed(conn_req(psm, scid, ident=i))
        d.feed(conn_rsp(scid + 0x100, scid, ident=i))
    for i, (_, scid) in enumerate(chans):
        d.feed(sig(DISCONNECTION_RESPONSE, i, struct.pack("<HH", scid + 0x100, scid)))
    assert d.channels == {} and d.pending == {}


def test_reassembly_of_fragments():
    pdu = l2cap(0x41, bytes(30))
    first = raw_acl(1, acl(H, PB_FIRST_FLUSHABLE, pdu[:12]))
    cont = raw_acl(7, acl(H, PB_CONTINUATION, pdu[12:]))
    d = L2capDemuxer("s")
    d.feed(conn_req(3, 0x40))
    d.feed(conn_rsp(0x41, 0x40))
    assert d.feed(first) is None
    rec = d.feed(cont)
    assert rec.protocol is Protocol.RFCOMM
    assert rec.timestamp_us == 7
    assert rec.length_bytes == len(first.payload) + len(cont.payload)


def test_orphan_continuation_and_malformed():
    out = demux_protocols([raw_acl(0, acl(H, PB_CONTINUATION, bytes(6))), raw_acl(0, b"\x01")], "s")
    assert [r.protocol for r in out] == [Protocol.HCI_ACL, Protocol.OTHER]


def test_non_acl_is_other():
    rec = RawHciRecord(0, Direction.RECEIVED, HciPacketType.EVENT, b"\x0e\x01\x00")
    assert demux_protocols([rec], "s")[0].protocol is Protocol.OTHER


def test_keep_signaling_emits_l2cap():
    out = demux_protocols([conn_req(3, 0x40)], "s", keep_signaling=True)
    assert [r.protocol for r in out] == [Protocol.L2CAP]
