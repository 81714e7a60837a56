"""btsnoop v1 capture files (the format Android's HCI snoop log writes).

All header and record fields are big-endian. Record timestamps count
microseconds from midnight, January 1st 0 AD; they are rebased to the Unix
epoch on read and back on write.
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path

from .errors import BadMagic, TruncatedRecord, UnsupportedDatalink, UnsupportedVersion
from .records import Direction, HciPacketType, RawHciRecord

logger = logging.getLogger(__name__)

MAGIC = b"btsnoop\x00"
VERSION = 1
DATALINK_HCI_UN = 1001
DATALINK_HCI_UART = 1002

# Same constant Wireshark's btsnoop reader uses.
EPOCH_OFFSET_US = 0x00DCDDB30F2F8000

_FILE_HEADER = struct.Struct(">8sII")
_RECORD_HEADER = struct.Struct(">IIIIq")

FLAG_RECEIVED = 0x01
FLAG_COMMAND_OR_EVENT = 0x02


def parse_btsnoop(data: bytes) -> list[RawHciRecord]:
    """Decode a whole btsnoop file held in memory.

    Records with an unknown H4 packet type (ISO, vendor) or an empty H4 frame
    are skipped; they carry nothing this toolkit labels.
    """
    if len(data) < _FILE_HEADER.size:
        raise BadMagic("file shorter than the 16-byte btsnoop header")
    magic, version, datalink = _FILE_HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"btsnoop version {version}")
    if datalink not in (DATALINK_HCI_UN, DATALINK_HCI_UART):
        raise UnsupportedDatalink(f"datalink {datalink}")

    records: list[RawHciRecord] = []
    offset = _FILE_HEADER.size
    end = len(data)
    skipped = 0
    while offset < end:
        if end - offset < _RECORD_HEADER.size:
            raise TruncatedRecord(offset, f"record header truncated at byte offset {offset}")
        _orig_len, incl_len, flags, _drops, ts = _RECORD_HEADER.unpack_from(data, offset)
        body_start = offset + _RECORD_HEADER.size
        if incl_len > end - body_start:
            raise TruncatedRecord(
                offset, f"record at byte offset {offset} declares {incl_len} bytes, "
                f"{end - body_start} remain"
            )
        body = data[body_start:body_start + incl_len]
        record_offset, offset = offset, body_start + incl_len

        direction = Direction.RECEIVED if flags & FLAG_RECEIVED else Direction.SENT
        timestamp_us = ts - EPOCH_OFFSET_US
        if timestamp_us < 0:
            logger.warning("record at byte offset %d predates the Unix epoch; clamped to 0",
                           record_offset)
            timestamp_us = 0

        if datalink == DATALINK_HCI_UART:
            if not body or body[0] not in HciPacketType._value2member_map_:
                skipped += 1
                continue
            ptype = HciPacketType(body[0])
            payload = body[1:]
        else:
            if flags & FLAG_COMMAND_OR_EVENT:
                ptype = HciPacketType.EVENT if direction is Direction.RECEIVED else HciPacketType.COMMAND
            else:
                ptype = HciPacketType.ACL_DATA
            payload = body
        records.append(RawHciRecord(timestamp_us, direction, ptype, payload))

    if skipped:
        logger.debug("skipped %d records with unknown H4 packet type", skipped)
    return records


def read_btsnoop(path: str | Path) -> list[RawHciRecord]:
    return parse_btsnoop(Path(path).read_bytes())


def file_header(datalink: int = DATALINK_HCI_UART) -> bytes:
    return _FILE_HEADER.pack(MAGIC, VERSION, datalink)


def encode_record(record: RawHciRecord) -> bytes:
    """Encode one record for an H4 (datalink 1002) file."""
    body = bytes([record.hci_packet_type]) + record.payload
    flags = FLAG_RECEIVED if record.direction is Direction.RECEIVED else 0
    if record.hci_packet_type in (HciPacketType.COMMAND, HciPacketType.EVENT):
        flags |= FLAG_COMMAND_OR_EVENT
    header = _RECORD_HEADER.pack(len(body), len(body), flags, 0,
                                 record.timestamp_us + EPOCH_OFFSET_US)
    return header + body


def write_btsnoop(records: list[RawHciRecord]) -> bytes:
    return file_header() + b"".join(encode_record(r) for r in records)
