from __future__ import annotations

import enum
from dataclasses import dataclass


class Direction(str, enum.Enum):
    SENT = "sent"
    RECEIVED = "received"


class HciPacketType(enum.IntEnum):
    COMMAND = 0x01
    ACL_DATA = 0x02
    SCO_DATA = 0x03
    EVENT = 0x04


class Protocol(str, enum.Enum):
    HCI_ACL = "HCI_ACL"
    L2CAP = "L2CAP"
    RFCOMM = "RFCOMM"
    SDP = "SDP"
    OTHER = "OTHER"


@dataclass(frozen=True)
class RawHciRecord:
    """One btsnoop record with the H4 type octet split off."""

    timestamp_us: int
    direction: Direction
    hci_packet_type: HciPacketType
    payload: bytes


@dataclass(frozen=True)
class PacketRecord:
    timestamp_us: int
    direction: Direction
    protocol: Protocol
    length_bytes: int
    session_id: str
