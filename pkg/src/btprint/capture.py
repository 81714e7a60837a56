"""One capture file -> one session of PacketRecords.

``.jsonl`` / ``.json`` files are canonical JSONL, anything else is btsnoop.
The session id is the file name without its extension.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

from .btsnoop import parse_btsnoop
from .canonical import read_canonical
from .l2cap import demux_protocols
from .records import PacketRecord

CANONICAL_SUFFIXES = (".jsonl", ".json")


def session_id_for(path: str | Path) -> str:
    return Path(path).stem


def load_capture(path: str | Path) -> list[PacketRecord]:
    path = Path(path)
    sid = session_id_for(path)
    if path.suffix.lower() in CANONICAL_SUFFIXES:
        records = read_canonical(path.read_text(encoding="utf-8"))
        return [r if r.session_id == sid else dataclasses.replace(r, session_id=sid)
                for r in records]
    return demux_protocols(parse_btsnoop(path.read_bytes()), sid)
