"""Canonical JSONL: one PacketRecord per line.

    {"ts_us": 0, "dir": "sent", "proto": "RFCOMM", "len": 42, "session": "s1"}
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .errors import SchemaError
from .records import Direction, PacketRecord, Protocol

KEYS = ("ts_us", "dir", "proto", "len", "session")


def _is_int(v: object) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _record_from_obj(obj: object, line_no: int) -> PacketRecord:
    if not isinstance(obj, dict):
        raise SchemaError(line_no, "expected a JSON object")
    missing = [k for k in KEYS if k not in obj]
    if missing:
        raise SchemaError(line_no, f"missing keys {missing}")
    extra = sorted(set(obj) - set(KEYS))
    if extra:
        raise SchemaError(line_no, f"unexpected keys {extra}")
    ts, length = obj["ts_us"], obj["len"]
    if not _is_int(ts) or ts < 0:
        raise SchemaError(line_no, f"ts_us must be a non-negative integer, got {ts!r}")
    if not _is_int(length) or length < 0:
        raise SchemaError(line_no, f"len must be a non-negative integer, got {length!r}")
    try:
        direction = Direction(obj["dir"])
    except ValueError:
        raise SchemaError(line_no, f"dir must be 'sent' or 'received', got {obj['dir']!r}") from None
    try:
        proto = Protocol(obj["proto"])
    except ValueError:
        raise SchemaError(line_no, f"unknown proto {obj['proto']!r}") from None
    if not isinstance(obj["session"], str):
        raise SchemaError(line_no, "session must be a string")
    return PacketRecord(ts, direction, proto, length, obj["session"])


def read_canonical(text: str) -> list[PacketRecord]:
    records = []
    for line_no, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(line_no, f"invalid JSON: {exc.msg}") from None
        records.append(_record_from_obj(obj, line_no))
    return records


def record_to_obj(rec: PacketRecord) -> dict:
    return {
        "ts_us": rec.timestamp_us,
        "dir": rec.direction.value,
        "proto": rec.protocol.value,
        "len": rec.length_bytes,
        "session": rec.session_id,
    }


def write_canonical(records: Iterable[PacketRecord]) -> str:
    return "".join(json.dumps(record_to_obj(r), separators=(",", ":")) + "\n" for r in records)


def load_canonical(path: str | Path) -> list[PacketRecord]:
    return read_canonical(Path(path).read_text(encoding="utf-8"))
