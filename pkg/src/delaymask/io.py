"""Reading and writing event streams (JSONL or CSV).

Every input record is checked against the event schema by hand, so a bad
line is reported with its 1-based line number without pulling in a
validation library at runtime. Times are stored in seconds; ``unit`` scales
them on the way in and back out.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from delaymask.errors import ConfigError, SchemaError
from delaymask.mechanism import Event, PostedEvent
from delaymask.queuemech import QueuePosting

UNITS = {"seconds": 1.0, "minutes": 60.0, "hours": 3600.0}
_BOOL = {"true": True, "false": False, "1": True, "0": False, "": None}


def unit_scale(unit: str) -> float:
    try:
        return UNITS[unit]
    except KeyError:
        raise ConfigError(f"unknown unit {unit!r}; expected one of {sorted(UNITS)}") from None


def _fmt(path, fmt):
    if fmt is not None:
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "jsonl"


def _event(rec, line, scale):
    if not isinstance(rec, dict):
        raise SchemaError("record must be a JSON object", line)
    for key in ("id", "actor", "item"):
        if not isinstance(rec.get(key), str):
            raise SchemaError(f"field {key!r} must be a string", line)
    t = rec.get("t")
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t) or t < 0:
        raise SchemaError("field 't' must be a non-negative finite number", line)
    flag = rec.get("declared_batch")
    if flag is not None and not isinstance(flag, bool):
        raise SchemaError("field 'declared_batch' must be a boolean", line)
    return Event(rec["id"], rec["actor"], rec["item"], float(t) * scale, flag)


def _csv_records(fh):
    reader = csv.DictReader(fh)
    missing = {"id", "actor", "item", "t"} - set(reader.fieldnames or ())
    if missing:
        raise SchemaError(f"CSV header lacks {sorted(missing)}", 1)
    for row in reader:
        rec: dict = dict(row)
        line = reader.line_num
        try:
            rec["t"] = float(row["t"])
        except (TypeError, ValueError):
            raise SchemaError("field 't' must be a number", line) from None
        raw = (row.get("declared_batch") or "").strip().lower()
        if raw not in _BOOL:
            raise SchemaError("field 'declared_batch' must be true or false", line)
        rec["declared_batch"] = _BOOL[raw]
        yield line, rec


def _jsonl_records(fh):
    for line, text in enumerate(fh, start=1):
        if not text.strip():
            continue
        try:
            yield line, json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc.msg}", line) from None


def read_events(path, unit: str = "seconds", fmt: str | None = None) -> list[Event]:
    """Events in file order. ``fmt`` defaults to the file extension."""
    scale = unit_scale(unit)
    with open(path, newline="", encoding="utf-8") as fh:
        records = _csv_records(fh) if _fmt(path, fmt) == "csv" else _jsonl_records(fh)
        return [_event(rec, line, scale) for line, rec in records]


def posted_record(p: PostedEvent, scale: float = 1.0) -> dict:
    e = p.event
    rec = {"id": e.id, "actor": e.actor, "item": e.item, "t": e.t / scale}
    if e.declared_batch is not None:
        rec["declared_batch"] = e.declared_batch
    rec.update(batched=p.batched, delay=p.delay / scale, post_t=p.post_t / scale)
    if p.flags:
        rec["flags"] = list(p.flags)
    return rec


def queue_record(q: QueuePosting, batched: bool = False, scale: float = 1.0) -> dict:
    """Queue postings carry step numbers; ``batched`` marks steps with several arrivals."""
    e: Event = q.item
    return {"id": e.id, "actor": e.actor, "item": e.item, "t": e.t / scale,
            "batched": batched, "delay": float(q.delay), "post_t": float(q.post_step)}


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=False) + "\n")


def write_posted(path, posted: Sequence[PostedEvent], unit: str = "seconds") -> None:
    scale = unit_scale(unit)
    write_jsonl(path, (posted_record(p, scale) for p in posted))


def read_posted(path, unit: str = "seconds") -> list[PostedEvent]:
    scale = unit_scale(unit)
    out = []
    with open(path, encoding="utf-8") as fh:
        for line, rec in _jsonl_records(fh):
            e = _event(rec, line, scale)
            try:
                out.append(PostedEvent(e, bool(rec["batched"]), float(rec["delay"]) * scale,
                                       float(rec["post_t"]) * scale, tuple(rec.get("flags", ()))))
            except (KeyError, TypeError, ValueError):
                raise SchemaError("posted record needs 'batched', 'delay' and 'post_t'", line) from None
    return out


def write_truth(path, truth) -> None:
    write_jsonl(path, ({"pair": sorted(p)} for p in sorted(truth, key=sorted)))


def read_truth(path) -> set[frozenset]:
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line, rec in _jsonl_records(fh):
            pair = rec.get("pair") if isinstance(rec, dict) else None
            if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, str) for x in pair)):
                raise SchemaError("truth record must be {\"pair\": [id, id]}", line)
            out.add(frozenset(pair))
    return out


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
