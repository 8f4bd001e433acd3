"""Line-oriented JSON traces.

One JSON object per line.  The first line is a header; then one ``step``
record per step, one ``snapshot`` record per configuration, and the history
events and notes.  Values that JSON cannot represent directly are tagged
(``$tuple``, ``$cas``, ``$op``, ``$fs``) so a trace reloads to an equal
:class:`Execution`.
"""
from __future__ import annotations

import json
from typing import IO, Any, Iterator

from ..seq_spec import Op
from .engine import Event, Execution, NoteRecord, Step
from .memory import CasWord

FORMAT = "hiconc-trace/1"


def to_json(value: Any) -> Any:
    t = type(value)
    if value is None or t in (bool, int, str, float):
        return value
    if t is tuple:
        return {"$tuple": [to_json(v) for v in value]}
    if t is list:
        return [to_json(v) for v in value]
    if t is CasWord:
        return {"$cas": [to_json(value.val), value.context]}
    if t is Op:
        return {"$op": [value.name, [to_json(v) for v in value.args]]}
    if t is frozenset:
        items = [to_json(v) for v in value]
        items.sort(key=lambda x: json.dumps(x, sort_keys=True))
        return {"$fs": items}
    if t is dict:
        return {"$dict": [[to_json(k), to_json(v)] for k, v in value.items()]}
    raise TypeError(f"cannot serialize {value!r}")


def from_json(value: Any) -> Any:
    if isinstance(value, list):
        return [from_json(v) for v in value]
    if not isinstance(value, dict):
        return value
    (tag, body), = value.items()
    if tag == "$tuple":
        return tuple(from_json(v) for v in body)
    if tag == "$cas":
        return CasWord(from_json(body[0]), body[1])
    if tag == "$op":
        return Op(body[0], tuple(from_json(v) for v in body[1]))
    if tag == "$fs":
        return frozenset(from_json(v) for v in body)
    if tag == "$dict":
        return {from_json(k): from_json(v) for k, v in body}
    raise ValueError(f"unknown tag {tag!r}")


def _schedule_entry(e):
    return list(e) if isinstance(e, tuple) else e


def records(exe: Execution, header: dict | None = None) -> Iterator[dict]:
    head = {"type": "header", "format": FORMAT, "names": list(exe.names), "status": exe.status,
            "schedule": [_schedule_entry(e) for e in exe.schedule],
            "markers": sorted(exe.markers)}
    for k, v in (header or {}).items():
        head[k] = to_json(v)
    yield head
    for k, snap in enumerate(exe.memory):
        yield {"type": "snapshot", "index": k, "events": exe.marks[k], "states": [to_json(s) for s in snap]}
        if k < len(exe.steps):
            s = exe.steps[k]
            yield {"type": "step", "index": s.index, "process": s.process, "object": s.object, "kind": s.kind,
                   "args": [to_json(a) for a in s.args], "result": to_json(s.result), "op": s.opno}
    for ev in exe.events:
        yield {"type": "event", "process": ev.process, "kind": ev.kind, "value": to_json(ev.value),
               "op": ev.opno, "pos": ev.pos}
    for n in exe.notes:
        yield {"type": "note", "step": n.step, "events": n.events, "process": n.process, "op": n.opno, "tag": n.tag,
               "data": to_json(n.data)}


def dump(exe: Execution, fp: IO[str], header: dict | None = None) -> None:
    for rec in records(exe, header):
        fp.write(json.dumps(rec, sort_keys=True))
        fp.write("\n")


def dumps(exe: Execution, header: dict | None = None) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records(exe, header))


def load(fp: IO[str]) -> tuple[dict, Execution]:
    return loads(fp.read())


def loads(text: str) -> tuple[dict, Execution]:
    header: dict | None = None
    exe: Execution | None = None
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        kind = rec.pop("type")
        if kind == "header":
            if rec.get("format") != FORMAT:
                raise ValueError(f"unsupported trace format {rec.get('format')!r}")
            header = rec
            exe = Execution(names=tuple(rec["names"]), status=rec["status"],
                            schedule=[tuple(e) if isinstance(e, list) else e for e in rec["schedule"]])
            continue
        if exe is None:
            raise ValueError("trace does not start with a header")
        if kind == "snapshot":
            if rec["index"] != len(exe.memory):
                raise ValueError(f"snapshot {rec['index']} out of order")
            exe.memory.append(tuple(from_json(s) for s in rec["states"]))
            exe.marks.append(rec["events"])
        elif kind == "step":
            exe.steps.append(Step(rec["index"], rec["process"], rec["object"], rec["kind"],
                                  tuple(from_json(a) for a in rec["args"]), from_json(rec["result"]), rec["op"]))
        elif kind == "event":
            exe.events.append(Event(rec["process"], rec["kind"], from_json(rec["value"]), rec["op"], rec["pos"]))
        elif kind == "note":
            exe.notes.append(NoteRecord(rec["step"], rec["events"], rec["process"], rec["op"], rec["tag"],
                                        from_json(rec["data"])))
        else:
            raise ValueError(f"unknown record type {kind!r}")
    if exe is None or header is None:
        raise ValueError("empty trace")
    for k in header.get("markers", []):
        exe.markers[k] = exe.memory[k]
    return {k: from_json(v) for k, v in header.items()}, exe
