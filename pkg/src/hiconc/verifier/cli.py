"""Command line: run scenarios, record and replay traces.

    hiconc run all --report report.json
    hiconc run alg4_bounds --mode native
    hiconc record alg2:K=3,v0=1 -p "1:write(2),write(1)" -p "2:read()" -s 1,1,2,2 -o t.jsonl
    hiconc replay t.jsonl
"""
from __future__ import annotations

import argparse
import ast
import json
import re
import sys
from typing import Any, Sequence

from ..base_memory import trace
from ..base_memory.engine import RoleError, ScheduleError, run, run_to_completion
from ..base_memory.memory import Memory
from ..hi_registers import REGISTERS, HISet
from ..rllsc import RLLSC
from ..seq_spec import Op, make_spec, op, parse_params
from ..universal import Universal
from .explore import Bounds
from .scenarios import SCENARIOS, get


def make_object(text: str, mem: Memory):
    """Build an object from ``kind:key=value,...``.

    Kinds: ``alg1|alg2|alg4|maxreg:K=..,v0=..``, ``hiset:t=..``,
    ``rllsc:n=..,v0=..`` and ``universal:n=../<spec>`` where ``<spec>`` is a
    specification string such as ``counter:modulus=8``.
    """
    head, _, spec_text = text.partition("/")
    kind, _, params = head.partition(":")
    kw = parse_params(params)
    if kind in REGISTERS:
        return REGISTERS[kind](mem, kw.get("K", 3), kw.get("v0", 1))
    if kind == "hiset":
        return HISet(mem, kw.get("t", 3))
    if kind == "rllsc":
        return RLLSC(mem, kw.get("n", 2), kw.get("v0", 0), "X")
    if kind == "universal":
        if not spec_text:
            raise ValueError("universal needs a specification, e.g. universal:n=2/counter")
        return Universal(mem, make_spec(spec_text), kw.get("n", 2))
    raise ValueError(f"unknown object kind {kind!r}")


_CALL = re.compile(r"\s*([A-Za-z_]\w*)\s*\(([^()]*)\)\s*")


def parse_program(text: str) -> tuple[int, list[Op]]:
    """``"2:write(3),read()"`` becomes ``(2, [write(3), read()])``."""
    pid_text, sep, body = text.partition(":")
    if not sep:
        raise ValueError(f"program {text!r} must look like pid:op(args),...")
    ops = []
    pos = 0
    while pos < len(body):
        m = _CALL.match(body, pos)
        if m is None:
            raise ValueError(f"cannot parse operation at {body[pos:]!r}")
        args = ast.literal_eval(f"({m.group(2)},)") if m.group(2).strip() else ()
        ops.append(op(m.group(1), *args))
        pos = m.end()
        if pos < len(body):
            if body[pos] != ",":
                raise ValueError(f"expected ',' at {body[pos:]!r}")
            pos += 1
    return int(pid_text), ops


def parse_schedule(text: str) -> list:
    """``"1,1,2/0,2"``: a pid per step, ``pid/branch`` at a choice."""
    out: list = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        pid, _, branch = part.partition("/")
        out.append((int(pid), int(branch)) if branch else int(pid))
    return out


def _programs_json(programs: dict) -> dict:
    return {str(pid): [trace.to_json(o) for o in prog] for pid, prog in programs.items()}


def _programs_from_json(data: dict) -> dict:
    return {int(pid): [trace.from_json(o) for o in prog] for pid, prog in data.items()}


def _print_report(rep, out) -> None:
    status = "ok" if rep.ok else "UNEXPECTED " + ", ".join(rep.unexpected)
    flag = " (partial coverage)" if rep.partial else ""
    print(f"{rep.scenario:24s} {rep.mode:6s} {status}{flag}  executions={rep.executions_explored} "
          f"runtime={rep.runtime:.2f}s", file=out)
    for name, value in rep.verdicts.items():
        mark = "" if rep.expected.get(name) == value else "  <-- expected " + str(rep.expected.get(name))
        print(f"    {name:32s} {value}{mark}", file=out)
    for note in rep.notes:
        print(f"    note: {note}", file=out)


def cmd_run(args) -> int:
    names = list(SCENARIOS) if args.scenario == "all" else [args.scenario]
    bounds = Bounds.parse(args.bounds)
    reports = []
    for name in names:
        scenario = get(name)
        if args.mode not in scenario.modes:
            if args.scenario == "all":
                continue
            print(f"{name}: no {args.mode} mode (available: {', '.join(scenario.modes)})", file=sys.stderr)
            return 2
        rep = scenario.run(bounds, args.mode)
        _print_report(rep, sys.stdout)
        sys.stdout.flush()
        reports.append(rep)
    if args.report:
        doc: Any = reports[0].as_dict() if len(reports) == 1 else {
            "scenarios": [r.as_dict() for r in reports], "ok": all(r.ok for r in reports)}
        with open(args.report, "w") as fp:
            json.dump(doc, fp, indent=2, default=repr)
    return 0 if all(r.ok for r in reports) else 1


def cmd_list(args) -> int:
    for name, s in SCENARIOS.items():
        print(f"{name:24s} [{'/'.join(s.modes)}] {s.summary}")
    return 0


def cmd_record(args) -> int:
    programs = dict(parse_program(p) for p in args.program)
    mem = Memory()
    obj = make_object(args.object, mem)
    if args.schedule is None:
        exe = run_to_completion(mem, obj, programs)
    else:
        exe = run(mem, obj, programs, parse_schedule(args.schedule))
    header = {"object": args.object, "programs": _programs_json(programs)}
    if args.output == "-":
        trace.dump(exe, sys.stdout, header)
    else:
        with open(args.output, "w") as fp:
            trace.dump(exe, fp, header)
        print(f"{len(exe.steps)} steps, status {exe.status}, written to {args.output}")
    return 0


def cmd_replay(args) -> int:
    with open(args.trace) as fp:
        header, recorded = trace.load(fp)
    print(f"trace: {len(recorded.steps)} steps, {len(recorded.events)} events, status {recorded.status}")
    if "object" not in header or "programs" not in header:
        print("no object/programs in header; the trace was loaded but cannot be re-executed")
        return 0
    mem = Memory()
    obj = make_object(header["object"], mem)
    try:
        again = run(mem, obj, _programs_from_json(header["programs"]), recorded.schedule)
    except ScheduleError as err:
        print(f"replay failed: {err}")
        return 1
    same = (again.memory == recorded.memory and again.events == recorded.events
            and again.steps == recorded.steps)
    print(f"replayed {header['object']}: {'identical' if same else 'DIFFERS from the recording'}")
    if args.verbose:
        for k, snap in enumerate(again.memory):
            step = f"  {again.steps[k - 1].process}:{again.steps[k - 1].kind}" if k else ""
            print(f"  [{k:3d}]{step:14s} {snap}")
    return 0 if same else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiconc", description="Explore and check history-independent objects.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario (or all) and compare verdicts with expectations")
    p.add_argument("scenario", choices=["all", *SCENARIOS])
    p.add_argument("--bounds", help="steps=N,preemptions=K,executions=M (unset means unlimited)")
    p.add_argument("--mode", choices=["engine", "native"], default="engine")
    p.add_argument("--report", help="write a JSON report here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list", help="list scenarios")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("record", help="execute programs on an object and write a trace")
    p.add_argument("object", help="e.g. alg2:K=3,v0=1 or universal:n=2/counter:modulus=8")
    p.add_argument("-p", "--program", action="append", required=True, help='e.g. "1:write(2),write(1)"')
    p.add_argument("-s", "--schedule", help="comma-separated pids, pid/branch at choices; default runs to completion")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("replay", help="re-execute a recorded trace and compare")
    p.add_argument("trace")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, ScheduleError, RoleError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
