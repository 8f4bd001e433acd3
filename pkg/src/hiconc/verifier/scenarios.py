"""Scenario library.

A scenario builds objects, explores (or drives) their executions, and
reports named boolean verdicts next to the verdicts it expects.  Some
expected verdicts are ``False`` on purpose: the baseline register is not
HI, the lock-free register is not wait-free, and the wait-free register is
not state-quiescent HI.
"""
from __future__ import annotations

import bisect
import itertools
import random
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from ..base_memory.engine import Execution, run, run_to_completion
from ..base_memory.memory import CasWord, Memory, distance
from ..base_memory.native import NativeMemory, run_native
from ..hi_registers import READER, WRITER, BaselineRegister, HISet, LockFreeRegister, WaitFreeRegister
from ..rllsc import CONTEXT_RESETTING, RLLSC, rllsc_spec
from ..seq_spec import SequentialSpec, counter_spec, op, register_spec, run_ops
from ..universal import Universal, is_response
from .explore import Bounds, Explorer
from .hi import BruteForceOracle, HIChecker, Predicate
from .linearizability import (Linearizable, check_linearizable, history_key, linearization_states,
                              validate_linearization)


@dataclass
class Report:
    scenario: str
    mode: str = "engine"
    verdicts: dict[str, bool] = field(default_factory=dict)
    expected: dict[str, bool] = field(default_factory=dict)
    executions_explored: int = 0
    witnesses: dict[str, Any] = field(default_factory=dict)
    metrics: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    partial: bool = False
    runtime: float = 0.0

    @property
    def unexpected(self) -> list[str]:
        names = sorted(set(self.expected) | set(self.verdicts))
        return [k for k in names if self.verdicts.get(k) != self.expected.get(k)]

    @property
    def ok(self) -> bool:
        return not self.unexpected

    def as_dict(self) -> dict:
        return {"scenario": self.scenario, "mode": self.mode, "executions_explored": self.executions_explored,
                "verdicts": dict(self.verdicts), "expected": dict(self.expected), "unexpected": self.unexpected,
                "witnesses": self.witnesses, "metrics": self.metrics, "notes": list(self.notes),
                "partial": self.partial, "runtime": round(self.runtime, 3)}


@dataclass(frozen=True)
class Scenario:
    name: str
    summary: str
    expected: dict
    runner: Callable[[Report, Bounds], None]
    bounds: Bounds = Bounds()
    native: Callable[[Report, Bounds], None] | None = None

    @property
    def modes(self) -> tuple[str, ...]:
        return ("engine", "native") if self.native else ("engine",)

    def run(self, bounds: Bounds | None = None, mode: str = "engine") -> Report:
        """Run in ``mode``; fields of ``bounds`` that are set override the defaults."""
        if mode not in self.modes:
            raise ValueError(f"scenario {self.name} supports modes {', '.join(self.modes)}, not {mode!r}")
        merged = self.bounds
        if bounds is not None:
            merged = Bounds(*(b if b is not None else d for b, d in
                              zip((bounds.max_steps, bounds.max_preemptions, bounds.max_executions),
                                  (merged.max_steps, merged.max_preemptions, merged.max_executions))))
        report = Report(self.name, mode)
        start = time.perf_counter()
        (self.runner if mode == "engine" else self.native)(report, merged)
        report.runtime = time.perf_counter() - start
        if mode == "engine":
            report.expected = dict(self.expected)
        else:
            report.expected = {k: True for k in report.verdicts}
        return report


# -- shared plumbing ---------------------------------------------------------


def _schedule(exe: Execution, upto: int | None = None) -> list:
    moves = exe.schedule if upto is None else exe.schedule[:upto]
    return [list(m) if isinstance(m, tuple) else m for m in moves]


def _case_name(programs: dict) -> str:
    return "; ".join(f"p{pid}: {', '.join(map(repr, prog))}" for pid, prog in sorted(programs.items()))


class _LinMemo:
    """Brute-force linearizability of complete histories, memoized by history."""

    def __init__(self, spec: SequentialSpec) -> None:
        self.spec = spec
        self.memo: dict = {}
        self.failure: Execution | None = None

    def check(self, exe: Execution):
        key = history_key(exe.events)
        res = self.memo.get(key)
        if res is None:
            res = self.memo[key] = check_linearizable(exe.events, self.spec)
        if not res and self.failure is None:
            self.failure = exe.copy()
        return res


def _explore(report: Report, explorer: Explorer, visit: Callable[[Execution], None]) -> None:
    for exe in explorer:
        visit(exe)
    st = explorer.stats
    report.executions_explored += st.executions
    report.partial = report.partial or st.partial
    m = report.metrics
    for k in ("states", "steps", "complete", "merged", "truncated", "stutters"):
        m[k] = m.get(k, 0) + getattr(st, k)
    m["cycles"] = m.get("cycles", 0) + len(st.cycles)
    m["livelocks"] = m.get("livelocks", 0) + len(st.livelocks)


def _register_build(cls, K: int, v0: int):
    def build():
        mem = Memory()
        return mem, cls(mem, K, v0)
    return build


def _hi_failure(verdict) -> dict:
    return verdict.as_dict()


# -- baseline register counterexample ---------------------------------------


def _alg1_counterexample(report: Report, bounds: Bounds) -> None:
    K, v0 = 3, 1
    spec = register_spec(K, v0)
    runs = {}
    for label, writes in (("write_1", [1]), ("write_2_then_1", [2, 1])):
        mem, reg = _register_build(BaselineRegister, K, v0)()
        runs[label] = run_to_completion(mem, reg, {WRITER: [op("write", v) for v in writes]})
    short, long = runs["write_1"], runs["write_2_then_1"]
    checker = HIChecker(spec, Predicate.QUIESCENT, BruteForceOracle(spec))
    checker.add(short, 0)
    checker.add(long, 0)
    # both executions end quiescent in state 1
    q_short = BruteForceOracle(spec)(short, len(short.memory) - 1)
    q_long = BruteForceOracle(spec)(long, len(long.memory) - 1)
    report.verdicts["same_final_state"] = q_short == q_long == 1
    report.verdicts["snapshots_match_counterexample"] = (short.final == (1, 0, 0) and long.final == (1, 1, 0))
    report.verdicts["quiescent_hi"] = checker.verdict.passed
    report.verdicts["linearizable"] = all(check_linearizable(e.events, spec) for e in runs.values())
    report.executions_explored = 2
    report.witnesses["quiescent_pair"] = {
        "state": 1,
        "write_1": {"schedule": _schedule(short), "snapshot": list(short.final)},
        "write_2_then_1": {"schedule": _schedule(long), "snapshot": list(long.final)},
    }
    if not checker.verdict.passed:
        report.witnesses["hi_failure"] = _hi_failure(checker.verdict)


# -- lock-free register ----------------------------------------------------


def _suite(K: int) -> list[tuple[int, tuple[int, int]]]:
    vals = range(1, K + 1)
    return [(v0, (a, b)) for v0 in vals for a in vals for b in vals]


def _alg2_exhaustive(report: Report, bounds: Bounds, K: int = 3, suite=None) -> None:
    suite = suite if suite is not None else _suite(K)
    sq_ok = lin_ok = True
    observations = 0
    for v0, (a, b) in suite:
        build = _register_build(LockFreeRegister, K, v0)
        _, reg = build()
        spec = register_spec(K, v0)
        programs = {WRITER: [op("write", a), op("write", b)], READER: [op("read")]}
        hi = HIChecker(spec, Predicate.STATE_QUIESCENT, BruteForceOracle(spec), reg.canonical)
        lin = _LinMemo(spec)

        def visit(exe: Execution) -> None:
            hi.add(exe)
            if exe.status == "complete":
                lin.check(exe)

        _explore(report, Explorer(build, programs, bounds), visit)
        observations += hi.verdict.observations
        if not hi.verdict.passed and sq_ok:
            sq_ok = False
            report.witnesses["state_quiescent_hi"] = {"case": _case_name(programs), "v0": v0, **hi.verdict.as_dict()}
        if lin.failure is not None and lin_ok:
            lin_ok = False
            report.witnesses["linearizability"] = {"case": _case_name(programs), "v0": v0,
                                                   "schedule": _schedule(lin.failure)}
    report.verdicts["state_quiescent_hi"] = sq_ok
    report.verdicts["linearizable"] = lin_ok
    report.verdicts["no_cycles"] = report.metrics.get("cycles", 0) == 0
    report.metrics["cases"] = len(suite)
    report.metrics["observations"] = observations


def _alg2_starvation(report: Report, bounds: Bounds) -> None:
    K, v0 = 3, 2
    target = bounds.max_steps or 1000
    cycles = -(-target // 3)
    mem, reg = _register_build(LockFreeRegister, K, v0)()
    programs = {WRITER: [op("write", v) for v in (1, 2)] * cycles, READER: [op("read")]}
    # per cycle: reader misses A[1]; Write(1); reader misses A[2], A[3]; Write(2)
    writer_steps = K  # one set, then K - 1 clears below and above the value
    pattern = [READER] + [WRITER] * writer_steps + [READER] * (K - 1) + [WRITER] * writer_steps
    exe = run(mem, reg, programs, pattern * cycles)
    reader_steps = sum(1 for s in exe.steps if s.process == READER)
    reads_done = sum(1 for e in exe.events if e.process == READER and e.kind == "resp")
    writes_done = sum(1 for e in exe.events if e.process == WRITER and e.kind == "resp")
    failed_scans = sum(1 for s in exe.steps
                       if s.process == READER and s.object == reg.A[K - 1].id and s.result == 0)
    report.executions_explored = 1
    report.metrics.update(reader_steps=reader_steps, writes_completed=writes_done, failed_try_reads=failed_scans,
                          reader_step_target=target)
    report.verdicts["reader_starved"] = reads_done == 0 and reader_steps >= target
    report.verdicts["writer_progress"] = writes_done >= 100 and writes_done >= target // (2 * K + 2)
    # the expected-false verdict: a wait-free read would have returned by now
    report.verdicts["wait_free"] = reads_done > 0
    report.witnesses["starvation_schedule"] = {"cycle": pattern, "repeat": cycles}


# -- wait-free register ----------------------------------------------------


def _alg4_bounds(report: Report, bounds: Bounds, K: int = 3, suite=None) -> None:
    suite = suite if suite is not None else _suite(K)
    read_bound, write_bound = 6 * K + 8, 2 * K + 7
    q_ok = lin_ok = steps_ok = True
    sq_witness = None
    max_read = max_write = 0
    for v0, (a, b) in suite:
        build = _register_build(WaitFreeRegister, K, v0)
        _, reg = build()
        spec = register_spec(K, v0)
        programs = {WRITER: [op("write", a), op("write", b)], READER: [op("read")]}
        oracle = BruteForceOracle(spec)
        quiescent = HIChecker(spec, Predicate.QUIESCENT, oracle, reg.canonical)
        state_q = HIChecker(spec, Predicate.STATE_QUIESCENT, oracle, reg.canonical)
        lin = _LinMemo(spec)
        worst: dict[str, int] = {"read": 0, "write": 0}

        def visit(exe: Execution) -> None:
            quiescent.add(exe)
            state_q.add(exe)
            if exe.status != "complete":
                return
            lin.check(exe)
            counts: dict[tuple[int, int], int] = {}
            for s in exe.steps:
                counts[(s.process, s.opno)] = counts.get((s.process, s.opno), 0) + 1
            for (pid, _), c in counts.items():
                kind = "write" if pid == WRITER else "read"
                worst[kind] = max(worst[kind], c)

        _explore(report, Explorer(build, programs, bounds, per_op_steps=True), visit)
        max_read, max_write = max(max_read, worst["read"]), max(max_write, worst["write"])
        if worst["read"] > read_bound or worst["write"] > write_bound:
            steps_ok = False
        if not quiescent.verdict.passed and q_ok:
            q_ok = False
            report.witnesses["quiescent_hi"] = {"case": _case_name(programs), "v0": v0, **quiescent.verdict.as_dict()}
        if not state_q.verdict.passed and sq_witness is None:
            sq_witness = {"case": _case_name(programs), "v0": v0, **state_q.verdict.as_dict()}
        if lin.failure is not None and lin_ok:
            lin_ok = False
            report.witnesses["linearizability"] = {"case": _case_name(programs), "schedule": _schedule(lin.failure)}
    report.verdicts["quiescent_hi"] = q_ok
    report.verdicts["linearizable"] = lin_ok
    report.verdicts["step_bounds"] = steps_ok
    report.verdicts["state_quiescent_hi"] = sq_witness is None
    report.verdicts["no_cycles"] = report.metrics.get("cycles", 0) == 0 and report.metrics.get("livelocks", 0) == 0
    if sq_witness is not None:
        report.witnesses["state_quiescent_non_canonical"] = sq_witness
    report.metrics.update(cases=len(suite), max_read_steps=max_read, read_bound=read_bound,
                          max_write_steps=max_write, write_bound=write_bound)


# -- HI level and progress matrix -------------------------------------------


def _table1_matrix(report: Report, bounds: Bounds) -> None:
    parts = {}
    for name, fn, kw in (("alg1", _alg1_counterexample, {}),
                         ("alg2", _alg2_exhaustive, {"suite": [(1, (2, 1)), (3, (1, 2))]}),
                         ("alg2_starvation", _alg2_starvation, {}),
                         ("alg4", _alg4_bounds, {"suite": [(1, (2, 1)), (3, (1, 2))]})):
        sub = Report(name)
        fn(sub, bounds, **kw)
        parts[name] = sub
        report.executions_explored += sub.executions_explored
        report.partial = report.partial or sub.partial
    v = report.verdicts
    v["alg1_quiescent_hi"] = parts["alg1"].verdicts["quiescent_hi"]
    v["alg2_state_quiescent_hi"] = parts["alg2"].verdicts["state_quiescent_hi"]
    v["alg2_wait_free"] = parts["alg2_starvation"].verdicts["wait_free"]
    v["alg2_lock_free_progress"] = parts["alg2_starvation"].verdicts["writer_progress"]
    v["alg4_quiescent_hi"] = parts["alg4"].verdicts["quiescent_hi"]
    v["alg4_state_quiescent_hi"] = parts["alg4"].verdicts["state_quiescent_hi"]
    v["alg4_wait_free_bounds"] = parts["alg4"].verdicts["step_bounds"]
    report.metrics["rows"] = {
        "alg1": {"quiescent_hi": v["alg1_quiescent_hi"], "progress": "wait-free"},
        "alg2": {"state_quiescent_hi": v["alg2_state_quiescent_hi"],
                 "progress": "lock-free" if v["alg2_lock_free_progress"] and not v["alg2_wait_free"] else "?"},
        "alg4": {"quiescent_hi": v["alg4_quiescent_hi"], "state_quiescent_hi": v["alg4_state_quiescent_hi"],
                 "progress": "wait-free" if v["alg4_wait_free_bounds"] else "?"},
    }
    if "state_quiescent_non_canonical" in parts["alg4"].witnesses:
        report.witnesses["alg4_state_quiescent_non_canonical"] = parts["alg4"].witnesses["state_quiescent_non_canonical"]


# -- R-LLSC ------------------------------------------------------------------

RLLSC_CASES: tuple[dict, ...] = (
    {1: [op("ll", 1), op("sc", 1, 5)], 2: [op("ll", 2), op("sc", 2, 6)], 3: [op("store", 7)]},
    {1: [op("ll", 1), op("rl", 1)], 2: [op("ll", 2), op("vl", 2)], 3: [op("store", 4), op("load")]},
    {1: [op("ll", 1), op("sc", 1, 3)], 2: [op("ll", 2), op("rl", 2)], 3: [op("ll", 3), op("sc", 3, 4)]},
)
HELP_BOUND = 2  # a failed CAS, then the read that sees the bit clear


def _lin_notes(exe: Execution, cell: int | None = None) -> list:
    return [n for n in exe.notes if n.tag == "lin" and (cell is None or n.data[0] == cell)]


def _helping(exe: Execution, finished: bool = False) -> tuple:
    """Own steps each rl/sc took after a reset invoked later than it took effect.

    Only pending operations count unless ``finished``; the pending part is
    what the explorer needs in its key.
    """
    inv_at: dict[tuple[int, int], int] = {}
    for k, e in enumerate(exe.events):
        if e.kind == "inv":
            inv_at[(e.process, e.opno)] = k
    resets = [(inv_at.get((n.process, n.opno), -1), n.step) for n in exe.notes
              if n.tag == "lin" and n.data[1].name in CONTEXT_RESETTING
              and (n.data[1].name == "store" or n.data[2] is True)]
    out = []
    for r in exe.operations():
        if r.op.name not in ("rl", "sc") or not (finished or r.pending):
            continue
        since = next((step for inv, step in resets if inv > r.inv), None)
        if since is not None:
            own = sum(1 for s in exe.steps[since + 1:] if s.process == r.process and s.opno == r.opno)
            out.append((r.process, r.opno, own))
    return tuple(out)


def _note_order(exe: Execution, notes) -> tuple[list, list]:
    recs = {(r.process, r.opno): r for r in exe.operations()}
    order = [recs[(n.process, n.opno)] for n in notes]
    return order, [n.data[2] for n in notes]


def _rllsc_oracle_equiv(report: Report, bounds: Bounds, cases: Sequence[dict] = RLLSC_CASES) -> None:
    n, v0 = 3, 0
    spec = rllsc_spec(n, v0)
    lin_ok = witness_ok = perfect_ok = help_ok = True
    worst_help = 0
    observations = 0
    for programs in cases:
        def build():
            mem = Memory()
            return mem, RLLSC(mem, n, v0, "X")

        lin = _LinMemo(spec)

        def visit(exe: Execution) -> None:
            nonlocal witness_ok, perfect_ok, help_ok, worst_help, observations
            notes = _lin_notes(exe)
            # perfect HI: the memory is exactly the atomic object's state
            q = spec.initial
            k = 0
            for c in range(len(exe.memory)):
                while k < len(notes) and notes[k].step < c:
                    q, _ = spec.apply(q, notes[k].data[1])
                    k += 1
                if c >= exe.fresh:
                    observations += 1
                    if exe.memory[c] != (q,) and perfect_ok:
                        perfect_ok = False
                        report.witnesses["perfect_hi"] = {"case": _case_name(programs), "config": c,
                                                          "schedule": _schedule(exe, c), "expected": repr(q),
                                                          "snapshot": repr(exe.memory[c])}
            for _, _, own in _helping(exe, finished=True):
                worst_help = max(worst_help, own)
                if own > HELP_BOUND and help_ok:
                    help_ok = False
                    report.witnesses["helping"] = {"case": _case_name(programs), "schedule": _schedule(exe)}
            if exe.status != "complete":
                return
            lin.check(exe)
            order, responses = _note_order(exe, notes)
            problems = validate_linearization(exe.events, spec, Linearizable(tuple(order), tuple(responses), q))
            if problems and witness_ok:
                witness_ok = False
                report.witnesses["lin_points"] = {"case": _case_name(programs), "schedule": _schedule(exe),
                                                  "problems": problems}

        _explore(report, Explorer(build, programs, bounds, monitor=_helping), visit)
        if lin.failure is not None and lin_ok:
            lin_ok = False
            report.witnesses["linearizability"] = {"case": _case_name(programs), "schedule": _schedule(lin.failure)}
    report.verdicts["linearizable"] = lin_ok
    report.verdicts["lin_points_valid"] = witness_ok
    report.verdicts["perfect_hi"] = perfect_ok
    report.verdicts["helping_bound"] = help_ok
    report.verdicts["lock_free"] = (report.metrics.get("cycles", 0) == 0 and report.metrics.get("livelocks", 0) == 0
                                    and not report.partial)
    report.metrics.update(cases=len(cases), observations=observations, max_steps_after_reset=worst_help,
                          helping_bound=HELP_BOUND)


# -- universal construction --------------------------------------------------


@dataclass(frozen=True)
class UniversalCase:
    n: int
    programs: dict
    bounds: Bounds = Bounds()


def _applied(exe: Execution) -> list[tuple[int, int, int]]:
    """``(config after the install, process, opno)`` per applied note, in order."""
    current: dict[int, int] = {}
    out = []
    k = 0
    events = exe.events
    for note in exe.notes:
        if note.tag != "applied":
            continue
        while k < note.events:
            if events[k].kind == "inv":
                current[events[k].process] = events[k].opno
            k += 1
        (j,) = note.data
        out.append((note.step + 1, j, current.get(j, -1)))
    return out


class _UniversalChecks:
    """Trace-level checks on universal executions, accumulated across a case."""

    def __init__(self, report: Report, obj: Universal, case: UniversalCase) -> None:
        self.report = report
        self.obj = obj
        self.spec = obj.spec
        self.case = case
        self.head_id, self.ann_ids = obj.cell_ids()
        self.ok = {"linearizable": True, "final_state_is_head": True, "applied_order_valid": True,
                   "state_quiescent_hi": True, "mode_alternation": True, "exactly_once": True,
                   "head_tracks_applied": True}
        self.lin = _LinMemo(self.spec)
        self.finals: dict = {}
        self.ambiguous = 0
        self.max_after_clear = 0
        self.fold_cache: list = []
        self.hi = HIChecker(self.spec, Predicate.STATE_QUIESCENT, self._oracle, obj.canonical)

    def _fail(self, name: str, exe: Execution, **info: Any) -> None:
        if self.ok[name]:
            self.ok[name] = False
            self.report.witnesses.setdefault(name, {"case": _case_name(self.case.programs), "n": self.case.n,
                                                    "schedule": _schedule(exe), **info})

    def _oracle(self, exe: Execution, config: int) -> Any:
        configs, states = self.fold_cache
        k = bisect.bisect_right(configs, config)
        q = states[k]
        hist = exe.events[: exe.marks[config]]
        key = history_key(hist)
        finals = self.finals.get(key)
        if finals is None:
            finals = self.finals[key] = linearization_states(hist, self.spec)
        if q not in finals:
            raise AssertionError(f"applied-order state {q!r} is not reachable by any linearization")
        if len(finals) > 1:
            self.ambiguous += 1
        return q

    def visit(self, exe: Execution) -> None:
        spec = self.spec
        applied = _applied(exe)
        ops = {(r.process, r.opno): r for r in exe.operations()}
        # fold of the applied operations; head must carry each new state
        configs, states = [], [spec.initial]
        q = spec.initial
        seen: set = set()
        for config, j, opno in applied:
            if (j, opno) in seen or (j, opno) not in ops:
                self._fail("exactly_once", exe, operation=[j, opno])
            seen.add((j, opno))
            rec = ops.get((j, opno))
            if rec is None:
                continue
            q, _ = spec.apply(q, rec.op)
            configs.append(config)
            states.append(q)
            if self.obj.head_state(exe.memory[config])[0] != q:
                self._fail("head_tracks_applied", exe, config=config)
        self.fold_cache = [configs, states]
        # successive head values alternate between <q, r> and <q, None>
        start = max(exe.fresh - 1, 0)
        for s in exe.steps[start:]:
            if s.object != self.head_id or s.kind != "cas" or not s.result:
                continue
            old, new = s.args[0].val, s.args[1].val
            if old == new:
                continue
            if old[1] is None:
                good = new[1] is not None
            else:
                good = new == (old[0], None)
            if not good:
                self._fail("mode_alternation", exe, step=s.index, old=repr(old), new=repr(new))
        try:
            self.hi.add(exe)
        except AssertionError as err:
            self._fail("applied_order_valid", exe, problem=str(err))
        if not self.hi.verdict.passed and self.ok["state_quiescent_hi"]:
            self.ok["state_quiescent_hi"] = False
            self.report.witnesses["state_quiescent_hi"] = {"case": _case_name(self.case.programs),
                                                           **self.hi.verdict.as_dict()}
        if exe.status != "complete":
            return
        for r in ops.values():
            if spec.is_state_changing(r.op) and (r.process, r.opno) not in seen:
                self._fail("exactly_once", exe, missing=[r.process, r.opno])
        res = self.lin.check(exe)
        if not res:
            self._fail("linearizable", exe)
            return
        head_q = self.obj.head_state(exe.final)[0]
        finals = linearization_states(exe.events, spec)
        if head_q not in finals or head_q != q:
            self._fail("final_state_is_head", exe, head=repr(head_q), linearizations=sorted(map(repr, finals)))
        # witness order: installs for updates, the single load for reads
        position = {(j, opno): config for config, j, opno in applied}
        for r in ops.values():
            if spec.is_read_only(r.op):
                (s,) = [s for s in exe.steps if s.process == r.process and s.opno == r.opno]
                position[(r.process, r.opno)] = s.index + 1
        order = sorted((r for r in ops.values() if (r.process, r.opno) in position),
                       key=lambda r: position[(r.process, r.opno)])
        problems = validate_linearization(exe.events, spec, Linearizable(tuple(order), (), q))
        if problems:
            self._fail("applied_order_valid", exe, problems=problems)
        self._after_clear(exe, ops)

    def _after_clear(self, exe: Execution, ops: dict) -> None:
        # own steps each update takes after its announce entry holds a response
        for (pid, opno), r in ops.items():
            if not self.spec.is_state_changing(r.op):
                continue
            cell = self.ann_ids[pid - 1]
            own = [s.index for s in exe.steps if s.process == pid and s.opno == opno]
            first = own[0]
            cleared = next((c for c in range(first + 1, own[-1] + 1) if is_response(exe.memory[c][cell].val)), None)
            if cleared is not None:
                after = sum(1 for i in own if i >= cleared)
                self.max_after_clear = max(self.max_after_clear, after)


def _universal(report: Report, bounds: Bounds, spec: SequentialSpec, cases: Sequence[UniversalCase]) -> None:
    totals: dict[str, bool] = {}
    per_case = []
    max_after_clear = ambiguous = 0
    for case in cases:
        def build(n=case.n):
            mem = Memory()
            return mem, Universal(mem, spec, n)

        _, obj = build()
        checks = _UniversalChecks(report, obj, case)
        case_bounds = Bounds(bounds.max_steps if bounds.max_steps is not None else case.bounds.max_steps,
                             bounds.max_preemptions if bounds.max_preemptions is not None
                             else case.bounds.max_preemptions,
                             bounds.max_executions if bounds.max_executions is not None
                             else case.bounds.max_executions)
        ex = Explorer(build, case.programs, case_bounds)
        t0 = time.perf_counter()
        _explore(report, ex, checks.visit)
        for k, v in checks.ok.items():
            totals[k] = totals.get(k, True) and v
        max_after_clear = max(max_after_clear, checks.max_after_clear)
        ambiguous += checks.ambiguous
        per_case.append({"case": _case_name(case.programs), "n": case.n,
                         "preemption_bound": case_bounds.max_preemptions, "states": ex.stats.states,
                         "executions": ex.stats.executions, "complete": ex.stats.complete,
                         "partial": ex.stats.partial, "seconds": round(time.perf_counter() - t0, 2)})
    report.verdicts.update(totals)
    report.verdicts["wait_free"] = (report.metrics.get("cycles", 0) == 0 and report.metrics.get("livelocks", 0) == 0
                                    and report.metrics.get("truncated", 0) == 0)
    report.metrics.update(cases=per_case, max_own_steps_after_clear=max_after_clear,
                          ambiguous_observations=ambiguous)
    if ambiguous:
        report.notes.append("HI under oracle h: some observation points admit several linearization states; "
                            "the oracle is the order in which operations were installed in head")


def _universal_native(report: Report, bounds: Bounds, spec: SequentialSpec, n: int, ops_per_proc: int,
                      ratios=((1, 1), (1, 3), (3, 1)), seed: int = 7, commutative: bool = False) -> None:
    rng = random.Random(seed)
    names = sorted(spec.operations, key=repr)
    for ratio in ratios:
        programs = {pid: [rng.choice(names) for _ in range(ops_per_proc)] for pid in range(1, n + 1)}
        layout = Memory()
        obj = Universal(layout, spec, n)
        mem = NativeMemory(layout, obj.native_codecs())
        res = run_native(mem, obj, programs, timeout=60, ratio=ratio)
        label = f"ratio_{ratio[0]}_{ratio[1]}"
        finals = {q for q in spec.all_states() if mem.snapshot() == obj.canonical(q)}
        report.verdicts[f"{label}_no_errors"] = not res.errors
        report.verdicts[f"{label}_canonical"] = len(finals) == 1
        if commutative:
            # updates commute, so any linearization ends in the same state
            expected, _ = run_ops(spec, [o for prog in programs.values() for o in prog])
            report.verdicts[f"{label}_final_state"] = finals == {expected}
        report.executions_explored += 1
        report.metrics[label] = {"ops": n * ops_per_proc, "seconds": round(res.elapsed, 3)}
        if res.errors:
            report.witnesses[label] = [repr(e) for e in res.errors[:3]]


COUNTER_MODULUS = 8
COUNTER_CASES = (
    UniversalCase(2, {1: [op("inc"), op("inc")], 2: [op("dec")]}),
    UniversalCase(2, {1: [op("inc"), op("read")], 2: [op("dec"), op("read")]}),
    UniversalCase(3, {1: [op("inc")], 2: [op("dec")], 3: [op("inc")]}, Bounds(max_preemptions=2)),
)
REGISTER_CASES = (
    UniversalCase(2, {1: [op("write", 2)], 2: [op("write", 3), op("read")]}),
    UniversalCase(3, {1: [op("write", 1)], 2: [op("write", 2)], 3: [op("write", 3)]}, Bounds(max_preemptions=2)),
)


# -- distance and native stress ---------------------------------------------


def _hiset_distance(report: Report, bounds: Bounds, max_t: int = 6) -> None:
    worst = 0
    pairs = 0
    ok = True
    for t in range(1, max_t + 1):
        spec = None
        for bits in itertools.product((0, 1), repeat=t):
            q = frozenset(i for i in range(1, t + 1) if bits[i - 1])
            for name, i in itertools.product(("insert", "remove", "lookup"), range(1, t + 1)):
                mem = Memory()
                hs = HISet(mem, t)
                spec = hs.spec
                mem.restore(hs.canonical(q))
                o = op(name, i)
                exe = run_to_completion(mem, hs, {1: [o]})
                q2, _ = spec.apply(q, o)
                d = distance(hs.canonical(q), hs.canonical(q2))
                pairs += 1
                worst = max(worst, d)
                if exe.final != hs.canonical(q2) or d > 1:
                    if ok:
                        report.witnesses["transition"] = {"t": t, "state": sorted(q), "op": repr(o),
                                                          "snapshot": list(exe.final), "distance": d}
                    ok = False
    # the same property for the single-cell R-LLSC object
    rspec = rllsc_spec(2, 0)
    words = [CasWord(v, c) for v in range(3) for c in range(4)]
    rops = [op("ll", p) for p in (1, 2)] + [op("vl", p) for p in (1, 2)] + [op("rl", p) for p in (1, 2)]
    rops += [op("sc", p, v) for p in (1, 2) for v in range(3)] + [op("store", v) for v in range(3)] + [op("load")]
    for w in words:
        for o in rops:
            w2, _ = rspec.apply(w, o)
            d = distance((w,), (w2,))
            pairs += 1
            worst = max(worst, d)
            ok = ok and d <= 1
    report.verdicts["distance_at_most_one"] = ok
    report.executions_explored = pairs
    report.metrics.update(transitions=pairs, max_distance=worst, max_t=max_t)


def _native_counter_stress(report: Report, bounds: Bounds, n: int = 4, total_ops: int = 10_000,
                           modulus: int = 1024, seed: int = 11) -> None:
    spec = counter_spec(modulus)
    rng = random.Random(seed)
    per = total_ops // n
    programs = {pid: [op(rng.choice(("inc", "dec"))) for _ in range(per)] for pid in range(1, n + 1)}
    incs = sum(o.name == "inc" for prog in programs.values() for o in prog)
    decs = sum(o.name == "dec" for prog in programs.values() for o in prog)
    layout = Memory()
    obj = Universal(layout, spec, n)
    mem = NativeMemory(layout, obj.native_codecs())
    res = run_native(mem, obj, programs, timeout=30)
    expected = (incs - decs) % modulus
    head_q = obj.head_state(mem.snapshot())[0]
    report.executions_explored = 1
    report.verdicts["no_errors"] = not res.errors
    report.verdicts["final_value"] = head_q == expected
    report.verdicts["canonical_snapshot"] = mem.snapshot() == obj.canonical(expected)
    report.verdicts["within_budget"] = res.elapsed < 30
    report.metrics.update(ops=n * per, increments=incs, decrements=decs, modulus=modulus, final=head_q,
                          seconds=round(res.elapsed, 3))
    if res.errors:
        report.witnesses["errors"] = [repr(e) for e in res.errors[:3]]


def _alg4_native(report: Report, bounds: Bounds, K: int = 4, writes: int = 2000, reads: int = 2000,
                 seed: int = 3) -> None:
    rng = random.Random(seed)
    layout = Memory()
    reg = WaitFreeRegister(layout, K, 1)
    values = [rng.randint(1, K) for _ in range(writes)]
    mem = NativeMemory(layout)
    res = run_native(mem, reg, {WRITER: [op("write", v) for v in values], READER: [op("read")] * reads}, timeout=60)
    got = res.responses.get(READER, [])
    report.executions_explored = 1
    report.verdicts["no_errors"] = not res.errors
    report.verdicts["reads_in_domain"] = len(got) == reads and all(1 <= v <= K for v in got)
    report.verdicts["quiescent_canonical"] = mem.snapshot() == reg.canonical(values[-1])
    report.metrics.update(writes=writes, reads=reads, seconds=round(res.elapsed, 3))


# -- registry ----------------------------------------------------------------


def _wrap(fn, **kw):
    return lambda report, bounds: fn(report, bounds, **kw)


SCENARIOS: dict[str, Scenario] = {s.name: s for s in (
    Scenario("alg1_counterexample", "baseline register: two quiescent runs in state 1 with different memory",
             {"same_final_state": True, "snapshots_match_counterexample": True, "quiescent_hi": False,
              "linearizable": True},
             _alg1_counterexample),
    Scenario("alg2_exhaustive", "lock-free register, K=3, two writes and a read, every start value",
             {"state_quiescent_hi": True, "linearizable": True, "no_cycles": True},
             _alg2_exhaustive),
    Scenario("alg2_starvation", "lock-free register: a schedule that starves the reader",
             {"reader_starved": True, "writer_progress": True, "wait_free": False},
             _alg2_starvation),
    Scenario("alg4_bounds", "wait-free register: quiescent HI, step bounds, state-quiescent counterexample",
             {"quiescent_hi": True, "linearizable": True, "step_bounds": True, "state_quiescent_hi": False,
              "no_cycles": True},
             _alg4_bounds, native=_alg4_native),
    Scenario("table1_matrix", "which HI level and progress each register reaches",
             {"alg1_quiescent_hi": False, "alg2_state_quiescent_hi": True, "alg2_wait_free": False,
              "alg2_lock_free_progress": True, "alg4_quiescent_hi": True, "alg4_state_quiescent_hi": False,
              "alg4_wait_free_bounds": True},
             _table1_matrix),
    Scenario("rllsc_oracle_equiv", "R-LLSC against its atomic specification, three processes",
             {"linearizable": True, "lin_points_valid": True, "perfect_hi": True, "helping_bound": True,
              "lock_free": True},
             _rllsc_oracle_equiv),
    Scenario("universal_counter", "universal construction over a counter",
             {"linearizable": True, "final_state_is_head": True, "applied_order_valid": True,
              "state_quiescent_hi": True, "mode_alternation": True, "exactly_once": True,
              "head_tracks_applied": True, "wait_free": True},
             _wrap(_universal, spec=counter_spec(COUNTER_MODULUS), cases=COUNTER_CASES),
             native=_wrap(_universal_native, spec=counter_spec(COUNTER_MODULUS), n=3, ops_per_proc=300,
                          commutative=True)),
    Scenario("universal_register", "universal construction over a register",
             {"linearizable": True, "final_state_is_head": True, "applied_order_valid": True,
              "state_quiescent_hi": True, "mode_alternation": True, "exactly_once": True,
              "head_tracks_applied": True, "wait_free": True},
             _wrap(_universal, spec=register_spec(3, 1), cases=REGISTER_CASES),
             native=_wrap(_universal_native, spec=register_spec(3, 1), n=3, ops_per_proc=300)),
    Scenario("hiset_distance", "perfect-HI objects: one operation moves at most one base object",
             {"distance_at_most_one": True},
             _hiset_distance),
    Scenario("native_counter_stress", "universal counter on threads: 4 processes, 10^4 operations",
             {"no_errors": True, "final_value": True, "canonical_snapshot": True, "within_budget": True},
             _native_counter_stress, native=_native_counter_stress),
)}


def universal_quiescent(spec: SequentialSpec, cases: Sequence[UniversalCase]) -> Scenario:
    """A universal-construction scenario for any spec with the standard expectations."""
    return Scenario(f"universal_{spec.name}", f"universal construction over {spec.name}",
                    dict(SCENARIOS["universal_counter"].expected), _wrap(_universal, spec=spec, cases=cases))


def get(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None
