"""History-independence checks.

An implementation is HI for a set of observation points when any two
observed configurations whose histories lead to the same abstract state
have the same memory.  The checker compares each observed snapshot against
a canonical map: either given (analytic) or learned from the first
observation of each state.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from ..base_memory.engine import Execution
from ..seq_spec import SequentialSpec
from .linearizability import AmbiguousState, history_key, state_oracle_bruteforce


class Predicate(str, enum.Enum):
    EVERY_STEP = "every_step"
    STATE_QUIESCENT = "state_quiescent"
    QUIESCENT = "quiescent"


def pending_ops(exe: Execution, config: int) -> list:
    open_: dict[int, Any] = {}
    for ev in exe.events[: exe.marks[config]]:
        if ev.kind == "inv":
            open_[ev.process] = ev.value
        else:
            open_.pop(ev.process, None)
    return list(open_.values())


def observable(exe: Execution, config: int, predicate: Predicate, spec: SequentialSpec) -> bool:
    if predicate == Predicate.EVERY_STEP:
        return True
    pend = pending_ops(exe, config)
    if predicate == Predicate.QUIESCENT:
        return not pend
    return not any(spec.is_state_changing(o) for o in pend)


def observation_points(exe: Execution, predicate: Predicate, spec: SequentialSpec, start: int = 0) -> list[int]:
    """Configurations of ``exe`` (from ``start``) where memory may be inspected."""
    predicate = Predicate(predicate)
    out = []
    open_: dict[int, Any] = {}
    k = 0
    events = exe.events
    for c in range(len(exe.memory)):
        while k < exe.marks[c]:
            ev = events[k]
            if ev.kind == "inv":
                open_[ev.process] = ev.value
            else:
                open_.pop(ev.process, None)
            k += 1
        if c < start:
            continue
        if predicate == Predicate.EVERY_STEP:
            ok = True
        elif predicate == Predicate.QUIESCENT:
            ok = not open_
        else:
            ok = not any(spec.is_state_changing(o) for o in open_.values())
        if ok:
            out.append(c)
    return out


class BruteForceOracle:
    """Abstract state at a configuration via all linearizations of its history."""

    def __init__(self, spec: SequentialSpec) -> None:
        self.spec = spec
        self.memo: dict = {}

    def __call__(self, exe: Execution, config: int) -> Any:
        prefix = exe.events[: exe.marks[config]]
        key = history_key(prefix)
        if key not in self.memo:
            try:
                self.memo[key] = ("ok", state_oracle_bruteforce(prefix, self.spec))
            except AmbiguousState as err:
                self.memo[key] = ("ambiguous", err)
        tag, value = self.memo[key]
        if tag == "ambiguous":
            raise value
        return value


@dataclass
class Witness:
    state: Any
    snapshot: tuple
    schedule: list
    config: int

    def as_dict(self) -> dict:
        return {"state": repr(self.state), "snapshot": repr(self.snapshot),
                "schedule": [list(e) if isinstance(e, tuple) else e for e in self.schedule[: self.config]],
                "config": self.config}


@dataclass
class HIVerdict:
    passed: bool = True
    observations: int = 0
    states: int = 0
    failure: tuple[Witness, Witness] | None = None
    expected: tuple | None = None  # analytic map's snapshot for the failing state
    origin: str = "analytic"
    learned: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def as_dict(self) -> dict:
        out = {"passed": self.passed, "observations": self.observations, "states": self.states,
               "canonical_map": self.origin}
        if self.failure:
            out["witnesses"] = [w.as_dict() for w in self.failure]
            if self.expected is not None:
                out["expected"] = repr(self.expected)
        return out


class HIChecker:
    """Incremental checker: feed executions with :meth:`add`, read :attr:`verdict`.

    With ``canonical`` the map is analytic; otherwise the first snapshot seen
    for each state becomes canonical and later disagreement is a failure.
    The first failure is kept; later executions only add to the counts.
    """

    def __init__(self, spec: SequentialSpec, predicate: Predicate, oracle: Callable[[Execution, int], Any],
                 canonical: Callable[[Any], tuple] | None = None) -> None:
        self.spec = spec
        self.predicate = Predicate(predicate)
        self.oracle = oracle
        self.canonical = canonical
        self.verdict = HIVerdict(origin="analytic" if canonical else "learned")
        self.first: dict[Any, Witness] = {}

    def add(self, exe: Execution, start: int | None = None) -> bool:
        if start is None:
            start = getattr(exe, "fresh", 0)
        v = self.verdict
        for c in observation_points(exe, self.predicate, self.spec, start):
            q = self.oracle(exe, c)
            snap = exe.memory[c]
            v.observations += 1
            seen = self.first.get(q)
            if seen is None:
                seen = Witness(q, snap, list(exe.schedule), c)
                self.first[q] = seen
                v.states += 1
                if self.canonical is None:
                    v.learned[q] = snap
            if self.canonical is not None:
                expected = self.canonical(q)
                if snap != expected and v.passed:
                    v.passed = False
                    v.expected = expected
                    v.failure = (Witness(q, expected, [], 0), Witness(q, snap, list(exe.schedule), c))
            elif snap != seen.snapshot and v.passed:
                v.passed = False
                v.failure = (seen, Witness(q, snap, list(exe.schedule), c))
        return v.passed


def check_hi(executions: Iterable[Execution], predicate: Predicate | str, spec: SequentialSpec,
             oracle: Callable[[Execution, int], Any] | None = None,
             canonical: Callable[[Any], tuple] | None = None) -> HIVerdict:
    """Check every observation point of every execution; see :class:`HIChecker`."""
    checker = HIChecker(spec, Predicate(predicate), oracle or BruteForceOracle(spec), canonical)
    for exe in executions:
        checker.add(exe)
    return checker.verdict
