"""Brute-force linearizability.

Search over orders of the operations in a history, as in Wing & Gong's
checker with Lowe's memoization: a partial linearization is summarized by
the set of operations placed so far plus the abstract state, and a summary
that already failed is never expanded again.

Completed operations must all be placed and must return what the
specification says.  Pending operations may be placed (with whatever
response the specification gives) or left out.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from ..base_memory.engine import Event, OpRecord, operations
from ..seq_spec import SequentialSpec


@dataclass(frozen=True)
class Linearizable:
    order: tuple[OpRecord, ...]
    responses: tuple  # specification responses, aligned with ``order``
    state: Any

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class NotLinearizable:
    reason: str
    explored: int

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class Unknown:
    explored: int

    def __bool__(self) -> bool:
        raise ValueError("linearizability unknown: search budget exhausted")


class AmbiguousState(Exception):
    """Different linearizations end in different abstract states."""

    def __init__(self, states: frozenset) -> None:
        super().__init__(f"history admits final states {sorted(states, key=repr)}")
        self.states = states


class SearchBudgetExceeded(Exception):
    pass


def _prepare(history) -> list[OpRecord]:
    if history and isinstance(history[0], OpRecord):
        return sorted(history, key=lambda r: r.inv)
    return operations(history)


def _before_masks(ops: Sequence[OpRecord]) -> list[int]:
    # bit k set in masks[m] iff ops[k] completed before ops[m] was invoked
    masks = []
    for m, b in enumerate(ops):
        mask = 0
        for k, a in enumerate(ops):
            if a.resp is not None and a.resp < b.inv:
                mask |= 1 << k
        masks.append(mask)
    return masks


class _Search:
    def __init__(self, ops: list[OpRecord], spec: SequentialSpec, initial: Any, budget: int) -> None:
        self.ops = ops
        self.spec = spec
        self.initial = spec.initial if initial is None else initial
        self.budget = budget
        self.explored = 0
        self.before = _before_masks(ops)
        self.complete = 0
        for k, r in enumerate(ops):
            if not r.pending:
                self.complete |= 1 << k

    def _tick(self) -> None:
        self.explored += 1
        if self.explored > self.budget:
            raise SearchBudgetExceeded()

    def _moves(self, done: int, q: Any):
        for k, r in enumerate(self.ops):
            bit = 1 << k
            if done & bit or (self.before[k] & ~done):
                continue
            q2, resp = self.spec.apply(q, r.op)
            if not r.pending and resp != r.response:
                continue
            yield k, q2, resp

    def witness(self):
        failed: set = set()
        path: list = []

        def dfs(done: int, q: Any) -> Any:
            if done & self.complete == self.complete:
                return q
            if (done, q) in failed:
                return None
            self._tick()
            for k, q2, resp in self._moves(done, q):
                path.append((k, resp))
                out = dfs(done | 1 << k, q2)
                if out is not None:
                    return out
                path.pop()
            failed.add((done, q))
            return None

        final = dfs(0, self.initial)
        return None if final is None else (tuple(path), final)

    def final_states(self) -> frozenset:
        seen: set = set()
        finals: set = set()
        stack = [(0, self.initial)]
        while stack:
            done, q = stack.pop()
            if (done, q) in seen:
                continue
            seen.add((done, q))
            self._tick()
            if done & self.complete == self.complete:
                finals.add(q)
            for k, q2, _ in self._moves(done, q):
                stack.append((done | 1 << k, q2))
        return frozenset(finals)


def check_linearizable(history, spec: SequentialSpec, initial: Any = None, budget: int = 1_000_000):
    """Return :class:`Linearizable`, :class:`NotLinearizable` or :class:`Unknown`.

    ``history`` is a sequence of :class:`Event` or of :class:`OpRecord`.
    """
    ops = _prepare(list(history))
    search = _Search(ops, spec, initial, budget)
    try:
        found = search.witness()
    except SearchBudgetExceeded:
        return Unknown(search.explored)
    if found is None:
        return NotLinearizable("no order of the operations respects real time and the specification",
                               search.explored)
    path, final = found
    return Linearizable(tuple(ops[k] for k, _ in path), tuple(r for _, r in path), final)


def state_oracle_bruteforce(history, spec: SequentialSpec, initial: Any = None, budget: int = 1_000_000) -> Any:
    """The abstract state every valid linearization of ``history`` ends in.

    Raises :class:`AmbiguousState` when linearizations disagree,
    ``ValueError`` when there is none, :class:`SearchBudgetExceeded` when
    the budget runs out.
    """
    finals = linearization_states(history, spec, initial, budget)
    if not finals:
        raise ValueError("history is not linearizable")
    if len(finals) > 1:
        raise AmbiguousState(finals)
    (q,) = finals
    return q


def linearization_states(history, spec: SequentialSpec, initial: Any = None, budget: int = 1_000_000) -> frozenset:
    """Every abstract state some valid linearization of ``history`` ends in."""
    return _Search(_prepare(list(history)), spec, initial, budget).final_states()


def validate_linearization(history, spec: SequentialSpec, witness: Linearizable, initial: Any = None) -> list[str]:
    """Independent re-check of a witness; returns the list of problems found."""
    ops = _prepare(list(history))
    problems = []
    ids = [(r.process, r.opno) for r in witness.order]
    if len(set(ids)) != len(ids):
        problems.append("an operation appears twice")
    known = {(r.process, r.opno): r for r in ops}
    for pid_op in ids:
        if pid_op not in known:
            problems.append(f"unknown operation {pid_op}")
    for r in ops:
        if not r.pending and (r.process, r.opno) not in ids:
            problems.append(f"completed operation p{r.process}#{r.opno} missing")
    pos = {pid_op: k for k, pid_op in enumerate(ids)}
    for a in ops:
        for b in ops:
            if a.resp is not None and a.resp < b.inv and (a.process, a.opno) in pos and (b.process, b.opno) in pos:
                if pos[(a.process, a.opno)] > pos[(b.process, b.opno)]:
                    problems.append(f"p{a.process}#{a.opno} precedes p{b.process}#{b.opno} in real time")
    q = spec.initial if initial is None else initial
    for r in witness.order:
        q, resp = spec.apply(q, r.op)
        if not r.pending and resp != r.response:
            problems.append(f"p{r.process}#{r.opno} {r.op!r} returned {r.response!r}, specification says {resp!r}")
    if q != witness.state:
        problems.append(f"final state {q!r} differs from claimed {witness.state!r}")
    return problems


def history_key(events: Sequence[Event]) -> tuple:
    """Timing-free identity of a history (for memoizing oracles)."""
    return tuple((e.process, e.kind, e.value) for e in events)
