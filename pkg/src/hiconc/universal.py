"""Wait-free universal construction over R-LLSC cells.

Shared memory is one ``head`` cell holding ``(q, r)`` and one ``announce``
cell per process.  Between operations ``head`` is ``(q, None)``; while an
operation is being applied it is ``(q', (rsp, j))`` with ``j`` the invoker.
Applying an operation takes three steps, any of which may be done by a
helper: install ``(q', (rsp, j))`` in head, move ``rsp`` into
``announce[j]``, and reset head to ``(q', None)``.

Some waits run side by side with an ``ll``: the process polls a condition
while the ``ll`` retries, and whichever finishes first decides the path.
Under the engine this is a :class:`Choose` at every step (all ratios are
explored); natively the two sides alternate one step each.

With ``Note("applied", (j,))`` the construction marks each successful
install of a new state in head, on behalf of ``p_j``.
"""
from __future__ import annotations

from typing import Any

from .base_memory.engine import ProcessLocal, RoleError, opaque
from .base_memory.memory import CasWord, Choose, Memory, Note
from .base_memory.native import PairCodec, TableCodec, UnionCodec, WordCodec
from .rllsc import MAX_PROCS, RLLSC
from .seq_spec import Op, SequentialSpec


def is_response(value: Any) -> bool:
    return value is not None and type(value) is not Op


def _advance(gen, value):
    # step ``gen`` to its next access, forwarding notes; (done, request or result)
    try:
        req = gen.send(value)
        while type(req) is Note:
            yield req
            req = gen.send(None)
        return False, req
    except StopIteration as stop:
        return True, stop.value


def interleave(left, right):
    """Run two generators side by side; return ``(side, result)`` of the first to finish.

    The loser is closed without taking further steps.
    """
    done, lreq = yield from _advance(left, None)
    if done:
        right.close()
        return 0, lreq
    done, rreq = yield from _advance(right, None)
    if done:
        left.close()
        return 1, rreq
    while True:
        side = yield Choose(2)
        if side == 0:
            res = yield lreq
            done, lreq = yield from _advance(left, res)
            if done:
                right.close()
                return 0, lreq
        else:
            res = yield rreq
            done, rreq = yield from _advance(right, res)
            if done:
                left.close()
                return 1, rreq


@opaque
class Universal:
    """Linearizable object for ``spec`` shared by processes ``1..n``."""

    def __init__(self, mem: Memory, spec: SequentialSpec, n: int) -> None:
        if not 1 <= n <= MAX_PROCS:
            raise ValueError(f"n must be in 1..{MAX_PROCS}")
        self.spec = spec
        self.n = n
        self.head = RLLSC(mem, n, (spec.initial, None), "head", trace=False)
        self.announce = tuple(RLLSC(mem, n, None, f"announce[{k}]", trace=False) for k in range(1, n + 1))

    def new_local(self, pid: int) -> ProcessLocal:
        return ProcessLocal(priority=pid)

    def operation(self, pid: int, o: Op, local: ProcessLocal):
        if not 1 <= pid <= self.n:
            raise RoleError(f"p{pid} is not one of p1..p{self.n}")
        self.spec.validate(o)
        if self.spec.is_read_only(o):
            return (yield from self.apply_read_only(pid, o))
        return (yield from self.apply(pid, o, local))

    def apply_read_only(self, i: int, o: Op):
        if not self.spec.is_read_only(o):
            raise ValueError(f"{o!r} changes state; use apply")
        hv = yield from self.head.load()
        _, rsp = self.spec.apply(hv[0], o)
        return rsp

    def _await_response(self, i: int):
        while True:
            a = yield from self.announce[i - 1].load()
            if is_response(a):
                return a

    def _await_head_released(self, i: int):
        while True:
            hv = yield from self.head.load()
            if hv[1] is None or hv[1][1] != i:
                return hv

    def apply(self, i: int, o: Op, local: ProcessLocal):
        if self.spec.is_read_only(o):
            raise ValueError(f"{o!r} is read-only; use apply_read_only")
        yield from self.announce[i - 1].store(o)
        while True:
            mine = yield from self.announce[i - 1].load()
            if is_response(mine):
                break
            side, hv = yield from interleave(self.head.ll(i), self._await_response(i))
            if side == 1:
                break
            q, r = hv
            if r is None:
                help_op = yield from self.announce[local.priority - 1].load()
                if type(help_op) is Op:
                    apply_op, j = help_op, local.priority
                else:
                    mine = yield from self.announce[i - 1].load()
                    if type(mine) is not Op:
                        continue
                    apply_op, j = o, i
                state, rsp = self.spec.apply(q, apply_op)
                ok = yield from self.head.sc(i, (state, (rsp, j)))
                if ok:
                    yield Note("applied", (j,))
                    local.priority = local.priority % self.n + 1
            else:
                rsp, j = r
                side, a = yield from interleave(self.announce[j - 1].ll(i), self._await_response(i))
                if side == 1:
                    yield from self.announce[j - 1].rl(i)
                    break
                valid = yield from self.head.vl(i)
                if valid:
                    if type(a) is Op:
                        yield from self.announce[j - 1].sc(i, rsp)
                    yield from self.head.sc(i, (q, None))
                if a is None:
                    yield from self.announce[j - 1].rl(i)
        response = yield from self.announce[i - 1].load()
        side, hv = yield from interleave(self.head.ll(i), self._await_head_released(i))
        if side == 0 and hv[1] is not None and hv[1][1] == i:
            yield from self.head.sc(i, (hv[0], None))
        else:
            yield from self.head.rl(i)
        yield from self.announce[i - 1].store(None)
        return response

    # -- observation helpers ----------------------------------------------

    def canonical(self, q: Any) -> tuple:
        return (CasWord((q, None)),) + (CasWord(None),) * self.n

    def head_state(self, snapshot: tuple) -> tuple:
        """Decoded ``(q, r)`` of head in ``snapshot``."""
        return snapshot[self.head.cell.id].val

    def native_codecs(self, payload_bits: int = 48) -> dict:
        """Word codecs for head and announce; needs finite states and operations."""
        states = TableCodec(self.spec.all_states())
        responses = TableCodec(sorted({self.spec.apply(q, o)[1] for q in states.values
                                       for o in self.spec.operations}, key=repr))
        pids = TableCodec(range(1, self.n + 1))
        nothing = TableCodec([None])
        head = PairCodec(states, UnionCodec([nothing, PairCodec(responses, pids)],
                                            lambda r: 0 if r is None else 1))
        ann = UnionCodec([nothing, TableCodec(self.spec.operations), responses],
                         lambda v: 0 if v is None else 1 if type(v) is Op else 2)
        out = {self.head.cell.id: WordCodec(head, payload_bits, self.n)}
        for a in self.announce:
            out[a.cell.id] = WordCodec(ann, payload_bits, self.n)
        return out

    def cell_ids(self) -> tuple[int, tuple[int, ...]]:
        return self.head.cell.id, tuple(a.cell.id for a in self.announce)
