"""Releasable LL/SC over a single CAS cell.

The cell holds a :class:`CasWord` ``(val, context)``; bit ``i - 1`` of the
context is set iff ``p_i`` holds a link.  The abstract state of the object is
exactly that pair, so the memory is the state and nothing else (every step
is canonical).

Operations retry a read/CAS pair until the CAS lands or the caller's bit is
observed clear.  Each read and each CAS is its own step.  With ``trace=True``
every operation emits ``Note("lin", (cell_id, op, result))`` right after the
step at which it takes effect, which lets the verifier replay the atomic
object step by step.
"""
from __future__ import annotations

from typing import Any

from .base_memory.engine import ProcessLocal, RoleError, opaque
from .base_memory.memory import CAS_CELL, Cas, CasWord, Memory, Note, Read, Write
from .seq_spec import Op, SequentialSpec, op

PAYLOAD_BITS = 48
MAX_PROCS = 16

CONTEXT_CHANGING = frozenset({"ll", "rl", "sc", "store"})
CONTEXT_RESETTING = frozenset({"sc", "store"})


def rllsc_spec(n: int, v0: Any = 0) -> SequentialSpec:
    """Atomic R-LLSC; operations carry the caller, e.g. ``op("sc", 2, v)``."""

    def delta(w: CasWord, o: Op):
        name = o.name
        if name == "load":
            return w, w.val
        if name == "store":
            return CasWord(o.args[0]), True
        pid = o.args[0]
        if not 1 <= pid <= n:
            raise ValueError(f"process {pid} outside 1..{n}")
        if name == "ll":
            return w.with_member(pid), w.val
        if name == "vl":
            return w, w.has(pid)
        if name == "rl":
            return w.without_member(pid), True
        if w.has(pid):  # sc
            return CasWord(o.args[1]), True
        return w, False

    return SequentialSpec("rllsc", CasWord(v0), delta, frozenset({"vl", "load"}), None,
                          params=(("n", n),), op_names=frozenset({"ll", "vl", "sc", "rl", "load", "store"}),
                          bottom_ok=True)


def encode(word: CasWord, payload_bits: int = PAYLOAD_BITS) -> int:
    """Machine-word layout: payload in the low bits, context bit i-1 above it."""
    if not isinstance(word.val, int) or isinstance(word.val, bool) or not 0 <= word.val < 1 << payload_bits:
        raise ValueError(f"payload {word.val!r} does not fit {payload_bits} bits")
    return word.val | word.context << payload_bits


def decode(raw: int, payload_bits: int = PAYLOAD_BITS) -> CasWord:
    return CasWord(raw & ((1 << payload_bits) - 1), raw >> payload_bits)


@opaque
class RLLSC:
    """One R-LLSC object for processes ``1..n``."""

    def __init__(self, mem: Memory, n: int, v0: Any = 0, name: str = "X", trace: bool = True) -> None:
        if not 1 <= n <= MAX_PROCS:
            raise ValueError(f"n must be in 1..{MAX_PROCS}")
        self.n = n
        self.v0 = v0
        self.trace = trace
        self.cell = mem.alloc(CAS_CELL, CasWord(v0), name)
        self.spec = rllsc_spec(n, v0)

    def _lin(self, o: Op, result: Any):
        if self.trace:
            yield Note("lin", (self.cell.id, o, result))

    def ll(self, i: int):
        cur = yield Read(self.cell)
        while True:
            ok = yield Cas(self.cell, cur, cur.with_member(i))
            if ok:
                yield from self._lin(op("ll", i), cur.val)
                return cur.val
            cur = yield Read(self.cell)

    def vl(self, i: int):
        cur = yield Read(self.cell)
        yield from self._lin(op("vl", i), cur.has(i))
        return cur.has(i)

    def sc(self, i: int, v: Any):
        cur = yield Read(self.cell)
        while cur.has(i):
            ok = yield Cas(self.cell, cur, CasWord(v))
            if ok:
                yield from self._lin(op("sc", i, v), True)
                return True
            cur = yield Read(self.cell)
        yield from self._lin(op("sc", i, v), False)
        return False

    def rl(self, i: int):
        cur = yield Read(self.cell)
        while cur.has(i):
            ok = yield Cas(self.cell, cur, cur.without_member(i))
            if ok:
                yield from self._lin(op("rl", i), True)
                return True
            cur = yield Read(self.cell)
        yield from self._lin(op("rl", i), True)
        return True

    def load(self):
        cur = yield Read(self.cell)
        yield from self._lin(op("load"), cur.val)
        return cur.val

    def store(self, v: Any):
        yield Write(self.cell, CasWord(v))
        yield from self._lin(op("store", v), True)
        return True

    # -- as a stand-alone object driven by the engine ---------------------

    def new_local(self, pid: int) -> ProcessLocal:
        return ProcessLocal()

    def operation(self, pid: int, o: Op, local: Any):
        self.spec.validate(o)
        if o.name in ("load", "store"):
            if o.name == "load":
                return (yield from self.load())
            return (yield from self.store(o.args[0]))
        if o.args[0] != pid:
            raise RoleError(f"p{pid} cannot run {o!r} on behalf of p{o.args[0]}")
        if o.name == "ll":
            return (yield from self.ll(pid))
        if o.name == "vl":
            return (yield from self.vl(pid))
        if o.name == "sc":
            return (yield from self.sc(pid, o.args[1]))
        return (yield from self.rl(pid))

    def canonical(self, w: CasWord) -> tuple:
        return (w,)
