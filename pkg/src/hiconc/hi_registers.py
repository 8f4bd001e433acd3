"""Single-writer single-reader K-valued registers built from binary registers,
plus a one-bit-per-element set and a max register.

Every operation is a generator over :mod:`hiconc.base_memory` requests, so
the same code runs under the deterministic engine, the explorer and the
threaded native runner.  Loops are written with explicit indices so that a
suspended operation's position is fully described by its local variables.

Variants:

* :class:`BaselineRegister` -- wait-free, not history independent.
* :class:`LockFreeRegister` -- writes also clear upward; a read retries a
  scan that can fail, so reads are only lock-free.  State-quiescent HI.
* :class:`WaitFreeRegister` -- adds a help array ``B`` and two reader flags
  so that a read finishes after two failed scans.  Quiescent HI.
* :class:`MaxRegister` -- baseline writes, suppressed unless the value grows.
* :class:`HISet` -- ``S[i]`` is 1 iff ``i`` is in the set.
"""
from __future__ import annotations

from typing import Any

from .base_memory.engine import ProcessLocal, RoleError, opaque
from .base_memory.memory import BINARY, Memory, Read, Write
from .seq_spec import ACK, Op, SequentialSpec, maxreg_spec, register_spec, set_spec

WRITER = 1
READER = 2


class ReaderInvariantError(AssertionError):
    """A read reached a point its correctness argument rules out."""


@opaque
class _SWSR:
    """Shared plumbing: layout of ``A``, role checks, dispatch."""

    name = "swsr"

    def __init__(self, mem: Memory, K: int, v0: int = 1, writer: int = WRITER, reader: int = READER) -> None:
        if K < 2:
            raise ValueError("K must be >= 2")
        if not 1 <= v0 <= K:
            raise ValueError(f"v0={v0} outside 1..{K}")
        if writer == reader:
            raise ValueError("writer and reader must be different processes")
        self.K, self.v0 = K, v0
        self.writer, self.reader = writer, reader
        self.A = mem.alloc_array(BINARY, [int(j == v0) for j in range(1, K + 1)], "A")
        self.spec = self.make_spec()

    def make_spec(self) -> SequentialSpec:
        return register_spec(self.K, self.v0)

    def new_local(self, pid: int) -> ProcessLocal:
        return ProcessLocal()

    def check(self, pid: int, o: Op) -> None:
        self.spec.validate(o)
        role = self.writer if o.name == "write" else self.reader
        if pid != role:
            raise RoleError(f"p{pid} may not {o.name} on a register owned by writer p{self.writer} / reader p{self.reader}")

    def operation(self, pid: int, o: Op, local: ProcessLocal):
        self.check(pid, o)
        if o.name == "write":
            yield from self.write(o.args[0], local)
            return ACK
        return (yield from self.read(local))

    def canonical(self, v: int) -> tuple:
        """One-hot ``A`` at ``v``; every other base object zero."""
        return tuple(int(j == v) for j in range(1, self.K + 1))

    # scans shared by several variants

    def _clear_down(self, v: int):
        j = v - 1
        while j >= 1:
            yield Write(self.A[j - 1], 0)
            j -= 1

    def _clear_up(self, v: int):
        j = v + 1
        while j <= self.K:
            yield Write(self.A[j - 1], 0)
            j += 1

    def _scan_down(self, val: int):
        # smallest index below val that reads 1, else val
        j = val - 1
        while j >= 1:
            bit = yield Read(self.A[j - 1])
            if bit == 1:
                val = j
            j -= 1
        return val

    def try_read(self):
        """Scan up for a 1, then down; ``None`` when no 1 is seen."""
        j = 1
        while j <= self.K:
            bit = yield Read(self.A[j - 1])
            if bit == 1:
                val = yield from self._scan_down(j)
                return val
            j += 1
        return None


class BaselineRegister(_SWSR):
    name = "alg1"

    def write(self, v: int, local):
        yield Write(self.A[v - 1], 1)
        yield from self._clear_down(v)

    def read(self, local):
        j = 1
        while True:
            if j > self.K:
                raise ReaderInvariantError("upward scan found no 1")
            bit = yield Read(self.A[j - 1])
            if bit == 1:
                break
            j += 1
        val = yield from self._scan_down(j)
        return val


class LockFreeRegister(_SWSR):
    name = "alg2"

    def write(self, v: int, local):
        yield Write(self.A[v - 1], 1)
        yield from self._clear_down(v)
        yield from self._clear_up(v)

    def read(self, local):
        while True:
            val = yield from self.try_read()
            if val is not None:
                return val


class WaitFreeRegister(LockFreeRegister):
    """Reader announces itself in ``flag[1]``; the writer parks its previous
    value in ``B`` for a reader whose scans both failed."""

    name = "alg4"

    def __init__(self, mem: Memory, K: int, v0: int = 1, writer: int = WRITER, reader: int = READER) -> None:
        super().__init__(mem, K, v0, writer, reader)
        self.B = mem.alloc_array(BINARY, [0] * K, "B")
        self.flag = mem.alloc_array(BINARY, [0, 0], "flag")

    def new_local(self, pid: int) -> ProcessLocal:
        return ProcessLocal(last_val=self.v0) if pid == self.writer else ProcessLocal()

    def canonical(self, v: int) -> tuple:
        return super().canonical(v) + (0,) * (self.K + 2)

    def read(self, local):
        yield Write(self.flag[0], 1)
        val = None
        it = 0
        while it < 2 and val is None:
            val = yield from self.try_read()
            it += 1
        if val is None:
            j = 1
            while j <= self.K:
                bit = yield Read(self.B[j - 1])
                if bit == 1:
                    val = j
                j += 1
            if val is None:
                raise ReaderInvariantError("both scans failed and B is empty")
        yield Write(self.flag[1], 1)
        j = 1
        while j <= self.K:
            yield Write(self.B[j - 1], 0)
            j += 1
        yield Write(self.flag[0], 0)
        yield Write(self.flag[1], 0)
        return val

    def write(self, v: int, local):
        empty = True
        j = 1
        while j <= self.K and empty:
            bit = yield Read(self.B[j - 1])
            empty = bit == 0
            j += 1
        if empty:
            f1 = yield Read(self.flag[0])
            if f1 == 1:
                yield Write(self.B[local.last_val - 1], 1)
                f2 = yield Read(self.flag[1])
                if f2 != 1:
                    f1 = yield Read(self.flag[0])
                if f2 == 1 or f1 == 0:
                    yield Write(self.B[local.last_val - 1], 0)
        yield Write(self.A[v - 1], 1)
        yield from self._clear_down(v)
        yield from self._clear_up(v)
        local.last_val = v


class MaxRegister(BaselineRegister):
    """Writes that do not raise the maximum touch no memory."""

    name = "maxreg"

    def make_spec(self) -> SequentialSpec:
        return maxreg_spec(self.K, self.v0)

    def new_local(self, pid: int) -> ProcessLocal:
        return ProcessLocal(top=self.v0) if pid == self.writer else ProcessLocal()

    def write(self, v: int, local):
        if v <= local.top:
            return
        yield from BaselineRegister.write(self, v, local)
        local.top = v


@opaque
class HISet:
    """Set over ``1..t`` as ``t`` bits; every operation is one access.

    Any process may call any operation.  ``insert``/``remove`` are blind
    writes and answer ``ack``.
    """

    name = "hiset"

    def __init__(self, mem: Memory, t: int) -> None:
        if t < 1:
            raise ValueError("t must be >= 1")
        self.t = t
        self.S = mem.alloc_array(BINARY, [0] * t, "S")
        self.spec = set_spec(t, blind=True)

    def new_local(self, pid: int) -> ProcessLocal:
        return ProcessLocal()

    def operation(self, pid: int, o: Op, local: Any):
        self.spec.validate(o)
        i = o.args[0]
        if o.name == "lookup":
            bit = yield Read(self.S[i - 1])
            return bit == 1
        yield Write(self.S[i - 1], int(o.name == "insert"))
        return ACK

    def canonical(self, q: frozenset) -> tuple:
        return tuple(int(i in q) for i in range(1, self.t + 1))


REGISTERS = {
    "alg1": BaselineRegister,
    "alg2": LockFreeRegister,
    "alg4": WaitFreeRegister,
    "maxreg": MaxRegister,
}


def make_register(kind: str, mem: Memory, K: int, v0: int = 1, **roles: int) -> _SWSR:
    try:
        cls = REGISTERS[kind]
    except KeyError:
        raise ValueError(f"unknown register {kind!r}; known: {', '.join(REGISTERS)}") from None
    return cls(mem, K, v0, **roles)
