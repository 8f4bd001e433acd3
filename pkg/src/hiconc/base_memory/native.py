"""Threaded execution of the same algorithm generators.

Each process gets a thread that drives its generator to completion,
executing accesses directly against :class:`NativeMemory`.  CAS cells hold a
packed integer word (payload in the low bits, one context bit per process
above it), so a cell is one bounded-width value as on real hardware.
Python offers no user-level CAS instruction, so every cell carries its own
lock that makes ``cas`` and ``write`` atomic; reads of a list slot are
atomic already.

Payloads are mapped to integers by a :class:`Codec`.  Codecs are fixed
tables or pure arithmetic built before the run, so the integer for a value
never depends on the order in which values were seen.
"""
from __future__ import annotations

import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Sequence

from .engine import RoleError
from .memory import BINARY, Cas, CasWord, Choose, Invoke, Memory, Note, Read, Respond, Write, check_domain

PAYLOAD_BITS = 48
MAX_CONTEXT_BITS = 16


class Codec:
    """Bijection between a payload domain and ``0..size-1``."""

    size: int

    def encode(self, value: Any) -> int:
        raise NotImplementedError

    def decode(self, code: int) -> Any:
        raise NotImplementedError


class IntCodec(Codec):
    """Identity on ``0..size-1``."""

    def __init__(self, size: int = 1 << PAYLOAD_BITS) -> None:
        self.size = size

    def encode(self, value: Any) -> int:
        if type(value) is not int or not 0 <= value < self.size:
            raise ValueError(f"{value!r} outside 0..{self.size - 1}")
        return value

    def decode(self, code: int) -> Any:
        return code


class TableCodec(Codec):
    """Position in a fixed, explicitly ordered value list."""

    def __init__(self, values: Iterable[Hashable]) -> None:
        self.values = tuple(values)
        self.index = {v: k for k, v in enumerate(self.values)}
        if len(self.index) != len(self.values):
            raise ValueError("duplicate values in codec table")
        self.size = len(self.values)

    def encode(self, value: Any) -> int:
        try:
            return self.index[value]
        except KeyError:
            raise ValueError(f"{value!r} is not encodable") from None

    def decode(self, code: int) -> Any:
        return self.values[code]


class PairCodec(Codec):
    """Mixed radix: ``a + size_a * b``."""

    def __init__(self, first: Codec, second: Codec) -> None:
        self.first, self.second = first, second
        self.size = first.size * second.size

    def encode(self, value: Any) -> int:
        a, b = value
        return self.first.encode(a) + self.first.size * self.second.encode(b)

    def decode(self, code: int) -> Any:
        b, a = divmod(code, self.first.size)
        return self.first.decode(a), self.second.decode(b)


class UnionCodec(Codec):
    """Disjoint union of codecs, tried in order; ``owner`` picks the part."""

    def __init__(self, parts: Sequence[Codec], owner: Callable[[Any], int]) -> None:
        self.parts = tuple(parts)
        self.owner = owner
        self.offsets = []
        total = 0
        for p in self.parts:
            self.offsets.append(total)
            total += p.size
        self.size = total

    def encode(self, value: Any) -> int:
        k = self.owner(value)
        return self.offsets[k] + self.parts[k].encode(value)

    def decode(self, code: int) -> Any:
        for k in range(len(self.parts) - 1, -1, -1):
            if code >= self.offsets[k]:
                return self.parts[k].decode(code - self.offsets[k])
        raise ValueError(code)


class WordCodec:
    """CasWord <-> machine word for one cell."""

    def __init__(self, payload: Codec, payload_bits: int = PAYLOAD_BITS, n: int = MAX_CONTEXT_BITS) -> None:
        if payload.size > 1 << payload_bits:
            raise ValueError(f"payload domain of {payload.size} values needs more than {payload_bits} bits")
        if n > MAX_CONTEXT_BITS:
            raise ValueError(f"at most {MAX_CONTEXT_BITS} context bits")
        self.payload = payload
        self.bits = payload_bits
        self.n = n

    def encode(self, word: CasWord) -> int:
        if word.context >> self.n:
            raise ValueError(f"context {bin(word.context)} wider than {self.n} bits")
        return self.payload.encode(word.val) | word.context << self.bits

    def decode(self, raw: int) -> CasWord:
        return CasWord(self.payload.decode(raw & ((1 << self.bits) - 1)), raw >> self.bits)


class NativeMemory:
    """The sealed layout of a :class:`Memory`, backed by locked slots."""

    def __init__(self, layout: Memory, codecs: dict[int, WordCodec] | None = None) -> None:
        layout.start()
        codecs = codecs or {}
        self.kinds = list(layout.kinds)
        self.names = list(layout.names)
        self.codecs: list[WordCodec | None] = []
        self.slots: list[int] = []
        for k, (kind, init) in enumerate(zip(layout.kinds, layout.states)):
            if kind == BINARY:
                self.codecs.append(None)
                self.slots.append(init)
                continue
            codec = codecs.get(k)
            if codec is None:
                codec = WordCodec(IntCodec())
            self.codecs.append(codec)
            self.slots.append(codec.encode(init if type(init) is CasWord else CasWord(init)))
        self.locks = [threading.Lock() for _ in self.slots]
        self.plain = {k for k, init in enumerate(layout.states) if self.kinds[k] != BINARY and type(init) is not CasWord}

    def _dec(self, k: int, raw: int) -> Any:
        codec = self.codecs[k]
        if codec is None:
            return raw
        word = codec.decode(raw)
        return word.val if k in self.plain else word

    def _enc(self, k: int, value: Any) -> int:
        codec = self.codecs[k]
        if codec is None:
            check_domain(BINARY, value)
            return value
        return codec.encode(CasWord(value) if k in self.plain else value)

    def read(self, k: int) -> Any:
        return self._dec(k, self.slots[k])

    def write(self, k: int, value: Any) -> None:
        raw = self._enc(k, value)
        with self.locks[k]:
            self.slots[k] = raw

    def cas(self, k: int, old: Any, new: Any) -> bool:
        raw_old, raw_new = self._enc(k, old), self._enc(k, new)
        with self.locks[k]:
            if self.slots[k] == raw_old:
                self.slots[k] = raw_new
                return True
            return False

    def snapshot(self) -> tuple:
        return tuple(self._dec(k, raw) for k, raw in enumerate(self.slots))

    def raw(self) -> tuple[int, ...]:
        return tuple(self.slots)


def drive(mem: NativeMemory, gen, ratio: tuple[int, int] = (1, 1)) -> Any:
    """Run one generator to completion.

    A two-way ``Choose`` follows the repeating pattern of ``ratio[0]`` left
    steps then ``ratio[1]`` right steps.
    """
    pattern = [0] * ratio[0] + [1] * ratio[1]
    if not pattern:
        raise ValueError("ratio must allow at least one side")
    value = None
    tick = 0
    while True:
        try:
            req = gen.send(value)
        except StopIteration as stop:
            return stop.value
        t = type(req)
        if t is Read:
            value = mem.read(req.obj.id)
        elif t is Write:
            mem.write(req.obj.id, req.value)
            value = None
        elif t is Cas:
            value = mem.cas(req.obj.id, req.old, req.new)
        elif t is Choose:
            value = pattern[tick % len(pattern)] % req.n
            tick += 1
        elif t in (Note, Invoke, Respond):
            value = None
        else:
            raise TypeError(f"unexpected request {req!r}")


class ReentryGuard:
    """Rejects a second concurrent call by the same process."""

    def __init__(self) -> None:
        self._active: set[int] = set()
        self._lock = threading.Lock()

    def enter(self, pid: int) -> None:
        with self._lock:
            if pid in self._active:
                raise RoleError(f"p{pid} already has a pending operation")
            self._active.add(pid)

    def leave(self, pid: int) -> None:
        with self._lock:
            self._active.discard(pid)


@dataclass
class NativeResult:
    responses: dict[int, list] = field(default_factory=dict)
    snapshot: tuple = ()
    elapsed: float = 0.0
    errors: list = field(default_factory=list)


def call(mem: NativeMemory, obj, pid: int, o, local, guard: ReentryGuard | None = None,
         ratio: tuple[int, int] = (1, 1)) -> Any:
    if guard is not None:
        guard.enter(pid)
    try:
        return drive(mem, obj.operation(pid, o, local), ratio)
    finally:
        if guard is not None:
            guard.leave(pid)


def run_native(mem: NativeMemory, obj, programs: dict[int, Sequence], switch_interval: float = 1e-5,
               timeout: float | None = None, ratio: tuple[int, int] = (1, 1)) -> NativeResult:
    """One thread per process; returns responses per process and the final snapshot."""
    result = NativeResult({pid: [] for pid in programs})
    guard = ReentryGuard()
    barrier = threading.Barrier(len(programs))

    def worker(pid: int, program: Sequence) -> None:
        local = obj.new_local(pid)
        out = result.responses[pid]
        try:
            barrier.wait()
            for o in program:
                out.append(call(mem, obj, pid, o, local, guard, ratio))
        except Exception as exc:  # surfaced to the caller
            result.errors.append((pid, exc))

    old = sys.getswitchinterval()
    sys.setswitchinterval(switch_interval)
    try:
        threads = [threading.Thread(target=worker, args=(pid, prog), daemon=True) for pid, prog in programs.items()]
        start = time.perf_counter()
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout)
        result.elapsed = time.perf_counter() - start
        if any(t.is_alive() for t in threads):
            result.errors.append((None, TimeoutError(f"threads still running after {timeout}s")))
    finally:
        sys.setswitchinterval(old)
    result.snapshot = mem.snapshot()
    return result
