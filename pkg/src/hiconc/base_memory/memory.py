"""Shared base objects and the access requests algorithms yield.

Algorithms never touch memory directly.  They are generators that yield
``Read``/``Write``/``Cas`` requests and receive the result; whoever drives
the generator (the deterministic engine, the explorer, or the native
runner) decides when and how each access executes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

BINARY = "binary_register"
CAS_CELL = "cas_cell"
KINDS = (BINARY, CAS_CELL)


class SubstrateError(Exception):
    """Base class for substrate errors."""


class LayoutError(SubstrateError):
    """Allocation attempted after the first step."""


class DomainError(SubstrateError):
    """A value outside a base object's domain."""


@dataclass(frozen=True)
class CasWord:
    """Payload plus per-process context bits, stored in one CAS cell.

    ``context`` is a bitmask: bit ``i - 1`` is set iff process ``p_i`` is
    in the context.
    """

    val: Any
    context: int = 0

    def has(self, pid: int) -> bool:
        return bool(self.context >> (pid - 1) & 1)

    def with_member(self, pid: int) -> "CasWord":
        return CasWord(self.val, self.context | 1 << (pid - 1))

    def without_member(self, pid: int) -> "CasWord":
        return CasWord(self.val, self.context & ~(1 << (pid - 1)))

    def members(self) -> frozenset[int]:
        out, mask, pid = set(), self.context, 1
        while mask:
            if mask & 1:
                out.add(pid)
            mask >>= 1
            pid += 1
        return frozenset(out)

    def bits(self, n: int) -> tuple[int, ...]:
        return tuple(self.context >> k & 1 for k in range(n))

    def __repr__(self) -> str:
        return f"CasWord({self.val!r}, ctx={bin(self.context)})"


@dataclass(frozen=True)
class BaseObject:
    id: int
    kind: str
    name: str = ""


# -- requests -------------------------------------------------------------


@dataclass(frozen=True)
class Read:
    obj: BaseObject


@dataclass(frozen=True)
class Write:
    obj: BaseObject
    value: Any


@dataclass(frozen=True)
class Cas:
    obj: BaseObject
    old: Any
    new: Any


@dataclass(frozen=True)
class Choose:
    """Nondeterministic local choice among ``n`` branches.

    Not a memory step by itself; the branch is picked by whoever schedules
    the process and the process then performs one access on that branch.
    """

    n: int


@dataclass(frozen=True)
class Note:
    """Trace annotation attached to the process's latest step."""

    tag: str
    data: tuple = ()


@dataclass(frozen=True)
class Invoke:
    op: Any


@dataclass(frozen=True)
class Respond:
    value: Any


ACCESSES = (Read, Write, Cas)


def check_domain(kind: str, value: Any) -> None:
    if kind == BINARY and value not in (0, 1):
        raise DomainError(f"binary register cannot hold {value!r}")
    if kind == CAS_CELL and isinstance(value, bool):
        # bools are ints in Python; keep cells free of them so 1 != True traps
        raise DomainError("cas cell cannot hold a bool")


class Memory:
    """A fixed vector of base objects.

    All allocation happens before the first access; ``start()`` seals the
    layout (the engine calls it).
    """

    def __init__(self) -> None:
        self.kinds: list[str] = []
        self.names: list[str] = []
        self.states: list[Any] = []
        self.sealed = False

    def alloc(self, kind: str, initial: Any, name: str = "") -> BaseObject:
        if self.sealed:
            raise LayoutError("memory layout is fixed once execution starts")
        if kind not in KINDS:
            raise DomainError(f"unknown base object kind {kind!r}")
        check_domain(kind, initial)
        obj = BaseObject(len(self.states), kind, name or f"{kind}[{len(self.states)}]")
        self.kinds.append(kind)
        self.names.append(obj.name)
        self.states.append(initial)
        return obj

    def alloc_array(self, kind: str, initials, name: str) -> tuple[BaseObject, ...]:
        return tuple(self.alloc(kind, v, f"{name}[{k}]") for k, v in enumerate(initials, 1))

    def start(self) -> None:
        self.sealed = True

    def __len__(self) -> int:
        return len(self.states)

    def read(self, obj: BaseObject) -> Any:
        return self.states[obj.id]

    def write(self, obj: BaseObject, value: Any) -> None:
        check_domain(self.kinds[obj.id], value)
        self.states[obj.id] = value

    def cas(self, obj: BaseObject, old: Any, new: Any) -> bool:
        check_domain(self.kinds[obj.id], new)
        if self.states[obj.id] == old:
            self.states[obj.id] = new
            return True
        return False

    def execute(self, req) -> Any:
        if type(req) is Read:
            return self.states[req.obj.id]
        if type(req) is Write:
            self.write(req.obj, req.value)
            return None
        if type(req) is Cas:
            return self.cas(req.obj, req.old, req.new)
        raise TypeError(f"not a memory access: {req!r}")

    def snapshot(self) -> tuple:
        return tuple(self.states)

    def restore(self, snap: tuple) -> None:
        self.states[:] = snap


def distance(a: tuple, b: tuple) -> int:
    """Number of base objects whose states differ."""
    if len(a) != len(b):
        raise ValueError("snapshots of different layouts")
    return sum(1 for x, y in zip(a, b) if x != y)
