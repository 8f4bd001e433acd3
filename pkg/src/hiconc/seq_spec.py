"""Sequential specifications and evaluation of sequential histories.

A specification is a deterministic transition function over abstract
states.  Every builtin classifies each operation name as read-only or
state-changing; the universal construction and the HI checker rely on that
classification.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Sequence

ACK = "ack"
EMPTY = "empty"  # r0 of the queue: "nothing at the front"
FULL = "full"
SUCCESS = "success"
FAILURE = "failure"


@dataclass(frozen=True)
class Op:
    name: str
    args: tuple = ()

    def __repr__(self) -> str:
        return f"{self.name}({', '.join(map(repr, self.args))})"


def op(name: str, *args: Any) -> Op:
    return Op(name, tuple(args))


class SpecViolation(Exception):
    """A sequential history whose responses disagree with the transition."""

    def __init__(self, index: int, operation: Op, expected: Any, got: Any) -> None:
        super().__init__(f"event {index}: {operation!r} should return {expected!r}, got {got!r}")
        self.index = index
        self.operation = operation
        self.expected = expected
        self.got = got


@dataclass(frozen=True, eq=False)
class SequentialSpec:
    """(Q, q0, O, R, delta) plus the read-only classification.

    ``operations`` lists O when it is finite (used for reachability and
    exhaustive property checks); when it is ``None`` an operation is valid
    iff its name is in ``op_names``.  ``states`` lists Q when it is finite
    and known up front; otherwise it is ``None`` and :meth:`reachable`
    explores.  ``bottom_ok`` lets responses be ``None`` (only for objects
    that are never wrapped by the universal construction).
    """

    name: str
    initial: Hashable
    transition: Callable[[Any, Op], tuple[Any, Any]]
    read_only_names: frozenset
    operations: tuple | None
    states: tuple | None = None
    params: tuple = field(default=())
    op_names: frozenset = frozenset()
    bottom_ok: bool = False

    __opaque_local__ = True

    def validate(self, o: Op) -> None:
        if type(o) is not Op:
            raise TypeError(f"{self.name}: not an operation: {o!r}")
        ok = o.name in self.op_names if self.operations is None else o in self._op_set
        if not ok:
            raise ValueError(f"{self.name}: operation {o!r} not in the specification")

    @property
    def _op_set(self) -> frozenset:
        cached = self.__dict__.get("_ops_cache")
        if cached is None:
            cached = frozenset(self.operations)
            object.__setattr__(self, "_ops_cache", cached)
        return cached

    def apply(self, q: Any, o: Op) -> tuple[Any, Any]:
        self.validate(o)
        q2, r = self.transition(q, o)
        if (r is None and not self.bottom_ok) or type(r) is Op:
            raise TypeError(f"{self.name}: response {r!r} collides with bottom or with O")
        return q2, r

    def is_read_only(self, o: Op) -> bool:
        return o.name in self.read_only_names

    def is_state_changing(self, o: Op) -> bool:
        return o.name not in self.read_only_names

    def reachable(self, limit: int = 100_000) -> frozenset:
        if self.operations is None:
            raise ValueError(f"{self.name}: operation set is not enumerable")
        seen = {self.initial}
        todo = deque([self.initial])
        while todo:
            q = todo.popleft()
            for o in self.operations:
                q2, _ = self.apply(q, o)
                if q2 not in seen:
                    if len(seen) >= limit:
                        raise OverflowError(f"{self.name}: more than {limit} reachable states")
                    seen.add(q2)
                    todo.append(q2)
        return frozenset(seen)

    def all_states(self) -> tuple:
        if self.states is not None:
            return self.states
        return tuple(sorted(self.reachable(), key=repr))

    def __repr__(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.name}:{inner}" if inner else self.name


def apply(spec: SequentialSpec, q: Any, o: Op) -> tuple[Any, Any]:
    return spec.apply(q, o)


# -- builtins ----------------------------------------------------------------


def register_spec(K: int, v0: int = 1) -> SequentialSpec:
    if K < 2:
        raise ValueError("register needs K >= 2")
    if not 1 <= v0 <= K:
        raise ValueError(f"initial value {v0} outside 1..{K}")

    def delta(q, o):
        if o.name == "read":
            return q, q
        return o.args[0], ACK

    ops = (op("read"),) + tuple(op("write", v) for v in range(1, K + 1))
    return SequentialSpec("register", v0, delta, frozenset({"read"}), ops,
                          tuple(range(1, K + 1)), (("K", K), ("v0", v0)))


def maxreg_spec(K: int, v0: int = 1) -> SequentialSpec:
    """Max register: ``write`` keeps the larger value, ``read`` returns it."""
    if K < 2:
        raise ValueError("max register needs K >= 2")
    if not 1 <= v0 <= K:
        raise ValueError(f"initial value {v0} outside 1..{K}")

    def delta(q, o):
        if o.name == "read":
            return q, q
        return max(q, o.args[0]), ACK

    ops = (op("read"),) + tuple(op("write", v) for v in range(1, K + 1))
    return SequentialSpec("maxreg", v0, delta, frozenset({"read"}), ops,
                          tuple(range(v0, K + 1)), (("K", K), ("v0", v0)))


def counter_spec(modulus: int | None = None) -> SequentialSpec:
    """inc/dec answer ``ack``; read answers the value.

    With a modulus the value wraps, which keeps Q finite (needed when the
    state has to fit a machine word).
    """
    if modulus is not None and modulus < 2:
        raise ValueError("modulus must be >= 2")

    def delta(q, o):
        if o.name == "read":
            return q, q
        q2 = q + 1 if o.name == "inc" else q - 1
        if modulus is not None:
            q2 %= modulus
        return q2, ACK

    states = tuple(range(modulus)) if modulus is not None else None
    params = (("modulus", modulus),) if modulus is not None else ()
    return SequentialSpec("counter", 0, delta, frozenset({"read"}),
                          (op("inc"), op("dec"), op("read")), states, params)


def queue_spec(t: int, capacity: int | None = None) -> SequentialSpec:
    """FIFO queue over 1..t with peek.

    ``EMPTY`` is both the answer of peek/dequeue on an empty queue and the
    default answer of enqueue.  With a capacity, enqueue on a full queue
    leaves it unchanged and answers ``FULL``.
    """
    if t < 1:
        raise ValueError("queue needs t >= 1")
    if capacity is not None and capacity < 1:
        raise ValueError("capacity must be >= 1")

    def delta(q, o):
        if o.name == "peek":
            return q, q[0] if q else EMPTY
        if o.name == "dequeue":
            return (q[1:], q[0]) if q else (q, EMPTY)
        if capacity is not None and len(q) >= capacity:
            return q, FULL
        return q + (o.args[0],), EMPTY

    ops = (op("dequeue"), op("peek")) + tuple(op("enqueue", v) for v in range(1, t + 1))
    params = (("t", t),) + ((("capacity", capacity),) if capacity is not None else ())
    return SequentialSpec("queue", (), delta, frozenset({"peek"}), ops, None, params)


def set_spec(t: int, blind: bool = False) -> SequentialSpec:
    """Set over 1..t; insert/remove answer success or failure.

    With ``blind`` they answer ``ack`` whatever the prior membership, which
    is what a single unconditional write can promise.
    """
    if t < 1:
        raise ValueError("set needs t >= 1")

    def delta(q, o):
        i = o.args[0]
        if o.name == "lookup":
            return q, i in q
        if o.name == "insert":
            r = FAILURE if i in q else SUCCESS
            q2 = q | {i}
        else:
            r = SUCCESS if i in q else FAILURE
            q2 = q - {i}
        return q2, ACK if blind else r

    ops = tuple(op(name, i) for name in ("insert", "remove", "lookup") for i in range(1, t + 1))
    return SequentialSpec("set", frozenset(), delta, frozenset({"lookup"}), ops, None,
                          (("t", t),) + ((("blind", 1),) if blind else ()))


BUILTINS: dict[str, Callable[..., SequentialSpec]] = {
    "register": register_spec,
    "maxreg": maxreg_spec,
    "counter": counter_spec,
    "queue": queue_spec,
    "set": set_spec,
}


def parse_params(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep or not re.fullmatch(r"[A-Za-z_]\w*", key):
            raise ValueError(f"bad parameter {part!r}; expected key=value")
        out[key] = int(value) if re.fullmatch(r"-?\d+", value) else value
    return out


def make_spec(text: str) -> SequentialSpec:
    """Build a builtin from ``name:key=value,...`` (e.g. ``register:K=4,v0=1``)."""
    name, _, rest = text.partition(":")
    factory = BUILTINS.get(name.strip())
    if factory is None:
        raise ValueError(f"unknown specification {name!r}; known: {', '.join(BUILTINS)}")
    return factory(**parse_params(rest))


# -- sequential histories ----------------------------------------------------


def seq_state(spec: SequentialSpec, history: Iterable) -> Any:
    """Fold the transition over ``(op, response)`` pairs starting from q0.

    A response of ``...`` (Ellipsis) means "not observed" and is not checked.
    """
    q = spec.initial
    for k, (o, r) in enumerate(history):
        q, expected = spec.apply(q, o)
        if r is not ... and r != expected:
            raise SpecViolation(k, o, expected, r)
    return q


def run_ops(spec: SequentialSpec, ops: Sequence[Op], q: Any = None) -> tuple[Any, list]:
    """Apply ``ops`` from ``q`` (default q0); return final state and responses."""
    q = spec.initial if q is None else q
    out = []
    for o in ops:
        q, r = spec.apply(q, o)
        out.append(r)
    return q, out


def well_formed(events: Sequence) -> bool:
    """Per process, invocations and responses alternate starting with an invocation."""
    open_: set = set()
    for ev in events:
        if ev.kind == "inv":
            if ev.process in open_:
                return False
            open_.add(ev.process)
        elif ev.kind == "resp":
            if ev.process not in open_:
                return False
            open_.discard(ev.process)
        else:
            return False
    return True


def sequential_pairs(events: Sequence) -> list[tuple[Op, Any]]:
    """Pairs of a sequential history (each invocation immediately answered)."""
    if len(events) % 2:
        raise ValueError("sequential history must have matched events")
    out = []
    for inv, resp in zip(events[::2], events[1::2]):
        if inv.kind != "inv" or resp.kind != "resp" or inv.process != resp.process:
            raise ValueError("history is not sequential")
        out.append((inv.value, resp.value))
    return out
