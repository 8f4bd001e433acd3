"""Deterministic step engine.

Each process runs a *program* (a sequence of high-level operations) against
a concurrent object.  The object's ``operation(pid, op, local)`` method is a
generator that yields access requests; the engine executes one access per
scheduled step and records steps, invocations, responses, notes and the
memory snapshot after every step.

Invocations are recorded lazily (immediately before the operation's first
step) and responses eagerly (in the same transition as the last step).
Both choices only remove real-time slack, so they yield the most
constrained histories and the most observation points.

Local state of a suspended process is captured by walking its generator
frames (see :func:`local_key`).  Algorithms therefore keep all loop state in
local variables or ``for`` iterators and avoid half-evaluated expressions
around ``yield``.
"""
from __future__ import annotations

import dataclasses
import dis
import enum
import gc
import sys
from dataclasses import dataclass, field
from types import GeneratorType
from typing import Any, Callable, Iterable, Sequence

from .memory import ACCESSES, Choose, Invoke, Memory, Note, Read, Respond, Write


class ScheduleError(Exception):
    """A schedule asked for a move that is not available."""


class RoleError(Exception):
    """An operation was invoked by a process not entitled to it."""


# -- local-state capture ---------------------------------------------------

_ATOMS = frozenset({int, str, float, bool, type(None), bytes, range})


def opaque(cls):
    """Class decorator: instances are configuration-independent handles."""
    cls.__opaque_local__ = True
    return cls


def local_key(value: Any) -> Any:
    """Hashable fingerprint of a local value, recursing into generators."""
    t = type(value)
    if t in _ATOMS:
        return value
    if t is tuple:
        return tuple(local_key(v) for v in value)
    if t is frozenset:
        return value
    if t is GeneratorType:
        return generator_key(value)
    if getattr(t, "__opaque_local__", False):
        return t.__name__
    hook = getattr(value, "__local_key__", None)
    if hook is not None:
        return (t.__name__, hook())
    if isinstance(value, enum.Enum):
        return value
    if dataclasses.is_dataclass(value) and t.__dataclass_params__.frozen:
        return value
    raise TypeError(f"local of type {t.__name__} has no stable key: {value!r}")


# Variables that are dead at a suspension point cannot influence the future,
# so they are left out of the key.  Liveness is a backward dataflow over the
# bytecode; every exception handler is treated as a possible successor of
# every instruction, which over-approximates and so stays sound.  The
# analysis is written against the 3.10 instruction set; other versions keep
# every local.

_TERMINAL = frozenset({"RETURN_VALUE", "RAISE_VARARGS", "RERAISE", "JUMP_ABSOLUTE", "JUMP_FORWARD"})
_SETUPS = frozenset({"SETUP_FINALLY", "SETUP_WITH", "SETUP_ASYNC_WITH"})
_JUMPS = frozenset(dis.hasjrel) | frozenset(dis.hasjabs)
_LIVENESS_OK = sys.version_info[:2] == (3, 10)
_live_cache: dict = {}


def _liveness(code) -> dict[int, frozenset]:
    instrs = list(dis.get_instructions(code))
    at = {ins.offset: k for k, ins in enumerate(instrs)}
    succ: list[list[int]] = []
    handlers: set[int] = set()
    for k, ins in enumerate(instrs):
        out = []
        if ins.opcode in _JUMPS:
            if ins.opname in _SETUPS:
                handlers.add(at[ins.argval])
            else:
                out.append(at[ins.argval])
        if ins.opname not in _TERMINAL and k + 1 < len(instrs):
            out.append(k + 1)
        succ.append(out)
    extra = sorted(handlers)
    uses = [frozenset((ins.argval,)) if ins.opname == "LOAD_FAST" else frozenset() for ins in instrs]
    defs = [frozenset((ins.argval,)) if ins.opname in ("STORE_FAST", "DELETE_FAST") else frozenset()
            for ins in instrs]
    live = [frozenset()] * len(instrs)
    changed = True
    while changed:
        changed = False
        for k in range(len(instrs) - 1, -1, -1):
            out = frozenset().union(*(live[j] for j in succ[k]), *(live[j] for j in extra))
            new = (out - defs[k]) | uses[k]
            if new != live[k]:
                live[k] = new
                changed = True
    return {ins.offset: live[k] for k, ins in enumerate(instrs)}


def live_locals(code, lasti: int) -> frozenset | None:
    """Fast locals possibly read after resuming at ``lasti``; None if unknown."""
    if not _LIVENESS_OK:
        return None
    table = _live_cache.get(code)
    if table is None:
        table = _live_cache[code] = _liveness(code)
    return table.get(lasti + 2)


_for_cache: dict = {}


def _iterator_keys(frame, code) -> tuple:
    """Positions of ``for`` iterators held on the frame's value stack."""
    has_for = _for_cache.get(code)
    if has_for is None:
        has_for = _for_cache[code] = any(ins.opname == "FOR_ITER" for ins in dis.get_instructions(code))
    if not has_for:
        return ()
    out = []
    for ref in gc.get_referents(frame):
        t = type(ref)
        if t is GeneratorType or not hasattr(t, "__next__"):
            continue
        try:
            _, args, *pos = ref.__reduce__()
        except TypeError:
            raise TypeError(f"iterator of type {t.__name__} has no stable key") from None
        args = tuple(tuple(a) if type(a) is list else a for a in args)
        out.append((t.__name__, local_key(args), local_key(tuple(pos))))
    return tuple(out)


def generator_key(gen: GeneratorType) -> tuple:
    frame = gen.gi_frame
    if frame is None:
        return ("done",)
    code = gen.gi_code
    live = live_locals(code, frame.f_lasti)
    if live is None:
        items = tuple((k, local_key(v)) for k, v in frame.f_locals.items())
    else:
        fast = code.co_varnames
        items = tuple((k, local_key(v)) for k, v in frame.f_locals.items() if k in live or k not in fast)
    sub = gen.gi_yieldfrom
    sub_key = None if sub is None else local_key(sub)
    return (code.co_name, frame.f_lasti, items, sub_key, _iterator_keys(frame, code))


class ProcessLocal:
    """Per-process persistent locals (e.g. ``last_val``, ``priority``)."""

    def __init__(self, **values: Any) -> None:
        self.__dict__.update(values)

    def __local_key__(self) -> tuple:
        return tuple(sorted((k, local_key(v)) for k, v in vars(self).items()))

    def __repr__(self) -> str:
        return f"ProcessLocal({vars(self)!r})"


# -- records ---------------------------------------------------------------


@dataclass(frozen=True)
class Step:
    index: int
    process: int
    object: int
    kind: str
    args: tuple
    result: Any
    opno: int


@dataclass(frozen=True)
class Event:
    process: int
    kind: str  # "inv" | "resp"
    value: Any  # the op for "inv", the response for "resp"
    opno: int
    pos: int  # steps completed when the event happened


@dataclass(frozen=True)
class NoteRecord:
    step: int  # index of the step the note follows (-1: before any step)
    events: int  # history events recorded before the note
    process: int
    opno: int
    tag: str
    data: tuple


@dataclass(frozen=True)
class OpRecord:
    process: int
    opno: int
    op: Any
    inv: int  # event index
    resp: int | None
    response: Any

    @property
    def pending(self) -> bool:
        return self.resp is None


def operations(events: Sequence[Event]) -> list[OpRecord]:
    """Pair invocations with responses."""
    out: list[OpRecord] = []
    open_: dict[int, tuple[int, Event]] = {}
    for k, ev in enumerate(events):
        if ev.kind == "inv":
            if ev.process in open_:
                raise ValueError(f"p{ev.process} invoked while pending")
            open_[ev.process] = (k, ev)
        else:
            if ev.process not in open_:
                raise ValueError(f"p{ev.process} responded with nothing pending")
            ik, inv = open_.pop(ev.process)
            out.append(OpRecord(ev.process, inv.opno, inv.value, ik, k, ev.value))
    for ik, inv in open_.values():
        out.append(OpRecord(inv.process, inv.opno, inv.value, ik, None, None))
    out.sort(key=lambda r: r.inv)
    return out


@dataclass
class Execution:
    """A recorded run: steps, history, notes and per-step memory."""

    names: tuple[str, ...]
    steps: list[Step] = field(default_factory=list)
    memory: list[tuple] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    marks: list[int] = field(default_factory=list)
    notes: list[NoteRecord] = field(default_factory=list)
    schedule: list = field(default_factory=list)
    markers: dict[int, tuple] = field(default_factory=dict)
    status: str = "complete"

    @property
    def initial(self) -> tuple:
        return self.memory[0]

    @property
    def final(self) -> tuple:
        return self.memory[-1]

    def snapshot(self, index: int) -> tuple:
        return snapshot(self, index)

    def history(self, config: int | None = None) -> tuple[Event, ...]:
        """Events visible at configuration ``config`` (default: the last)."""
        if config is None:
            return tuple(self.events)
        return tuple(self.events[: self.marks[config]])

    def operations(self, config: int | None = None) -> list[OpRecord]:
        return operations(self.history(config))

    def own_steps(self, process: int, opno: int) -> int:
        return sum(1 for s in self.steps if s.process == process and s.opno == opno)


def snapshot(execution: Execution, index: int) -> tuple:
    """Memory after ``index`` steps of ``execution``."""
    if not 0 <= index < len(execution.memory):
        raise IndexError(f"no configuration {index}; execution has {len(execution.steps)} steps")
    return execution.memory[index]


# -- machines --------------------------------------------------------------


def _process_main(obj, pid: int, program: tuple, local: ProcessLocal):
    k = 0
    while k < len(program):
        yield Invoke(program[k])
        r = yield from obj.operation(pid, program[k], local)
        yield Respond(r)
        k += 1


class Machine:
    """One process: its generator plus the log of values fed into it.

    The explorer rewinds a machine with :meth:`rewind`, which only records
    the target; the generator is rebuilt by replaying its input log the next
    time it has to run (:meth:`sync`).  Keys are remembered per log length,
    so a rewound machine usually need not be rebuilt just to be keyed.
    """

    def __init__(self, obj, pid: int, program: Sequence) -> None:
        self.obj = obj
        self.pid = pid
        self.program = tuple(program)
        self.keys: list = []
        self.reset()

    def reset(self) -> None:
        self.local = self.obj.new_local(self.pid)
        self.gen = _process_main(self.obj, self.pid, self.program, self.local)
        self.log: list[Any] = []
        self.pending: Any = None
        self.buffered: list[Any] = []
        self.opno = -1
        self.op_steps = 0
        self.done = False
        self.active = False  # an op has been invoked and not yet responded
        self.target: int | None = None

    def feed(self, value: Any):
        if self.target is not None:
            self.sync()
        del self.keys[len(self.log) + 1:]
        self.log.append(value)
        return self.gen.send(value)

    def replay(self, inputs: Sequence, state: tuple) -> None:
        """Rebuild from scratch by re-feeding ``inputs``; no memory traffic."""
        keys = self.keys[: len(inputs) + 1]
        self.reset()
        gen = self.gen
        for x in inputs:
            gen.send(x)
        self.log = list(inputs)
        self.keys = keys
        self.set_state(state)

    def sync(self) -> None:
        if self.target is not None:
            n, self.target = self.target, None
            self.replay(self.log[:n], self.state())

    def rewind(self, length: int, state: tuple) -> None:
        if self.length() != length:
            self.target = length
        self.set_state(state)

    def length(self) -> int:
        return len(self.log) if self.target is None else self.target

    def set_state(self, state: tuple) -> None:
        (self.pending, buffered, self.opno, self.op_steps, self.done, self.active) = state
        self.buffered = list(buffered)

    def state(self) -> tuple:
        return (self.pending, tuple(self.buffered), self.opno, self.op_steps, self.done, self.active)

    def key(self) -> Any:
        n = self.length()
        if n < len(self.keys) and self.keys[n] is not None:
            return self.keys[n]
        self.sync()
        k = (generator_key(self.gen), self.pending, tuple(self.buffered), self.done)
        if len(self.keys) <= n:
            self.keys.extend([None] * (n + 1 - len(self.keys)))
        self.keys[n] = k
        return k

    def moves(self) -> list:
        if self.done:
            return []
        if type(self.pending) is Choose:
            return [(self.pid, b) for b in range(self.pending.n)]
        return [(self.pid, None)]


class World:
    """Memory plus machines plus the execution being recorded."""

    def __init__(self, memory: Memory, obj, programs: dict[int, Sequence]) -> None:
        self.mem = memory
        self.obj = obj
        self.machines = {pid: Machine(obj, pid, prog) for pid, prog in sorted(programs.items())}
        memory.start()
        self.exe = Execution(names=tuple(memory.names))
        self.exe.memory.append(memory.snapshot())
        self.exe.marks.append(0)
        for m in self.machines.values():
            self._pump(m, None, initial=True)
        self.exe.marks[0] = len(self.exe.events)

    # the pump runs local code up to the next schedulable request
    def _pump(self, m: Machine, value: Any, initial: bool = False) -> None:
        exe = self.exe
        try:
            req = m.feed(value)
            while True:
                t = type(req)
                if t is Note:
                    if m.active:
                        exe.notes.append(NoteRecord(len(exe.steps) - 1, len(exe.events), m.pid, m.opno, req.tag, req.data))
                    else:
                        m.buffered.append(req)
                    req = m.feed(None)
                elif t is Respond:
                    exe.events.append(Event(m.pid, "resp", req.value, m.opno, len(exe.steps)))
                    m.active = False
                    req = m.feed(None)
                elif t is Invoke:
                    m.buffered.append(req)
                    req = m.feed(None)
                else:
                    m.pending = req
                    return
        except StopIteration:
            m.pending = None
            m.done = True

    def enabled(self) -> list:
        out = []
        for m in self.machines.values():
            out.extend(m.moves())
        return out

    def step(self, pid: int, branch: int | None = None) -> Step:
        m = self.machines.get(pid)
        if m is None:
            raise ScheduleError(f"unknown process p{pid}")
        if m.done:
            raise ScheduleError(f"p{pid} has no runnable step")
        exe = self.exe
        if m.buffered:
            for b in m.buffered:
                if type(b) is Invoke:
                    m.opno += 1
                    m.op_steps = 0
                    m.active = True
                    exe.events.append(Event(pid, "inv", b.op, m.opno, len(exe.steps)))
                else:
                    exe.notes.append(NoteRecord(len(exe.steps) - 1, len(exe.events), pid, m.opno, b.tag, b.data))
            m.buffered.clear()
        req = m.pending
        if type(req) is Choose:
            if branch is None or not 0 <= branch < req.n:
                raise ScheduleError(f"p{pid} is at a {req.n}-way choice; branch {branch!r} invalid")
            req = m.feed(branch)
            while type(req) is Note:
                exe.notes.append(NoteRecord(len(exe.steps) - 1, len(exe.events), pid, m.opno, req.tag, req.data))
                req = m.feed(None)
            if type(req) not in ACCESSES:
                raise TypeError(f"choice must lead to a memory access, got {req!r}")
        elif branch is not None:
            raise ScheduleError(f"p{pid} is not at a choice")
        result = self.mem.execute(req)
        if type(req) is Read:
            kind, args = "read", ()
        elif type(req) is Write:
            kind, args = "write", (req.value,)
        else:
            kind, args = "cas", (req.old, req.new)
        s = Step(len(exe.steps), pid, req.obj.id, kind, args, result, m.opno)
        exe.steps.append(s)
        exe.schedule.append(pid if branch is None else (pid, branch))
        m.op_steps += 1
        self._pump(m, result)
        exe.memory.append(self.mem.snapshot())
        exe.marks.append(len(exe.events))
        return s

    def all_done(self) -> bool:
        return all(m.done for m in self.machines.values())


def _move(entry) -> tuple[int, int | None]:
    if isinstance(entry, tuple):
        return entry[0], entry[1]
    return entry, None


@dataclass
class Schedule:
    """Process choices plus configuration indices to snapshot."""

    moves: list = field(default_factory=list)
    markers: set[int] = field(default_factory=set)

    @classmethod
    def of(cls, moves: Iterable, markers: Iterable[int] = ()) -> "Schedule":
        return cls(list(moves), set(markers))


def run(memory: Memory, obj, programs: dict[int, Sequence], schedule) -> Execution:
    """Execute ``schedule`` (a :class:`Schedule` or a plain move list)."""
    if not isinstance(schedule, Schedule):
        schedule = Schedule.of(schedule)
    world = World(memory, obj, programs)
    for entry in schedule.moves:
        pid, branch = _move(entry)
        world.step(pid, branch)
    exe = world.exe
    for k in sorted(schedule.markers):
        exe.markers[k] = snapshot(exe, k)
    exe.status = "complete" if world.all_done() else "running"
    return exe


def run_to_completion(memory: Memory, obj, programs: dict[int, Sequence],
                      pick: Callable[[list], Any] | None = None, max_steps: int = 100_000) -> Execution:
    """Run until every program finishes; ``pick`` chooses among enabled moves."""
    world = World(memory, obj, programs)
    pick = pick or (lambda moves: moves[0])
    while not world.all_done():
        if len(world.exe.steps) >= max_steps:
            world.exe.status = "truncated"
            return world.exe
        pid, branch = pick(world.enabled())
        world.step(pid, branch)
    return world.exe
