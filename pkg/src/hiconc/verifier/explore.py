"""Depth-first enumeration of schedules.

Configurations are identified by a key made of the memory snapshot, the
history so far (events in order, without timing), the notes relative to
those events and the local state of every process.  Two paths reaching the
same key have the same futures and the same observable pasts, so the second
one is cut short (reported with ``status == "merged"``).  A step that leads
straight back to its own key is a failed poll; repeating it forever would
starve the other branch of the same process, so it is skipped.  Reaching a
key that is still on the DFS stack is a real cycle: an infinite execution in
which no operation responds.

Executions are yielded live: the object is reused and mutated as the search
continues.  Use :meth:`Execution.copy` (or :func:`replay`) to keep one.
``exe.fresh`` is the first configuration not contained in a previously
yielded execution, so per-configuration checks can skip shared prefixes.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterator, Sequence

from ..base_memory.engine import Execution, Schedule, World, run
from ..base_memory.memory import Memory


@dataclass(frozen=True)
class Bounds:
    max_steps: int | None = None
    max_preemptions: int | None = None
    max_executions: int | None = None

    @classmethod
    def parse(cls, text: str | None) -> "Bounds":
        """``steps=N,preemptions=K,executions=M``; missing means unlimited."""
        if not text:
            return cls()
        names = {"steps": "max_steps", "preemptions": "max_preemptions", "executions": "max_executions"}
        kw = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, _, value = part.partition("=")
            if key not in names:
                raise ValueError(f"unknown bound {key!r}; use {', '.join(names)}")
            kw[names[key]] = int(value)
        return cls(**kw)


@dataclass
class Stats:
    executions: int = 0
    complete: int = 0
    merged: int = 0
    truncated: int = 0
    stutters: int = 0
    states: int = 0
    steps: int = 0
    cycles: list = field(default_factory=list)  # schedules ending in a revisit
    livelocks: list = field(default_factory=list)  # schedules where every move is a stutter
    stopped_early: bool = False

    @property
    def partial(self) -> bool:
        return bool(self.truncated or self.stopped_early)

    def as_dict(self) -> dict:
        return {"executions": self.executions, "complete": self.complete, "merged": self.merged,
                "truncated": self.truncated, "stutters": self.stutters, "states": self.states,
                "steps": self.steps, "cycles": len(self.cycles), "livelocks": len(self.livelocks),
                "partial": self.partial}


def _copy(exe: Execution) -> Execution:
    out = Execution(exe.names, list(exe.steps), list(exe.memory), list(exe.events), list(exe.marks),
                    list(exe.notes), list(exe.schedule), dict(exe.markers), exe.status)
    out.fresh = getattr(exe, "fresh", 0)
    return out


Execution.copy = _copy  # type: ignore[attr-defined]


class Explorer:
    """Enumerates the executions of ``programs`` on a freshly built object.

    ``build`` returns ``(memory, obj)`` with the layout allocated.  With
    ``cache=False`` every schedule is enumerated separately (only sensible for
    short straight-line programs).  ``per_op_steps`` adds each process's
    step count within its current operation to the key, which keeps merged
    paths exact for step-bound checks.  ``monitor`` maps the execution so far
    to extra key material: whatever a property check tracks along a path
    must be in the key, or merging could hide a violation.
    """

    def __init__(self, build: Callable[[], tuple[Memory, object]], programs: dict[int, Sequence],
                 bounds: Bounds = Bounds(), cache: bool = True, per_op_steps: bool = False,
                 monitor: Callable[[Execution], Hashable] | None = None) -> None:
        self.build = build
        self.monitor = monitor
        self.programs = programs
        self.bounds = bounds
        self.cache = cache
        self.per_op_steps = per_op_steps
        self.stats = Stats()
        self.world: World | None = None
        self.obj = None

    # -- state keys --------------------------------------------------------

    def key(self, preempt: int, last: int | None) -> tuple:
        w = self.world
        exe = w.exe
        hist = tuple((e.process, e.kind, e.value) for e in exe.events)
        notes = tuple((n.events, n.process, n.tag, n.data) for n in exe.notes)
        procs = tuple(m.key() for m in w.machines.values())
        extra = ()
        if self.per_op_steps:
            extra = tuple(m.op_steps for m in w.machines.values())
        if self.bounds.max_preemptions is not None:
            extra += (preempt, last)
        if self.monitor is not None:
            extra += (self.monitor(exe),)
        return (exe.memory[-1], hist, notes, procs, extra)

    # -- save / restore ------------------------------------------------------

    def _save(self) -> tuple:
        w = self.world
        exe = w.exe
        return (len(exe.steps), len(exe.events), len(exe.notes),
                tuple((m.length(), m.state()) for m in w.machines.values()))

    def _restore(self, saved: tuple) -> None:
        w = self.world
        exe = w.exe
        nsteps, nevents, nnotes, machines = saved
        del exe.steps[nsteps:]
        del exe.memory[nsteps + 1:]
        del exe.marks[nsteps + 1:]
        del exe.schedule[nsteps:]
        del exe.events[nevents:]
        del exe.notes[nnotes:]
        w.mem.restore(exe.memory[-1])
        for m, (length, state) in zip(w.machines.values(), machines):
            m.rewind(length, state)

    # -- search ----------------------------------------------------------------

    def __iter__(self) -> Iterator[Execution]:
        return self.executions()

    def executions(self) -> Iterator[Execution]:
        mem, self.obj = self.build()
        self.world = World(mem, self.obj, self.programs)
        self.world.exe.fresh = 0
        self._emitted = 0  # configurations already covered by the previous yield
        self._visited: set = set()
        self._onstack: set = set()
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 20000))
        try:
            yield from self._dfs(0, None, None)
        finally:
            sys.setrecursionlimit(old)

    def _emit(self, status: str) -> Execution:
        exe = self.world.exe
        exe.status = status
        exe.fresh = min(self._emitted, len(exe.memory))
        self._emitted = len(exe.memory)
        st = self.stats
        st.executions += 1
        if status == "complete":
            st.complete += 1
        elif status == "merged":
            st.merged += 1
        elif status == "truncated":
            st.truncated += 1
        return exe

    def _dfs(self, preempt: int, last: int | None, parent_key) -> Iterator[Execution]:
        w = self.world
        st = self.stats
        b = self.bounds
        if b.max_executions is not None and st.executions >= b.max_executions:
            st.stopped_early = True
            return
        if w.all_done():
            yield self._emit("complete")
            return
        key = self.key(preempt, last) if self.cache else None
        if key is not None and key == parent_key:
            st.stutters += 1
            return "stutter"
        if b.max_steps is not None and len(w.exe.steps) >= b.max_steps:
            yield self._emit("truncated")
            return
        if key is not None:
            if key in self._onstack:
                st.cycles.append(list(w.exe.schedule))
                yield self._emit("cycle")
                return
            if key in self._visited:
                yield self._emit("merged")
                return
            self._onstack.add(key)
            st.states += 1
        moves = w.enabled()
        rest: list = []
        if b.max_preemptions is not None and last is not None and preempt >= b.max_preemptions:
            own = [mv for mv in moves if mv[0] == last]
            if own:
                moves, rest = own, [mv for mv in moves if mv[0] != last]
        saved = self._save()
        progressed = False
        k = 0
        for free, batch in ((False, moves), (True, rest)):
            if free and progressed:
                break  # a process that only spins may yield without a preemption
            for pid, branch in batch:
                if k:
                    self._restore(saved)
                    self._emitted = min(self._emitted, saved[0] + 1)
                k += 1
                w.step(pid, branch)
                st.steps += 1
                switched = not free and last is not None and pid != last and not w.machines[last].done
                outcome = yield from self._dfs(preempt + switched, pid, key)
                if outcome != "stutter":
                    progressed = True
        self._restore(saved)
        self._emitted = min(self._emitted, saved[0] + 1)
        if key is not None:
            self._onstack.discard(key)
            self._visited.add(key)
            if not progressed:
                st.livelocks.append(list(w.exe.schedule))
                yield self._emit("cycle")
        return None


def explore(build: Callable[[], tuple[Memory, object]], programs: dict[int, Sequence], bounds: Bounds = Bounds(),
            cache: bool = True, per_op_steps: bool = False,
            monitor: Callable[[Execution], Hashable] | None = None) -> Iterator[Execution]:
    return Explorer(build, programs, bounds, cache, per_op_steps, monitor).executions()


def replay(build: Callable[[], tuple[Memory, object]], programs: dict[int, Sequence], schedule) -> Execution:
    """Re-run a recorded schedule from scratch."""
    mem, obj = build()
    return run(mem, obj, programs, schedule if isinstance(schedule, Schedule) else Schedule.of(schedule))
