import pytest
from hypothesis import given, strategies as st

from hiconc.base_memory.engine import RoleError, run, run_to_completion
from hiconc.base_memory.memory import CasWord, Memory
from hiconc.rllsc import RLLSC, decode, encode, rllsc_spec
from hiconc.seq_spec import op
from hiconc.verifier.explore import Explorer
from hiconc.verifier.linearizability import check_linearizable


def fresh(n=2, v0=0):
    mem = Memory()
    return mem, RLLSC(mem, n, v0, "X")


def results(exe, pid):
    return [e.value for e in exe.events if e.process == pid and e.kind == "resp"]


def test_solo_ll():
    mem, x = fresh(v0=4)
    exe = run_to_completion(mem, x, {1: [op("ll", 1)]})
    assert results(exe, 1) == [4]
    assert exe.final == (CasWord(4, 0b01),)


def test_ll_retries_after_store():
    mem, x = fresh()
    # p1 reads, p2 stores, p1's CAS fails, p1 re-reads and links the new value
    exe = run(mem, x, {1: [op("ll", 1)], 2: [op("store", 9)]}, [1, 2, 1, 1, 1])
    assert [s.result for s in exe.steps if s.process == 1 and s.kind == "cas"] == [False, True]
    assert results(exe, 1) == [9]
    assert exe.final == (CasWord(9, 0b01),)


def test_two_links():
    mem, x = fresh()
    exe = run_to_completion(mem, x, {1: [op("ll", 1)], 2: [op("ll", 2)]})
    assert exe.final == (CasWord(0, 0b11),)


def test_vl_cases():
    mem, x = fresh()
    exe = run_to_completion(mem, x, {1: [op("vl", 1), op("ll", 1), op("vl", 1)]})
    assert results(exe, 1) == [False, 0, True]
    mem, x = fresh()
    exe = run(mem, x, {1: [op("ll", 1), op("vl", 1)], 2: [op("ll", 2), op("sc", 2, 5)]}, [1, 1, 2, 2, 2, 2, 1])
    assert results(exe, 2) == [0, True]
    assert results(exe, 1) == [0, False]


def test_sc_cases():
    mem, x = fresh()
    exe = run_to_completion(mem, x, {1: [op("ll", 1), op("sc", 1, 5)]})
    assert results(exe, 1) == [0, True] and exe.final == (CasWord(5),)
    mem, x = fresh()
    exe = run_to_completion(mem, x, {1: [op("sc", 1, 5)]})
    assert results(exe, 1) == [False] and exe.final == (CasWord(0),)
    mem, x = fresh()
    exe = run(mem, x, {1: [op("ll", 1), op("sc", 1, 5)], 2: [op("store", 7)]}, [1, 1, 2, 1])
    assert results(exe, 1) == [0, False] and exe.final == (CasWord(7),)


def test_rl_cases():
    mem, x = fresh(v0=3)
    exe = run_to_completion(mem, x, {1: [op("ll", 1), op("rl", 1)]})
    assert exe.final == (CasWord(3),)
    mem, x = fresh()
    exe = run_to_completion(mem, x, {1: [op("rl", 1)]})
    assert results(exe, 1) == [True] and len(exe.steps) == 1


def test_rl_racing_ll_keeps_other_link():
    def build():
        mem = Memory()
        return mem, RLLSC(mem, 2, 0, "X")

    finals = set()
    for exe in Explorer(build, {1: [op("ll", 1), op("rl", 1)], 2: [op("ll", 2)]}, cache=False):
        finals.add(exe.final)
    assert finals == {(CasWord(0, 0b10),)}


def test_load_and_store():
    mem, x = fresh()
    exe = run_to_completion(mem, x, {1: [op("ll", 1), op("store", 6), op("load")]})
    assert results(exe, 1) == [0, True, 6]
    assert exe.final == (CasWord(6),)
    load_step = exe.steps[-1]
    assert load_step.kind == "read" and exe.memory[-2] == exe.memory[-1]


def test_caller_must_match():
    mem, x = fresh()
    with pytest.raises(RoleError):
        run(mem, x, {1: [op("sc", 2, 1)]}, [1])
    with pytest.raises(ValueError):
        RLLSC(Memory(), 17)


@given(st.integers(0, (1 << 48) - 1), st.integers(0, (1 << 16) - 1))
def test_encode_decode(val, ctx):
    w = CasWord(val, ctx)
    assert decode(encode(w)) == w


def test_encode_rejects_wide_payloads():
    with pytest.raises(ValueError):
        encode(CasWord(1 << 48))
    with pytest.raises(ValueError):
        encode(CasWord("x"))


OPS = st.sampled_from(["ll", "vl", "sc", "rl", "load", "store"])


def _make(pid, name, v):
    if name in ("load",):
        return op(name)
    if name == "store":
        return op(name, v)
    if name == "sc":
        return op(name, pid, v)
    return op(name, pid)


@given(st.lists(st.tuples(OPS, st.integers(0, 3)), min_size=1, max_size=3),
       st.lists(st.tuples(OPS, st.integers(0, 3)), min_size=1, max_size=3),
       st.randoms(use_true_random=False))
def test_memory_is_the_atomic_state(prog1, prog2, rnd):
    # at every step the cell equals the fold of the operations that took effect
    programs = {1: [_make(1, n, v) for n, v in prog1], 2: [_make(2, n, v) for n, v in prog2]}
    mem, x = fresh()
    exe = run_to_completion(mem, x, programs, pick=lambda moves: moves[rnd.randrange(len(moves))])
    spec = rllsc_spec(2)
    notes = [n for n in exe.notes if n.tag == "lin"]
    q = spec.initial
    k = 0
    for c, snap in enumerate(exe.memory):
        while k < len(notes) and notes[k].step < c:
            q, r = spec.apply(q, notes[k].data[1])
            assert r == notes[k].data[2]
            k += 1
        assert snap == (q,)
    assert check_linearizable(exe.events, spec)
