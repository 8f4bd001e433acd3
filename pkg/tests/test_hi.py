from hypothesis import given, settings, strategies as st

from hiconc.base_memory.engine import run_to_completion
from hiconc.base_memory.memory import Memory
from hiconc.hi_registers import READER, WRITER, BaselineRegister, LockFreeRegister
from hiconc.seq_spec import counter_spec, op, register_spec
from hiconc.universal import Universal
from hiconc.verifier.explore import Explorer
from hiconc.verifier.hi import HIChecker, Predicate, check_hi, observation_points

SPEC = counter_spec()


def universal():
    mem = Memory()
    return mem, Universal(mem, SPEC, 2)


@given(st.randoms(use_true_random=False))
def test_predicates_nest(rnd):
    mem, obj = universal()
    programs = {1: [op("inc"), op("read")], 2: [op("read"), op("dec")]}
    exe = run_to_completion(mem, obj, programs, pick=lambda moves: moves[rnd.randrange(len(moves))])
    q = set(observation_points(exe, Predicate.QUIESCENT, SPEC))
    sq = set(observation_points(exe, Predicate.STATE_QUIESCENT, SPEC))
    every = set(observation_points(exe, "every_step", SPEC))
    assert q <= sq <= every == set(range(len(exe.memory)))
    assert 0 in q and len(exe.memory) - 1 in q


def _runs(build, programs):
    return [e.copy() for e in Explorer(build, programs, cache=False)]


def alg1():
    mem = Memory()
    return mem, BaselineRegister(mem, 3, 1)


def alg2():
    mem = Memory()
    return mem, LockFreeRegister(mem, 3, 1)


REG = register_spec(3, 1)


def test_baseline_fails_with_two_memories_for_one_value():
    runs = _runs(alg1, {WRITER: [op("write", 1)]}) + _runs(alg1, {WRITER: [op("write", 2), op("write", 1)]})
    verdict = check_hi(runs, Predicate.QUIESCENT, REG)
    assert not verdict
    first, second = verdict.failure
    assert first.state == second.state == 1
    assert {first.snapshot, second.snapshot} == {(1, 0, 0), (1, 1, 0)}


def test_analytic_map_reports_expected_snapshot():
    runs = _runs(alg1, {WRITER: [op("write", 2), op("write", 1)]})
    verdict = check_hi(runs, "quiescent", REG, canonical=LockFreeRegister(Memory(), 3, 1).canonical)
    assert not verdict and verdict.expected == (1, 0, 0)
    assert verdict.as_dict()["canonical_map"] == "analytic"


def test_lock_free_register_quiescent_hi():
    runs = _runs(alg2, {WRITER: [op("write", 2), op("write", 1)], READER: [op("read")]})
    assert check_hi(runs, Predicate.QUIESCENT, REG)
    assert check_hi(runs, Predicate.QUIESCENT, REG, canonical=alg2()[1].canonical)


@settings(max_examples=20)
@given(st.randoms(use_true_random=False))
def test_verdict_does_not_depend_on_order(rnd):
    runs = _runs(alg1, {WRITER: [op("write", 2), op("write", 1)]}) + _runs(alg1, {WRITER: [op("write", 1)]})
    expected = bool(check_hi(runs, Predicate.QUIESCENT, REG))
    rnd.shuffle(runs)
    assert bool(check_hi(runs, Predicate.QUIESCENT, REG)) == expected


@settings(max_examples=20)
@given(st.randoms(use_true_random=False))
def test_passing_verdict_counts_are_order_free(rnd):
    runs = _runs(alg2, {WRITER: [op("write", 2), op("write", 3)], READER: [op("read")]})
    base = check_hi(runs, Predicate.QUIESCENT, REG)
    rnd.shuffle(runs)
    again = check_hi(runs, Predicate.QUIESCENT, REG)
    assert base and again
    assert (again.observations, again.states, again.learned) == (base.observations, base.states, base.learned)


def test_fresh_skips_shared_prefixes():
    checker = HIChecker(REG, Predicate.EVERY_STEP, lambda exe, c: 0)
    total = 0
    for exe in Explorer(alg2, {WRITER: [op("write", 2)], READER: [op("read")]}, cache=False):
        checker.add(exe)
        total += len(exe.memory)
    assert 0 < checker.verdict.observations < total
