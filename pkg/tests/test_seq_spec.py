from collections import deque

import pytest
from hypothesis import given, strategies as st

from hiconc.base_memory.engine import Event
from hiconc.seq_spec import (ACK, EMPTY, FAILURE, FULL, SUCCESS, Op, SpecViolation, counter_spec, make_spec,
                             maxreg_spec, op, queue_spec, register_spec, run_ops, seq_state, sequential_pairs,
                             set_spec, well_formed)


def test_register_write():
    assert register_spec(3, 1).apply(1, op("write", 2)) == (2, ACK)


def test_register_read():
    assert register_spec(3, 1).apply(3, op("read")) == (3, 3)


def test_counter_inc_acks():
    assert counter_spec().apply(0, op("inc")) == (1, ACK)
    assert counter_spec().apply(5, op("read")) == (5, 5)
    assert counter_spec(4).apply(0, op("dec")) == (3, ACK)


def test_queue_enqueue_default_response():
    assert queue_spec(2).apply((1,), op("enqueue", 2)) == ((1, 2), EMPTY)


def test_queue_fifo_and_empty():
    spec = queue_spec(2)
    assert seq_state(spec, [(op("enqueue", 1), EMPTY), (op("enqueue", 2), EMPTY), (op("dequeue"), 1)]) == (2,)
    assert spec.apply((), op("dequeue")) == ((), EMPTY)
    assert spec.apply((2,), op("peek")) == ((2,), 2)
    assert queue_spec(2, capacity=1).apply((1,), op("enqueue", 2)) == ((1,), FULL)


def test_set_insert_twice():
    spec = set_spec(3)
    q, r1 = spec.apply(frozenset(), op("insert", 2))
    q, r2 = spec.apply(q, op("insert", 2))
    assert (r1, r2, q) == (SUCCESS, FAILURE, frozenset({2}))
    assert set_spec(3, blind=True).apply(q, op("insert", 2))[1] == ACK


def test_seq_state():
    spec = register_spec(3, 1)
    assert seq_state(spec, []) == 1
    assert seq_state(spec, [(op("write", 2), ACK), (op("write", 1), ACK)]) == 1
    assert seq_state(spec, [(op("write", 2), ...), (op("read"), ...)]) == 2


def test_seq_state_reports_first_mismatch():
    spec = register_spec(3, 1)
    with pytest.raises(SpecViolation) as err:
        seq_state(spec, [(op("write", 2), ACK), (op("read"), 3)])
    assert err.value.index == 1 and err.value.expected == 2


def test_construction_limits():
    with pytest.raises(ValueError):
        register_spec(1)
    with pytest.raises(ValueError):
        set_spec(0)
    with pytest.raises(ValueError):
        queue_spec(0)
    with pytest.raises(ValueError):
        register_spec(3, 4).validate(op("read"))


def test_unknown_operation_rejected():
    with pytest.raises(ValueError):
        register_spec(3).apply(1, op("write", 9))
    with pytest.raises(TypeError):
        register_spec(3).apply(1, "read")


def test_make_spec():
    spec = make_spec("register:K=4,v0=2")
    assert spec.initial == 2 and len(spec.all_states()) == 4
    assert make_spec("counter:modulus=8").all_states() == tuple(range(8))
    with pytest.raises(ValueError):
        make_spec("stack")
    with pytest.raises(ValueError):
        make_spec("register:K")


FINITE = [register_spec(3, 1), register_spec(4, 2), maxreg_spec(3, 1), counter_spec(5), queue_spec(2, capacity=2),
          set_spec(3), set_spec(3, blind=True)]


@pytest.mark.parametrize("spec", FINITE, ids=repr)
def test_read_only_preserves_every_state(spec):
    for q in spec.reachable():
        for o in spec.operations:
            q2, r = spec.apply(q, o)
            if spec.is_read_only(o):
                assert q2 == q
            assert r is not None and not isinstance(r, Op)


def _strongly_connected(spec):
    states = spec.reachable()
    for start in states:
        seen = {start}
        todo = deque([start])
        while todo:
            q = todo.popleft()
            for o in spec.operations:
                q2, _ = spec.apply(q, o)
                if q2 not in seen:
                    seen.add(q2)
                    todo.append(q2)
        if seen != states:
            return False
    return True


@pytest.mark.parametrize("spec", [register_spec(3, 1), register_spec(5, 3), counter_spec(6)], ids=repr)
def test_reversible_specs_strongly_connected(spec):
    assert _strongly_connected(spec)


def test_max_register_is_not_reversible():
    assert not _strongly_connected(maxreg_spec(3, 1))


@given(st.lists(st.sampled_from(counter_spec(7).operations), max_size=30))
def test_counter_fold_matches_arithmetic(ops):
    q, responses = run_ops(counter_spec(7), ops)
    incs = sum(o.name == "inc" for o in ops)
    decs = sum(o.name == "dec" for o in ops)
    assert q == (incs - decs) % 7
    assert seq_state(counter_spec(7), list(zip(ops, responses))) == q


def test_well_formed_and_sequential_pairs():
    inv = Event(1, "inv", op("read"), 0, 0)
    resp = Event(1, "resp", 1, 0, 1)
    assert well_formed([inv, resp]) and not well_formed([resp]) and not well_formed([inv, inv])
    assert sequential_pairs([inv, resp]) == [(op("read"), 1)]
    with pytest.raises(ValueError):
        sequential_pairs([inv])
