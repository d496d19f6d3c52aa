import numpy as np
import pytest

from slosched.core import TABLE_COEFFICIENTS, InstanceState, Request
from slosched.estimator import annotate_lengths
from slosched.mapper import AnnealConfig, SearchSpaceError, anneal
from slosched.scheduler import (
    CapacityError,
    InstanceQueue,
    assign_instances,
    default_instances,
    dispatch,
    load_instances,
    save_instances,
    schedule_all,
    token_capacity,
)
from slosched.workload import generate_adversarial

C = TABLE_COEFFICIENTS


def test_token_capacity():
    assert token_capacity(1000, 0.9, 0.5) == 1800
    assert token_capacity(0, 0.9, 0.5) == 0
    assert token_capacity(1000, 0.9, 7) == 128
    with pytest.raises(ValueError):
        token_capacity(1000, 0.9, 0)


def _inst(i, tokens):
    return InstanceState(i, float(tokens), mem_utility=1.0, bytes_per_token=1.0)


def test_equal_instances_alternate():
    reqs = [Request(i, 0, 50, 50, 50) for i in range(4)]
    a = assign_instances(reqs, [_inst(0, 10_000), _inst(1, 10_000)], C)
    assert [r.id for r in a.lanes[0]] == [0, 2] and [r.id for r in a.lanes[1]] == [1, 3]
    assert a.epochs == 0


def test_greedy_capacity_trace():
    reqs = [Request(i, 0, 200, 200, 200) for i in range(3)]
    a = assign_instances(reqs, [_inst(0, 1000), _inst(1, 500)], C)
    assert [r.id for r in a.lanes[0]] == [0, 1] and [r.id for r in a.lanes[1]] == [2]


def test_single_instance_epochs():
    reqs = [Request(i, 0, 200, 200, 200) for i in range(5)]
    a = assign_instances(reqs, [_inst(0, 1000)], C)
    assert len(a.lanes[0]) == 5 and a.epochs == 2


def test_request_larger_than_any_instance():
    with pytest.raises(CapacityError, match="cannot fit"):
        assign_instances([Request(0, 0, 900, 900, 900)], [_inst(0, 1000)], C)


def test_queue_dispatch():
    q = InstanceQueue(0)
    assert dispatch(q, True) is None
    q.push([1])
    q.push([2, 3])
    assert dispatch(q, False) is None and len(q) == 2
    assert dispatch(q, True) == (1,)
    assert list(q.batches) == [(2, 3)]


def _workload(n, seed):
    classes, reqs = generate_adversarial(n, seed)
    reqs, _ = annotate_lengths(reqs, classes, "oracle", np.random.default_rng(seed))
    return classes, reqs


def test_single_instance_equals_anneal():
    classes, reqs = _workload(10, 0)
    cfg = AnnealConfig(seed=3)
    res = schedule_all(reqs, default_instances(1, 2), C, classes, cfg, 2)
    direct = anneal(reqs, C, classes, cfg, 2)
    assert res.schedule.lanes[0] == direct.schedule.lanes[0]
    assert res.per_instance[0].g == direct.g
    assert res.overhead_ms > 0 and len(res.queues) == 1


def test_mirrored_halves_give_equal_g():
    classes, reqs = _workload(6, 1)
    twin = [Request(r.id + 100, r.task_class_id, r.input_len, r.true_output_len, r.predicted_output_len,
                    r.arrival_time_ms) for r in reqs]
    res = schedule_all(reqs + twin, default_instances(2, 1), C, classes, AnnealConfig(seed=0), 1)
    g0, g1 = (ev.g for ev in res.per_instance)
    assert g0 == pytest.approx(g1, rel=1e-12)


def test_exhaustive_cap_propagates():
    classes, reqs = _workload(12, 0)
    with pytest.raises(SearchSpaceError):
        schedule_all(reqs, default_instances(1, 1), C, classes, AnnealConfig(), 1, policy="exhaustive")


def test_unknown_policy():
    classes, reqs = _workload(3, 0)
    with pytest.raises(ValueError):
        schedule_all(reqs, default_instances(1, 1), C, classes, AnnealConfig(), 1, policy="lottery")


def test_overhead_budget_at_n10():
    classes, reqs = _workload(10, 2)
    res = schedule_all(reqs, default_instances(1, 1), C, classes, AnnealConfig(), 1)
    assert res.overhead_ms < 50.0


def test_instance_file_round_trip(tmp_path):
    path = tmp_path / "inst.json"
    insts = default_instances(3, 4)
    save_instances(path, insts)
    assert load_instances(path) == insts
