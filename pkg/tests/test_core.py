import pytest

from slosched.core import (
    TABLE_COEFFICIENTS,
    GaussianPrior,
    InstanceState,
    LatencyCoefficients,
    MetricsReport,
    RangePrior,
    Request,
    RequestTiming,
    Schedule,
    SloKind,
    SloSpec,
    TaskClass,
    WorkloadError,
    validate_workload,
)

CODE = TaskClass(0, "code", SloSpec(SloKind.E2E, e2e_ms=30_000.0), GaussianPrior(900, 300))
CHAT = TaskClass(1, "chat", SloSpec(SloKind.TTFT_TPOT, ttft_ms=10_000.0, tpot_ms=50.0), RangePrior(10, 20))


def test_valid_workload():
    wl = validate_workload([Request(0, 0, 10, 10), Request(1, 1, 10, 10)], [CODE, CHAT])
    assert len(wl.requests) == 2
    assert wl.class_map()[1].name == "chat"


def test_non_positive_length():
    with pytest.raises(WorkloadError, match="non-positive length"):
        validate_workload([Request(0, 0, 0, 10)], [CODE])


def test_duplicate_id():
    with pytest.raises(WorkloadError, match="duplicate request id"):
        validate_workload([Request(7, 0, 10, 10), Request(7, 0, 5, 5)], [CODE])


def test_unknown_class():
    with pytest.raises(WorkloadError, match="unknown task_class_id"):
        validate_workload([Request(0, 5, 10, 10)], [CODE])


def test_slo_spec_checks_kind_fields():
    with pytest.raises(WorkloadError):
        SloSpec(SloKind.E2E)
    with pytest.raises(WorkloadError):
        SloSpec(SloKind.TTFT_TPOT, ttft_ms=100.0)
    assert SloSpec("e2e", e2e_ms=1.0).kind is SloKind.E2E


@pytest.mark.parametrize("tc", [CODE, CHAT])
def test_task_class_dict_round_trip(tc):
    assert TaskClass.from_dict(tc.to_dict(), tc.id) == tc


def test_chat_class_has_no_e2e():
    assert "e2e_ms" not in CHAT.to_dict()


def test_coefficient_validation_and_scaling():
    with pytest.raises(WorkloadError):
        LatencyCoefficients(-0.1, 0, 0, 0, 0, 0, 0, 0)
    with pytest.raises(WorkloadError):
        LatencyCoefficients(float("nan"), 0, 0, 0, 0, 0, 0, 0)
    doubled = TABLE_COEFFICIENTS.scaled({"alpha_p": 2.0})
    assert doubled.alpha_p == 0.2 and doubled.delta_d == TABLE_COEFFICIENTS.delta_d
    with pytest.raises(KeyError):
        TABLE_COEFFICIENTS.scaled({"zeta": 1.0})
    assert LatencyCoefficients.from_dict(TABLE_COEFFICIENTS.to_dict()) == TABLE_COEFFICIENTS


def test_schedule_helpers():
    s = Schedule.from_order([3, 1, 2, 0], [2, 1, 1])
    assert s.batches == ((3, 1), (2,), (0,))
    assert s.request_ids() == [3, 1, 2, 0]
    assert s.positions()[2] == (0, 1, 2)
    s.validate([0, 1, 2, 3], max_batch=2)
    assert Schedule.from_dict(s.to_dict()) == s


def test_schedule_validation():
    s = Schedule.single([[0, 1], [1]])
    with pytest.raises(WorkloadError, match="twice"):
        s.validate([0, 1])
    with pytest.raises(WorkloadError, match="exceeds"):
        Schedule.single([[0, 1, 2]]).validate([0, 1, 2], max_batch=2)
    with pytest.raises(WorkloadError, match="partition"):
        Schedule.single([[0]]).validate([0, 1])
    with pytest.raises(WorkloadError):
        Schedule.from_lists([[[0]], [[1]]]).batches


def test_instance_defaults_and_round_trip():
    inst = InstanceState(2, 1000.0, mem_utility=0.9, bytes_per_token=0.5, max_batch_size=4)
    assert inst.remaining_mem == 1000.0
    assert InstanceState.from_dict(inst.to_dict()) == inst


def _timing(e2e, met):
    return RequestTiming(0.0, e2e, 0.0, e2e, 0.0, 0.0, met)


def test_metrics_report_g():
    rep = MetricsReport.from_timings({0: _timing(10_000.0, True)})
    assert rep.g == pytest.approx(1e-4)
    assert rep.g_req_per_s == pytest.approx(0.1)


def test_metrics_report_matches_fig3_caption():
    # 2 met over 2700 ms, then 3 met over 2900 ms
    two = MetricsReport.from_timings({0: _timing(1000.0, True), 1: _timing(1700.0, True)})
    three = MetricsReport.from_timings({0: _timing(900.0, True), 1: _timing(1000.0, True), 2: _timing(1000.0, True)})
    assert round(two.g_req_per_s, 2) == 0.74
    assert round(three.g_req_per_s, 2) == 1.03


def test_metrics_report_empty_and_dict():
    rep = MetricsReport.from_timings({})
    assert rep.slo_attainment == 1.0 and rep.g == 0.0
    d = MetricsReport.from_timings({0: _timing(5.0, False)}, overhead_ms=2.0).to_dict()
    assert d["scheduling_overhead_ms"] == 2.0 and "0" in d["requests"]
