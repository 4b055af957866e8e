import numpy as np
import pytest

from helpers import assert_trace_invariants

from hsgd.comm import CommModel, account, builtin_model, time_to_target
from hsgd.engine import RunConfig, run
from hsgd.errors import NonPositiveError, UnknownModelError, UnsupportedError
from hsgd.objectives import QuadraticObjective, make_quadratic_fixture
from hsgd.topology import build_multi_level, build_two_level


def _trace(topology, horizon, **overrides):
    base = dict(
        topology=topology,
        objective=make_quadratic_fixture("QF10"),
        gamma=2e-3,
        horizon=horizon,
        seed=1,
        w0=1.0,
        noise="gaussian",
        sigma2=0.25,
    )
    base.update(overrides)
    trace = run(RunConfig(**base))
    assert_trace_invariants(trace, topology)
    return trace


class TestBuiltinModels:
    def test_measured_presets(self):
        vgg = builtin_model("vgg11")
        assert (vgg.local_latency, vgg.global_latency) == (27.81, 291.82)
        assert vgg.compute_per_iteration == 4.0
        cnn = builtin_model("cnn-emnist")
        assert (cnn.local_latency, cnn.global_latency) == (0.29, 4.53)
        unit = builtin_model("unit")
        assert (unit.local_latency, unit.global_latency) == (1.0, 10.0)
        assert unit.compute_per_iteration == 0.0

    def test_three_level_preset_keeps_two_to_one_ratio(self):
        model = builtin_model("vgg11-3level")
        assert model.level_latencies == (291.82, 55.62, 27.81)
        assert model.level_latencies[1] == pytest.approx(2 * model.level_latencies[2])

    def test_unknown_model(self):
        with pytest.raises(UnknownModelError):
            builtin_model("dialup")

    def test_negative_latency_rejected(self):
        with pytest.raises(NonPositiveError):
            CommModel(local_latency=-1.0, global_latency=0.0)

    def test_increasing_leafward_latency_warns(self):
        with pytest.warns(RuntimeWarning):
            CommModel(local_latency=1.0, global_latency=2.0,
                      level_latencies=(1.0, 5.0))


class TestAccount:
    def test_local_sgd_p5_costs_ten_globals(self):
        topo = build_two_level([10], [5], 5)
        series = account(_trace(topo, 50), builtin_model("unit"))
        assert series.cum_comm_ms[-1] == 100.0
        assert series.cum_compute_ms[-1] == 0.0

    def test_hierarchical_subsumes_local_round_at_global(self):
        topo = build_two_level([5, 5], [5, 5], 50)
        trace = _trace(topo, 50)
        series = account(trace, builtin_model("unit"))
        # 9 local rounds + 1 global round
        assert series.cum_comm_ms[-1] == 19.0
        assert trace.cum_global_rounds[-1] == 1
        assert trace.cum_local_rounds[-1] == 9

    def test_zero_latency_model(self):
        topo = build_two_level([5, 5], [5, 5], 50)
        series = account(_trace(topo, 50), CommModel(0.0, 0.0))
        assert np.all(series.cum_comm_ms == 0.0)

    def test_monotone_and_charged_only_at_events(self):
        topo = build_two_level([5, 5], [5, 5], 20)
        trace = _trace(topo, 60)
        series = account(trace, builtin_model("unit"))
        deltas = np.diff(np.concatenate([[0.0], series.cum_comm_ms]))
        assert np.all(deltas >= 0.0)
        for t, event in enumerate(trace.events):
            if event == "":
                assert deltas[t] == 0.0
            else:
                assert deltas[t] > 0.0

    def test_round_counts_match_schedule(self):
        T, G, I = 200, 50, 5
        topo = build_two_level([5, 5], [I, I], G)
        trace = _trace(topo, T)
        assert trace.cum_global_rounds[-1] == T // G
        assert trace.cum_local_rounds[-1] == T // I - T // G

    def test_multi_level_charges_per_level(self):
        tree = build_multi_level([2, 2, 3], [12, 6, 3])
        obj = QuadraticObjective(np.zeros((12, 1)))
        trace = run(RunConfig(topology=tree, objective=obj, gamma=1e-3, horizon=12))
        model = builtin_model("vgg11-3level")
        series = account(trace, model)
        deltas = np.diff(np.concatenate([[0.0], series.cum_comm_ms]))
        assert deltas[2] == pytest.approx(27.81)   # level:3
        assert deltas[5] == pytest.approx(55.62)   # level:2
        assert deltas[11] == pytest.approx(291.82)  # level:1
        assert series.cum_compute_ms[-1] == pytest.approx(48.0)

    def test_multi_level_fall_back_without_level_latencies(self):
        tree = build_multi_level([2, 2], [4, 2])
        obj = QuadraticObjective(np.zeros((4, 1)))
        trace = run(RunConfig(topology=tree, objective=obj, gamma=1e-2, horizon=4))
        series = account(trace, builtin_model("unit"))
        deltas = np.diff(np.concatenate([[0.0], series.cum_comm_ms]))
        assert deltas[1] == 1.0   # level:2 -> local
        assert deltas[3] == 10.0  # level:1 -> global

    def test_account_is_pure(self):
        topo = build_two_level([5, 5], [5, 5], 20)
        trace = _trace(topo, 40)
        a = account(trace, builtin_model("unit"))
        b = account(trace, builtin_model("unit"))
        assert np.array_equal(a.cum_comm_ms, b.cum_comm_ms)
        assert np.array_equal(a.cum_compute_ms, b.cum_compute_ms)

    def test_jitter_is_seeded_and_optional(self):
        topo = build_two_level([5, 5], [5, 5], 20)
        trace = _trace(topo, 40)
        noisy = CommModel(1.0, 10.0, jitter_std=0.1, jitter_seed=5)
        a = account(trace, noisy)
        b = account(trace, noisy)
        assert np.array_equal(a.cum_comm_ms, b.cum_comm_ms)
        clean = account(trace, CommModel(1.0, 10.0))
        assert not np.array_equal(a.cum_comm_ms, clean.cum_comm_ms)


class TestTimeToTarget:
    def test_target_above_initial_loss_hits_iteration_zero(self):
        topo = build_two_level([5, 5], [5, 5], 20)
        trace = _trace(topo, 40)
        hit = time_to_target(trace, builtin_model("unit"), "loss",
                             float(trace.loss[0]) + 1.0)
        assert hit.iteration == 0

    def test_unreachable_target(self):
        topo = build_two_level([5, 5], [5, 5], 20)
        trace = _trace(topo, 40)
        assert time_to_target(trace, builtin_model("unit"), "loss", -1.0) is None

    def test_reports_cumulative_cost_at_hit(self):
        topo = build_two_level([10], [5], 5)
        trace = _trace(topo, 50)
        target = float(trace.loss[24])
        hit = time_to_target(trace, builtin_model("unit"), "loss", target)
        assert hit.iteration <= 24
        series = account(trace, builtin_model("unit"))
        assert hit.comm_ms == series.cum_comm_ms[hit.iteration]
        assert hit.total_ms == hit.comm_ms + hit.compute_ms

    def test_grad_norm_metric(self):
        topo = build_two_level([10], [5], 5)
        trace = _trace(topo, 50)
        hit = time_to_target(trace, builtin_model("unit"), "grad_norm_sq",
                             float(np.nanmax(trace.grad_norm_sq)))
        assert hit.iteration == 0

    def test_unknown_metric(self):
        topo = build_two_level([10], [5], 5)
        trace = _trace(topo, 10)
        with pytest.raises(UnsupportedError):
            time_to_target(trace, builtin_model("unit"), "accuracy", 0.5)
