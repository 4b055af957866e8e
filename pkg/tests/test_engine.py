import math

import numpy as np
import pytest

from helpers import assert_trace_invariants, traces_bitwise_equal
from reference_impl import reference_centralized_gd, reference_local_sgd

from hsgd.bounds import lr_max
from hsgd.engine import (
    RunConfig,
    measure_parameter_mses,
    run,
    run_multi_level,
    run_two_level,
    sample_participants,
)
from hsgd.errors import (
    LrTooLargeError,
    NonFiniteParameterError,
    NonPositiveError,
    SizeError,
    UnsupportedError,
)
from hsgd.objectives import QuadraticObjective, make_quadratic_fixture
from hsgd.topology import build_multi_level, build_two_level, two_level_equivalent


def _config(**overrides):
    base = dict(
        topology=build_two_level([2, 2], [2, 2], 4),
        objective=make_quadratic_fixture("QF1"),
        gamma=0.01,
        horizon=16,
        seed=0,
        w0=1.0,
    )
    base.update(overrides)
    return RunConfig(**base)


class TestBasics:
    def test_scalar_gd_trajectory(self):
        obj = QuadraticObjective(np.array([[0.0]]))
        topo = build_two_level([1], [1], 1)
        config = RunConfig(topology=topo, objective=obj, gamma=0.5, horizon=4,
                           w0=1.0, lr_policy="warn")
        with pytest.warns(RuntimeWarning):
            trace = run(config)
        assert trace.mean_history.ravel().tolist() == [1.0, 0.5, 0.25, 0.125]
        assert_trace_invariants(trace, topo)

    def test_exactly_horizon_records(self):
        trace = run(_config(horizon=7, topology=build_two_level([2, 2], [1, 1], 1)))
        assert len(trace) == 7
        assert len(trace.events) == 7

    def test_lr_enforced_by_default(self):
        with pytest.raises(LrTooLargeError):
            run(_config(gamma=0.9))

    def test_lr_warn_mode_records_violation(self):
        with pytest.warns(RuntimeWarning):
            trace = run(_config(gamma=0.9, lr_policy="warn", horizon=4))
        assert trace.meta["lr_violated"]

    def test_divergent_run_raises_non_finite(self):
        obj = QuadraticObjective(np.array([[0.0]]))
        topo = build_two_level([1], [1], 1)
        config = RunConfig(topology=topo, objective=obj, gamma=4.0, horizon=2000,
                           w0=1.0, lr_policy="warn")
        with pytest.warns(RuntimeWarning):
            with pytest.raises(NonFiniteParameterError):
                run(config)

    def test_determinism(self):
        a = run(_config(noise="gaussian", sigma2=0.3, seed=9))
        b = run(_config(noise="gaussian", sigma2=0.3, seed=9))
        assert traces_bitwise_equal(a, b)
        c = run(_config(noise="gaussian", sigma2=0.3, seed=10))
        assert not traces_bitwise_equal(a, c)

    def test_eval_stride_skips_metrics(self):
        trace = run(_config(horizon=8, eval_stride=4))
        assert np.isnan(trace.loss[1]) and np.isnan(trace.loss[5])
        assert not np.isnan(trace.loss[0]) and not np.isnan(trace.loss[4])
        assert np.isfinite(trace.mean_grad_norm_sq())

    def test_topology_kind_checked(self):
        tree = build_multi_level([2, 2], [4, 2])
        with pytest.raises(UnsupportedError):
            run_two_level(_config(topology=tree))
        with pytest.raises(UnsupportedError):
            run_multi_level(_config())

    def test_objective_size_must_match(self):
        with pytest.raises(SizeError):
            run(_config(topology=build_two_level([3, 3], [2, 2], 4)))

    def test_minibatch_noise_end_to_end(self):
        from hsgd.objectives import make_logistic

        obj = make_logistic(4, 3, samples_per_worker=20, label_skew=1.0,
                            regularization=0.05, seed=6)
        topo = build_two_level([2, 2], [2, 2], 4)
        config = RunConfig(topology=topo, objective=obj,
                           gamma=0.5 * lr_max(4, obj.lipschitz), horizon=20,
                           seed=4, noise="minibatch", batch_size=5, w0=0.0)
        trace = run(config)
        assert_trace_invariants(trace, topo)
        assert traces_bitwise_equal(trace, run(config))
        assert trace.loss[-1] < trace.loss[0]


class TestReductions:
    def test_single_group_matches_reference_local_sgd(self):
        obj = make_quadratic_fixture("QF10")
        topo = build_two_level([10], [5], 5)
        config = RunConfig(topology=topo, objective=obj, gamma=2e-3, horizon=60,
                           seed=21, w0=1.0, noise="gaussian", sigma2=0.25)
        trace = run(config)
        means, losses, final = reference_local_sgd(
            obj, gamma=2e-3, horizon=60, period=5, w0=1.0, seed=21,
            noise="gaussian", sigma2=0.25,
        )
        assert np.array_equal(trace.mean_history, means)
        assert np.array_equal(trace.loss, losses)
        assert np.array_equal(trace.final_workers, final)
        assert_trace_invariants(trace, topo)

    def test_multi_level_m2_matches_two_level(self):
        tree = build_multi_level([2, 5], [50, 5])
        flat = two_level_equivalent(tree)
        obj = make_quadratic_fixture("QF10")
        kwargs = dict(objective=obj, gamma=2e-3, horizon=120, seed=5,
                      noise="gaussian", sigma2=0.25, w0=1.0)
        a = run(RunConfig(topology=tree, **kwargs))
        b = run(RunConfig(topology=flat, **kwargs))
        assert traces_bitwise_equal(a, b)
        assert np.array_equal(a.upward_mse, b.upward_mse)
        assert np.array_equal(a.downward_mse, b.downward_mse)
        assert_trace_invariants(a, tree)
        assert_trace_invariants(b, flat)

    def test_noise_free_consensus_is_centralized_gd(self):
        obj = make_quadratic_fixture("QF10")
        topo = build_two_level([1] * 10, [1] * 10, 1)
        config = RunConfig(topology=topo, objective=obj, gamma=5e-3, horizon=40,
                           w0=0.5, lr_policy="warn")
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trace = run(config)
        reference = reference_centralized_gd(obj, gamma=5e-3, horizon=40, w0=0.5)
        assert np.allclose(trace.mean_history, reference, rtol=0, atol=1e-13)
        assert_trace_invariants(trace, topo)


class TestAggregationBehavior:
    def test_identical_group_members_stay_identical(self):
        # QF1 grouped as {0,1 | 2,3}: same anchors inside each group, same
        # init, no noise, so local averaging is a no-op
        obj = make_quadratic_fixture("QF1")
        topo = build_two_level([2, 2], [2, 2], 8)
        trace = run(RunConfig(topology=topo, objective=obj, gamma=0.02,
                              horizon=16, w0=1.0))
        assert np.all(trace.downward_mse == 0.0)
        final = trace.final_workers
        assert np.array_equal(final[0], final[1])
        assert np.array_equal(final[2], final[3])
        assert_trace_invariants(trace, topo)

    def test_mean_preserved_under_heterogeneous_groups(self):
        gen = np.random.Generator(np.random.Philox(key=[77, 0]))
        obj = QuadraticObjective(gen.standard_normal((7, 3)))
        topo = build_two_level([1, 2, 4], [2, 2, 4], 8)
        trace = run(RunConfig(topology=topo, objective=obj, gamma=5e-3, horizon=64,
                              seed=3, noise="gaussian", sigma2=0.5, w0=0.0))
        assert trace.meta["mean_drift_max"] <= 1e-12
        assert_trace_invariants(trace, topo)

    def test_mses_zero_after_global_and_structured_after_local(self):
        obj = make_quadratic_fixture("QF10")
        topo = build_two_level([5, 5], [5, 5], 20)
        trace = run(RunConfig(topology=topo, objective=obj, gamma=2e-3, horizon=41,
                              seed=6, noise="gaussian", sigma2=0.25, w0=1.0))
        # record t reflects the state before step t, i.e. after the event at
        # t-1; equal rows can still measure ~ulp^2 because group and global
        # means divide by different worker counts
        eps = 1e-28
        for t in range(1, 41):
            if trace.events[t - 1] == "global":
                assert trace.upward_mse[t] <= eps
                assert trace.downward_mse[t] <= eps
            elif trace.events[t - 1].startswith("local"):
                assert trace.downward_mse[t] <= eps
                assert trace.upward_mse[t] > 1e-12
        assert_trace_invariants(trace, topo)

    def test_direct_mse_arithmetic(self):
        topo = build_two_level([2], [1], 1)
        W = np.array([[0.0], [2.0]])
        up, down = measure_parameter_mses(W, topo)
        assert up == 0.0
        assert down == pytest.approx(1.0)

    def test_multi_level_consensus_at_global_round(self):
        tree = build_multi_level([2, 2, 3], [12, 6, 3])
        gen = np.random.Generator(np.random.Philox(key=[13, 0]))
        obj = QuadraticObjective(gen.standard_normal((12, 2)))
        trace = run(RunConfig(topology=tree, objective=obj, gamma=5e-3, horizon=13,
                              w0=1.0))
        assert trace.events[11] == "level:1"
        # record 12 is the state right after that global aggregation; see the
        # ulp note above for the nonzero tolerance
        assert trace.level_upward_mse[12].max() <= 1e-28
        assert trace.level_downward_mse[12].max() <= 1e-28
        assert_trace_invariants(trace, tree)
        # ending right on the global round leaves every worker identical
        ended = run(RunConfig(topology=tree, objective=obj, gamma=5e-3, horizon=12,
                              w0=1.0))
        assert np.all(ended.final_workers == ended.final_workers[0])

    def test_multi_level_event_levels(self):
        tree = build_multi_level([2, 2, 3], [12, 6, 3])
        obj = QuadraticObjective(np.zeros((12, 1)))
        trace = run(RunConfig(topology=tree, objective=obj, gamma=5e-3, horizon=12))
        assert trace.events[2] == "level:3"
        assert trace.events[5] == "level:2"
        assert trace.events[11] == "level:1"
        assert trace.events[0] == ""


class TestMeanPreservationProperty:
    from hypothesis import given, settings
    from hypothesis import strategies as st

    @given(
        sizes=st.lists(st.integers(1, 4), min_size=1, max_size=4),
        period_factors=st.lists(st.integers(1, 3), min_size=1, max_size=4),
        multiple=st.integers(1, 3),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=25, deadline=None)
    def test_random_topologies_preserve_the_mean(self, sizes, period_factors,
                                                 multiple, seed):
        while len(period_factors) < len(sizes):
            period_factors.append(period_factors[-1])
        period_factors = period_factors[: len(sizes)]
        lcm = math.lcm(*period_factors)
        topo = build_two_level(sizes, period_factors, lcm * multiple)
        gen = np.random.Generator(np.random.Philox(key=[seed, 9]))
        obj = QuadraticObjective(gen.standard_normal((topo.n, 2)))
        trace = run(RunConfig(
            topology=topo, objective=obj, gamma=0.5 * lr_max(topo.global_period, 1.0),
            horizon=2 * topo.global_period, seed=seed, w0=0.5,
            noise="gaussian", sigma2=0.4,
        ))
        assert trace.meta["mean_drift_max"] <= 1e-12
        assert_trace_invariants(trace, topo)


class TestParticipation:
    def test_sampler_counts_and_determinism(self):
        members = tuple(range(10, 15))
        chosen = sample_participants(members, 0.2, seed=3, round_index=7, group=1)
        assert len(chosen) == 1
        assert chosen == sample_participants(members, 0.2, seed=3, round_index=7, group=1)
        assert sample_participants(members, 1.0, seed=3, round_index=7) == members
        other_round = sample_participants(members, 0.2, seed=3, round_index=8, group=1)
        assert isinstance(other_round, tuple)

    def test_sampler_rejects_bad_fraction(self):
        with pytest.raises(NonPositiveError):
            sample_participants((0, 1), 0.0, seed=0, round_index=0)

    def test_full_participation_matches_default(self):
        explicit = run(_config(participation=1.0, noise="gaussian", sigma2=0.2))
        default = run(_config(noise="gaussian", sigma2=0.2))
        assert traces_bitwise_equal(explicit, default)

    def test_partial_run_freezes_non_participants(self):
        obj = make_quadratic_fixture("QF10")
        topo = build_two_level([5, 5], [5, 5], 20)
        config = RunConfig(topology=topo, objective=obj, gamma=2e-3, horizon=40,
                           seed=2, w0=1.0, noise="gaussian", sigma2=0.25,
                           participation=0.2)
        trace = run(config)
        assert len(trace) == 40
        assert_trace_invariants(trace, topo)
        # with 1 of 5 workers active per group and round, parameters stay
        # finite and the trace is reproducible
        again = run(config)
        assert traces_bitwise_equal(trace, again)

    def test_partial_with_idle_steps_differs(self):
        obj = make_quadratic_fixture("QF10")
        topo = build_two_level([5, 5], [5, 5], 20)
        base = dict(topology=topo, objective=obj, gamma=2e-3, horizon=40, seed=2,
                    w0=1.0, noise="gaussian", sigma2=0.25, participation=0.2)
        frozen = run(RunConfig(**base))
        stepping = run(RunConfig(**base, idle_workers_step=True))
        assert not traces_bitwise_equal(frozen, stepping)

    def test_multi_level_rejects_partial(self):
        tree = build_multi_level([2, 2], [4, 2])
        obj = QuadraticObjective(np.zeros((4, 1)))
        config = RunConfig(topology=tree, objective=obj, gamma=1e-2, horizon=4,
                           participation=0.5)
        with pytest.raises(UnsupportedError):
            run(config)

    def test_participation_validated(self):
        with pytest.raises(NonPositiveError):
            _config(participation=0.0)
        with pytest.raises(NonPositiveError):
            _config(participation=1.5)
