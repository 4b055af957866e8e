"""Shared assertions for engine traces.

Every test that produces a trace funnels it through
``assert_trace_invariants`` so the mean-preservation and schedule-fidelity
invariants are checked on every run the suite performs.
"""

import numpy as np

from hsgd.topology import TwoLevelTopology

MEAN_DRIFT_TOL = 1e-12


def assert_trace_invariants(trace, topology):
    assert len(trace) == trace.meta["horizon"]
    assert len(trace.events) == len(trace)
    if trace.meta["participation"] == 1.0:
        assert trace.meta["mean_drift_max"] <= MEAN_DRIFT_TOL
    if isinstance(topology, TwoLevelTopology):
        _assert_two_level_events(trace, topology)
    else:
        _assert_multi_level_events(trace, topology)


def _assert_two_level_events(trace, topo):
    for t, event in enumerate(trace.events):
        if event == "global":
            assert (t + 1) % topo.global_period == 0
        elif event.startswith("local:"):
            assert (t + 1) % topo.global_period != 0
            groups = [int(g) for g in event.split(":", 1)[1].split("|")]
            assert groups, "a local event must name its groups"
            for i in groups:
                assert (t + 1) % topo.local_periods[i] == 0
            for i in range(topo.num_groups):
                if (t + 1) % topo.local_periods[i] == 0:
                    assert i in groups
        elif event == "":
            assert (t + 1) % topo.global_period != 0
            assert all((t + 1) % p != 0 for p in topo.local_periods)
        else:
            raise AssertionError(f"unexpected event {event!r}")


def _assert_multi_level_events(trace, topo):
    for t, event in enumerate(trace.events):
        expected = topo.schedule_at(t)
        if expected is None:
            assert event == ""
        else:
            assert event == f"level:{expected}"


def traces_bitwise_equal(a, b) -> bool:
    return (
        np.array_equal(a.loss, b.loss, equal_nan=True)
        and np.array_equal(a.grad_norm_sq, b.grad_norm_sq, equal_nan=True)
        and np.array_equal(a.mean_history, b.mean_history)
        and np.array_equal(a.final_workers, b.final_workers)
    )
