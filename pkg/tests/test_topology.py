import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsgd.errors import (
    DivisibilityError,
    EmptyGroupError,
    ExplosionError,
    NonSquareError,
    PeriodOrderError,
    SizeError,
)
from hsgd.topology import (
    aggregation_matrix,
    build_multi_level,
    build_two_level,
    contiguous_grouping,
    count_equal_groupings,
    count_unit_eigenvalues,
    enumerate_equal_groupings,
    grouping_from_sets,
    round_robin_grouping,
    schedule_level,
    two_level_equivalent,
    uniform_random_grouping,
)


class TestBuildTwoLevel:
    def test_two_groups_of_five(self):
        topo = build_two_level([5, 5], [5, 5], 50)
        assert topo.n == 10
        assert topo.num_groups == 2
        assert topo.groups == (tuple(range(5)), tuple(range(5, 10)))

    def test_degenerate_single_worker(self):
        topo = build_two_level([1], [1], 1)
        assert topo.n == 1
        assert topo.group_bounds == ((0, 1),)

    def test_common_multiple_periods(self):
        topo = build_two_level([2, 2], [2, 3], 6)
        assert topo.local_periods == (2, 3)

    def test_divisibility_error(self):
        with pytest.raises(DivisibilityError):
            build_two_level([2, 2], [2, 3], 4)

    def test_empty_group(self):
        with pytest.raises(EmptyGroupError):
            build_two_level([2, 0], [1, 1], 2)

    def test_length_mismatch(self):
        with pytest.raises(SizeError):
            build_two_level([2, 2], [1], 2)

    def test_worker_group_map(self):
        topo = build_two_level([1, 3], [2, 2], 4)
        assert topo.worker_group.tolist() == [0, 1, 1, 1]


class TestBuildMultiLevel:
    def test_two_level_equivalent_tree(self):
        tree = build_multi_level([2, 5], [50, 5])
        assert tree.n == 10
        flat = two_level_equivalent(tree)
        assert flat.group_sizes == (5, 5)
        assert flat.global_period == 50

    def test_three_level(self):
        tree = build_multi_level([2, 2, 3], [50, 10, 5])
        assert tree.n == 12
        assert tree.server_count(1) == 2
        assert tree.server_count(2) == 4
        assert tree.subtree_leaves(1) == 6

    def test_period_order_error(self):
        with pytest.raises(PeriodOrderError):
            build_multi_level([2, 2], [4, 6])

    def test_period_divisibility_error(self):
        with pytest.raises(DivisibilityError):
            build_multi_level([2, 2], [7, 5])

    def test_single_level_rejected(self):
        with pytest.raises(SizeError):
            build_multi_level([4], [3])

    def test_path_round_trip(self):
        tree = build_multi_level([2, 2, 3], [12, 6, 3])
        for worker in range(tree.n):
            assert tree.worker_of(tree.path_of(worker)) == worker
        assert tree.path_of(0) == (1, 1, 1)
        assert tree.path_of(tree.n - 1) == (2, 2, 3)


class TestSchedule:
    def test_multi_level_examples(self):
        tree = build_multi_level([2, 2, 3], [50, 10, 5])
        assert schedule_level(tree, 49) == 1
        assert schedule_level(tree, 9) == 2
        assert schedule_level(tree, 2) is None
        assert schedule_level(tree, 4) == 3

    def test_two_level(self):
        topo = build_two_level([2, 2], [2, 3], 6)
        assert schedule_level(topo, 5) == "global"
        assert schedule_level(topo, 1) == ("local", (0,))
        assert schedule_level(topo, 2) == ("local", (1,))
        assert schedule_level(topo, 0) is None

    def test_negative_time_rejected(self):
        topo = build_two_level([2], [1], 1)
        with pytest.raises(ValueError):
            schedule_level(topo, -1)

    @given(
        leaf=st.integers(1, 6),
        factors=st.lists(st.integers(2, 4), min_size=1, max_size=3),
        t=st.integers(0, 500),
    )
    @settings(max_examples=80, deadline=None)
    def test_higher_levels_subsume_lower(self, leaf, factors, t):
        periods = [leaf]
        for f in factors:
            periods.insert(0, periods[0] * f)
        tree = build_multi_level([2] * len(periods), periods)
        fired = tree.schedule_at(t)
        if fired is not None:
            for j in range(fired, tree.levels + 1):
                assert (t + 1) % tree.periods[j - 1] == 0


class TestAggregationMatrix:
    def test_two_groups_of_two(self):
        topo = build_two_level([2, 2], [1, 1], 1)
        a = aggregation_matrix(topo)
        expected = np.zeros((4, 4))
        expected[:2, :2] = 0.5
        expected[2:, 2:] = 0.5
        assert np.array_equal(a, expected)

    def test_single_worker_identity(self):
        topo = build_two_level([1], [1], 1)
        assert np.array_equal(aggregation_matrix(topo), np.eye(1))

    def test_doubly_stochastic(self):
        topo = build_two_level([3, 2, 4], [1, 1, 1], 2)
        a = aggregation_matrix(topo)
        assert np.max(np.abs(a.sum(axis=0) - 1.0)) <= 1e-15
        assert np.max(np.abs(a.sum(axis=1) - 1.0)) <= 1e-15

    def test_unit_eigenvalue_examples(self):
        three_by_two = build_two_level([2, 2, 2], [1, 1, 1], 1)
        assert count_unit_eigenvalues(aggregation_matrix(three_by_two)) == 3
        two_by_three = build_two_level([3, 3], [1, 1], 1)
        assert count_unit_eigenvalues(aggregation_matrix(two_by_three)) == 2
        assert count_unit_eigenvalues(np.eye(5)) == 5
        single = build_two_level([4], [1], 1)
        assert count_unit_eigenvalues(aggregation_matrix(single)) == 1

    def test_non_square_rejected(self):
        with pytest.raises(NonSquareError):
            count_unit_eigenvalues(np.ones((2, 3)))

    def test_eigen_count_matches_group_count_up_to_n8(self):
        def partitions(n, cap=None):
            if n == 0:
                yield ()
                return
            cap = n if cap is None else min(cap, n)
            for first in range(cap, 0, -1):
                for rest in partitions(n - first, first):
                    yield (first,) + rest

        for n in range(1, 9):
            for sizes in partitions(n):
                topo = build_two_level(list(sizes), [1] * len(sizes), 1)
                count = count_unit_eigenvalues(aggregation_matrix(topo))
                assert count == len(sizes), sizes


class TestGroupings:
    def test_enumeration_counts(self):
        assert len(list(enumerate_equal_groupings(4, 2))) == 3
        assert len(list(enumerate_equal_groupings(2, 2))) == 1
        assert len(list(enumerate_equal_groupings(6, 3))) == 15

    def test_enumeration_unique_and_equal_sized(self):
        seen = set()
        for grouping in enumerate_equal_groupings(6, 2):
            assert grouping.group_sizes == (3, 3)
            key = frozenset(frozenset(m) for m in grouping.group_members)
            assert key not in seen
            seen.add(key)
        assert len(seen) == count_equal_groupings(6, 2)

    @given(st.integers(2, 10))
    @settings(max_examples=30, deadline=None)
    def test_counting_formula(self, n):
        for num_groups in (k for k in range(1, n + 1) if n % k == 0):
            per = n // num_groups
            expected = math.factorial(n) // (
                math.factorial(per) ** num_groups * math.factorial(num_groups)
            )
            assert count_equal_groupings(n, num_groups) == expected
            if expected <= 10_000:
                assert len(list(enumerate_equal_groupings(n, num_groups))) == expected

    def test_size_error(self):
        with pytest.raises(SizeError):
            list(enumerate_equal_groupings(5, 2))

    def test_explosion_guard(self):
        assert count_equal_groupings(20, 2) > 10_000
        with pytest.raises(ExplosionError):
            list(enumerate_equal_groupings(20, 2))

    def test_uniform_random_grouping_is_deterministic(self):
        a = uniform_random_grouping(12, 3, seed=7)
        b = uniform_random_grouping(12, 3, seed=7)
        assert a.assignment == b.assignment
        assert a.group_sizes == (4, 4, 4)
        c = uniform_random_grouping(12, 3, seed=8)
        assert c.assignment != a.assignment

    def test_round_robin(self):
        g = round_robin_grouping(6, 2)
        assert g.group_members == ((0, 2, 4), (1, 3, 5))
        assert g.origin == "group-iid"

    def test_grouping_from_sets_validates(self):
        g = grouping_from_sets([(0, 2), (1, 3)])
        assert g.assignment == (0, 1, 0, 1)
        with pytest.raises(SizeError):
            grouping_from_sets([(0, 1), (1, 2)])

    def test_contiguous(self):
        g = contiguous_grouping([2, 3], origin="group-non-iid")
        assert g.group_members == ((0, 1), (2, 3, 4))
        assert g.origin == "group-non-iid"
