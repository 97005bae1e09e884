import pytest

from optiforest.core import ResourceLimitError, tree_votes
from optiforest.oracle import (
    BehaviorPools,
    brute_force_optimum,
    enumerate_trees,
    tree_count_estimate,
)
from optiforest.witness import SolveSpec

from conftest import make_ts


class TestEnumeration:
    def test_size_zero_is_one_leaf_per_class(self, two_point):
        trees = list(enumerate_trees(two_point, 0))
        assert len(trees) == 2
        assert {t.encoding for t in trees} == {("L", 0), ("L", 1)}

    def test_one_cut_universe_count(self):
        # 1 dimension, 1 threshold, 2 classes: 2 leaves-only + 1*4 one-cut trees
        ts = make_ts([(0,), (1,)], ["b", "r"])
        trees = list(enumerate_trees(ts, 1))
        assert len(trees) == 6
        assert len({t.encoding for t in trees}) == 6  # no duplicates

    @pytest.mark.parametrize("max_size", [0, 1, 2, 3])
    def test_counts_match_closed_form(self, max_size):
        ts = make_ts([(0,), (1,), (2,)], ["b", "r", "b"])  # 1 dim, 2 thresholds
        expected = tree_count_estimate(len(ts.cuts), 2, max_size)
        got = sum(1 for _ in enumerate_trees(ts, max_size))
        assert got == expected

    def test_deterministic_order(self, two_point):
        a = [t.encoding for t in enumerate_trees(two_point, 2)]
        b = [t.encoding for t in enumerate_trees(two_point, 2)]
        assert a == b
        assert sorted(map(a.index, a)) == list(range(len(a)))  # each exactly once

    def test_budget_refusal_carries_estimate(self):
        ts = make_ts([(0, 0, 1), (1, 2, 0), (2, 1, 2)], ["a", "b", "a"])
        with pytest.raises(ResourceLimitError) as exc:
            list(enumerate_trees(ts, 6, budget=1000))
        assert exc.value.estimate > 1000


class TestBehaviorPools:
    def test_pools_match_tree_level_minimum_sizes(self):
        """Every behavior's pool level equals the smallest tree size
        realizing it, per exhaustive tree enumeration."""
        ts = make_ts([(0, 1), (1, 0), (1, 1), (0, 0)], ["b", "r", "b", "r"])
        best: dict[bytes, int] = {}
        for tree in enumerate_trees(ts, 3):
            key = tree_votes(tree, ts).tobytes()
            best.setdefault(key, tree.size)  # sizes ascend in enumeration order
        pools = BehaviorPools(ts)
        pools.ensure(3)
        got = {}
        for size, pats in enumerate(pools.patterns):
            for row in pats:
                got[row.tobytes()] = size
        assert got == best

    def test_realize_reproduces_pattern(self, majority3):
        pools = BehaviorPools(majority3)
        pools.ensure(2)
        for size in range(3):
            for idx in range(len(pools.patterns[size])):
                tree = pools.realize(size, idx)
                assert tree.size == size
                assert (tree_votes(tree, majority3) == pools.patterns[size][idx]).all()


class TestBruteForce:
    def test_two_point(self, two_point):
        res = brute_force_optimum(two_point, SolveSpec("total", 1, 3))
        assert res.value == 1

    def test_single_class_any_ell(self):
        ts = make_ts([(0,), (1,), (2,)], ["b", "b", "b"])
        for ell in (1, 3):
            res = brute_force_optimum(ts, SolveSpec("total", ell, 2))
            assert res.value == 0

    def test_majority3_golden(self, majority3):
        res = brute_force_optimum(majority3, SolveSpec("total", 3, 4))
        assert res.value == 3
        res2 = brute_force_optimum(majority3, SolveSpec("total", 3, 2))
        assert res2 is None  # infeasible below the optimum

    def test_solutions_verify(self, xor_grid):
        res = brute_force_optimum(xor_grid, SolveSpec("total", 1, 4, mode="all"))
        assert res.value == 3
        from optiforest.core import error_count

        for ens in res.solutions:
            assert error_count(ens, xor_grid) == 0
            assert ens.total_size == 3

    def test_first_solution_is_deterministic(self, majority3):
        a = brute_force_optimum(majority3, SolveSpec("total", 3, 4))
        b = brute_force_optimum(majority3, SolveSpec("total", 3, 4))
        assert a.solutions[0].encoding == b.solutions[0].encoding

    def test_permax_objective(self, majority3):
        res = brute_force_optimum(majority3, SolveSpec("permax", 3, 2))
        assert res.value == 1  # three stumps classify the instance
