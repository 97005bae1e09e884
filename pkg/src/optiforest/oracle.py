"""Independent brute-force ground truth.

Exhaustively enumerates decision trees over the finite canonical cut
universe (every shape, every cut assignment, every leaf labeling) and small
ensembles built from them.  Exists purely to anchor the two real engines on
small instances.  The optimum search runs on deduplicated per-example
behavior vectors, which is sound because ensemble votes depend on member
trees only through those vectors; solution sets come from the tree-level
enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import (
    Cut,
    DecisionTree,
    Leaf,
    Node,
    ResourceLimitError,
    TrainingSet,
    TreeEnsemble,
    tree_votes,
)

DEFAULT_TREE_BUDGET = 5_000_000
DEFAULT_TUPLE_BUDGET = 20_000_000
_CHUNK_ROWS = 1_000_000


def _catalan(k: int) -> int:
    return math.comb(2 * k, k) // (k + 1)


def tree_count_estimate(num_cuts: int, num_classes: int, max_size: int) -> int:
    """Closed-form number of trees with at most ``max_size`` inner nodes:
    shapes (Catalan numbers) times cut assignments times leaf labelings."""
    return sum(
        _catalan(k) * num_cuts**k * num_classes ** (k + 1) for k in range(max_size + 1)
    )


def _shapes(k: int) -> list:
    """Ordered binary tree shapes with k inner nodes; None is a leaf,
    otherwise a (left, right) pair.  Left subtree size ascending."""
    if k == 0:
        return [None]
    out = []
    for kl in range(k):
        for left in _shapes(kl):
            for right in _shapes(k - 1 - kl):
                out.append((left, right))
    return out


def enumerate_trees(
    ts: TrainingSet,
    max_size: int,
    budget: int = DEFAULT_TREE_BUDGET,
) -> Iterator[DecisionTree]:
    """Yield every decision tree with at most ``max_size`` cuts over the
    canonical cut universe, each exactly once, in deterministic order:
    size ascending, then shape, then cut assignment (preorder odometer),
    then leaf labeling (left-to-right odometer)."""
    cuts = ts.cuts
    sigma = ts.num_classes
    estimate = tree_count_estimate(len(cuts), sigma, max_size)
    if estimate > budget:
        raise ResourceLimitError(
            f"tree enumeration would visit ~{estimate} trees (budget {budget})",
            estimate=estimate,
            budget=budget,
        )
    for size in range(max_size + 1):
        for shape in _shapes(size):
            for cut_combo in itertools.product(range(len(cuts)), repeat=size):
                for label_combo in itertools.product(range(sigma), repeat=size + 1):
                    yield _build_tree(shape, cuts, cut_combo, label_combo)


def _build_tree(shape, cuts, cut_combo, label_combo) -> DecisionTree:
    ci = 0  # preorder cursor over inner nodes
    li = 0  # left-to-right cursor over leaves

    def build(sh) -> Node:
        nonlocal ci, li
        if sh is None:
            leaf = Leaf(label_combo[li])
            li += 1
            return leaf
        dim, thr = cuts[cut_combo[ci]]
        ci += 1
        le = build(sh[0])
        gt = build(sh[1])
        return Cut(dim, thr, le, gt)

    return DecisionTree(build(shape))


class BehaviorPools:
    """Distinct per-example vote vectors achievable by trees, grouped by the
    minimum tree size realizing them, with backpointers to rebuild one
    realizing tree per vector.

    Built bottom-up over the same (shape, cut, labeling) space the tree
    enumeration covers: mixing a size-i behavior and a size-(k-1-i) behavior
    at a root cut realizes exactly the size-k tree behaviors, and a vector
    kept at level k is realizable by no smaller tree.
    """

    def __init__(self, ts: TrainingSet):
        self.ts = ts
        n = ts.n
        sigma = ts.num_classes
        self._cut_rows = ts.cut_le.astype(bool)
        self.patterns: list[np.ndarray] = []
        self.backptr: list[list[tuple]] = []
        self._seen: set[bytes] = set()

        base = np.repeat(np.arange(sigma, dtype=np.int8)[:, None], n, axis=1)
        self.patterns.append(base)
        self.backptr.append([("leaf", c) for c in range(sigma)])
        self._seen.update(row.tobytes() for row in base)

    @property
    def built_size(self) -> int:
        return len(self.patterns) - 1

    def ensure(self, max_size: int) -> None:
        while self.built_size < max_size:
            self._grow()

    def _grow(self) -> None:
        k = self.built_size + 1
        n = self.ts.n
        rows: list[np.ndarray] = []
        ptrs: list[tuple] = []
        level_seen: set[bytes] = set()
        for kl in range(k):
            kr = k - 1 - kl
            pl, pr = self.patterns[kl], self.patterns[kr]
            if len(pl) == 0 or len(pr) == 0:
                continue
            for c, le in enumerate(self._cut_rows):
                step = max(1, _CHUNK_ROWS // max(1, len(pr)))
                for lo in range(0, len(pl), step):
                    block = pl[lo : lo + step]
                    mixed = np.where(le, block[:, None, :], pr[None, :, :])
                    flat = mixed.reshape(-1, n)
                    uniq, first = np.unique(flat, axis=0, return_index=True)
                    for row, fidx in zip(uniq, first):
                        key = row.tobytes()
                        if key in self._seen or key in level_seen:
                            continue
                        level_seen.add(key)
                        rows.append(row)
                        li, ri = divmod(int(fidx), len(pr))
                        ptrs.append((c, kl, lo + li, kr, ri))
        self._seen.update(level_seen)
        self.patterns.append(
            np.array(rows, dtype=np.int8) if rows else np.empty((0, n), dtype=np.int8)
        )
        self.backptr.append(ptrs)

    def realize(self, size: int, idx: int) -> DecisionTree:
        """One tree with exactly ``size`` cuts voting pattern ``idx``."""
        ptr = self.backptr[size][idx]
        if ptr[0] == "leaf":
            return DecisionTree(Leaf(ptr[1]))
        c, ls, li, rs, ri = ptr
        dim, thr = self.ts.cuts[c]
        return DecisionTree(
            Cut(dim, thr, self.realize(ls, li).root, self.realize(rs, ri).root)
        )


@dataclass(frozen=True)
class OracleResult:
    value: int
    solutions: tuple[TreeEnsemble, ...]


def brute_force_optimum(ts: TrainingSet, spec) -> OracleResult | None:
    """Exhaustive optimum over all ell-tuples of trees within the spec's
    size bounds, filtered by at most ``spec.errors`` misclassifications
    under plurality voting with the fixed tie-break order.

    Returns the minimum objective and solutions: the full canonical
    solution set in enumerate mode, otherwise the first solution found in
    enumeration order.  None if the bound is infeasible.
    """
    pools = BehaviorPools(ts)
    for value in range(spec.bound + 1):
        pools.ensure(value)
        found = _search_value(ts, spec, value, pools)
        if found is None:
            continue
        if spec.mode == "all":
            return OracleResult(value=value, solutions=_solution_set(ts, spec, value))
        return OracleResult(value=value, solutions=(found,))
    return None


def _size_tuples(spec, value: int) -> list[tuple[int, ...]]:
    """Nondecreasing per-slot size tuples to try at objective ``value``:
    exact total for the total-size objective, exact maximum for the
    per-tree objective (smaller objectives were tried in earlier sweeps)."""
    if spec.objective == "total":
        out = []

        def rec(remaining: int, parts: list, minimum: int):
            if len(parts) == spec.trees - 1:
                if remaining >= minimum:
                    out.append(tuple(parts + [remaining]))
                return
            for p in range(minimum, remaining + 1):
                rec(remaining - p, parts + [p], p)

        rec(value, [], 0)
        return out
    combos = itertools.product(range(value + 1), repeat=spec.trees)
    return [c for c in combos if list(c) == sorted(c) and max(c) == value]


def _search_value(ts: TrainingSet, spec, value: int, pools: BehaviorPools):
    ell = spec.trees
    labels = ts.labels_array
    sigma = ts.num_classes
    eye = np.eye(sigma, dtype=np.int32)

    def recurse(slot, sizes, start_idx, counts, picks):
        pool = pools.patterns[sizes[slot]]
        lo = start_idx if slot > 0 and sizes[slot] == sizes[slot - 1] else 0
        if slot == ell - 1:
            if lo >= len(pool):
                return None
            cand = pool[lo:]
            total = counts[None, :, :] + eye[cand]
            winners = total.argmax(axis=2)
            errs = (winners != labels[None, :]).sum(axis=1)
            ok = np.nonzero(errs <= spec.errors)[0]
            if len(ok) == 0:
                return None
            idx = lo + int(ok[0])
            trees = [pools.realize(sizes[i], picks[i]) for i in range(ell - 1)]
            trees.append(pools.realize(sizes[slot], idx))
            return TreeEnsemble(tuple(trees))
        for idx in range(lo, len(pool)):
            res = recurse(slot + 1, sizes, idx, counts + eye[pool[idx]], picks + [idx])
            if res is not None:
                return res
        return None

    for sizes in _size_tuples(spec, value):
        est = 1
        for s in sizes[:-1]:
            est *= max(1, len(pools.patterns[s]))
        if est > DEFAULT_TUPLE_BUDGET:
            raise ResourceLimitError(
                f"ensemble search would visit ~{est} tuples (budget {DEFAULT_TUPLE_BUDGET})",
                estimate=est,
                budget=DEFAULT_TUPLE_BUDGET,
            )
        res = recurse(0, sizes, 0, np.zeros((ts.n, sigma), dtype=np.int32), [])
        if res is not None:
            return res
    return None


def _solution_set(ts: TrainingSet, spec, value: int) -> tuple[TreeEnsemble, ...]:
    """All solutions at the optimal objective as canonical tree multisets,
    from tree-level enumeration (non-decreasing canonical sequences, so no
    permutation duplicates arise)."""
    ell = spec.trees
    labels = ts.labels_array
    sigma = ts.num_classes
    by_size: dict[int, list[DecisionTree]] = {k: [] for k in range(value + 1)}
    for tree in enumerate_trees(ts, value):
        by_size[tree.size].append(tree)
    for k in by_size:
        by_size[k].sort(key=lambda t: t.encoding)
    votes_by_size = {
        k: [tree_votes(t, ts) for t in trees] for k, trees in by_size.items()
    }

    eye = np.eye(sigma, dtype=np.int32)
    found: dict[tuple, TreeEnsemble] = {}

    def recurse(slot, sizes, start_idx, counts, picks):
        pool = by_size[sizes[slot]]
        lo = start_idx if slot > 0 and sizes[slot] == sizes[slot - 1] else 0
        for idx in range(lo, len(pool)):
            c2 = counts + eye[votes_by_size[sizes[slot]][idx]]
            if slot == ell - 1:
                winners = c2.argmax(axis=1)
                if int((winners != labels).sum()) <= spec.errors:
                    ens = TreeEnsemble(
                        tuple(by_size[sizes[i]][p] for i, p in enumerate(picks + [idx]))
                    )
                    found.setdefault(ens.encoding, ens)
            else:
                recurse(slot + 1, sizes, idx, c2, picks + [idx])

    for sizes in _size_tuples(spec, value):
        est = 1
        for s in sizes:
            est *= max(1, len(by_size[s]))
        if est > DEFAULT_TUPLE_BUDGET:
            raise ResourceLimitError(
                f"solution-set search would visit ~{est} tuples (budget {DEFAULT_TUPLE_BUDGET})",
                estimate=est,
                budget=DEFAULT_TUPLE_BUDGET,
            )
        recurse(0, sizes, 0, np.zeros((ts.n, sigma), dtype=np.int32), [])

    return tuple(found[k] for k in sorted(found))
