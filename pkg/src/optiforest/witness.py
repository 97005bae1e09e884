"""Witness-tree branch and bound.

Search states are ensembles of witness trees: every leaf carries a
designated training example routed to it.  The search grows the ensemble
one cut at a time; a new cut is only ever placed on the path to a dirty
example's leaf, on a dimension where the dirty example and the leaf's
witness differ, with a canonical threshold strictly between their values,
and candidates that would wash an existing witness out of its leaf are
discarded.  That keeps the branching factor small while preserving
completeness for the optimum.

Example subsets are bitmasks over example ids throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Union

import numpy as np

from .core import (
    Cut,
    DecisionTree,
    Leaf,
    TrainingSet,
    TreeEnsemble,
    error_count,
)


@dataclass(frozen=True)
class SolveSpec:
    """What to solve: objective kind, tree count, bound, error budget, and
    whether to stop at the first solution or enumerate all of them."""

    objective: str  # "total": sum of sizes <= bound; "permax": each size <= bound
    trees: int
    bound: int
    errors: int = 0
    mode: str = "first"  # "first" | "all"

    def __post_init__(self):
        if self.objective not in ("total", "permax"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.trees < 1:
            raise ValueError("tree count must be >= 1")
        if self.bound < 0 or self.errors < 0:
            raise ValueError("bound and error budget must be >= 0")
        if self.mode not in ("first", "all"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class WLeaf:
    cls: int
    wit: int  # witness example id; always inside ``mask``
    mask: int  # bitmask of training examples routed to this leaf


@dataclass(frozen=True)
class WCut:
    dim: int
    thr: int
    le: "WNode"
    gt: "WNode"
    mask: int  # union of the leaf masks below
    size: int  # inner nodes in this subtree


WNode = Union[WCut, WLeaf]


class WitnessTree:
    """A decision tree whose leaves each carry a witness example."""

    __slots__ = ("root", "size", "votes", "witness_ids")

    def __init__(self, root: WNode, n: int):
        self.root = root
        self.size = root.size if isinstance(root, WCut) else 0
        votes = np.empty(n, dtype=np.int8)
        wits = []

        def walk(node: WNode) -> None:
            if isinstance(node, WLeaf):
                wits.append(node.wit)
                m = node.mask
                while m:
                    low = m & -m
                    votes[low.bit_length() - 1] = node.cls
                    m ^= low
            else:
                walk(node.le)
                walk(node.gt)

        walk(root)
        self.votes = votes
        self.witness_ids = frozenset(wits)

    def to_decision_tree(self) -> DecisionTree:
        def strip(node: WNode):
            if isinstance(node, WLeaf):
                return Leaf(node.cls)
            return Cut(node.dim, node.thr, strip(node.le), strip(node.gt))

        return DecisionTree(strip(self.root))


def single_leaf_tree(ts: TrainingSet, cls: int, witness: int) -> WitnessTree:
    return WitnessTree(WLeaf(cls=cls, wit=witness, mask=ts.full_mask), ts.n)


@dataclass(frozen=True)
class WitnessEnsemble:
    """The search state: refinable witness trees plus the classes of any
    postulated trivial trees that stay fixed during the search (used when
    the tree count exceeds the size bound)."""

    free: tuple[WitnessTree, ...]
    frozen_classes: tuple[int, ...] = ()

    @property
    def num_trees(self) -> int:
        return len(self.free) + len(self.frozen_classes)

    @property
    def total_size(self) -> int:
        return sum(t.size for t in self.free)

    def vote_counts(self, ts: TrainingSet) -> np.ndarray:
        counts = np.zeros((ts.n, ts.num_classes), dtype=np.int32)
        for c in self.frozen_classes:
            counts[:, c] += 1
        rows = np.arange(ts.n)
        for wt in self.free:
            counts[rows, wt.votes.astype(np.int64)] += 1
        return counts

    def dirty_ids(self, ts: TrainingSet) -> list[int]:
        winners = self.vote_counts(ts).argmax(axis=1)
        return [j for j in range(ts.n) if winners[j] != ts.labels[j]]

    def to_ensemble(self) -> TreeEnsemble:
        trees = [DecisionTree(Leaf(c)) for c in self.frozen_classes]
        trees.extend(wt.to_decision_tree() for wt in self.free)
        return TreeEnsemble(tuple(trees))


def init_ensembles(ts: TrainingSet, trees: int) -> list[WitnessEnsemble]:
    """The |classes|**trees initial states: every tree a single leaf
    witnessed by the lowest-id example, one state per class assignment,
    in odometer order over the class ordering."""
    return [
        WitnessEnsemble(
            free=tuple(single_leaf_tree(ts, c, witness=0) for c in assignment)
        )
        for assignment in itertools.product(range(ts.num_classes), repeat=trees)
    ]


def _restrict(node: WNode, keep: int) -> Optional[WNode]:
    """Intersect every mask in the subtree with ``keep``; None if any leaf
    would lose its witness (witness preservation)."""
    if isinstance(node, WLeaf):
        if not (keep >> node.wit) & 1:
            return None
        return WLeaf(node.cls, node.wit, node.mask & keep)
    le = _restrict(node.le, keep)
    if le is None:
        return None
    gt = _restrict(node.gt, keep)
    if gt is None:
        return None
    return WCut(node.dim, node.thr, le, gt, node.mask & keep, node.size)


def important_refinements(
    wt: WitnessTree,
    example_id: int,
    ts: TrainingSet,
    size_budget_left: int,
) -> list[WitnessTree]:
    """All important one-step refinements of ``wt`` introducing the dirty
    example as witness of a new leaf labeled with its own class.

    Candidates are enumerated by position (new root first, then the edges
    on the path to the example's leaf, top-down), then dimension, then
    threshold index; any candidate that would evict an existing witness
    from its leaf is discarded.
    """
    if size_budget_left <= 0:
        return []
    ranks = ts.ranks
    full = ts.full_mask

    # Path from the root to the example's leaf.
    path: list[WCut] = []
    node = wt.root
    while isinstance(node, WCut):
        path.append(node)
        node = node.le if ranks[example_id, node.dim] <= node.thr else node.gt
    leaf: WLeaf = node
    x = leaf.wit
    new_cls = ts.labels[example_id]

    out: list[WitnessTree] = []
    # Position p: 0 inserts a new root; p >= 1 subdivides the edge between
    # path[p-1] and its child on the path.
    for pos in range(len(path) + 1):
        displaced: WNode = wt.root if pos == 0 else _path_child(path, pos - 1, ranks, example_id)
        reach = displaced.mask
        for dim in range(ts.d):
            re = int(ranks[example_id, dim])
            rx = int(ranks[x, dim])
            if re == rx:
                continue
            lo, hi = (re, rx) if re < rx else (rx, re)
            for thr in range(lo, hi):
                le_bits = ts.cut_le_bits[ts.cut_index(dim, thr)]
                e_on_le = re <= thr
                side_e = le_bits if e_on_le else full & ~le_bits
                side_other = full & ~side_e
                kept = _restrict(displaced, side_other)
                if kept is None:
                    continue
                new_leaf = WLeaf(cls=new_cls, wit=example_id, mask=reach & side_e)
                size = kept.size if isinstance(kept, WCut) else 0
                inserted = WCut(
                    dim=dim,
                    thr=thr,
                    le=new_leaf if e_on_le else kept,
                    gt=kept if e_on_le else new_leaf,
                    mask=reach,
                    size=size + 1,
                )
                root = _rebuild_above(path[:pos], inserted, ranks, example_id)
                out.append(WitnessTree(root, ts.n))
    if __debug__:
        for cand in out:
            assert cand.votes[example_id] == new_cls
            assert example_id in cand.witness_ids
    return out


def _path_child(path: list[WCut], idx: int, ranks: np.ndarray, example_id: int) -> WNode:
    node = path[idx]
    return node.le if ranks[example_id, node.dim] <= node.thr else node.gt


def _rebuild_above(
    prefix: list[WCut], replacement: WNode, ranks: np.ndarray, example_id: int
) -> WNode:
    """Rebuild the ancestors of a replaced path node; ancestor masks are
    unchanged because the set of examples reaching them is unchanged."""
    node = replacement
    for parent in reversed(prefix):
        on_le = ranks[example_id, parent.dim] <= parent.thr
        le = node if on_le else parent.le
        gt = parent.gt if on_le else node
        size = (le.size if isinstance(le, WCut) else 0) + (
            gt.size if isinstance(gt, WCut) else 0
        )
        node = WCut(parent.dim, parent.thr, le, gt, parent.mask, size + 1)
    return node


def refine_ensemble(
    ens: WitnessEnsemble,
    ts: TrainingSet,
    spec: SolveSpec,
    sink: Callable[[WitnessEnsemble], bool],
    counter: Optional[dict] = None,
) -> bool:
    """The recursive search.  Emits solutions through ``sink``; a True
    return from the sink (first-solution mode) unwinds the search.

    Prunes when the size budget is exceeded; emits when at most
    ``spec.errors`` dirty examples remain; prunes when the budget is
    exactly exhausted but the state is not a solution; otherwise branches
    over the lowest-id dirty example (the errors+1 lowest, for a positive
    error budget), over every tree misclassifying it in which it is not a
    witness, over every important one-step refinement introducing it.
    """
    if counter is not None:
        counter["nodes"] = counter.get("nodes", 0) + 1
    total = ens.total_size
    sizes = [t.size for t in ens.free]
    if spec.objective == "total":
        if total > spec.bound:
            return False
    else:
        if sizes and max(sizes) > spec.bound:
            return False

    dirty = ens.dirty_ids(ts)
    if len(dirty) <= spec.errors:
        return sink(ens)

    if spec.objective == "total":
        if total == spec.bound:
            return False
        budget_left = spec.bound - total
    else:
        if all(s == spec.bound for s in sizes):
            return False

    picks = dirty[: spec.errors + 1]
    assert len(picks) == spec.errors + 1
    for eid in picks:
        lam = ts.labels[eid]
        for ti, wt in enumerate(ens.free):
            if wt.votes[eid] == lam or eid in wt.witness_ids:
                continue
            if spec.objective == "permax":
                budget_left = spec.bound - wt.size
            for cand in important_refinements(wt, eid, ts, budget_left):
                child = WitnessEnsemble(
                    free=ens.free[:ti] + (cand,) + ens.free[ti + 1 :],
                    frozen_classes=ens.frozen_classes,
                )
                if refine_ensemble(child, ts, spec, sink, counter):
                    return True
    return False


def _weak_compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _weak_compositions(total - first, parts - 1):
            yield (first,) + rest


def _initial_states(ts: TrainingSet, trees: int, spec: SolveSpec) -> Iterator[WitnessEnsemble]:
    """Initial ensembles for one decision run.  For the total-size objective
    with more trees than budget, some trees must stay trivial, so the class
    composition of the trivial part is enumerated and fixed while the
    remaining ``bound`` trees are searched."""
    sigma = ts.num_classes
    if spec.objective == "total" and trees > spec.bound:
        fixed = trees - spec.bound
        for comp in _weak_compositions(fixed, sigma):
            frozen = tuple(
                c for c, count in enumerate(comp) for _ in range(count)
            )
            for assignment in itertools.product(range(sigma), repeat=spec.bound):
                yield WitnessEnsemble(
                    free=tuple(single_leaf_tree(ts, c, witness=0) for c in assignment),
                    frozen_classes=frozen,
                )
    else:
        yield from init_ensembles(ts, trees)


def _decide(
    ts: TrainingSet,
    trees: int,
    spec: SolveSpec,
    collect_all: bool,
    counter: Optional[dict] = None,
) -> list[TreeEnsemble]:
    """Run all initial calls for one bound.  Returns the solutions found:
    at most one in first-solution mode, the deduplicated canonical set in
    enumerate mode."""
    found: dict[tuple, TreeEnsemble] = {}

    def sink(state: WitnessEnsemble) -> bool:
        ensemble = state.to_ensemble()
        if __debug__:
            _check_solution(ensemble, ts, spec)
        found.setdefault(ensemble.encoding, ensemble)
        return not collect_all

    for start in _initial_states(ts, trees, spec):
        stopped = refine_ensemble(start, ts, spec, sink, counter)
        if stopped and not collect_all:
            break
    return [found[k] for k in sorted(found)]


def _check_solution(ensemble: TreeEnsemble, ts: TrainingSet, spec: SolveSpec) -> None:
    if spec.objective == "total":
        assert ensemble.total_size <= spec.bound
    else:
        assert ensemble.max_size <= spec.bound
    assert len(ensemble.trees) == spec.trees
    assert error_count(ensemble, ts) <= spec.errors


@dataclass(frozen=True)
class WitnessResult:
    value: int
    solutions: tuple[TreeEnsemble, ...]
    nodes: int = 0


def solve_mtes_witness(
    ts: TrainingSet,
    trees: int,
    total_bound: int,
    errors: int = 0,
    mode: str = "first",
) -> Optional[WitnessResult]:
    """Minimum total ensemble size within the bound, or None if infeasible.

    Wraps the decision search in an optimization sweep over increasing
    bounds, so the first feasible bound is the optimum.
    """
    counter = {"nodes": 0}
    for value in range(total_bound + 1):
        spec = SolveSpec("total", trees, value, errors, mode)
        sols = _decide(ts, trees, spec, collect_all=(mode == "all"), counter=counter)
        if sols:
            return WitnessResult(value=value, solutions=tuple(sols), nodes=counter["nodes"])
    return None


def solve_mmax_witness(
    ts: TrainingSet,
    trees: int,
    size_bound: int,
    errors: int = 0,
    mode: str = "first",
) -> Optional[WitnessResult]:
    """Minimum per-tree size bound within the given bound, or None."""
    counter = {"nodes": 0}
    for value in range(size_bound + 1):
        spec = SolveSpec("permax", trees, value, errors, mode)
        sols = _decide(ts, trees, spec, collect_all=(mode == "all"), counter=counter)
        if sols:
            return WitnessResult(value=value, solutions=tuple(sols), nodes=counter["nodes"])
    return None


def enumerate_solutions_witness(ts: TrainingSet, spec: SolveSpec) -> Optional[WitnessResult]:
    """All distinct optimal solutions (canonical forms, deduplicated) at
    the best objective value not exceeding the spec's bound.

    Complete for the total-size objective: at the optimal total, no proper
    prefix of a solution can itself be a solution, so no emission cuts a
    branch short.  Under the per-tree objective the search still returns
    the optimal value with every minimal solution, but refinements of
    emitted solutions that also satisfy the bound are not revisited, so
    non-minimal solutions are omitted there.
    """
    if spec.mode != "all":
        raise ValueError("enumerate_solutions_witness requires mode 'all'")
    if spec.objective == "total":
        return solve_mtes_witness(ts, spec.trees, spec.bound, spec.errors, mode="all")
    return solve_mmax_witness(ts, spec.trees, spec.bound, spec.errors, mode="all")
