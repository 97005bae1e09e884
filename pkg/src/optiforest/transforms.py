"""Constructive ensemble/tree comparisons: compiling an ensemble into one
equivalent tree, the parity hard instances with their reference ensembles,
and the exact single-tree size lower bound for those instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    Cut,
    DecisionTree,
    Leaf,
    Node,
    TrainingSet,
    TreeEnsemble,
    plurality_winner,
)

BLUE, RED = 0, 1  # positions of ("blue", "red") in lexicographic order


def ensemble_to_tree(
    ens: TreeEnsemble, num_classes: int, simplify: bool = False
) -> DecisionTree:
    """Compile an ensemble into a single tree with identical behavior.

    Member trees are appended one after another to every leaf; each final
    leaf is labeled with the plurality (earliest-class tie-break) of the
    votes accumulated along its path.  The result has size at most
    (s+1)**len(ens) - 1 where s is the largest member size.  With
    ``simplify``, same-class sibling leaves are merged afterwards; this
    never changes the assigned class of any point.
    """
    trees = ens.trees

    def build(i: int, votes: tuple[int, ...]) -> Node:
        if i == len(trees):
            return Leaf(plurality_winner(votes))

        def attach(node: Node) -> Node:
            if isinstance(node, Leaf):
                bumped = list(votes)
                bumped[node.cls] += 1
                return build(i + 1, tuple(bumped))
            return Cut(node.dim, node.thr, attach(node.le), attach(node.gt))

        return attach(trees[i].root)

    root = build(0, (0,) * num_classes)
    if simplify:
        root = _merge_equal_siblings(root)
    return DecisionTree(root)


def _merge_equal_siblings(node: Node) -> Node:
    if isinstance(node, Leaf):
        return node
    le = _merge_equal_siblings(node.le)
    gt = _merge_equal_siblings(node.gt)
    if isinstance(le, Leaf) and isinstance(gt, Leaf) and le.cls == gt.cls:
        return Leaf(le.cls)
    return Cut(node.dim, node.thr, le, gt)


@dataclass(frozen=True)
class ParityInstance:
    """A hard instance separating ensembles from single trees: the dataset,
    an ensemble of ``trees`` size-``size`` trees classifying it, and the
    exact lower bound on the size of any single classifying tree."""

    dataset: TrainingSet
    reference_ensemble: TreeEnsemble
    lower_bound: Fraction


def single_tree_lower_bound(trees: int, size: int) -> Fraction:
    """(size+1)**trees / (trees * ((size+1)/2)**((trees-1)/2)) - 1, exact.

    No single decision tree classifying the parity instance with these
    parameters has size smaller than this value.
    """
    _require_odd(trees, size)
    return Fraction(
        (size + 1) ** trees, trees * ((size + 1) // 2) ** ((trees - 1) // 2)
    ) - 1


def generate_parity_instance(trees: int, size: int) -> ParityInstance:
    """The even/odd-count dataset over {1..size+1}**trees together with its
    reference ensemble of per-dimension parity chains.

    Examples are the points where the number of even entries and the number
    of odd entries differ by exactly one; a point is blue iff the even
    entries are in the majority.  Tree i tests whether x[i] is even or odd
    via a chain of cuts with leaves alternating red, blue, red, ...
    """
    _require_odd(trees, size)
    rows = []
    labels = []
    for x in itertools.product(range(1, size + 2), repeat=trees):
        ev = sum(1 for v in x if v % 2 == 0)
        od = trees - ev
        if abs(ev - od) != 1:
            continue
        rows.append(x)
        labels.append("blue" if ev > od else "red")
    ts = TrainingSet.from_rows(rows, labels, class_order=("blue", "red"))

    members = tuple(
        DecisionTree(_parity_chain(dim, size, level=0)) for dim in range(trees)
    )
    return ParityInstance(
        dataset=ts,
        reference_ensemble=TreeEnsemble(members),
        lower_bound=single_tree_lower_bound(trees, size),
    )


def _parity_chain(dim: int, size: int, level: int) -> Node:
    # Cut at threshold index `level` peels off the value level+1; its leaf is
    # red for odd values, blue for even ones.
    peeled = level + 1
    le_leaf = Leaf(RED if peeled % 2 == 1 else BLUE)
    if level == size - 1:
        last = size + 1
        gt: Node = Leaf(RED if last % 2 == 1 else BLUE)
    else:
        gt = _parity_chain(dim, size, level + 1)
    return Cut(dim=dim, thr=level, le=le_leaf, gt=gt)


def _require_odd(trees: int, size: int) -> None:
    if trees < 1 or trees % 2 == 0:
        raise ValueError(f"tree count must be odd and positive, got {trees}")
    if size < 1 or size % 2 == 0:
        raise ValueError(f"tree size must be odd and positive, got {size}")
