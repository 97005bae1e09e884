"""Canonical data model shared by every solver engine.

Feature values are exact decimals and all comparisons are exact: thresholds
are midpoints of consecutive distinct values, which are again exact decimals,
so no epsilon handling is needed anywhere.  Solvers never touch raw values;
they work on per-dimension value ranks and threshold indices, which is
equivalent because a value is <= the k-th canonical threshold of a dimension
iff its rank in that dimension is <= k.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np


class InconsistentDataError(ValueError):
    """Two examples share coordinates but carry different labels."""


class ResourceLimitError(RuntimeError):
    """A solver refused to run because a size estimate exceeds its budget."""

    def __init__(self, message: str, estimate: int, budget: int):
        super().__init__(message)
        self.estimate = estimate
        self.budget = budget


def as_decimal(value: Union[Decimal, int, str]) -> Decimal:
    """Convert a raw cell to an exact Decimal, rejecting NaN/inf."""
    if isinstance(value, Decimal):
        dec = value
    elif isinstance(value, int):
        dec = Decimal(value)
    elif isinstance(value, float):
        raise TypeError(
            "float feature values are not accepted; pass str or Decimal "
            "to keep values exact"
        )
    else:
        try:
            dec = Decimal(str(value).strip())
        except InvalidOperation as exc:
            raise ValueError(f"unparsable numeric value {value!r}") from exc
    if not dec.is_finite():
        raise ValueError(f"non-finite feature value {value!r}")
    return dec


@dataclass(frozen=True)
class Example:
    """A training example: an index plus a point with exact coordinates."""

    id: int
    coords: tuple[Decimal, ...]

    def __getitem__(self, dim: int) -> Decimal:
        return self.coords[dim]


class TrainingSet:
    """Labeled examples with a fixed class ordering (the tie-break order).

    Immutable after construction; derived structures (ranks, thresholds,
    split masks) are computed lazily and cached.  Labels are stored as
    indices into ``classes``.
    """

    def __init__(
        self,
        examples: Sequence[Example],
        labels: Sequence[int],
        classes: Sequence[str],
    ):
        if len(classes) < 1:
            raise ValueError("at least one class is required")
        if len(set(classes)) != len(classes):
            raise ValueError("duplicate class names")
        if len(examples) != len(labels):
            raise ValueError("examples and labels must align")
        if not examples:
            raise ValueError("empty training set")
        d = len(examples[0].coords)
        seen: dict[tuple[Decimal, ...], tuple[int, int]] = {}
        for ex, lab in zip(examples, labels):
            if len(ex.coords) != d:
                raise ValueError(f"example {ex.id} has {len(ex.coords)} coords, expected {d}")
            if not 0 <= lab < len(classes):
                raise ValueError(f"label index {lab} out of range for example {ex.id}")
            key = ex.coords
            if key in seen:
                other_id, other_lab = seen[key]
                if other_lab != lab:
                    raise InconsistentDataError(
                        f"examples {other_id} and {ex.id} have identical coordinates "
                        f"but labels {classes[other_lab]!r} and {classes[lab]!r}; "
                        "no error-free tree exists for such data"
                    )
            else:
                seen[key] = (ex.id, lab)
        ids = [ex.id for ex in examples]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate example ids")
        self.examples: tuple[Example, ...] = tuple(examples)
        self.labels: tuple[int, ...] = tuple(int(x) for x in labels)
        self.classes: tuple[str, ...] = tuple(classes)

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[Sequence[Union[Decimal, int, str]]],
        label_names: Sequence[str],
        class_order: Sequence[str] | None = None,
    ) -> "TrainingSet":
        """Build a training set from raw rows and label names.

        ``class_order`` overrides the default lexicographic tie-break order;
        it must cover every class that occurs (extra unused classes keep
        their position, so a model's class list can be reused verbatim).
        """
        examples = [
            Example(i, tuple(as_decimal(v) for v in row)) for i, row in enumerate(rows)
        ]
        present = sorted(set(label_names))
        if class_order is None:
            classes = present
        else:
            if len(set(class_order)) != len(class_order):
                raise ValueError("class order contains duplicates")
            missing = [c for c in present if c not in class_order]
            if missing:
                raise ValueError(f"class order {list(class_order)} is missing {missing}")
            classes = list(class_order)
        index = {name: i for i, name in enumerate(classes)}
        labels = [index[name] for name in label_names]
        return cls(examples, labels, classes)

    @property
    def n(self) -> int:
        return len(self.examples)

    @property
    def d(self) -> int:
        return len(self.examples[0].coords)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @cached_property
    def labels_array(self) -> np.ndarray:
        return np.array(self.labels, dtype=np.int8)

    @cached_property
    def dim_values(self) -> tuple[tuple[Decimal, ...], ...]:
        """Sorted distinct values per dimension."""
        return tuple(
            tuple(sorted({ex.coords[i] for ex in self.examples})) for i in range(self.d)
        )

    @cached_property
    def ranks(self) -> np.ndarray:
        """(n, d) array: rank of each example's value among the distinct
        values of its dimension."""
        out = np.empty((self.n, self.d), dtype=np.int32)
        for i in range(self.d):
            pos = {v: r for r, v in enumerate(self.dim_values[i])}
            for j, ex in enumerate(self.examples):
                out[j, i] = pos[ex.coords[i]]
        return out

    @cached_property
    def thresholds(self) -> "ThresholdSet":
        return ThresholdSet.from_training_set(self)

    @cached_property
    def cuts(self) -> tuple[tuple[int, int], ...]:
        """The finite cut universe as (dim, threshold index) pairs, ordered
        by dimension then threshold index."""
        return tuple(
            (i, k) for i in range(self.d) for k in range(len(self.thresholds.per_dim[i]))
        )

    @cached_property
    def cut_le(self) -> np.ndarray:
        """(num_cuts, n) uint8 matrix: 1 where example is on the <= side."""
        out = np.zeros((len(self.cuts), self.n), dtype=np.uint8)
        for c, (dim, thr) in enumerate(self.cuts):
            out[c] = self.ranks[:, dim] <= thr
        return out

    @cached_property
    def cut_le_bits(self) -> tuple[int, ...]:
        """Per-cut bitmask over example ids of the <= side."""
        masks = []
        for row in self.cut_le:
            m = 0
            for j in np.nonzero(row)[0]:
                m |= 1 << int(j)
            masks.append(m)
        return tuple(masks)

    def cut_index(self, dim: int, thr: int) -> int:
        base = sum(len(self.thresholds.per_dim[i]) for i in range(dim))
        return base + thr

    @cached_property
    def full_mask(self) -> int:
        return (1 << self.n) - 1


@dataclass(frozen=True)
class ThresholdSet:
    """Canonical per-dimension thresholds: midpoints of consecutive distinct
    values, strictly increasing; a constant dimension has no thresholds."""

    per_dim: tuple[tuple[Decimal, ...], ...]

    @classmethod
    def from_training_set(cls, ts: TrainingSet) -> "ThresholdSet":
        dims = []
        for values in ts.dim_values:
            mids = tuple(
                (values[k] + values[k + 1]) / 2 for k in range(len(values) - 1)
            )
            dims.append(mids)
        return cls(tuple(dims))

    def value(self, dim: int, idx: int) -> Decimal:
        return self.per_dim[dim][idx]

    def count(self, dim: int) -> int:
        return len(self.per_dim[dim])

    @property
    def total(self) -> int:
        return sum(len(p) for p in self.per_dim)


@dataclass(frozen=True)
class Leaf:
    """A class-labeled leaf."""

    cls: int


@dataclass(frozen=True)
class Cut:
    """An inner node: dimension, canonical threshold index, ordered children.
    Examples with value <= threshold go to ``le``."""

    dim: int
    thr: int
    le: Union["Cut", Leaf]
    gt: Union["Cut", Leaf]


Node = Union[Cut, Leaf]


@dataclass(frozen=True)
class DecisionTree:
    """An ordered binary tree of cuts with class-labeled leaves."""

    root: Node

    @cached_property
    def size(self) -> int:
        """Number of inner nodes (= number of leaves - 1)."""

        def count(node: Node) -> int:
            if isinstance(node, Leaf):
                return 0
            return 1 + count(node.le) + count(node.gt)

        return count(self.root)

    @cached_property
    def num_leaves(self) -> int:
        return self.size + 1

    def leaves(self) -> list[Leaf]:
        out: list[Leaf] = []

        def walk(node: Node) -> None:
            if isinstance(node, Leaf):
                out.append(node)
            else:
                walk(node.le)
                walk(node.gt)

        walk(self.root)
        return out

    @cached_property
    def encoding(self) -> tuple:
        """Canonical structural encoding; tree identity and ordering key."""

        def enc(node: Node) -> tuple:
            if isinstance(node, Leaf):
                return ("L", node.cls)
            return ("N", node.dim, node.thr, enc(node.le), enc(node.gt))

        return enc(self.root)


@dataclass(frozen=True)
class TreeEnsemble:
    """A non-empty, ordered list of trees voting by plurality.  Duplicates
    are permitted; order never affects classification."""

    trees: tuple[DecisionTree, ...]

    def __post_init__(self):
        if not self.trees:
            raise ValueError("an ensemble needs at least one tree")

    @property
    def total_size(self) -> int:
        return sum(t.size for t in self.trees)

    @property
    def max_size(self) -> int:
        return max(t.size for t in self.trees)

    def __len__(self) -> int:
        return len(self.trees)

    @cached_property
    def encoding(self) -> tuple:
        """Order-independent canonical form: member encodings, sorted."""
        return tuple(sorted(t.encoding for t in self.trees))


@dataclass(frozen=True)
class InstanceStats:
    """Instance parameters that drive the solvers' running-time guarantees."""

    n: int
    d: int
    D: int
    delta: int


# ---------------------------------------------------------------------------
# Operations


def canonical_thresholds(ts: TrainingSet) -> ThresholdSet:
    """The unique midpoint threshold canonicalization for ``ts``."""
    return ts.thresholds


def split(
    examples: Sequence[Example], dim: int, h: Decimal
) -> tuple[tuple[Example, ...], tuple[Example, ...]]:
    """Partition examples into (value <= h, value > h) along ``dim``."""
    left = tuple(e for e in examples if e.coords[dim] <= h)
    right = tuple(e for e in examples if e.coords[dim] > h)
    return left, right


def classify_tree(tree: DecisionTree, example: Example, thresholds: ThresholdSet) -> int:
    """Route an example from the root to its unique leaf; returns the class
    index assigned there."""
    node = tree.root
    while isinstance(node, Cut):
        if example.coords[node.dim] <= thresholds.value(node.dim, node.thr):
            node = node.le
        else:
            node = node.gt
    return node.cls


def classify_ensemble(
    ens: TreeEnsemble,
    example: Example,
    thresholds: ThresholdSet,
    num_classes: int,
) -> int:
    """Plurality vote over the member trees; ties go to the earliest class
    in the fixed ordering."""
    counts = [0] * num_classes
    for tree in ens.trees:
        counts[classify_tree(tree, example, thresholds)] += 1
    return plurality_winner(counts)


def plurality_winner(counts: Sequence[int]) -> int:
    """Index of the maximal count, earliest index winning ties."""
    best = 0
    for i in range(1, len(counts)):
        if counts[i] > counts[best]:
            best = i
    return best


def tree_votes(tree: DecisionTree, ts: TrainingSet) -> np.ndarray:
    """Class assigned to every training example (vectorized routing via
    value ranks); int8 array of length n."""
    votes = np.empty(ts.n, dtype=np.int8)

    def walk(node: Node, sel: np.ndarray) -> None:
        if isinstance(node, Leaf):
            votes[sel] = node.cls
            return
        le_side = ts.ranks[sel, node.dim] <= node.thr
        walk(node.le, sel[le_side])
        walk(node.gt, sel[~le_side])

    walk(tree.root, np.arange(ts.n))
    return votes


def ensemble_assignments(ens: TreeEnsemble, ts: TrainingSet) -> np.ndarray:
    """Plurality outcome of the ensemble on every training example."""
    return assignments_from_votes(
        [tree_votes(t, ts) for t in ens.trees], ts.num_classes
    )


def assignments_from_votes(votes: Sequence[np.ndarray], num_classes: int) -> np.ndarray:
    counts = np.zeros((len(votes[0]), num_classes), dtype=np.int32)
    for v in votes:
        np.add.at(counts, (np.arange(len(v)), v.astype(np.int64)), 1)
    # np.argmax picks the first maximum, i.e. the earliest class in order
    return counts.argmax(axis=1).astype(np.int8)


def dirty_examples(ens: TreeEnsemble, ts: TrainingSet) -> list[Example]:
    """All examples the ensemble labels differently from their class, in
    ascending id order."""
    assigned = ensemble_assignments(ens, ts)
    bad = [ts.examples[j] for j in range(ts.n) if assigned[j] != ts.labels[j]]
    return sorted(bad, key=lambda e: e.id)


def error_count(ens: TreeEnsemble, ts: TrainingSet) -> int:
    assigned = ensemble_assignments(ens, ts)
    return int((assigned != ts.labels_array).sum())


def max_differing_dimensions(ts: TrainingSet, labeled_pairs_only: bool = True) -> int:
    """Maximum number of dimensions in which two examples differ; restricted
    to differently-labeled pairs by default (0 if no such pair exists)."""
    ranks = ts.ranks
    best = 0
    for a in range(ts.n):
        for b in range(a + 1, ts.n):
            if labeled_pairs_only and ts.labels[a] == ts.labels[b]:
                continue
            best = max(best, int((ranks[a] != ranks[b]).sum()))
    return best


def instance_stats(ts: TrainingSet) -> InstanceStats:
    """n, d, max per-dimension domain size D, and the maximum number of
    dimensions delta in which two differently-labeled examples differ."""
    D = max(len(v) for v in ts.dim_values)
    return InstanceStats(n=ts.n, d=ts.d, D=D, delta=max_differing_dimensions(ts))
