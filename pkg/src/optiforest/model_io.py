"""CSV ingestion and the versioned JSON model document format.

Model documents carry canonical threshold *values* as exact decimal strings
(not indices), so a serialized model is usable without the training data:
routing is re-derived from the raw values on parse.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from decimal import Decimal
from typing import Sequence

from .core import (
    Cut,
    DecisionTree,
    Example,
    Leaf,
    Node,
    ThresholdSet,
    TrainingSet,
    TreeEnsemble,
    as_decimal,
)

FORMAT = "optiforest/1"


class ModelFormatError(ValueError):
    """A model document violates the optiforest/1 schema."""


def load_csv(
    path: str,
    label_column: str | None = None,
    class_order: Sequence[str] | None = None,
) -> TrainingSet:
    """Load a training set from an RFC-4180 style CSV with a header row.

    The label column is ``label_column`` if given, else the last column.
    Feature cells are parsed as exact decimals.  Two rows with identical
    coordinates but different labels are rejected, naming both rows.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    if len(set(header)) != len(header):
        raise ValueError(f"{path}: duplicate column names in header")
    if label_column is None:
        label_idx = len(header) - 1
    else:
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise ValueError(
                f"{path}: label column {label_column!r} not in header {header}"
            ) from None
    feature_idx = [i for i in range(len(header)) if i != label_idx]
    if not feature_idx:
        raise ValueError(f"{path}: no feature columns")
    data_rows = rows[1:]
    if not data_rows:
        raise ValueError(f"{path}: no data rows")

    coords_rows: list[tuple[Decimal, ...]] = []
    labels: list[str] = []
    seen: dict[tuple[Decimal, ...], tuple[int, str]] = {}
    for r, row in enumerate(data_rows):
        line = r + 2  # 1-based, counting the header line
        if len(row) != len(header):
            raise ValueError(f"{path}: line {line}: expected {len(header)} cells, got {len(row)}")
        coords = []
        for i in feature_idx:
            cell = row[i].strip()
            if not cell:
                raise ValueError(f"{path}: line {line}, column {header[i]!r}: empty cell")
            try:
                coords.append(as_decimal(cell))
            except ValueError as exc:
                raise ValueError(f"{path}: line {line}, column {header[i]!r}: {exc}") from None
        label = row[label_idx].strip()
        if not label:
            raise ValueError(f"{path}: line {line}: empty label")
        key = tuple(coords)
        if key in seen:
            other_line, other_label = seen[key]
            if other_label != label:
                raise ValueError(
                    f"{path}: lines {other_line} and {line} have identical coordinates "
                    f"but labels {other_label!r} and {label!r}"
                )
        else:
            seen[key] = (line, label)
        coords_rows.append(key)
        labels.append(label)

    return TrainingSet.from_rows(coords_rows, labels, class_order=class_order)


def write_csv(path: str, ts: TrainingSet, feature_names: Sequence[str] | None = None) -> None:
    """Write a training set back out as CSV (label in the last column)."""
    names = list(feature_names or (f"x{i + 1}" for i in range(ts.d)))
    if len(names) != ts.d:
        raise ValueError("feature name count must match dimension count")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["label"])
        for ex, lab in zip(ts.examples, ts.labels):
            writer.writerow([str(v) for v in ex.coords] + [ts.classes[lab]])


# ---------------------------------------------------------------------------
# Model documents


def _node_to_obj(node: Node, thresholds: ThresholdSet, classes: Sequence[str]) -> dict:
    if isinstance(node, Leaf):
        return {"class": classes[node.cls]}
    return {
        "dim": node.dim,
        "threshold": str(thresholds.value(node.dim, node.thr)),
        "le": _node_to_obj(node.le, thresholds, classes),
        "gt": _node_to_obj(node.gt, thresholds, classes),
    }


def model_document(
    trees: Sequence[DecisionTree],
    thresholds: ThresholdSet,
    classes: Sequence[str],
) -> dict:
    """Build the JSON-ready document for an ensemble (a single tree is an
    ensemble of one)."""
    return {
        "format": FORMAT,
        "classes": list(classes),
        "trees": [_node_to_obj(t.root, thresholds, classes) for t in trees],
    }


def dumps_document(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def serialize_model(
    trees: Sequence[DecisionTree],
    thresholds: ThresholdSet,
    classes: Sequence[str],
) -> str:
    return dumps_document(model_document(trees, thresholds, classes))


@dataclass(frozen=True)
class ParsedModel:
    """A model document mapped back onto index-based trees.

    ``thresholds`` holds the distinct threshold values harvested from the
    document, sorted per dimension, so the trees route exactly as written.
    """

    trees: tuple[DecisionTree, ...]
    thresholds: ThresholdSet
    classes: tuple[str, ...]

    @property
    def ensemble(self) -> TreeEnsemble:
        return TreeEnsemble(self.trees)

    def classify(self, example: Example) -> int:
        from .core import classify_ensemble

        return classify_ensemble(self.ensemble, example, self.thresholds, len(self.classes))


def parse_model(text: str) -> ParsedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from None
    return model_from_document(doc)


def model_from_document(doc) -> ParsedModel:
    if not isinstance(doc, dict):
        raise ModelFormatError("document root must be an object")
    if doc.get("format") != FORMAT:
        raise ModelFormatError(f"unsupported format {doc.get('format')!r}, expected {FORMAT!r}")
    classes = doc.get("classes")
    if not isinstance(classes, list) or not classes or len(set(classes)) != len(classes):
        raise ModelFormatError("'classes' must be a non-empty list of distinct names")
    tree_objs = doc.get("trees")
    if not isinstance(tree_objs, list) or not tree_objs:
        raise ModelFormatError("'trees' must be a non-empty array")
    class_index = {name: i for i, name in enumerate(classes)}

    # First pass: harvest threshold values per dimension.
    values: dict[int, list[Decimal]] = {}

    def harvest(obj) -> None:
        if not isinstance(obj, dict):
            raise ModelFormatError("tree nodes must be objects")
        if "class" in obj:
            if obj["class"] not in class_index:
                raise ModelFormatError(f"leaf class {obj['class']!r} not in class list")
            return
        for field in ("dim", "threshold", "le", "gt"):
            if field not in obj:
                raise ModelFormatError(f"inner node missing {field!r}")
        dim = obj["dim"]
        if not isinstance(dim, int) or dim < 0:
            raise ModelFormatError(f"bad dimension {dim!r}")
        if not isinstance(obj["threshold"], str):
            raise ModelFormatError("thresholds must be decimal strings")
        values.setdefault(dim, []).append(as_decimal(obj["threshold"]))
        harvest(obj["le"])
        harvest(obj["gt"])

    for t in tree_objs:
        harvest(t)

    max_dim = max(values, default=-1)
    per_dim: list[tuple[Decimal, ...]] = []
    for dim in range(max_dim + 1):
        distinct: list[Decimal] = []
        for v in sorted(values.get(dim, [])):
            if not distinct or v != distinct[-1]:
                distinct.append(v)
        per_dim.append(tuple(distinct))
    thresholds = ThresholdSet(tuple(per_dim))

    def build(obj) -> Node:
        if "class" in obj:
            return Leaf(class_index[obj["class"]])
        dim = obj["dim"]
        val = as_decimal(obj["threshold"])
        thr = thresholds.per_dim[dim].index(val)
        return Cut(dim=dim, thr=thr, le=build(obj["le"]), gt=build(obj["gt"]))

    trees = tuple(DecisionTree(build(t)) for t in tree_objs)
    return ParsedModel(trees=trees, thresholds=thresholds, classes=tuple(classes))
