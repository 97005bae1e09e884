"""Command-line surface tying the engines together.

Model documents go to stdout; a single machine-readable JSON report object
goes to stderr.  Exit codes: 0 solved (or zero-error check), 1 usage or
data error, 2 infeasible bound (or failed check), 3 resource refusal.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional, Sequence

from . import dp, kernels, oracle, transforms, witness
from .core import (
    InconsistentDataError,
    ResourceLimitError,
    TrainingSet,
    TreeEnsemble,
    instance_stats,
    max_differing_dimensions,
)
from .model_io import (
    ModelFormatError,
    dumps_document,
    load_csv,
    model_document,
    parse_model,
    write_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_REFUSED = 3


class UsageError(Exception):
    pass


class Infeasible(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="optiforest", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--label-column", default=None, help="label column name (default: last)")
        sp.add_argument(
            "--class-order",
            default=None,
            help="comma-separated tie-break order (default: lexicographic)",
        )

    def add_fit(sp):
        add_common(sp)
        sp.add_argument("--errors", type=int, default=0, metavar="T",
                        help="allowed misclassifications (default 0)")
        sp.add_argument("--engine", choices=["witness", "dp", "oracle", "auto"], default="auto")
        sp.add_argument("--enumerate", action="store_true", dest="enumerate_all",
                        help="emit every optimal model (witness/oracle engines)")
        sp.add_argument("--limit", type=int, default=None, metavar="K",
                        help="cap the number of enumerated models")
        sp.add_argument("--threads", type=int, default=0,
                        help="worker threads (0 = all cores); engines currently run serially")
        sp.add_argument("--table-budget", type=int, default=dp.DEFAULT_MAX_ENTRIES,
                        help="maximum DP table entries before refusing")

    sp = sub.add_parser("fit-tree", help="optimal single decision tree")
    sp.add_argument("csv")
    sp.add_argument("--max-size", type=int, default=None, metavar="N")
    add_fit(sp)

    sp = sub.add_parser("fit-ensemble", help="optimal tree ensemble")
    sp.add_argument("csv")
    sp.add_argument("--trees", type=int, required=True, metavar="L")
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--total-size", type=int, default=None, metavar="S")
    group.add_argument("--max-tree-size", type=int, default=None, metavar="s")
    add_fit(sp)

    sp = sub.add_parser("check", help="count model errors on a dataset")
    sp.add_argument("csv")
    sp.add_argument("model")
    sp.add_argument("--label-column", default=None)

    sp = sub.add_parser("convert", help="compile an ensemble model into one tree")
    sp.add_argument("model")
    sp.add_argument("--simplify", action="store_true",
                    help="merge same-class sibling leaves afterwards")

    sp = sub.add_parser("generate", help="write a generated instance")
    sp.add_argument("kind", choices=["parity"])
    sp.add_argument("--trees", type=int, required=True)
    sp.add_argument("--size", type=int, required=True)
    sp.add_argument("--out", required=True, help="CSV output path")
    sp.add_argument("--ref", required=True, help="reference ensemble model output path")

    sp = sub.add_parser("stats", help="instance statistics and table size predictions")
    sp.add_argument("csv")
    add_common(sp)

    return p


def _report(obj: dict) -> None:
    print(json.dumps(obj), file=sys.stderr)


def _load(args) -> TrainingSet:
    order = args.class_order.split(",") if getattr(args, "class_order", None) else None
    try:
        return load_csv(args.csv, label_column=args.label_column, class_order=order)
    except InconsistentDataError as exc:
        raise UsageError(str(exc)) from None


def _distinct_points(ts: TrainingSet) -> int:
    return len({ex.coords for ex in ts.examples})


def _emit_models(
    solutions: Sequence[TreeEnsemble], ts: TrainingSet, enumerate_all: bool, limit: Optional[int]
) -> bool:
    """Write the model document(s) to stdout; returns whether truncated."""
    docs = [model_document(ens.trees, ts.thresholds, ts.classes) for ens in solutions]
    truncated = False
    if enumerate_all:
        if limit is not None and len(docs) > limit:
            docs = docs[:limit]
            truncated = True
        sys.stdout.write(json.dumps(docs, indent=2) + "\n")
    else:
        sys.stdout.write(dumps_document(docs[0]))
    return truncated


def _pick_engine(args, ts: TrainingSet, objective: str, trees: int) -> str:
    if args.engine != "auto":
        return args.engine
    if objective == "permax" or args.enumerate_all:
        return "witness"
    if trees == 1:
        predicted = dp.predicted_partition_entries(ts, restricted=args.errors == 0)
    else:
        predicted = dp.predicted_ensemble_entries(ts, trees)
    return "dp" if predicted <= args.table_budget else "witness"


def _run_fit(args, ts: TrainingSet, objective: str, trees: int, bound: Optional[int]) -> int:
    if args.errors < 0:
        raise UsageError("--errors must be >= 0")
    if trees < 1:
        raise UsageError("--trees must be >= 1")
    engine = _pick_engine(args, ts, objective, trees)
    mode = "all" if args.enumerate_all else "first"
    if args.enumerate_all and engine == "dp":
        raise UsageError("--enumerate needs the witness or oracle engine")
    # one tree per distinct point region always suffices, so the optimum
    # bound sweep is finite even without a user bound
    search_bound = bound if bound is not None else _distinct_points(ts) - 1

    t0 = time.perf_counter()
    exact = True
    note = ""
    nodes = 0
    entries = 0
    value: Optional[int] = None
    solutions: Sequence[TreeEnsemble] = ()

    if engine == "dp":
        if objective != "total":
            raise UsageError("the dp engine solves total-size objectives only")
        res = dp.solve_mtes_dp(ts, trees, args.errors, max_entries=args.table_budget)
        exact, note, entries = res.exact, res.note, res.entries
        value = res.value
        if bound is not None and value > bound:
            raise Infeasible(
                f"optimal total size {value} exceeds the bound {bound}"
                + ("" if exact else " (value is an upper bound; see note)")
            )
        solutions = (TreeEnsemble(res.models),)
    elif engine == "witness":
        if objective == "total":
            res = witness.solve_mtes_witness(ts, trees, search_bound, args.errors, mode)
        else:
            res = witness.solve_mmax_witness(ts, trees, search_bound, args.errors, mode)
        if res is None:
            raise Infeasible(f"no solution within bound {search_bound}")
        value, solutions, nodes = res.value, res.solutions, res.nodes
    elif engine == "oracle":
        spec = witness.SolveSpec(objective, trees, search_bound, args.errors, mode)
        res = oracle.brute_force_optimum(ts, spec)
        if res is None:
            raise Infeasible(f"no solution within bound {search_bound}")
        value, solutions = res.value, res.solutions
    else:  # pragma: no cover
        raise UsageError(f"unknown engine {engine}")

    truncated = _emit_models(solutions, ts, args.enumerate_all, args.limit)
    _report(
        {
            "command": args.command,
            "engine": engine,
            "objective": objective,
            "value": value,
            "trees": trees,
            "errors_allowed": args.errors,
            "exact": exact,
            "note": note,
            "solutions": len(solutions),
            "truncated": truncated,
            "search_nodes": nodes,
            "table_entries": entries,
            "backend": kernels.backend_name(),
            "threads": args.threads,
            "wall_time_s": round(time.perf_counter() - t0, 6),
        }
    )
    return EXIT_OK


def _cmd_fit_tree(args) -> int:
    ts = _load(args)
    return _run_fit(args, ts, "total", 1, args.max_size)


def _cmd_fit_ensemble(args) -> int:
    ts = _load(args)
    if args.total_size is not None:
        return _run_fit(args, ts, "total", args.trees, args.total_size)
    return _run_fit(args, ts, "permax", args.trees, args.max_tree_size)


def _cmd_check(args) -> int:
    t0 = time.perf_counter()
    with open(args.model) as fh:
        model = parse_model(fh.read())
    order = list(model.classes)
    try:
        ts = load_csv(args.csv, label_column=args.label_column, class_order=order)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bad = [ex.id for ex in ts.examples if model.classify(ex) != ts.labels[ex.id]]
    sys.stdout.write(json.dumps({"errors": len(bad), "misclassified": bad}, indent=2) + "\n")
    _report(
        {
            "command": "check",
            "examples": ts.n,
            "errors": len(bad),
            "wall_time_s": round(time.perf_counter() - t0, 6),
        }
    )
    return EXIT_OK if not bad else EXIT_INFEASIBLE


def _cmd_convert(args) -> int:
    t0 = time.perf_counter()
    with open(args.model) as fh:
        model = parse_model(fh.read())
    tree = transforms.ensemble_to_tree(
        model.ensemble, len(model.classes), simplify=args.simplify
    )
    sys.stdout.write(
        dumps_document(model_document([tree], model.thresholds, model.classes))
    )
    s_max = model.ensemble.max_size
    ell = len(model.trees)
    _report(
        {
            "command": "convert",
            "input_trees": ell,
            "max_member_size": s_max,
            "compiled_size": tree.size,
            "size_bound": (s_max + 1) ** ell - 1,
            "simplify": args.simplify,
            "wall_time_s": round(time.perf_counter() - t0, 6),
        }
    )
    return EXIT_OK


def _cmd_generate(args) -> int:
    t0 = time.perf_counter()
    try:
        inst = transforms.generate_parity_instance(args.trees, args.size)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ts = inst.dataset
    write_csv(args.out, ts)
    with open(args.ref, "w") as fh:
        fh.write(
            dumps_document(
                model_document(inst.reference_ensemble.trees, ts.thresholds, ts.classes)
            )
        )
    _report(
        {
            "command": "generate",
            "kind": "parity",
            "trees": args.trees,
            "size": args.size,
            "examples": ts.n,
            "single_tree_lower_bound": str(inst.lower_bound),
            "out": args.out,
            "ref": args.ref,
            "wall_time_s": round(time.perf_counter() - t0, 6),
        }
    )
    return EXIT_OK


def _cmd_stats(args) -> int:
    ts = _load(args)
    st = instance_stats(ts)
    obj = {
        "n": st.n,
        "d": st.d,
        "D": st.D,
        "delta": st.delta,
        "delta_all_pairs": max_differing_dimensions(ts, labeled_pairs_only=False),
        "classes": list(ts.classes),
        "thresholds_per_dimension": [ts.thresholds.count(i) for i in range(ts.d)],
        "distinct_points": _distinct_points(ts),
        "predicted_table_entries": {
            "tree_restricted": dp.predicted_partition_entries(ts, restricted=True),
            "tree_full": dp.predicted_partition_entries(ts, restricted=False),
            "ensemble_3_trees": dp.predicted_ensemble_entries(ts, 3),
            "ensemble_5_trees": dp.predicted_ensemble_entries(ts, 5),
        },
    }
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")
    return EXIT_OK


_COMMANDS = {
    "fit-tree": _cmd_fit_tree,
    "fit-ensemble": _cmd_fit_ensemble,
    "check": _cmd_check,
    "convert": _cmd_convert,
    "generate": _cmd_generate,
    "stats": _cmd_stats,
}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelFormatError, InconsistentDataError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ResourceLimitError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
