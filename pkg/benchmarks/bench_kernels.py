#!/usr/bin/env python3
"""Benchmark the DP fill kernels: numba backend vs pure-numpy fallback.

Runs each workload in a subprocess per backend (the backend is chosen at
import time via OPTIFOREST_BACKEND), reports wall times and the speedup,
and verifies both backends produced identical tables.

Usage:
    python benchmarks/bench_kernels.py [--full]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOADS = ["q_restricted", "q_full", "r_fill", "vote_expand", "solve_mtes"]


def _make_dataset(n: int, d: int, D: int, sigma: int):
    import numpy as np

    from optiforest.core import TrainingSet

    rng = np.random.default_rng(1234)
    names = ["a", "b", "c"][:sigma]
    coords = rng.integers(1, D + 1, size=(n, d))
    rows = [tuple(int(v) for v in row) for row in coords]
    assigned: dict[tuple, str] = {}
    labels = []
    for r in rows:
        assigned.setdefault(r, names[int(rng.integers(sigma))])
        labels.append(assigned[r])
    return TrainingSet.from_rows(rows, labels, class_order=names)


def run_workloads(full: bool) -> dict:
    from optiforest import dp, kernels

    sizes = {
        "q_restricted": (16, 3, 3, 2),
        "q_full": (13 if full else 12, 3, 3, 2),
        "r_fill": (9, 3, 3, 2),
        "vote_expand": (8 if full else 7, 2, 3, 3),
        "solve_mtes": (8, 2, 2, 2),
    }
    out = {"backend": kernels.backend_name()}

    n, d, D, sigma = sizes["q_restricted"]
    ts = _make_dataset(n, d, D, sigma)
    t0 = time.perf_counter()
    Q = dp.build_partition_table(ts, restricted=True, max_entries=1 << 28)
    out["q_restricted"] = {
        "time": time.perf_counter() - t0,
        "entries": Q.entries,
        "checksum": int(Q.values.sum() % (1 << 61)),
    }

    n, d, D, sigma = sizes["q_full"]
    ts = _make_dataset(n, d, D, sigma)
    t0 = time.perf_counter()
    Q = dp.build_partition_table(ts, restricted=False, max_entries=1 << 28)
    out["q_full"] = {
        "time": time.perf_counter() - t0,
        "entries": Q.entries,
        "checksum": int(Q.values.sum() % (1 << 61)),
    }

    n, d, D, sigma = sizes["r_fill"]
    ts = _make_dataset(n, d, D, sigma)
    t0 = time.perf_counter()
    table = dp.build_ensemble_table(ts, 3, max_entries=1 << 28)
    out["r_fill"] = {
        "time": time.perf_counter() - t0,
        "entries": table.entries,
        "checksum": int(table.R.sum() % (1 << 61)),
    }

    n, d, D, sigma = sizes["vote_expand"]
    ts = _make_dataset(n, d, D, sigma)
    t0 = time.perf_counter()
    exact = dp.MulticlassExact(ts, 3, max_entries=1 << 28)
    out["vote_expand"] = {
        "time": time.perf_counter() - t0,
        "entries": int(exact.T_last.shape[0]),
        "checksum": int(exact.T_last.sum() % (1 << 61)) + int(exact.answer_curve()[0]),
    }

    n, d, D, sigma = sizes["solve_mtes"]
    ts = _make_dataset(n, d, D, sigma)
    t0 = time.perf_counter()
    res = dp.solve_mtes_dp(ts, 3)
    out["solve_mtes"] = {
        "time": time.perf_counter() - t0,
        "entries": res.entries,
        "checksum": res.value,
    }
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--full", action="store_true", help="larger workloads")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        # warm the JIT so compile time is not measured
        from optiforest import dp

        dp.solve_mtes_dp(_make_dataset(3, 1, 3, 3), 3)
        print(json.dumps(run_workloads(args.full)))
        return

    results = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, OPTIFOREST_BACKEND=backend)
        cmd = [sys.executable, __file__, "--worker"] + (["--full"] if args.full else [])
        proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            sys.exit(proc.returncode)
        results[backend] = json.loads(proc.stdout.strip().splitlines()[-1])

    print(f"{'workload':<14} {'entries':>10} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for wl in WORKLOADS:
        nb, np_ = results["numba"][wl], results["numpy"][wl]
        if nb["checksum"] != np_["checksum"]:
            raise SystemExit(f"backends disagree on {wl}: {nb} vs {np_}")
        speed = np_["time"] / nb["time"] if nb["time"] > 0 else float("inf")
        print(
            f"{wl:<14} {nb['entries']:>10} {nb['time']:>9.3f}s {np_['time']:>9.3f}s "
            f"{speed:>7.1f}x"
        )
    print("tables identical across backends")


if __name__ == "__main__":
    main()
