"""Acceptance suite.

Each test prints one PASS/FAIL line.  The cross-engine grid (criterion 1)
is computed once in a session fixture and shared with the monotonicity and
restricted/full-consistency criteria, which by design run over the same
instances.
"""

import contextlib
import io
import json
import subprocess
import sys
import time
from dataclasses import dataclass

import numpy as np
import pytest

import optiforest as of
from optiforest import dp as dpmod
from optiforest.cli import run_cli
from optiforest.core import classify_ensemble, classify_tree
from optiforest.kernels import INF
from optiforest.model_io import write_csv
from optiforest.oracle import brute_force_optimum
from optiforest.transforms import ensemble_to_tree, generate_parity_instance
from optiforest.witness import SolveSpec, solve_mtes_witness

from _grid import grid_instances
from conftest import make_ts


@contextlib.contextmanager
def criterion(num: int, name: str, time_limit_s: float):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {num} ({name}): FAIL [{time.perf_counter() - t0:.2f}s]")
        raise
    elapsed = time.perf_counter() - t0
    verdict = "PASS" if elapsed < time_limit_s else "FAIL (over time budget)"
    print(f"ACCEPTANCE {num} ({name}): {verdict} [{elapsed:.2f}s]")
    assert elapsed < time_limit_s


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # trigger the one-off JIT compilation outside any timed window
    ts = make_ts([(0,), (1,), (2,)], ["a", "b", "c"])
    dpmod.solve_mtes_dp(ts, 3)
    dpmod.solve_dts_dp(ts, errors=1)


@dataclass
class GridRun:
    name: str
    ts: object
    curves: dict  # ell -> (np.ndarray over t, exact flag)
    witness: dict  # (ell, t) -> value
    oracle: dict  # (ell, t) -> value
    elapsed: float


@pytest.fixture(scope="session")
def grid_results(_warm_kernels) -> list[GridRun]:
    t0 = time.perf_counter()
    runs = []
    for gi in grid_instances():
        ts = gi.ts
        m = len({e.coords for e in ts.examples})
        curves = {}
        wit = {}
        orc = {}
        for ell in (1, 3):
            curves[ell] = dpmod.mtes_curve(ts, ell)
            bound = (m - 1) if ell == 1 else 2 * (m - 1) + 1
            for t in (0, 1):
                w = solve_mtes_witness(ts, ell, bound, errors=t)
                wit[(ell, t)] = None if w is None else w.value
                o = brute_force_optimum(ts, SolveSpec("total", ell, bound, errors=t))
                orc[(ell, t)] = None if o is None else o.value
        runs.append(
            GridRun(
                name=gi.name,
                ts=ts,
                curves=curves,
                witness=wit,
                oracle=orc,
                elapsed=0.0,
            )
        )
    runs[0].elapsed = time.perf_counter() - t0
    return runs


def test_criterion_1_cross_engine_equivalence(grid_results):
    with criterion(1, "cross-engine equivalence grid", 300.0):
        comparisons = 0
        for run in grid_results:
            for ell in (1, 3):
                curve, exact = run.curves[ell]
                assert exact, run.name
                for t in (0, 1):
                    dv = int(curve[min(t, run.ts.n)])
                    assert dv < INF
                    assert dv == run.witness[(ell, t)] == run.oracle[(ell, t)], (
                        run.name,
                        ell,
                        t,
                        dv,
                        run.witness[(ell, t)],
                        run.oracle[(ell, t)],
                    )
                    comparisons += 1
        assert comparisons >= 500
        assert grid_results[0].elapsed < 300.0
        print(
            f"  grid: {len(grid_results)} datasets, {comparisons} solver instances, "
            f"computed in {grid_results[0].elapsed:.1f}s",
            end=" ",
        )


def test_criterion_2_parity_certificate(tmp_path):
    with criterion(2, "parity certificate", 1.0):
        out_csv = tmp_path / "par33.csv"
        ref = tmp_path / "ref33.json"
        buf_out, buf_err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(buf_out), contextlib.redirect_stderr(buf_err):
            rc = run_cli(
                ["generate", "parity", "--trees", "3", "--size", "3",
                 "--out", str(out_csv), "--ref", str(ref)]
            )
        assert rc == 0
        assert json.loads(buf_err.getvalue())["examples"] == 48
        assert len(out_csv.read_text().splitlines()) == 49
        buf_out2 = io.StringIO()
        with contextlib.redirect_stdout(buf_out2), contextlib.redirect_stderr(io.StringIO()):
            rc = run_cli(["check", str(out_csv), str(ref)])
        assert rc == 0
        assert json.loads(buf_out2.getvalue())["errors"] == 0


def test_criterion_3_conversion_bound():
    with criterion(3, "ensemble-to-tree conversion bound", 30.0):
        from optiforest.core import Cut, DecisionTree, Leaf, TreeEnsemble

        rng = np.random.default_rng(424242)

        def random_tree(ts, size):
            cuts = ts.cuts

            def build(k):
                if k == 0 or not cuts:
                    return Leaf(int(rng.integers(ts.num_classes)))
                dim, thr = cuts[int(rng.integers(len(cuts)))]
                kl = int(rng.integers(k))
                return Cut(dim, thr, build(kl), build(k - 1 - kl))

            return DecisionTree(build(size if cuts else 0))

        for trial in range(100):
            n = int(rng.integers(2, 8))
            d = int(rng.integers(1, 4))
            coords = rng.integers(0, 3, size=(n, d))
            rows = [tuple(int(v) for v in r) for r in coords]
            seen: dict[tuple, str] = {}
            labels = []
            for r in rows:
                seen.setdefault(r, ["b", "r"][int(rng.integers(2))])
                labels.append(seen[r])
            ts = make_ts(rows, labels)
            ell = int(rng.integers(1, 4))
            ens = TreeEnsemble(
                tuple(random_tree(ts, int(rng.integers(3))) for _ in range(ell))
            )
            compiled = ensemble_to_tree(ens, ts.num_classes)
            s_max = ens.max_size
            assert compiled.size <= (s_max + 1) ** ell - 1
            for e in ts.examples:
                assert classify_tree(compiled, e, ts.thresholds) == classify_ensemble(
                    ens, e, ts.thresholds, ts.num_classes
                )


def test_criterion_4_lower_bound_consistency():
    with criterion(4, "parity(3,1) lower-bound consistency", 1.0):
        inst = generate_parity_instance(3, 1)
        ts = inst.dataset
        dp_value = dpmod.solve_dts_dp(ts).value
        oracle_value = brute_force_optimum(ts, SolveSpec("total", 1, 6)).value
        assert dp_value == oracle_value
        # ceil of the exact bound 5/3
        assert dp_value >= 2


def test_criterion_5_ensemble_beats_tree():
    with criterion(5, "ensemble strictly smaller than tree", 10.0):
        inst = generate_parity_instance(3, 1)
        ts = inst.dataset
        mtes = dpmod.solve_mtes_dp(ts, 3)
        assert mtes.value == 3  # oracle-confirmed golden
        assert brute_force_optimum(ts, SolveSpec("total", 3, 4)).value == 3
        dts = dpmod.solve_dts_dp(ts).value
        assert mtes.value < dts


def test_criterion_6_error_budget_monotonicity(grid_results):
    with criterion(6, "error-budget monotonicity", 60.0):
        for run in grid_results:
            n = run.ts.n
            for ell in (1, 3):
                curve, _ = run.curves[ell]
                curve = curve[: n + 1]
                assert (np.diff(curve) <= 0).all(), run.name
                assert curve[n] == 0, run.name


def test_criterion_7_enumeration_completeness(grid_results):
    with criterion(7, "enumeration completeness", 120.0):
        # all instances with nontrivial single-tree optima first, then a
        # spread over the rest (the brute-force solution-set search needs
        # the optimum small, which the planted labelings guarantee)
        eligible = [run for run in grid_results if int(run.curves[1][0][0]) <= 3]
        rich = [run for run in eligible if int(run.curves[1][0][0]) >= 2]
        rest = [run for run in eligible if int(run.curves[1][0][0]) < 2]
        stride = max(1, len(rest) // (50 - len(rich)))
        selected = (rich + rest[::stride])[:50]
        assert len(selected) == 50
        for run in selected:
            ts = run.ts
            m = len({e.coords for e in ts.examples})
            wit = of.enumerate_solutions_witness(
                ts, SolveSpec("total", 1, m - 1, mode="all")
            )
            orc = brute_force_optimum(ts, SolveSpec("total", 1, m - 1, mode="all"))
            assert wit.value == orc.value, run.name
            wset = {e.encoding for e in wit.solutions}
            oset = {e.encoding for e in orc.solutions}
            assert wset == oset, run.name


def test_criterion_8_restricted_full_consistency(grid_results):
    with criterion(8, "restricted/full DP consistency", 60.0):
        checked = 0
        for run in grid_results:
            ts = run.ts
            if ts.num_classes != 2:
                continue
            Qr = dpmod.build_partition_table(ts, restricted=True)
            Qf = dpmod.build_partition_table(ts, restricted=False)
            assert Qr.value(Qr.full_label_key()) == Qf.value(Qf.full_label_key()), run.name
            checked += 1
        assert checked > 0
        print(f"  {checked} binary instances", end=" ")


def test_criterion_9_determinism(tmp_path):
    with criterion(9, "byte-identical fit output", 120.0):
        csv_path = tmp_path / "m3.csv"
        write_csv(str(csv_path), generate_parity_instance(3, 1).dataset)
        commands = [
            ["fit-tree", str(csv_path), "--engine", "dp"],
            ["fit-tree", str(csv_path), "--engine", "witness"],
            ["fit-tree", str(csv_path), "--engine", "witness", "--enumerate"],
            ["fit-ensemble", str(csv_path), "--trees", "3", "--total-size", "3",
             "--engine", "dp"],
            ["fit-ensemble", str(csv_path), "--trees", "3", "--total-size", "3",
             "--engine", "witness"],
        ]
        for argv in commands:
            outs = []
            for _ in range(2):
                proc = subprocess.run(
                    [sys.executable, "-m", "optiforest.cli", *argv],
                    capture_output=True,
                    check=True,
                )
                outs.append(proc.stdout)
            assert outs[0] == outs[1], argv
