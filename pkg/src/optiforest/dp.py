"""Subset dynamic programming engines.

The partition table Q assigns to every disjoint class-indexed family of
example subsets the minimum size of a tree realizing exactly that labeling
on its support; the restricted variant only keys assignments that agree
with the true labels, which suffices when no misclassification is allowed.
The ensemble table R tracks, per example, how often it has been classified
correctly (counts truncated at the point where one more correct vote cannot
matter) while trees are added one at a time.

Counting correct votes decides plurality outcomes exactly for two classes.
For three or more classes it only bounds them (a tie among split opponents
can hand an example to the earliest class with fewer correct votes), so the
counting table is exact for binary instances and an upper bound otherwise;
for small multiclass instances a separate exact path tracks per-example
vote multisets instead and is used automatically when it fits in memory.

Tables hold values only; certificates are rebuilt afterwards by walking the
recurrences backward with lexicographic tie-breaks, so both kernel backends
reconstruct identical models.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .core import (
    Cut,
    DecisionTree,
    Leaf,
    Node,
    ResourceLimitError,
    TrainingSet,
    TreeEnsemble,
    error_count,
    plurality_winner,
    tree_votes,
)
from .kernels import INF

DEFAULT_MAX_ENTRIES = 1 << 26


def _check_budget(what: str, entries: int, max_entries: int) -> None:
    if entries > max_entries:
        raise ResourceLimitError(
            f"{what} needs {entries} table entries (budget {max_entries}); "
            "raise the budget to force the build",
            estimate=entries,
            budget=max_entries,
        )


# ---------------------------------------------------------------------------
# Partition table


@dataclass
class PartitionTable:
    """Q table over class assignments, keyed by base-(sigma+1) codes with
    digit 0 = unused and digit i = class i-1 (restricted tables use base 2,
    digit 1 = the example's own label)."""

    ts: TrainingSet
    restricted: bool
    base: int
    values: np.ndarray  # (base**n,) int64, INF sentinel
    digit_class: np.ndarray  # (n, base) int8

    @property
    def entries(self) -> int:
        return len(self.values)

    @property
    def powers(self) -> np.ndarray:
        return kernels.powers_of(self.base, self.ts.n)

    def full_label_key(self) -> int:
        """The key assigning every example its true label."""
        if self.restricted:
            return self.entries - 1  # all digits 1
        lab = self.ts.labels_array.astype(np.int64) + 1
        return int(lab @ self.powers)

    def value(self, key: int) -> int:
        return int(self.values[key])

    def assignment_of(self, key: int) -> np.ndarray:
        """Per-example assigned class (-1 where unused) for a key."""
        digits = (key // self.powers) % self.base
        out = np.full(self.ts.n, -1, dtype=np.int8)
        for j in range(self.ts.n):
            if digits[j] != 0:
                out[j] = self.digit_class[j, digits[j]]
        return out

    def reconstruct(self, key: int) -> DecisionTree:
        """One tree of minimum size realizing the key's assignment on its
        support; back-pointers are re-derived from the values, breaking
        ties toward the lexicographically smallest (dim, thrIdx)."""
        if self.values[key] >= INF:
            raise ValueError(f"table entry {key} is infeasible; no certificate exists")
        ts = self.ts
        powers = self.powers

        def rec(k: int) -> Node:
            digits = (k // powers) % self.base
            classes = {
                int(self.digit_class[j, digits[j]])
                for j in range(ts.n)
                if digits[j] != 0
            }
            v = int(self.values[k])
            if v == 0:
                return Leaf(min(classes) if classes else 0)
            for c, (dim, thr) in enumerate(ts.cuts):
                le_row = ts.cut_le[c]
                le_key = int((digits * le_row) @ powers)
                gt_key = k - le_key
                if le_key == 0 or gt_key == 0:
                    continue
                a, b = int(self.values[le_key]), int(self.values[gt_key])
                if a < INF and b < INF and a + b + 1 == v:
                    return Cut(dim, thr, rec(le_key), rec(gt_key))
            raise AssertionError(f"no split reproduces table value at key {k}")

        return DecisionTree(rec(key))


def predicted_partition_entries(ts: TrainingSet, restricted: bool) -> int:
    base = 2 if restricted else ts.num_classes + 1
    return base**ts.n


def build_partition_table(
    ts: TrainingSet,
    restricted: bool = False,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> PartitionTable:
    """Fill the whole table bottom-up (by increasing support): each entry is
    the best cut with two nonempty sides, or 0 for single-class support."""
    n = ts.n
    base = 2 if restricted else ts.num_classes + 1
    entries = base**n
    kind = "restricted" if restricted else "full"
    _check_budget(f"{kind} partition table", entries, max_entries)

    digit_class = np.zeros((n, base), dtype=np.int8)
    if restricted:
        for j in range(n):
            digit_class[j, 1] = ts.labels[j]
    else:
        for dg in range(1, base):
            digit_class[:, dg] = dg - 1

    values = kernels.q_fill(base, n, ts.cut_le, digit_class)
    return PartitionTable(
        ts=ts, restricted=restricted, base=base, values=values, digit_class=digit_class
    )


def exact_tree_sizes(Q: PartitionTable, ts: TrainingSet) -> np.ndarray:
    """For binary classes: minimum size of a tree classifying exactly the
    subset E' correctly (everything else incorrectly), for every E' as a
    bitmask; derived from the full table by flipping labels off E'."""
    if Q.restricted or ts.num_classes != 2:
        raise ValueError("exact_tree_sizes needs a full table over two classes")
    n = ts.n
    bits = ((np.arange(1 << n)[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int64)
    lab = ts.labels_array.astype(np.int64)[None, :]
    assigned = np.where(bits == 1, lab, 1 - lab)
    keys = (assigned + 1) @ Q.powers
    return Q.values[keys]


def correct_set_sizes(Q: PartitionTable, ts: TrainingSet) -> np.ndarray:
    """Generalization of :func:`exact_tree_sizes` to any class count:
    minimum over all full-support assignments agreeing with the labels
    exactly on E', for every bitmask E'."""
    if Q.restricted:
        raise ValueError("needs the full table")
    if ts.num_classes == 2:
        return exact_tree_sizes(Q, ts)
    n, sigma = ts.n, ts.num_classes
    pat = kernels.digit_matrix(sigma**n, sigma, n).astype(np.int64)
    keys = (pat + 1) @ Q.powers
    vals = Q.values[keys]
    agree = pat == ts.labels_array.astype(np.int64)[None, :]
    masks = agree.astype(np.int64) @ (1 << np.arange(n, dtype=np.int64))
    out = np.full(1 << n, INF, dtype=np.int64)
    np.minimum.at(out, masks, vals)
    return out


# ---------------------------------------------------------------------------
# Single-tree solver


@dataclass(frozen=True)
class DPResult:
    value: int
    models: tuple[DecisionTree, ...]
    exact: bool = True
    note: str = ""
    entries: int = 0


def solve_dts_dp(
    ts: TrainingSet, errors: int = 0, max_entries: int = DEFAULT_MAX_ENTRIES
) -> DPResult:
    """Minimum-size single tree with at most ``errors`` misclassifications,
    plus a certifying tree (re-verified).  Error budget 0 uses the
    restricted table; otherwise the full table is scanned over all
    full-support assignments within the budget."""
    if errors == 0:
        Q = build_partition_table(ts, restricted=True, max_entries=max_entries)
        key = Q.full_label_key()
        value = Q.value(key)
        assert value < INF  # conflicting duplicates are rejected at load time
        tree = Q.reconstruct(key)
    else:
        Q = build_partition_table(ts, restricted=False, max_entries=max_entries)
        value, key = _best_full_support_key(Q, ts, errors)
        tree = Q.reconstruct(key)
    got = int((tree_votes(tree, ts) != ts.labels_array).sum())
    assert got <= errors and tree.size == value
    return DPResult(value=value, models=(tree,), entries=Q.entries)


def _full_support_scan(Q: PartitionTable, ts: TrainingSet):
    """Values and disagreement counts of every full-support assignment,
    in ascending assignment-code order."""
    n, sigma = ts.n, ts.num_classes
    pat = kernels.digit_matrix(sigma**n, sigma, n).astype(np.int64)
    keys = (pat + 1) @ Q.powers
    vals = Q.values[keys]
    disagree = (pat != ts.labels_array.astype(np.int64)[None, :]).sum(axis=1)
    return keys, vals, disagree


def _best_full_support_key(Q: PartitionTable, ts: TrainingSet, errors: int):
    keys, vals, disagree = _full_support_scan(Q, ts)
    masked = np.where(disagree <= errors, vals, INF)
    idx = int(masked.argmin())
    assert masked[idx] < INF
    return int(masked[idx]), int(keys[idx])


def dts_curve(ts: TrainingSet, max_entries: int = DEFAULT_MAX_ENTRIES) -> np.ndarray:
    """Optimal single-tree size for every error budget t = 0..n."""
    Q = build_partition_table(ts, restricted=False, max_entries=max_entries)
    _, vals, disagree = _full_support_scan(Q, ts)
    out = np.full(ts.n + 1, INF, dtype=np.int64)
    np.minimum.at(out, disagree, vals)
    return np.minimum.accumulate(out)


# ---------------------------------------------------------------------------
# Ensemble solver: counting table (exact for two classes)


@dataclass
class EnsembleTable:
    """R table over truncated correct-vote count vectors."""

    ts: TrainingSet
    trees: int
    cap: int
    R: np.ndarray  # (trees+1, (cap+1)**n) int64
    subset_sizes: np.ndarray  # (2**n,) minimum tree size per exact correct-set
    Qfull: PartitionTable

    @property
    def entries(self) -> int:
        return self.R.size

    @property
    def demands(self) -> np.ndarray:
        """Correct votes per example that guarantee a correct plurality
        outcome: ceil(ell/2) when its class wins ties (first in the order),
        floor(ell/2)+1 otherwise."""
        ell = self.trees
        favored = (ell + 1) // 2
        other = ell // 2 + 1
        lab = self.ts.labels_array
        return np.where(lab == 0, favored, other).astype(np.int64)

    def answer_curve(self) -> np.ndarray:
        """Minimum total size for every error budget t = 0..n, reading the
        final level against the per-example demands."""
        n = self.ts.n
        digits = kernels.digit_matrix(len(self.R[0]), self.cap + 1, n).astype(np.int64)
        unsat = (digits < self.demands[None, :]).sum(axis=1)
        out = np.full(n + 1, INF, dtype=np.int64)
        np.minimum.at(out, unsat, self.R[self.trees])
        return np.minimum.accumulate(out)

    def final_state_for(self, errors: int) -> tuple[int, int]:
        """(value, state) of the best final entry within the error budget;
        ties break toward the smallest state code."""
        n = self.ts.n
        digits = kernels.digit_matrix(len(self.R[0]), self.cap + 1, n).astype(np.int64)
        unsat = (digits < self.demands[None, :]).sum(axis=1)
        masked = np.where(unsat <= errors, self.R[self.trees], INF)
        state = int(masked.argmin())
        return int(masked[state]), state

    def reconstruct(self, state: int) -> list[DecisionTree]:
        """Walk the relaxation backward from a final state; at each level
        the lexicographically smallest (correct-set, predecessor) pair that
        reproduces the value is taken, so certificates are deterministic
        and backend-independent."""
        if self.R[self.trees, state] >= INF:
            raise ValueError("infeasible entry; no certificate exists")
        n = self.ts.n
        capp1 = self.cap + 1
        powers = kernels.powers_of(capp1, n)
        trees: list[DecisionTree] = []
        s = state
        for j in range(self.trees, 0, -1):
            target = int(self.R[j, s])
            found = None
            for subset in range(1 << n):
                q = int(self.subset_sizes[subset])
                if q >= INF or q > target:
                    continue
                pred = self._predecessor(s, subset, powers, target - q, j - 1)
                if pred is not None:
                    found = (subset, pred)
                    break
            assert found is not None, "table value has no predecessor"
            subset, s = found
            trees.append(self._tree_for_subset(subset))
        trees.reverse()
        return trees

    def _predecessor(self, state, subset, powers, want, level) -> Optional[int]:
        digits = [(state // int(powers[i])) % (self.cap + 1) for i in range(self.ts.n)]
        fixed = 0
        ambiguous = []
        for i in range(self.ts.n):
            dg = digits[i]
            if not (subset >> i) & 1:
                fixed += dg * int(powers[i])
            elif dg == 0:
                return None  # adding a vote cannot leave a zero count
            elif dg < self.cap:
                fixed += (dg - 1) * int(powers[i])
            else:
                ambiguous.append(i)  # was cap-1 or already capped
        for combo in range(1 << len(ambiguous)):
            pred = fixed
            for b, i in enumerate(ambiguous):
                dg = self.cap if (combo >> b) & 1 else self.cap - 1
                pred += dg * int(powers[i])
            if self.R[level, pred] == want:
                return pred
        return None

    def _tree_for_subset(self, subset: int) -> DecisionTree:
        """A minimum tree correct exactly on the subset."""
        ts = self.ts
        if ts.num_classes == 2:
            lab = ts.labels_array.astype(np.int64)
            bits = np.array([(subset >> i) & 1 for i in range(ts.n)], dtype=np.int64)
            assigned = np.where(bits == 1, lab, 1 - lab)
            key = int((assigned + 1) @ self.Qfull.powers)
            return self.Qfull.reconstruct(key)
        # any class count: first full-support assignment matching the subset
        keys, vals, _ = _full_support_scan(self.Qfull, ts)
        pat = kernels.digit_matrix(
            ts.num_classes**ts.n, ts.num_classes, ts.n
        ).astype(np.int64)
        agree = pat == ts.labels_array.astype(np.int64)[None, :]
        masks = agree.astype(np.int64) @ (1 << np.arange(ts.n, dtype=np.int64))
        want = int(self.subset_sizes[subset])
        match = np.nonzero((masks == subset) & (vals == want))[0]
        assert len(match) > 0
        return self.Qfull.reconstruct(int(keys[match[0]]))


def predicted_ensemble_entries(ts: TrainingSet, trees: int) -> int:
    cap = trees // 2 + 1
    return (trees + 1) * (cap + 1) ** ts.n + predicted_partition_entries(ts, False)


def build_ensemble_table(
    ts: TrainingSet, trees: int, max_entries: int = DEFAULT_MAX_ENTRIES
) -> EnsembleTable:
    """Forward-fill R: every finite entry at level j-1 is relaxed with
    every achievable exact correct-set, truncated-adding its indicator."""
    if trees < 2:
        raise ValueError("the ensemble table needs at least two trees")
    cap = trees // 2 + 1
    entries = (trees + 1) * (cap + 1) ** ts.n
    _check_budget("ensemble count table", entries, max_entries)
    Qfull = build_partition_table(ts, restricted=False, max_entries=max_entries)
    subset_sizes = correct_set_sizes(Qfull, ts)
    R = kernels.r_fill(cap, ts.n, trees, subset_sizes)
    return EnsembleTable(
        ts=ts, trees=trees, cap=cap, R=R, subset_sizes=subset_sizes, Qfull=Qfull
    )


# ---------------------------------------------------------------------------
# Ensemble solver: exact plurality for three or more classes


def _multiset_states(sigma: int, votes: int) -> list[tuple[int, ...]]:
    return [
        c
        for c in itertools.product(range(votes + 1), repeat=sigma)
        if sum(c) == votes
    ]


class MulticlassExact:
    """Per-example vote-multiset DP, exact under plurality with ordered
    tie-break for any class count.  Feasible only for small n and tree
    counts; callers fall back to the counting table beyond the budget."""

    def __init__(self, ts: TrainingSet, trees: int, max_entries: int = DEFAULT_MAX_ENTRIES):
        self.ts = ts
        self.trees = trees
        n, sigma = ts.n, ts.num_classes
        self.states = [_multiset_states(sigma, j) for j in range(trees)]
        # contraction intermediates carry an (n+2)-long error axis
        worst = max(len(s) ** n for s in self.states) * (n + 2) + sigma**n
        _check_budget("multiclass vote table", worst, max_entries)
        self.Qfull = build_partition_table(ts, restricted=False, max_entries=max_entries)
        self.pat = kernels.digit_matrix(sigma**n, sigma, n)
        self.pat_keys = (self.pat.astype(np.int64) + 1) @ self.Qfull.powers
        self.Qpat = self.Qfull.values[self.pat_keys]

        self.index = [
            {vec: i for i, vec in enumerate(level)} for level in self.states
        ]
        self.addvote = []
        for j in range(trees - 1):
            lut = np.empty((len(self.states[j]), sigma), dtype=np.int64)
            for i, vec in enumerate(self.states[j]):
                for v in range(sigma):
                    nxt = list(vec)
                    nxt[v] += 1
                    lut[i, v] = self.index[j + 1][tuple(nxt)]
            self.addvote.append(lut)

        T = np.zeros(1, dtype=np.int64)
        self.tables = [T]
        for j in range(trees - 1):
            T = kernels.vote_expand(
                T,
                len(self.states[j]),
                len(self.states[j + 1]),
                self.addvote[j],
                self.pat,
                self.Qpat,
            )
            self.tables.append(T)
        self.T_last = T  # level trees-1
        self._contract()

    @property
    def entries(self) -> int:
        return len(self.T_last) + len(self.Qpat)

    def _winner_ok(self, vec: Sequence[int], last_vote: int, label: int) -> bool:
        counts = list(vec)
        counts[last_vote] += 1
        return plurality_winner(counts) == label

    def _contract(self) -> None:
        """Min-plus contraction of the state tensor against the last tree's
        per-example votes, tracking the number of misclassified examples,
        yielding the optimum for every error budget at once."""
        ts = self.ts
        n, sigma = ts.n, ts.num_classes
        M = len(self.states[self.trees - 1])
        vecs = self.states[self.trees - 1]

        # err_inc[e][v, s]: is example e wrong when its multiset is s and
        # the last tree votes v?
        err_inc = np.empty((n, sigma, M), dtype=bool)
        for e in range(n):
            for v in range(sigma):
                for s, vec in enumerate(vecs):
                    err_inc[e, v, s] = not self._winner_ok(vec, v, ts.labels[e])

        T = self.T_last.reshape((M,) * n)[..., None].astype(np.int64)
        # axis k of T is example n-1-k; contract left to right
        for k in range(n):
            e = n - 1 - k
            err_len = T.shape[-1]
            pieces = []
            for v in range(sigma):
                out = np.full(T.shape[:k] + T.shape[k + 1 : -1] + (err_len + 1,), INF, dtype=np.int64)
                for inc in (0, 1):
                    sel = np.nonzero(err_inc[e, v] == bool(inc))[0]
                    if len(sel) == 0:
                        continue
                    reduced = np.take(T, sel, axis=k).min(axis=k)
                    dst = out[..., inc : inc + err_len]
                    np.minimum(dst, reduced, out=dst)
                pieces.append(out)
            T = np.stack(pieces, axis=k)
        # T axes: (sigma,)*n (example n-1 first) + error count; flatten to
        # pattern codes (example 0 least significant), matching self.pat.
        P = sigma**n
        flat = T.reshape(P, n + 1)
        flat = flat + np.where(self.Qpat >= INF, INF, self.Qpat)[:, None]
        self._per_error = np.minimum.accumulate(flat.min(axis=0))

    def answer_curve(self) -> np.ndarray:
        return np.minimum(self._per_error, INF)[: self.ts.n + 1]

    def reconstruct(self, errors: int) -> list[DecisionTree]:
        """Find, deterministically, patterns (p_1..p_ell) achieving the
        optimum within the error budget, then realize each via the
        partition table."""
        value = int(self.answer_curve()[min(errors, self.ts.n)])
        assert value < INF
        ts = self.ts
        n, sigma = ts.n, ts.num_classes
        vecs = self.states[self.trees - 1]
        powers = kernels.powers_of(len(vecs), n)

        labels = ts.labels_array
        for pidx in range(len(self.Qpat)):
            q = int(self.Qpat[pidx])
            if q >= INF or q > value:
                continue
            cands = np.nonzero(self.T_last == value - q)[0]
            for s in cands:
                digits = [(int(s) // int(powers[i])) % len(vecs) for i in range(n)]
                errs = sum(
                    1
                    for e in range(n)
                    if not self._winner_ok(vecs[digits[e]], int(self.pat[pidx, e]), labels[e])
                )
                if errs <= errors:
                    patterns = self._unwind(int(s)) + [pidx]
                    return [
                        self.Qfull.reconstruct(int(self.pat_keys[p])) for p in patterns
                    ]
        raise AssertionError("no certificate matches the computed optimum")

    def _unwind(self, state: int) -> list[int]:
        """Decompose a level-(ell-1) state into ell-1 pattern indices."""
        n = self.ts.n
        out: list[int] = []
        tables = self.tables
        s = state
        for j in range(self.trees - 1, 0, -1):
            powers = kernels.powers_of(len(self.states[j]), n)
            prev_powers = kernels.powers_of(len(self.states[j - 1]), n)
            target = int(tables[j][s])
            found = None
            for pidx in range(len(self.Qpat)):
                q = int(self.Qpat[pidx])
                if q >= INF or q > target:
                    continue
                pred = 0
                ok = True
                for e in range(n):
                    idx = (s // int(powers[e])) % len(self.states[j])
                    vec = list(self.states[j][idx])
                    v = int(self.pat[pidx, e])
                    if vec[v] == 0:
                        ok = False
                        break
                    vec[v] -= 1
                    pred += self.index[j - 1][tuple(vec)] * int(prev_powers[e])
                if ok and int(tables[j - 1][pred]) == target - q:
                    found = (pidx, pred)
                    break
            assert found is not None
            pidx, s = found
            out.append(pidx)
        out.reverse()
        return out


# ---------------------------------------------------------------------------
# Front-end solvers


def solve_mtes_dp(
    ts: TrainingSet,
    trees: int,
    errors: int = 0,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> DPResult:
    """Minimum total ensemble size with the given tree count and error
    budget, plus a certifying ensemble (re-verified under true plurality).

    Exact for two classes (counting table) and for multiclass instances
    where the vote-multiset table fits the budget; otherwise the counting
    table's absolute-majority semantics make the result an upper bound and
    the result says so.
    """
    if trees == 1:
        return solve_dts_dp(ts, errors, max_entries)
    if ts.num_classes == 2:
        table = build_ensemble_table(ts, trees, max_entries)
        value, state = table.final_state_for(errors)
        assert value < INF
        members = table.reconstruct(state)
        ensemble = TreeEnsemble(tuple(members))
        got = error_count(ensemble, ts)
        assert got <= errors and ensemble.total_size == value
        return DPResult(
            value=value, models=tuple(members), entries=table.entries
        )
    try:
        exact = MulticlassExact(ts, trees, max_entries)
    except ResourceLimitError:
        table = build_ensemble_table(ts, trees, max_entries)
        value, state = table.final_state_for(errors)
        assert value < INF
        members = table.reconstruct(state)
        ensemble = TreeEnsemble(tuple(members))
        got = error_count(ensemble, ts)
        assert got <= errors
        return DPResult(
            value=value,
            models=tuple(members),
            exact=False,
            note=(
                "upper bound (absolute-majority semantics): correct-vote "
                "counts cannot decide plurality ties among three or more "
                "classes and the exact vote-multiset table exceeds the budget"
            ),
            entries=table.entries,
        )
    value = int(exact.answer_curve()[min(errors, ts.n)])
    members = exact.reconstruct(errors)
    ensemble = TreeEnsemble(tuple(members))
    got = error_count(ensemble, ts)
    assert got <= errors and ensemble.total_size == value
    return DPResult(value=value, models=tuple(members), entries=exact.entries)


def mtes_curve(
    ts: TrainingSet, trees: int, max_entries: int = DEFAULT_MAX_ENTRIES
) -> tuple[np.ndarray, bool]:
    """Optimal total size for every error budget t = 0..n, and whether the
    values are exact (always, except multiclass beyond the exact budget)."""
    if trees == 1:
        return dts_curve(ts, max_entries), True
    if ts.num_classes == 2:
        return build_ensemble_table(ts, trees, max_entries).answer_curve(), True
    try:
        return MulticlassExact(ts, trees, max_entries).answer_curve(), True
    except ResourceLimitError:
        return build_ensemble_table(ts, trees, max_entries).answer_curve(), False


def reconstruct(table: Union[PartitionTable, EnsembleTable], key: int):
    """Certificate for a table entry: a tree for partition tables, the tree
    list for ensemble tables (key = final count-vector state)."""
    if isinstance(table, PartitionTable):
        return table.reconstruct(key)
    return table.reconstruct(key)
