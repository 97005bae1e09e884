"""Hot table-fill loops behind the subset DP, in two interchangeable
backends: numba-compiled (default) and pure numpy.

Select with the OPTIFOREST_BACKEND environment variable: "numpy" forces the
fallback, anything else (or unset) uses numba when it is importable.  Both
backends produce identical tables; ``benchmarks/bench_kernels.py`` compares
their speed.

Table keys are base-b positional codes over example ids (digit of example j
sits at weight b**j), so a key's split along a cut is a plain digit-weighted
sum.  The infinity sentinel is a large finite int; additions of two
sentinels stay far below the int64 range.
"""

from __future__ import annotations

import os

import numpy as np

INF = 1 << 30

_env = os.environ.get("OPTIFOREST_BACKEND", "").strip().lower()
if _env == "numpy":
    _HAVE_NUMBA = False
else:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _HAVE_NUMBA = False

if not _HAVE_NUMBA:

    def njit(*args, **kwargs):  # type: ignore[misc]
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


def backend_name() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


def powers_of(base: int, n: int) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    p = 1
    for j in range(n):
        out[j] = p
        p *= base
    return out


def digit_matrix(count: int, base: int, n: int) -> np.ndarray:
    """(count, n) int8 matrix of base-``base`` digits of 0..count-1."""
    codes = np.arange(count, dtype=np.int64)
    powers = powers_of(base, n)
    return ((codes[:, None] // powers[None, :]) % base).astype(np.int8)


# ---------------------------------------------------------------------------
# Partition-table fill: values[key] = minimum tree size realizing the class
# assignment encoded by `key` on its support, minimizing over all cuts with
# two nonempty sides; 0 when the support carries at most one class.


@njit(cache=True)
def _q_fill_numba(base, n, cut_le, digit_class, values):  # pragma: no cover - numba
    K = values.shape[0]
    powers = np.empty(n, dtype=np.int64)
    p = np.int64(1)
    for j in range(n):
        powers[j] = p
        p *= base
    digits = np.empty(n, dtype=np.int64)
    C = cut_le.shape[0]
    for key in range(K):
        k = key
        first_cls = -1
        multi = False
        for j in range(n):
            dg = k % base
            k //= base
            digits[j] = dg
            if dg != 0:
                cls = digit_class[j, dg]
                if first_cls == -1:
                    first_cls = cls
                elif cls != first_cls:
                    multi = True
        if not multi:
            values[key] = 0
            continue
        best = np.int64(INF)
        for c in range(C):
            le_key = np.int64(0)
            le_sup = 0
            gt_sup = 0
            for j in range(n):
                if digits[j] != 0:
                    if cut_le[c, j]:
                        le_key += digits[j] * powers[j]
                        le_sup += 1
                    else:
                        gt_sup += 1
            if le_sup == 0 or gt_sup == 0:
                continue
            a = values[le_key]
            b = values[key - le_key]
            if a >= INF or b >= INF:
                continue
            v = a + b + 1
            if v < best:
                best = v
        values[key] = best


def _q_fill_numpy(base, n, cut_le, digit_class, values):
    K = values.shape[0]
    powers = powers_of(base, n)
    C = cut_le.shape[0]
    chunk = max(1, 2_000_000 // max(1, n))

    support = np.empty(K, dtype=np.int8)
    multi = np.empty(K, dtype=bool)
    sigma = int(digit_class.max()) + 1
    for lo in range(0, K, chunk):
        codes = np.arange(lo, min(lo + chunk, K), dtype=np.int64)
        digits = ((codes[:, None] // powers[None, :]) % base).astype(np.int8)
        nz = digits > 0
        support[lo : lo + len(codes)] = nz.sum(axis=1)
        present = np.zeros((len(codes), sigma), dtype=bool)
        for j in range(n):
            cls_col = digit_class[j, digits[:, j]]
            rows = np.nonzero(nz[:, j])[0]
            present[rows, cls_col[rows]] = True
        multi[lo : lo + len(codes)] = present.sum(axis=1) > 1

    values[:] = 0
    values[multi] = INF
    if C == 0:  # no cut can separate anything; multi-class keys stay infeasible
        return
    w_le = (cut_le.astype(np.int64) * powers[None, :]).T  # (n, C)
    for s in range(2, n + 1):
        idx = np.nonzero((support == s) & multi)[0]
        if len(idx) == 0:
            continue
        digits = ((idx[:, None] // powers[None, :]) % base).astype(np.int64)
        nz = digits > 0
        le_keys = digits @ w_le  # (m, C)
        le_sup = nz.astype(np.int32) @ cut_le.T.astype(np.int32)
        gt_sup = s - le_sup
        cand = values[le_keys] + values[idx[:, None] - le_keys] + 1
        cand = np.where((le_sup > 0) & (gt_sup > 0) & (cand <= INF), cand, INF)
        values[idx] = cand.min(axis=1)


def q_fill(base: int, n: int, cut_le: np.ndarray, digit_class: np.ndarray) -> np.ndarray:
    """Fill the (base**n)-entry partition table in increasing key order
    (children of a key are numerically smaller keys)."""
    values = np.empty(base**n, dtype=np.int64)
    if _HAVE_NUMBA:
        _q_fill_numba(base, n, np.ascontiguousarray(cut_le), digit_class, values)
    else:
        _q_fill_numpy(base, n, cut_le, digit_class, values)
    return values


# ---------------------------------------------------------------------------
# Ensemble count-vector table: forward relaxation with truncated addition.
# R[j, state] = minimum total size of j trees whose per-example correct-vote
# counts (capped at `cap`) encode to `state`.


@njit(cache=True)
def _r_fill_numba(cap, n, levels, Qp, R):  # pragma: no cover - numba
    capp1 = cap + 1
    S = R.shape[1]
    nsub = Qp.shape[0]
    powers = np.empty(n, dtype=np.int64)
    p = np.int64(1)
    for j in range(n):
        powers[j] = p
        p *= capp1
    digits = np.empty(n, dtype=np.int64)
    for j in range(1, levels + 1):
        for s in range(S):
            base_val = R[j - 1, s]
            if base_val >= INF:
                continue
            k = s
            for i in range(n):
                digits[i] = k % capp1
                k //= capp1
            for E in range(nsub):
                q = Qp[E]
                if q >= INF:
                    continue
                succ = np.int64(0)
                for i in range(n):
                    dg = digits[i]
                    if (E >> i) & 1 and dg < cap:
                        dg += 1
                    succ += dg * powers[i]
                v = base_val + q
                if v < R[j, succ]:
                    R[j, succ] = v


def _r_fill_numpy(cap, n, levels, Qp, R):
    capp1 = cap + 1
    S = R.shape[1]
    powers = powers_of(capp1, n)
    digits_all = digit_matrix(S, capp1, n).astype(np.int64)
    bits = ((np.arange(len(Qp))[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int64)
    finite_subsets = np.nonzero(Qp < INF)[0]
    for j in range(1, levels + 1):
        prev = R[j - 1]
        live = np.nonzero(prev < INF)[0]
        if len(live) == 0:
            continue
        dl = digits_all[live]
        for E in finite_subsets:
            succ = np.minimum(dl + bits[E][None, :], cap) @ powers
            np.minimum.at(R[j], succ, prev[live] + Qp[E])


def r_fill(cap: int, n: int, levels: int, Qp: np.ndarray) -> np.ndarray:
    """(levels+1, (cap+1)**n) table; level 0 holds only the zero state."""
    S = (cap + 1) ** n
    R = np.full((levels + 1, S), INF, dtype=np.int64)
    R[0, 0] = 0
    if _HAVE_NUMBA:
        _r_fill_numba(cap, n, levels, Qp, R)
    else:
        _r_fill_numpy(cap, n, levels, Qp, R)
    return R


# ---------------------------------------------------------------------------
# Multiclass vote-multiset expansion: add one tree (a full labeling pattern)
# to every reachable per-example vote-multiset state.


@njit(cache=True)
def _vote_expand_numba(T_cur, m_cur, m_next, addvote, pat_digits, Q, T_next):  # pragma: no cover
    S = T_cur.shape[0]
    P = pat_digits.shape[0]
    n = pat_digits.shape[1]
    powers = np.empty(n, dtype=np.int64)
    p = np.int64(1)
    for j in range(n):
        powers[j] = p
        p *= m_next
    digits = np.empty(n, dtype=np.int64)
    for s in range(S):
        v = T_cur[s]
        if v >= INF:
            continue
        k = s
        for i in range(n):
            digits[i] = k % m_cur
            k //= m_cur
        for pidx in range(P):
            q = Q[pidx]
            if q >= INF:
                continue
            succ = np.int64(0)
            for i in range(n):
                succ += addvote[digits[i], pat_digits[pidx, i]] * powers[i]
            cand = v + q
            if cand < T_next[succ]:
                T_next[succ] = cand


def _vote_expand_numpy(T_cur, m_cur, m_next, addvote, pat_digits, Q, T_next):
    n = pat_digits.shape[1]
    powers = powers_of(m_next, n)
    live = np.nonzero(T_cur < INF)[0]
    if len(live) == 0:
        return
    digits = ((live[:, None] // powers_of(m_cur, n)[None, :]) % m_cur).astype(np.int64)
    av = addvote.astype(np.int64)
    for pidx in np.nonzero(Q < INF)[0]:
        pd = pat_digits[pidx]
        succ = np.zeros(len(live), dtype=np.int64)
        for i in range(n):
            succ += av[digits[:, i], pd[i]] * powers[i]
        np.minimum.at(T_next, succ, T_cur[live] + Q[pidx])


def vote_expand(
    T_cur: np.ndarray,
    m_cur: int,
    m_next: int,
    addvote: np.ndarray,
    pat_digits: np.ndarray,
    Q: np.ndarray,
) -> np.ndarray:
    n = pat_digits.shape[1]
    T_next = np.full(m_next**n, INF, dtype=np.int64)
    if _HAVE_NUMBA:
        _vote_expand_numba(
            T_cur, m_cur, m_next, addvote, np.ascontiguousarray(pat_digits), Q, T_next
        )
    else:
        _vote_expand_numpy(T_cur, m_cur, m_next, addvote, pat_digits, Q, T_next)
    return T_next
