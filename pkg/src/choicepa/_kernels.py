"""Compiled inner loops.

Everything that runs once per edge lives here so that a full growth run is a
single call into machine code.  The index is a bundle of plain arrays (see
``index.DegreeClassIndex`` for their meaning); scalar state is kept in two
small arrays so that kernels can update it in place:

``fsc[0]``  total weight D
``isc``     see the ``I_*`` offsets below

Kernels never allocate index storage.  When an operation would need more
room they return ``NEED_DEGREE_CAP`` / ``NEED_VERTEX_CAP`` / ``NEED_SCRATCH``
and leave the state untouched, so the caller can grow the arrays and resume.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

I_MAX = 0          # current maximum degree M
I_NVERT = 1        # number of vertices
I_NUPD = 2         # weight updates since the last exact rebuild
I_STEP = 3         # step counter n
I_EDGES = 4        # edge count
I_PENDING_M = 5    # m already drawn for a step that had to be resumed
N_ISC = 6

REBUILD_EVERY = 1 << 20

OK = 0
NEED_DEGREE_CAP = 1
NEED_VERTEX_CAP = 2
NEED_SCRATCH = 3
M_OVERFLOW = 4

ROUND = 0
CEIL = 1
REAL = 2

FAST = 0
NAIVE = 1

M_FIXED = 0
M_TABLE = 1
M_TABLE_ZETA_TAIL = 2

# Largest m the tail sampler will hand out; beyond this a draw is reported as
# overflow instead of silently truncated.
M_LIMIT = float(1 << 40)

_kw = dict(cache=True, nogil=True)
# per-edge helpers are inlined at IR level: an out-of-line call passing
# several arrays costs ~20x the work it does (refcount traffic)
_hot = dict(_kw, inline="always")


# --------------------------------------------------------------------------
# Fenwick tree over degree values 1..cap (tree[0] unused)


@njit(**_hot)
def fenwick_add(tree, i, delta):
    n = tree.shape[0]
    while i < n:
        tree[i] += delta
        i += i & (-i)


@njit(**_hot)
def fenwick_prefix(tree, i):
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(**_hot)
def fenwick_search(tree, w):
    """Largest index i with prefix(i) <= w, plus one."""
    n = tree.shape[0] - 1
    step = 1
    while step * 2 <= n:
        step *= 2
    i = 0
    rem = w
    while step > 0:
        j = i + step
        if j <= n and tree[j] <= rem:
            i = j
            rem -= tree[j]
        step //= 2
    return i + 1


@njit(**_kw)
def fenwick_build(tree, counts, powc):
    n = tree.shape[0] - 1
    tree[0] = 0.0
    for i in range(1, n + 1):
        tree[i] = counts[i] * powc[i]
    for i in range(1, n + 1):
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]


@njit(**_kw)
def exact_total(counts, powc, kmax):
    # pairwise-free but compensated: plain Kahan summation over classes
    s = 0.0
    c = 0.0
    for k in range(1, kmax + 1):
        if counts[k] != 0:
            y = counts[k] * powc[k] - c
            t = s + y
            c = (t - s) - y
            s = t
    return s


@njit(**_kw)
def rebuild(tree, counts, powc, fsc, isc):
    fenwick_build(tree, counts, powc)
    fsc[0] = exact_total(counts, powc, isc[I_MAX])
    isc[I_NUPD] = 0


@njit(**_hot)
def _touch(tree, counts, powc, fsc, isc, nupd):
    isc[I_NUPD] += nupd
    if isc[I_NUPD] >= REBUILD_EVERY:
        rebuild(tree, counts, powc, fsc, isc)


# --------------------------------------------------------------------------
# Index operations.
#
# Registry layout: ``order`` lists vertex ids in blocks of equal degree, the
# highest degree first.  ``start[k]`` is the number of vertices with degree
# greater than k, so class k occupies order[start[k]:start[k-1]].  Moving a
# vertex up one class, and appending a vertex of degree k, are O(1) and O(k).


@njit(**_hot)
def idx_add_vertex(tree, counts, powc, start, order, pos, deg, fsc, isc, v, k):
    cap = counts.shape[0] - 2
    if k > cap:
        return NEED_DEGREE_CAP
    if v >= deg.shape[0] or isc[I_NVERT] >= order.shape[0]:
        return NEED_VERTEX_CAP
    h = start[0]
    for j in range(1, k):
        s = start[j]
        if s != h:
            u = order[s]
            order[h] = u
            pos[u] = h
        h = s
    order[h] = v
    pos[v] = h
    for j in range(k):
        start[j] += 1
    deg[v] = k
    counts[k] += 1
    fenwick_add(tree, k, powc[k])
    fsc[0] += powc[k]
    isc[I_NVERT] += 1
    if k > isc[I_MAX]:
        isc[I_MAX] = k
    _touch(tree, counts, powc, fsc, isc, 1)
    return OK


@njit(**_hot)
def idx_increment(tree, counts, powc, start, order, pos, deg, fsc, isc, v):
    k = deg[v]
    if k + 1 > counts.shape[0] - 2:
        return NEED_DEGREE_CAP
    p = pos[v]
    f = start[k]
    u = order[f]
    order[f] = v
    pos[v] = f
    order[p] = u
    pos[u] = p
    start[k] += 1
    deg[v] = k + 1
    counts[k] -= 1
    counts[k + 1] += 1
    fenwick_add(tree, k, -powc[k])
    fenwick_add(tree, k + 1, powc[k + 1])
    fsc[0] += powc[k + 1] - powc[k]
    if k + 1 > isc[I_MAX]:
        isc[I_MAX] = k + 1
    _touch(tree, counts, powc, fsc, isc, 2)
    return OK


@njit(**_hot)
def class_at(tree, counts, isc, w):
    """Occupied degree k with prefix(k-1) <= w < prefix(k)."""
    mx = isc[I_MAX]
    k = fenwick_search(tree, w)
    if k > mx:
        k = mx
    # rounding in the tree may land on an empty class; the next occupied one
    # above is the class whose interval actually contains w
    while counts[k] == 0 and k < mx:
        k += 1
    while counts[k] == 0:
        k -= 1
    return k


@njit(**_hot)
def uniform_in_class(start, order, k, u):
    lo = start[k]
    c = start[k - 1] - lo
    j = int(u * c)
    if j >= c:
        j = c - 1
    return order[lo + j]


# --------------------------------------------------------------------------
# Samplers


@njit(**_hot)
def sample_size(n, c_d, gamma, mode):
    x = c_d * float(n) ** gamma
    if mode == ROUND:
        x = math.floor(x + 0.5)
    elif mode == CEIL:
        x = math.ceil(x)
    if x < 1.0:
        x = 1.0
    return x


@njit(**_hot)
def fast_class(tree, counts, fsc, isc, d, u):
    if u <= 0.0:
        w = 0.0
    else:
        w = fsc[0] * math.exp(math.log(u) / d)
    return class_at(tree, counts, isc, w)


@njit(**_hot)
def draw_fast(tree, counts, start, order, fsc, isc, d, rng):
    k = fast_class(tree, counts, fsc, isc, d, rng.random())
    return uniform_in_class(start, order, k, rng.random())


@njit(**_hot)
def draw_naive(tree, counts, start, order, deg, fsc, isc, d, rng):
    nd = int(d)
    total = fsc[0]
    best = -1
    best_deg = 0
    ties = 0
    for _ in range(nd):
        k = class_at(tree, counts, isc, rng.random() * total)
        v = uniform_in_class(start, order, k, rng.random())
        dv = deg[v]
        if dv > best_deg:
            best = v
            best_deg = dv
            ties = 1
        elif dv == best_deg:
            # reservoir step: uniform among all maximal-degree samples
            ties += 1
            if rng.random() * ties < 1.0:
                best = v
    return best


@njit(**_kw)
def class_draws(tree, counts, start, order, deg, fsc, isc, d, mode, count, rng):
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        if mode == FAST:
            v = draw_fast(tree, counts, start, order, fsc, isc, d, rng)
        else:
            v = draw_naive(tree, counts, start, order, deg, fsc, isc, d, rng)
        out[i] = v
    return out


# --------------------------------------------------------------------------
# Edge-count distribution


@njit(**_kw)
def _zeta_tail(k0, beta, rng):
    # k = ceil(X) with X Pareto on [k0-1, inf); accept with the ratio of the
    # point mass k^-beta to the proposal mass on (k-1, k], which is <= 1
    a = beta - 1.0
    base = float(k0 - 1)
    while True:
        u = rng.random()
        if u <= 0.0:
            continue
        x = base * u ** (-1.0 / a)
        if x > M_LIMIT:
            return -1
        k = math.ceil(x)
        if k < k0:
            continue
        kf = float(k)
        prop = ((kf - 1.0) ** (-a) - kf ** (-a)) / a
        if rng.random() * prop <= kf ** (-beta):
            return int(k)


@njit(**_hot)
def draw_m(kind, fixed, values, prob, alias, tail_mass, tail_k0, beta, rng):
    if kind == M_FIXED:
        return fixed
    if kind == M_TABLE_ZETA_TAIL:
        if rng.random() < tail_mass:
            return _zeta_tail(tail_k0, beta, rng)
    n = values.shape[0]
    i = int(rng.random() * n)
    if i >= n:
        i = n - 1
    if rng.random() < prob[i]:
        return values[i]
    return values[alias[i]]


@njit(**_kw)
def draw_m_many(kind, fixed, values, prob, alias, tail_mass, tail_k0, beta, rng, count):
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        out[i] = draw_m(kind, fixed, values, prob, alias, tail_mass, tail_k0, beta, rng)
    return out


# --------------------------------------------------------------------------
# Growth


@njit(**_hot)
def record(counts, fsc, isc, klist, row, ck_n, ck_m, ck_l, ck_d, ck_e, ck_s, ck_nk):
    mx = isc[I_MAX]
    ck_n[row] = isc[I_STEP]
    ck_m[row] = mx
    ck_l[row] = counts[mx]
    ck_d[row] = fsc[0]
    ck_e[row] = isc[I_EDGES]
    s = 0
    for k in range(1, mx + 1):
        s += k * counts[k]
    ck_s[row] = s
    cap = counts.shape[0] - 2
    for j in range(klist.shape[0]):
        k = klist[j]
        ck_nk[row, j] = counts[k] if k <= cap else 0


@njit(**_kw)
def grow(tree, counts, powc, start, order, pos, deg, fsc, isc,
         c_d, gamma, rounding, sampler,
         m_kind, m_fixed, m_values, m_prob, m_alias, m_tail_mass, m_tail_k0, m_beta,
         rng, n_end, targets, tdeg,
         checkpoints, ck_ptr, klist,
         ck_n, ck_m, ck_l, ck_d, ck_e, ck_s, ck_nk):
    """Advance the graph until step ``n_end``.

    Returns ``(status, next checkpoint pointer, m of the last step)``.  On a
    non-OK status the state is exactly at a step boundary; any m already
    drawn is parked in ``isc[I_PENDING_M]`` and reused on resume.
    """
    cap = counts.shape[0] - 2
    m = 0
    while isc[I_STEP] < n_end:
        n = isc[I_STEP]
        if isc[I_PENDING_M] > 0:
            m = isc[I_PENDING_M]
        else:
            m = draw_m(m_kind, m_fixed, m_values, m_prob, m_alias,
                       m_tail_mass, m_tail_k0, m_beta, rng)
            if m < 0:
                return M_OVERFLOW, ck_ptr, m
            isc[I_PENDING_M] = m
        mx = isc[I_MAX]
        if mx + m > cap or m > cap:
            return NEED_DEGREE_CAP, ck_ptr, m
        if isc[I_NVERT] >= deg.shape[0] or isc[I_NVERT] >= order.shape[0]:
            return NEED_VERTEX_CAP, ck_ptr, m
        if m > targets.shape[0]:
            return NEED_SCRATCH, ck_ptr, m
        isc[I_PENDING_M] = 0

        # every target is chosen against the frozen G_n
        d = sample_size(n + 1, c_d, gamma, rounding)
        for i in range(m):
            if sampler == FAST:
                v = draw_fast(tree, counts, start, order, fsc, isc, d, rng)
            else:
                v = draw_naive(tree, counts, start, order, deg, fsc, isc, d, rng)
            targets[i] = v
            tdeg[i] = deg[v]
        for i in range(m):
            idx_increment(tree, counts, powc, start, order, pos, deg, fsc, isc, targets[i])
        idx_add_vertex(tree, counts, powc, start, order, pos, deg, fsc, isc, n + 1, m)
        isc[I_STEP] = n + 1
        isc[I_EDGES] += m

        if ck_ptr < checkpoints.shape[0] and checkpoints[ck_ptr] == n + 1:
            record(counts, fsc, isc, klist, ck_ptr,
                   ck_n, ck_m, ck_l, ck_d, ck_e, ck_s, ck_nk)
            ck_ptr += 1
    return OK, ck_ptr, m
