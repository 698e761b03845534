"""
Compiled inner loops for model training and scoring.
"""

import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the TBB layer probes an often-outdated system library and warns
    numba.config.THREADING_LAYER = "workqueue"


@njit(cache=True)
def svd_epoch(users, items, ratings, order, mu, bu, bi, P, Q, lr, reg):
    k = P.shape[1]
    for idx in order:
        u = users[idx]
        i = items[idx]
        dot = 0.0
        for f in range(k):
            dot += Q[i, f] * P[u, f]
        err = ratings[idx] - (mu + bu[u] + bi[i] + dot)
        bu[u] += lr * (err - reg * bu[u])
        bi[i] += lr * (err - reg * bi[i])
        for f in range(k):
            puf = P[u, f]
            qif = Q[i, f]
            P[u, f] += lr * (err * qif - reg * puf)
            Q[i, f] += lr * (err * puf - reg * qif)


@njit(cache=True)
def svd_loss(users, items, ratings, mu, bu, bi, P, Q, reg):
    # per-example regularisation, matching the SGD update
    k = P.shape[1]
    total = 0.0
    for idx in range(len(users)):
        u = users[idx]
        i = items[idx]
        dot = 0.0
        pen = bu[u] * bu[u] + bi[i] * bi[i]
        for f in range(k):
            dot += Q[i, f] * P[u, f]
            pen += P[u, f] * P[u, f] + Q[i, f] * Q[i, f]
        err = ratings[idx] - (mu + bu[u] + bi[i] + dot)
        total += err * err + reg * pen
    return total


@njit(cache=True, parallel=True)
def dot_block(P, Q, rows):
    # fixed summation order, so a score never depends on batching or threads
    k = P.shape[1]
    out = np.empty((len(rows), Q.shape[0]))
    for r in prange(len(rows)):
        u = rows[r]
        for i in range(Q.shape[0]):
            s = 0.0
            for f in range(k):
                s += P[u, f] * Q[i, f]
            out[r, i] = s
    return out


@njit(cache=True)
def dot_pairs(P, Q, uidx, iidx):
    k = P.shape[1]
    out = np.empty(len(uidx))
    for x in range(len(uidx)):
        s = 0.0
        for f in range(k):
            s += P[uidx[x], f] * Q[iidx[x], f]
        out[x] = s
    return out


@njit(cache=True)
def _nmf_half(rows, cols, ratings, A, B, counts, reg):
    # multiplicative update of A (rows) holding B (cols) fixed
    k = A.shape[1]
    num = np.zeros_like(A)
    den = np.zeros_like(A)
    for idx in range(len(rows)):
        a = rows[idx]
        b = cols[idx]
        est = 0.0
        for f in range(k):
            est += A[a, f] * B[b, f]
        r = ratings[idx]
        for f in range(k):
            num[a, f] += B[b, f] * r
            den[a, f] += B[b, f] * est
    for a in range(A.shape[0]):
        for f in range(k):
            d = den[a, f] + counts[a] * reg * A[a, f]
            if d > 0.0:
                v = A[a, f] * num[a, f] / d
                A[a, f] = v if v > 0.0 else 0.0
            else:
                A[a, f] = 0.0


@njit(cache=True)
def nmf_epoch(users, items, ratings, P, Q, ucount, icount, reg_u, reg_i):
    _nmf_half(users, items, ratings, P, Q, ucount, reg_u)
    _nmf_half(items, users, ratings, Q, P, icount, reg_i)


@njit(cache=True)
def nmf_loss(users, items, ratings, P, Q, reg_u, reg_i):
    k = P.shape[1]
    total = 0.0
    for idx in range(len(users)):
        u = users[idx]
        i = items[idx]
        est = 0.0
        pen = 0.0
        for f in range(k):
            est += P[u, f] * Q[i, f]
            pen += reg_u * P[u, f] * P[u, f] + reg_i * Q[i, f] * Q[i, f]
        err = ratings[idx] - est
        total += err * err + pen
    return total


@njit(cache=True)
def msd_similarity(indptr, members, values, n):
    """
    Dense MSD similarity between ``n`` entities.  ``indptr``/``members``/
    ``values`` group the entities by the *other* axis (e.g. the raters of
    each item when computing user-user similarity); members within each
    group must be ascending.
    """
    cnt = np.zeros((n, n), dtype=np.int32)
    sim = np.zeros((n, n))
    for g in range(len(indptr) - 1):
        lo = indptr[g]
        hi = indptr[g + 1]
        for x in range(lo, hi):
            a = members[x]
            ra = values[x]
            for y in range(x + 1, hi):
                b = members[y]
                d = ra - values[y]
                cnt[a, b] += 1
                sim[a, b] += d * d
    for a in range(n):
        sim[a, a] = 1.0
        for b in range(a + 1, n):
            c = cnt[a, b]
            if c > 0:
                s = 1.0 / (sim[a, b] / c + 1.0)
            else:
                s = 0.0
            sim[a, b] = s
            sim[b, a] = s
    return sim


@njit(cache=True, parallel=True)
def knn_dense(sim, k, indptr, members, values, n_pool, fallback):
    """
    Neighbourhood predictions for every (target, pool entry) combination.

    Row ``a`` of the result scores pool entries for target ``a`` (a user in
    the user-based model, an item in the item-based one).  Neighbours ``v``
    are visited by decreasing similarity, ties by ascending id; neighbour
    ``v`` contributes ``values[x]`` to pool entry ``members[x]`` for ``x`` in
    ``indptr[v]:indptr[v+1]``, until that entry has ``k`` contributions.
    Entries with no positively-similar neighbour get ``fallback``.
    """
    n = sim.shape[0]
    out = np.empty((n, n_pool))
    for a in prange(n):
        order = np.argsort(-sim[a], kind="mergesort")
        num = np.zeros(n_pool)
        den = np.zeros(n_pool)
        cnt = np.zeros(n_pool, dtype=np.int64)
        for v in order:
            s = sim[a, v]
            if s <= 0.0:
                break
            if v == a:
                continue
            for x in range(indptr[v], indptr[v + 1]):
                p = members[x]
                if cnt[p] < k:
                    num[p] += s * values[x]
                    den[p] += s
                    cnt[p] += 1
        for p in range(n_pool):
            if den[p] > 0.0:
                out[a, p] = num[p] / den[p]
            else:
                out[a, p] = fallback
    return out
