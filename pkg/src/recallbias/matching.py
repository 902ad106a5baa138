"""Distances and optimal assignment used to build matched blocks."""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .errors import InfeasibleInstance


def as_cost_matrix(cost) -> np.ndarray:
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2 or c.size == 0:
        raise InfeasibleInstance("cost matrix must be a non-empty 2-d array")
    if not np.all(np.isfinite(c)):
        raise InfeasibleInstance("cost matrix has non-finite entries")
    if np.any(c < 0):
        raise InfeasibleInstance("cost matrix has negative entries")
    return c


def rank_mahalanobis_embedding(x: np.ndarray) -> np.ndarray:
    """Whitened covariate ranks: Euclidean distance between rows is the
    rank-based Mahalanobis distance (ties get average ranks, and the rank
    variances are rescaled to the untied value so ties do not inflate a
    covariate's weight).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    keep = [j for j in range(x.shape[1]) if np.ptp(x[:, j]) > 0]
    if n < 2 or not keep:
        return np.zeros((n, 1))
    r = np.column_stack([rankdata(x[:, j]) for j in keep])
    cv = np.atleast_2d(np.cov(r, rowvar=False))
    untied = np.var(np.arange(1, n + 1), ddof=1)
    rat = np.sqrt(untied / np.diag(cv))
    cv = cv * np.outer(rat, rat)
    vals, vecs = np.linalg.eigh(cv)
    pos = vals > vals.max() * 1e-12
    root = vecs[:, pos] / np.sqrt(vals[pos])
    return r @ root


def rank_mahalanobis(x: np.ndarray) -> np.ndarray:
    """Pairwise rank-based Mahalanobis distance matrix."""
    w = rank_mahalanobis_embedding(x)
    return cdist(w, w)


def optimal_assignment(cost):
    """Minimum-cost assignment for a rectangular cost matrix.

    Returns ``(rows, cols, total)``; every row is matched when there are no
    more rows than columns, otherwise every column.
    """
    c = as_cost_matrix(cost)
    rows, cols = linear_sum_assignment(c)
    return rows, cols, float(c[rows, cols].sum())


@njit(cache=True)
def _ssp_assign(c, cap):
    n, m = c.shape
    maxcap = 0
    for j in range(m):
        maxcap = max(maxcap, cap[j])
    members = np.empty((m, max(maxcap, 1)), dtype=np.int64)
    load = np.zeros(m, dtype=np.int64)
    assign = np.full(n, -1, dtype=np.int64)
    W = np.full((m, m), np.inf)
    Wunit = np.full((m, m), -1, dtype=np.int64)
    dist = np.empty(m)
    pred = np.empty(m, dtype=np.int64)
    touched = np.empty(m, dtype=np.int64)
    for u in range(n):
        for b in range(m):
            dist[b] = c[u, b]
            pred[b] = -1
        for _ in range(m + 1):
            changed = False
            for a in range(m):
                da = dist[a]
                if da == np.inf:
                    continue
                for b in range(m):
                    cand = da + W[a, b]
                    if cand < dist[b] - 1e-12 * (1.0 + abs(dist[b])):
                        dist[b] = cand
                        pred[b] = a
                        changed = True
            if not changed:
                break
        target = -1
        for b in range(m):
            if load[b] < cap[b] and (target < 0 or dist[b] < dist[target]):
                target = b
        b = target
        nt = 0
        touched[nt] = b
        nt += 1
        while pred[b] != -1:
            a = pred[b]
            if nt >= m:
                return assign, False
            v = Wunit[a, b]
            # move v from bin a to bin b
            for i in range(load[a]):
                if members[a, i] == v:
                    members[a, i] = members[a, load[a] - 1]
                    break
            load[a] -= 1
            members[b, load[b]] = v
            load[b] += 1
            assign[v] = b
            b = a
            touched[nt] = b
            nt += 1
        members[b, load[b]] = u
        load[b] += 1
        assign[u] = b
        for t in range(nt):
            a = touched[t]
            for j in range(m):
                W[a, j] = np.inf
                Wunit[a, j] = -1
            for i in range(load[a]):
                v = members[a, i]
                for j in range(m):
                    if j == a:
                        continue
                    dlt = c[v, j] - c[v, a]
                    if dlt < W[a, j]:
                        W[a, j] = dlt
                        Wunit[a, j] = v
    return assign, True


def capacitated_assignment(cost, capacity) -> np.ndarray:
    """Assign every row (unit) to a column (bin) holding at most ``capacity[j]`` units,
    minimising total cost.

    Successive shortest augmenting paths over the bin graph: adding units one
    at a time and re-routing along the cheapest chain of moves keeps the
    partial assignment optimal at every step.  Edge ``a -> b`` costs the
    cheapest change from moving one current member of ``a`` into ``b``, so
    the graph has as many nodes as bins regardless of the number of units.

    Returns the bin index of each unit.
    """
    c = as_cost_matrix(cost)
    n, m = c.shape
    cap = np.broadcast_to(np.asarray(capacity, dtype=np.int64), (m,)).copy()
    if np.any(cap < 0) or cap.sum() < n:
        raise InfeasibleInstance(f"total capacity {cap.sum()} is below the {n} units to place")
    assign, ok = _ssp_assign(np.ascontiguousarray(c), cap)
    if not ok:
        raise InfeasibleInstance("negative cycle in the assignment residual graph")
    return assign


def within_block_distance(dist: np.ndarray, labels: np.ndarray) -> float:
    """Sum over blocks of all pairwise distances inside the block."""
    total = 0.0
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        total += dist[np.ix_(idx, idx)].sum() / 2.0
    return float(total)
