"""numba kernels for exact nearest-neighbour sums between point sets.

Each target path gets a static 2-d tree (median splits on the wider bounding
box side). Queries from a path are processed in sequence and seeded with the
previous query's neighbour, which on densely sampled tracks is almost always
within a few meters of the answer, so the tree walk prunes aggressively.
The seed is a real candidate point, so results stay exact.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

LEAF_SIZE = 16
# targets smaller than this are scanned linearly (root stays a leaf)
BRUTE_BELOW = 64
_STACK = 256


@njit(cache=True)
def build_tree(pts):
    n = pts.shape[0]
    perm = np.arange(n)
    cap = 2 * n + 1
    start = np.empty(cap, np.int64)
    end = np.empty(cap, np.int64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    bbox = np.empty((cap, 4), np.float64)
    todo = np.empty(cap, np.int64)

    start[0] = 0
    end[0] = n
    count = 1
    todo[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        nd = todo[sp]
        s = start[nd]
        e = end[nd]
        x0 = np.inf
        x1 = -np.inf
        y0 = np.inf
        y1 = -np.inf
        for k in range(s, e):
            px = pts[perm[k], 0]
            py = pts[perm[k], 1]
            if px < x0:
                x0 = px
            if px > x1:
                x1 = px
            if py < y0:
                y0 = py
            if py > y1:
                y1 = py
        bbox[nd, 0] = x0
        bbox[nd, 1] = x1
        bbox[nd, 2] = y0
        bbox[nd, 3] = y1
        if e - s <= LEAF_SIZE or n < BRUTE_BELOW:
            continue
        dim = 0 if (x1 - x0) >= (y1 - y0) else 1
        sub = perm[s:e].copy()
        keys = np.empty(e - s, np.float64)
        for k in range(e - s):
            keys[k] = pts[sub[k], dim]
        order = np.argsort(keys, kind="mergesort")
        for k in range(e - s):
            perm[s + k] = sub[order[k]]
        mid = s + (e - s) // 2
        lc = count
        rc = count + 1
        count += 2
        start[lc] = s
        end[lc] = mid
        start[rc] = mid
        end[rc] = e
        left[nd] = lc
        right[nd] = rc
        todo[sp] = lc
        todo[sp + 1] = rc
        sp += 2

    tp = np.empty((n, 2), np.float64)
    for k in range(n):
        tp[k, 0] = pts[perm[k], 0]
        tp[k, 1] = pts[perm[k], 1]
    leafof = np.empty(n, np.int64)
    for nd in range(count):
        if left[nd] < 0:
            for k in range(start[nd], end[nd]):
                leafof[k] = nd
    return (tp, perm, start[:count].copy(), end[:count].copy(),
            left[:count].copy(), right[:count].copy(),
            bbox[:count, 0].copy(), bbox[:count, 1].copy(),
            bbox[:count, 2].copy(), bbox[:count, 3].copy(), leafof)


@njit(cache=True)
def nn_dists_tree(q, tp, start, end, left, right, x0, x1, y0, y1, leafof):
    """Exact nearest-neighbour distance from every row of q to the tree.

    The leaf holding the previous answer is scanned first; the descent from
    the root then only opens boxes closer than that bound.
    """
    n = q.shape[0]
    out = np.empty(n, np.float64)
    stack = np.empty(_STACK, np.int64)
    prev = 0
    for k in range(n):
        qx = q[k, 0]
        qy = q[k, 1]
        lf = leafof[prev]
        best = np.inf
        besti = prev
        for t in range(start[lf], end[lf]):
            dx = tp[t, 0] - qx
            dy = tp[t, 1] - qy
            d = dx * dx + dy * dy
            if d < best:
                best = d
                besti = t
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            nd = stack[sp]
            if nd == lf:
                continue
            lc = left[nd]
            if lc < 0:
                for t in range(start[nd], end[nd]):
                    dx = tp[t, 0] - qx
                    dy = tp[t, 1] - qy
                    d = dx * dx + dy * dy
                    if d < best:
                        best = d
                        besti = t
                continue
            rc = right[nd]
            dx = max(x0[lc] - qx, 0.0, qx - x1[lc])
            dy = max(y0[lc] - qy, 0.0, qy - y1[lc])
            dl = dx * dx + dy * dy
            dx = max(x0[rc] - qx, 0.0, qx - x1[rc])
            dy = max(y0[rc] - qy, 0.0, qy - y1[rc])
            dr = dx * dx + dy * dy
            # farther child pushed first so the nearer one is opened next
            if dl <= dr:
                if dr < best:
                    stack[sp] = rc
                    sp += 1
                if dl < best:
                    stack[sp] = lc
                    sp += 1
            else:
                if dl < best:
                    stack[sp] = lc
                    sp += 1
                if dr < best:
                    stack[sp] = rc
                    sp += 1
        prev = besti
        out[k] = math.sqrt(best)
    return out


@njit(cache=True)
def nn_dists_brute(q, pts):
    n = q.shape[0]
    out = np.empty(n, np.float64)
    for k in range(n):
        qx = q[k, 0]
        qy = q[k, 1]
        best = np.inf
        for t in range(pts.shape[0]):
            dx = pts[t, 0] - qx
            dy = pts[t, 1] - qy
            d = dx * dx + dy * dy
            if d < best:
                best = d
        out[k] = math.sqrt(best)
    return out


@njit(cache=True)
def _mean(a):
    s = 0.0
    for k in range(a.shape[0]):
        s += a[k]
    return s / a.shape[0]


@njit(cache=True, parallel=True)
def directed_matrix_tree(pts, off, tp, start, end, left, right,
                         x0, x1, y0, y1, leafof, noff):
    """All ordered-pair directed ANND values; row i holds i -> j.

    Rows are independent, so the result does not depend on thread count.
    """
    m = off.shape[0] - 1
    out = np.zeros((m, m), np.float64)
    for i in prange(m):
        q = pts[off[i]:off[i + 1]]
        for j in range(m):
            if j == i:
                continue
            a, b = off[j], off[j + 1]
            na, nb = noff[j], noff[j + 1]
            d = nn_dists_tree(q, tp[a:b], start[na:nb], end[na:nb],
                              left[na:nb], right[na:nb], x0[na:nb], x1[na:nb],
                              y0[na:nb], y1[na:nb], leafof[a:b])
            out[i, j] = _mean(d)
    return out
