"""Numba-jitted kernel implementations.

Loop-for-loop twins of :mod:`pointforge._kernels_numpy`; same float64
arithmetic, same tie rules, bit-identical outputs. Only imported when the
numba backend is active.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def fps(coords, m, start):
    n = coords.shape[0]
    out = np.empty(m, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    out[0] = start
    for i in range(n):
        dx = coords[i, 0] - coords[start, 0]
        dy = coords[i, 1] - coords[start, 1]
        dz = coords[i, 2] - coords[start, 2]
        best[i] = dx * dx + dy * dy + dz * dz
    best[start] = -1.0
    for j in range(1, m):
        nxt = 0
        far = best[0]
        for i in range(1, n):
            if best[i] > far:
                far = best[i]
                nxt = i
        out[j] = nxt
        for i in range(n):
            dx = coords[i, 0] - coords[nxt, 0]
            dy = coords[i, 1] - coords[nxt, 1]
            dz = coords[i, 2] - coords[nxt, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best[i]:
                best[i] = d2
        best[nxt] = -1.0
    return out


@njit(cache=True)
def ball_query(source, queries, radius, k):
    n = source.shape[0]
    m = queries.shape[0]
    r2 = radius * radius
    out = np.empty((m, k), dtype=np.int64)
    for q in range(m):
        qx = queries[q, 0]
        qy = queries[q, 1]
        qz = queries[q, 2]
        found = 0
        nearest = 0
        nearest_d2 = np.inf
        for i in range(n):
            dx = source[i, 0] - qx
            dy = source[i, 1] - qy
            dz = source[i, 2] - qz
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < nearest_d2:
                nearest_d2 = d2
                nearest = i
            if d2 <= r2:
                if found < k:
                    out[q, found] = i
                found += 1
                if found >= k:
                    break
        if found == 0:
            for j in range(k):
                out[q, j] = nearest
        elif found < k:
            first = out[q, 0]
            for j in range(found, k):
                out[q, j] = first
    return out


@njit(cache=True)
def knn(source, queries, k):
    n = source.shape[0]
    m = queries.shape[0]
    idx = np.empty((m, k), dtype=np.int64)
    dist = np.empty((m, k), dtype=np.float64)
    d2 = np.empty(n, dtype=np.float64)
    for q in range(m):
        qx = queries[q, 0]
        qy = queries[q, 1]
        qz = queries[q, 2]
        for i in range(n):
            dx = source[i, 0] - qx
            dy = source[i, 1] - qy
            dz = source[i, 2] - qz
            d2[i] = dx * dx + dy * dy + dz * dz
        for j in range(k):
            sel = -1
            sel_d2 = np.inf
            for i in range(n):
                if d2[i] < sel_d2:
                    sel_d2 = d2[i]
                    sel = i
            idx[q, j] = sel
            dist[q, j] = np.sqrt(sel_d2)
            d2[sel] = np.inf
    return idx, dist


@njit(cache=True)
def scatter_add_rows(target, rows, values):
    m, c = values.shape
    for i in range(m):
        r = rows[i]
        for j in range(c):
            target[r, j] += values[i, j]


@njit(cache=True)
def fnv1a64(data):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    return h
