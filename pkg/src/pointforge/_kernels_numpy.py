"""Pure-numpy kernel implementations.

Reference path for the dispatched kernels in :mod:`pointforge.kernels`.
Distance bookkeeping is float64 throughout so the numba twins (which run
the same arithmetic as explicit loops) return bit-identical indices.
"""

import numpy as np


def fps(coords: np.ndarray, m: int, start: int) -> np.ndarray:
    """Greedy farthest point sampling of ``m`` indices from (n, 3) coords."""
    n = coords.shape[0]
    out = np.empty(m, dtype=np.int64)
    out[0] = start
    diff = coords - coords[start]
    best = (diff * diff).sum(axis=1)
    best[start] = -1.0  # chosen points can never be re-selected
    for j in range(1, m):
        nxt = int(np.argmax(best))
        out[j] = nxt
        diff = coords - coords[nxt]
        d2 = (diff * diff).sum(axis=1)
        np.minimum(best, d2, out=best)
        best[nxt] = -1.0
    return out


def ball_query(
    source: np.ndarray, queries: np.ndarray, radius: float, k: int
) -> np.ndarray:
    """First-k-within-radius neighbor indices, scanned in ascending source order.

    Rows with fewer than k hits repeat the first hit; rows with no hit fall
    back to k copies of the nearest source point.
    """
    r2 = float(radius) * float(radius)
    m = queries.shape[0]
    out = np.empty((m, k), dtype=np.int64)
    # Chunk the (m, n) distance matrix to bound memory on large clouds.
    chunk = max(1, int(4_000_000 // max(1, source.shape[0])))
    for lo in range(0, m, chunk):
        q = queries[lo : lo + chunk]
        d2 = ((q[:, None, :] - source[None, :, :]) ** 2).sum(axis=2)
        within = d2 <= r2
        counts = within.sum(axis=1)
        # Stable argsort on the negated mask lists in-radius indices first,
        # preserving ascending source order inside each group.
        order = np.argsort(~within, axis=1, kind="stable")
        if order.shape[1] < k:
            order = np.concatenate(
                [order, np.repeat(order[:, :1], k - order.shape[1], axis=1)], axis=1
            )
        else:
            order = order[:, :k]
        nearest = np.argmin(d2, axis=1)
        first = np.where(counts > 0, order[:, 0], nearest)
        cols = np.arange(k)[None, :]
        out[lo : lo + chunk] = np.where(cols < counts[:, None], order, first[:, None])
    return out


def knn(source: np.ndarray, queries: np.ndarray, k: int):
    """Exact k nearest neighbors; ties broken by lower source index."""
    m = queries.shape[0]
    idx = np.empty((m, k), dtype=np.int64)
    dist = np.empty((m, k), dtype=np.float64)
    chunk = max(1, int(4_000_000 // max(1, source.shape[0])))
    for lo in range(0, m, chunk):
        q = queries[lo : lo + chunk]
        d2 = ((q[:, None, :] - source[None, :, :]) ** 2).sum(axis=2)
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        idx[lo : lo + chunk] = order
        dist[lo : lo + chunk] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return idx, dist


def scatter_add_rows(target: np.ndarray, rows: np.ndarray, values: np.ndarray) -> None:
    """target[rows[i], :] += values[i, :] with duplicate rows accumulated."""
    n, c = target.shape
    flat = rows.astype(np.int64)[:, None] * c + np.arange(c, dtype=np.int64)[None, :]
    target += np.bincount(
        flat.ravel(), weights=values.ravel(), minlength=n * c
    ).reshape(n, c).astype(target.dtype, copy=False)


def fnv1a64(data: np.ndarray) -> int:
    """64-bit FNV-1a over a uint8 array."""
    h = 0xCBF29CE484222325
    prime = 0x100000001B3
    mask = 0xFFFFFFFFFFFFFFFF
    for b in data.tolist():
        h = ((h ^ b) * prime) & mask
    return h
