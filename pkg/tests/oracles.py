"""Independent brute-force oracles for kernel and metric verification.

These recompute everything from scratch with the dumbest correct
algorithm (full pairwise scans, per-point confusion tallies) and stay
structurally independent of the library's incremental implementations.
"""

import numpy as np


def fps_oracle(coords: np.ndarray, m: int, start: int = 0) -> np.ndarray:
    """Farthest point sampling by full recomputation at every step."""
    n = coords.shape[0]
    chosen = [start]
    for _ in range(1, m):
        best_idx, best_d2 = -1, -1.0
        for i in range(n):
            if i in chosen:
                continue
            d2 = min(
                float(((coords[i] - coords[j]) ** 2).sum()) for j in chosen
            )
            if d2 > best_d2:
                best_d2, best_idx = d2, i
        chosen.append(best_idx)
    return np.asarray(chosen, dtype=np.int64)


def ball_query_oracle(source, queries, radius, k):
    """First k in-radius indices per query by exhaustive ascending scan."""
    r2 = radius * radius
    rows = []
    for q in queries:
        hits = [i for i in range(len(source)) if float(((source[i] - q) ** 2).sum()) <= r2]
        if not hits:
            d2 = [float(((source[i] - q) ** 2).sum()) for i in range(len(source))]
            hits = [int(np.argmin(d2))]
        row = hits[:k]
        row += [row[0]] * (k - len(row))
        rows.append(row)
    return np.asarray(rows, dtype=np.int64)


def knn_oracle(source, queries, k):
    """k nearest by sorting (distance, index) pairs."""
    idx_rows, dist_rows = [], []
    for q in queries:
        pairs = sorted(
            (float(((source[i] - q) ** 2).sum()), i) for i in range(len(source))
        )
        idx_rows.append([i for _, i in pairs[:k]])
        dist_rows.append([np.sqrt(d) for d, _ in pairs[:k]])
    return np.asarray(idx_rows, dtype=np.int64), np.asarray(dist_rows)


def voxel_oracle(coords, size):
    """Dict-of-lists voxel partition keyed by floor(coord / size)."""
    cells = {}
    for i, p in enumerate(coords):
        key = tuple(int(np.floor(v / size)) for v in p)
        cells.setdefault(key, []).append(i)
    return cells


def interpolate_oracle(source_coords, source_features, targets, k, eps):
    """Scalar-loop inverse-distance interpolation."""
    out = np.zeros((len(targets), source_features.shape[1]))
    for t, q in enumerate(targets):
        pairs = sorted(
            (float(np.sqrt(((source_coords[i] - q) ** 2).sum())), i)
            for i in range(len(source_coords))
        )[:k]
        weights = [1.0 / (d + eps) for d, _ in pairs]
        total = sum(weights)
        for w, (_, i) in zip(weights, pairs):
            out[t] += (w / total) * source_features[i]
    return out


def confusion_oracle(preds, truths, num_classes, ignore_index):
    """Per-point confusion tally as nested python dicts."""
    table = {c: {"tp": 0, "fp": 0, "fn": 0} for c in range(num_classes)}
    for p, t in zip(preds, truths):
        p, t = int(p), int(t)
        if ignore_index is not None and t == ignore_index:
            continue
        if p == t:
            table[t]["tp"] += 1
        else:
            if t in table:
                table[t]["fn"] += 1
            if p in table:
                table[p]["fp"] += 1
    return table


def iou_from_confusion(table):
    """Per-class IoU percentages; classes with empty union are omitted."""
    out = {}
    for c, cell in table.items():
        union = cell["tp"] + cell["fp"] + cell["fn"]
        if union > 0:
            out[c] = 100.0 * cell["tp"] / union
    return out
