"""Point-set geometry kernels.

Farthest point sampling, ball query, k-NN, voxel grids, the train/test
sub-cloud samplers, and inverse-distance interpolation. These are the hot
loops of the whole pipeline; each dispatches to a numba or pure-numpy
implementation per :mod:`pointforge.backend`.

All kernels are pure functions of their inputs. Randomized variants take
an explicit ``numpy.random.Generator``; nothing reads global RNG state.
Distance comparisons run on squared distances in float64, so results are
deterministic and identical across backends.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels_numpy
from .backend import active_backend

_numba_mod = None


def _impl():
    global _numba_mod
    if active_backend() == "numba":
        if _numba_mod is None:
            from . import _kernels_numba

            _numba_mod = _kernels_numba
        return _numba_mod
    return _kernels_numpy


def _as_coords(obj) -> np.ndarray:
    coords = getattr(obj, "coords", obj)
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError(f"expected (n, 3) coordinates, got shape {coords.shape}")
    if coords.shape[0] == 0:
        raise ValueError("empty point set")
    return coords


def farthest_point_sampling(coords, stride: int, start="deterministic", rng=None):
    """Select ``max(1, n // stride)`` indices by greedy farthest point sampling.

    Each successive index maximizes the minimum distance to the already
    chosen set (ties broken by lower index). ``start`` picks the first
    index: "deterministic" uses index 0, "random" draws uniformly from
    ``rng``, and an integer is used as given.
    """
    pts = _as_coords(coords)
    n = pts.shape[0]
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if start == "deterministic":
        first = 0
    elif start == "random":
        if rng is None:
            raise ValueError("start='random' requires an rng")
        first = int(rng.integers(n))
    else:
        first = int(start)
        if not 0 <= first < n:
            raise ValueError(f"start index {first} out of range for n={n}")
    m = max(1, n // stride)
    return _impl().fps(pts, m, first)


@dataclass(frozen=True)
class NeighborIndex:
    """Grouped neighborhoods around centroids.

    ``neighbor_indices`` is (m, K) into the source cloud and
    ``neighbor_offsets`` holds the relative coordinates neighbor - centroid.
    ``centroid_indices`` is None when the query was given as raw coordinates.
    """

    centroid_indices: np.ndarray | None
    neighbor_indices: np.ndarray
    neighbor_offsets: np.ndarray


def ball_query(coords, centroids, radius: float, k: int) -> NeighborIndex:
    """Up to ``k`` source points within ``radius`` of each centroid.

    Neighbors are collected in ascending source-index order; rows with
    fewer than ``k`` hits repeat the first hit (when a centroid is a source
    point it matches itself at distance 0, so rows are never degenerate).
    ``centroids`` may be an integer index array into ``coords`` or an
    (m, 3) float array of query positions.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pts = _as_coords(coords)
    centroids = np.asarray(centroids)
    if np.issubdtype(centroids.dtype, np.integer):
        centroid_indices = centroids.astype(np.int64)
        queries = pts[centroid_indices]
    else:
        centroid_indices = None
        queries = np.ascontiguousarray(centroids, dtype=np.float64)
    nb = _impl().ball_query(pts, queries, float(radius), int(k))
    offsets = pts[nb] - queries[:, None, :]
    return NeighborIndex(centroid_indices, nb, offsets)


def knn(coords, query_coords, k: int):
    """Exact k nearest source points per query; ties go to the lower index.

    Returns ``(indices, distances)`` with distances ascending per row.
    """
    pts = _as_coords(coords)
    queries = np.ascontiguousarray(
        getattr(query_coords, "coords", query_coords), dtype=np.float64
    )
    if k < 1 or k > pts.shape[0]:
        raise ValueError(f"k={k} out of range for {pts.shape[0]} source points")
    return _impl().knn(pts, queries, int(k))


@dataclass(frozen=True)
class VoxelGrid:
    """Partition of point indices into axis-aligned cubic cells.

    Cells are stored sorted by lexicographic cell key; members within a
    cell are ascending point indices. ``cells`` materializes the mapping
    key -> member indices on demand.
    """

    voxel_size: float
    cell_keys: np.ndarray  # (n_cells, 3) int64, lexicographically sorted
    offsets: np.ndarray  # (n_cells + 1,) member slice boundaries
    members: np.ndarray  # (n,) point indices grouped per cell

    @property
    def n_cells(self) -> int:
        return self.cell_keys.shape[0]

    @property
    def occupancies(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def max_occupancy(self) -> int:
        return int(self.occupancies.max())

    @property
    def cells(self) -> dict:
        out = {}
        for i in range(self.n_cells):
            key = tuple(int(v) for v in self.cell_keys[i])
            out[key] = self.members[self.offsets[i] : self.offsets[i + 1]]
        return out


def build_voxel_grid(cloud, voxel_size: float) -> VoxelGrid:
    """Quantize points into cells keyed by componentwise floor(coord / size)."""
    if voxel_size <= 0:
        raise ValueError(f"voxel_size must be positive, got {voxel_size}")
    pts = _as_coords(cloud)
    if not np.isfinite(pts).all():
        raise ValueError("non-finite coordinates cannot be voxelized")
    keys = np.floor(pts / float(voxel_size)).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    new_cell = np.ones(len(order), dtype=bool)
    if len(order) > 1:
        new_cell[1:] = (sorted_keys[1:] != sorted_keys[:-1]).any(axis=1)
    starts = np.flatnonzero(new_cell)
    offsets = np.append(starts, len(order))
    return VoxelGrid(
        voxel_size=float(voxel_size),
        cell_keys=sorted_keys[starts],
        offsets=offsets,
        members=order.astype(np.int64),
    )


def sample_train_subcloud(grid: VoxelGrid, sample_size: int, rng) -> np.ndarray:
    """Fixed-size training sample: one random member per cell, then resized.

    More cells than ``sample_size``: keep a uniform subset of cells.
    Fewer: pad by resampling (with replacement) from the per-cell picks,
    so every surviving cell stays represented.
    """
    if sample_size < 1:
        raise ValueError(f"sample_size must be >= 1, got {sample_size}")
    occ = grid.occupancies
    picks = grid.members[grid.offsets[:-1] + rng.integers(0, occ)]
    if grid.n_cells > sample_size:
        keep = rng.choice(grid.n_cells, size=sample_size, replace=False)
        return picks[keep]
    if grid.n_cells < sample_size:
        extra = picks[rng.integers(0, grid.n_cells, size=sample_size - grid.n_cells)]
        return np.concatenate([picks, extra])
    return picks


def enumerate_test_subclouds(grid: VoxelGrid) -> list[np.ndarray]:
    """Exhaustive test-time sub-clouds, one point per cell each.

    Sub-cloud t takes each cell's member at position t mod occupancy, so
    exactly ``max_occupancy`` sub-clouds cover every point at least once.
    """
    occ = grid.occupancies
    starts = grid.offsets[:-1]
    return [
        grid.members[starts + (t % occ)] for t in range(grid.max_occupancy)
    ]


def inverse_distance_interpolate(
    source_coords, source_features, target_coords, k: int = 3, eps: float = 1e-8
) -> np.ndarray:
    """Inverse-distance weighted k-NN interpolation of features onto targets.

    Weights 1 / (d + eps) are normalized to sum to 1, so the result is an
    affine combination of source features; a target coinciding with a
    source point recovers that source's feature up to the eps guard.
    """
    feats = np.asarray(source_features)
    idx, dist = knn(source_coords, target_coords, k)
    w = 1.0 / (dist + eps)
    w /= w.sum(axis=1, keepdims=True)
    return (feats[idx] * w[:, :, None].astype(feats.dtype)).sum(axis=1)


def scatter_add_rows(target: np.ndarray, rows: np.ndarray, values: np.ndarray):
    """In-place target[rows[i]] += values[i] with duplicates accumulated."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    values = np.ascontiguousarray(values)
    if active_backend() == "numba" and target.dtype == values.dtype:
        _impl().scatter_add_rows(target, rows, values)
    else:
        _kernels_numpy.scatter_add_rows(target, rows, values)
    return target


def fnv1a64(data) -> int:
    """64-bit FNV-1a checksum of a byte payload."""
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    if active_backend() == "numba":
        return int(_impl().fnv1a64(buf))
    return _kernels_numpy.fnv1a64(buf)
