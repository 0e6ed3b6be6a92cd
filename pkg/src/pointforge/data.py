"""Labeled point clouds, vocabularies, splits, and their text file formats.

A cloud lives in one ``PCLOUD v1`` text file (header plus whitespace rows)
with an optional ``.meta`` sidecar carrying its name and building-type
label. Splits are manifests with one path per line, resolved relative to
the manifest's directory. Everything here is immutable after construction
and loaders are pure functions, so concurrent loading is safe.
"""

import os
import re
from dataclasses import dataclass, replace

import numpy as np

NUM_PART_CLASSES = 31  # scored segmentation classes; index 0 is "unspecified"
NUM_BUILDING_TYPES = 15

SEGMENTATION_PARTS = (
    "unspecified",
    "wall",
    "window",
    "vehicle",
    "roof",
    "plant",
    "door",
    "tower",
    "furniture",
    "ground",
    "beam",
    "stairs",
    "column",
    "banister",
    "floor",
    "chimney",
    "ceiling",
    "fence",
    "pool",
    "corridor",
    "balcony",
    "garage",
    "dome",
    "road",
    "gate",
    "parapet",
    "buttress",
    "dormer",
    "lighting",
    "arch",
    "awning",
    "shutters",
)

BUILDING_TYPES = (
    "castle",
    "cathedral",
    "church",
    "city hall",
    "factory",
    "hotel building",
    "house",
    "monastery",
    "mosque",
    "museum",
    "office building",
    "palace",
    "school building",
    "temple",
    "villa",
)

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2, 0: 0, 1: 1, 2: 2}


def axis_index(up_axis) -> int:
    try:
        return _AXIS_INDEX[up_axis]
    except KeyError:
        raise ValueError(f"invalid up axis {up_axis!r}; expected x, y, or z") from None


class PointCloudError(ValueError):
    """Malformed point-cloud data or file."""


class NameParseError(ValueError):
    """Building name does not follow the CLASSsubclass convention."""


def _freeze(arr):
    if arr is not None:
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PointCloud:
    """One building as an unordered point set with optional per-point attributes.

    ``coords`` is (n, 3) float32; ``normals`` (n, 3), ``colors`` (n, 3) in
    [0, 1], ``heights`` (n,) nonnegative, and ``seg_labels`` (n,) int32 in
    [0, 31] are optional and must match n when present. ``type_label`` is a
    building-type index in [0, 15). Instances are immutable; transforms
    return new clouds.
    """

    coords: np.ndarray
    normals: np.ndarray | None = None
    colors: np.ndarray | None = None
    heights: np.ndarray | None = None
    seg_labels: np.ndarray | None = None
    type_label: int | None = None
    name: str = ""

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float32)
        if coords.ndim != 2 or coords.shape[1] != 3 or coords.shape[0] < 1:
            raise PointCloudError(f"coords must be (n, 3) with n >= 1, got {coords.shape}")
        if not np.isfinite(coords).all():
            raise PointCloudError("coords contain non-finite values")
        n = coords.shape[0]
        object.__setattr__(self, "coords", _freeze(coords))

        def checked(fieldname, arr, shape, dtype):
            if arr is None:
                return None
            arr = np.array(arr, dtype=dtype)
            if arr.shape != shape:
                raise PointCloudError(
                    f"{fieldname} shape {arr.shape} does not match expected {shape}"
                )
            return arr

        normals = checked("normals", self.normals, (n, 3), np.float32)
        colors = checked("colors", self.colors, (n, 3), np.float32)
        heights = checked("heights", self.heights, (n,), np.float32)
        seg = checked("seg_labels", self.seg_labels, (n,), np.int32)
        if colors is not None and ((colors < 0).any() or (colors > 1).any()):
            raise PointCloudError("colors must lie in [0, 1]")
        if heights is not None and (heights < 0).any():
            raise PointCloudError("heights must be nonnegative")
        if seg is not None and ((seg < 0).any() or (seg > NUM_PART_CLASSES).any()):
            raise PointCloudError(f"seg_labels must lie in [0, {NUM_PART_CLASSES}]")
        if self.type_label is not None and not 0 <= self.type_label < NUM_BUILDING_TYPES:
            raise PointCloudError(f"type_label {self.type_label} out of range")
        object.__setattr__(self, "normals", _freeze(normals))
        object.__setattr__(self, "colors", _freeze(colors))
        object.__setattr__(self, "heights", _freeze(heights))
        object.__setattr__(self, "seg_labels", _freeze(seg))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def with_(self, **updates) -> "PointCloud":
        return replace(self, **updates)

    def take(self, indices: np.ndarray) -> "PointCloud":
        """Sub-cloud at the given point indices (attributes follow along)."""
        pick = lambda a: None if a is None else a[indices]
        return PointCloud(
            coords=self.coords[indices],
            normals=pick(self.normals),
            colors=pick(self.colors),
            heights=pick(self.heights),
            seg_labels=pick(self.seg_labels),
            type_label=self.type_label,
            name=self.name,
        )


@dataclass(frozen=True)
class LabelVocabulary:
    """Ordered class names; ``ignore_index`` is excluded from loss and metrics."""

    names: tuple
    ignore_index: int | None = None

    def __post_init__(self):
        names = tuple(self.names)
        if len(names) == 0 or len(set(names)) != len(names) or any(not n for n in names):
            raise ValueError("vocabulary names must be unique and non-empty")
        if self.ignore_index is not None and not 0 <= self.ignore_index < len(names):
            raise ValueError(f"ignore_index {self.ignore_index} out of range")
        object.__setattr__(self, "names", names)

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


def segmentation_vocabulary() -> LabelVocabulary:
    return LabelVocabulary(SEGMENTATION_PARTS, ignore_index=0)


def building_type_vocabulary() -> LabelVocabulary:
    return LabelVocabulary(BUILDING_TYPES)


@dataclass(frozen=True)
class DatasetSplit:
    split_name: str
    entries: tuple

    def __post_init__(self):
        if self.split_name not in ("train", "val", "test"):
            raise ValueError(f"split_name must be train/val/test, got {self.split_name!r}")
        if len(self.entries) == 0:
            raise ValueError("split entries must be non-empty")
        object.__setattr__(self, "entries", tuple(self.entries))


_NAME_RE = re.compile(r"^([A-Z]+)([a-z][a-z_]*)")


def parse_building_name(name: str) -> tuple[str, str]:
    """Split a building name into (class, subclass).

    The class is the maximal leading run of uppercase letters; the subclass
    is the following run of lowercase letters and underscores, with a
    trailing "_mesh" stripped and underscores mapped to spaces so the result
    matches the building-type vocabulary ("office_building" -> "office
    building").
    """
    m = _NAME_RE.match(name)
    if m is None:
        raise NameParseError(
            f"cannot parse building name {name!r}: expected UPPERCASE class "
            f"prefix followed by a lowercase subclass"
        )
    building_class, subclass = m.group(1), m.group(2)
    if subclass.endswith("_mesh"):
        subclass = subclass[: -len("_mesh")]
    return building_class, subclass.replace("_", " ")


_COLUMNS = ("x", "y", "z", "nx", "ny", "nz", "r", "g", "b", "seg")


def save_point_cloud(cloud: PointCloud, path) -> None:
    cols = ["x", "y", "z"]
    arrays = [cloud.coords]
    if cloud.normals is not None:
        cols += ["nx", "ny", "nz"]
        arrays.append(cloud.normals)
    if cloud.colors is not None:
        cols += ["r", "g", "b"]
        arrays.append(cloud.colors)
    if cloud.seg_labels is not None:
        cols.append("seg")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"PCLOUD v1 n={cloud.n} cols={','.join(cols)}\n")
        floats = np.concatenate(arrays, axis=1)
        seg = cloud.seg_labels
        for i in range(cloud.n):
            row = " ".join(f"{v:.9g}" for v in floats[i])
            if seg is not None:
                row += f" {int(seg[i])}"
            fh.write(row + "\n")
    meta_lines = []
    if cloud.name:
        meta_lines.append(f"name={cloud.name}")
    if cloud.type_label is not None:
        meta_lines.append(f"type_label={cloud.type_label}")
    if meta_lines:
        with open(_meta_path(path), "w", encoding="utf-8") as fh:
            fh.write("\n".join(meta_lines) + "\n")


def _meta_path(path) -> str:
    stem, _ = os.path.splitext(str(path))
    return stem + ".meta"


_HEADER_RE = re.compile(r"^PCLOUD v1 n=(\d+) cols=([a-z,]+)$")


def load_point_cloud(path) -> PointCloud:
    """Read a PCLOUD v1 file (and its .meta sidecar when present)."""
    path = str(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"point cloud file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        m = _HEADER_RE.match(header)
        if m is None:
            raise PointCloudError(f"{path}: bad header {header!r}")
        n = int(m.group(1))
        cols = m.group(2).split(",")
        unknown = [c for c in cols if c not in _COLUMNS]
        if unknown or len(set(cols)) != len(cols):
            raise PointCloudError(f"{path}: invalid column list {cols}")
        if cols[:3] != ["x", "y", "z"]:
            raise PointCloudError(f"{path}: columns must start with x,y,z")
        table = np.empty((n, len(cols)), dtype=np.float64)
        for i in range(n):
            line = fh.readline()
            if not line:
                raise PointCloudError(f"{path}: row {i + 1}: expected {n} rows")
            parts = line.split()
            if len(parts) != len(cols):
                raise PointCloudError(
                    f"{path}: row {i + 1}: {len(parts)} values for {len(cols)} columns"
                )
            try:
                table[i] = [float(p) for p in parts]
            except ValueError as exc:
                raise PointCloudError(f"{path}: row {i + 1}: {exc}") from None
            if not np.isfinite(table[i]).all():
                raise PointCloudError(f"{path}: row {i + 1}: non-finite value")
        if fh.readline().strip():
            raise PointCloudError(f"{path}: trailing data beyond declared {n} rows")

    def col_block(names):
        if all(c in cols for c in names):
            return table[:, [cols.index(c) for c in names]]
        return None

    name, type_label = "", None
    meta = _meta_path(path)
    if os.path.exists(meta):
        with open(meta, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                key, _, value = line.partition("=")
                if key == "name":
                    name = value
                elif key == "type_label":
                    type_label = int(value)
                else:
                    raise PointCloudError(f"{meta}: unknown metadata key {key!r}")
    if not name:
        name = os.path.splitext(os.path.basename(path))[0]

    seg = None
    if "seg" in cols:
        seg_f = table[:, cols.index("seg")]
        if (seg_f != np.round(seg_f)).any():
            raise PointCloudError(f"{path}: seg column must be integer")
        seg = seg_f.astype(np.int32)
    return PointCloud(
        coords=col_block(["x", "y", "z"]),
        normals=col_block(["nx", "ny", "nz"]),
        colors=col_block(["r", "g", "b"]),
        seg_labels=seg,
        type_label=type_label,
        name=name,
    )


def save_split_manifest(split: DatasetSplit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in split.entries:
            fh.write(str(entry) + "\n")


def load_split_manifest(path) -> DatasetSplit:
    path = str(path)
    base = os.path.dirname(os.path.abspath(path))
    split_name = os.path.splitext(os.path.basename(path))[0]
    with open(path, "r", encoding="utf-8") as fh:
        entries = [line.strip() for line in fh if line.strip()]
    resolved = tuple(
        e if os.path.isabs(e) else os.path.join(base, e) for e in entries
    )
    return DatasetSplit(split_name=split_name, entries=resolved)


def compute_heights(cloud: PointCloud, up_axis="y") -> PointCloud:
    """Per-point elevation above the cloud minimum along the up axis."""
    axis = axis_index(up_axis)
    up = cloud.coords[:, axis]
    return cloud.with_(heights=up - up.min())


@dataclass(frozen=True)
class LabelHistogram:
    """Per-class counts; the ignore class is tallied separately."""

    vocab: LabelVocabulary
    counts: np.ndarray
    ignored: int

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def label_histogram(clouds, vocab: LabelVocabulary, task: str) -> LabelHistogram:
    """Count labels over clouds: per-point for segmentation, per-building for
    classification. Labels outside the vocabulary raise, naming the entry."""
    if task not in ("segmentation", "classification"):
        raise ValueError(f"task must be segmentation or classification, got {task!r}")
    counts = np.zeros(len(vocab), dtype=np.int64)
    ignored = 0
    for cloud in clouds:
        if task == "segmentation":
            labels = cloud.seg_labels
            if labels is None:
                raise PointCloudError(f"{cloud.name!r}: missing seg labels")
            if (labels < 0).any() or (labels >= len(vocab)).any():
                raise PointCloudError(f"{cloud.name!r}: seg label outside vocabulary")
            binned = np.bincount(labels, minlength=len(vocab))
        else:
            if cloud.type_label is None:
                raise PointCloudError(f"{cloud.name!r}: missing type label")
            if not 0 <= cloud.type_label < len(vocab):
                raise PointCloudError(f"{cloud.name!r}: type label outside vocabulary")
            binned = np.bincount([cloud.type_label], minlength=len(vocab))
        if vocab.ignore_index is not None:
            ignored += int(binned[vocab.ignore_index])
            binned[vocab.ignore_index] = 0
        counts += binned
    return LabelHistogram(vocab=vocab, counts=counts, ignored=ignored)


def iter_split(split: DatasetSplit):
    """Load each entry of a split lazily."""
    for entry in split.entries:
        yield load_point_cloud(entry)
