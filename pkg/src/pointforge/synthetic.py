"""Procedural labeled toy buildings and matching synthetic embeddings.

Buildings are boxes with parameterized footprints: ground plane, four
walls with window patches and a door, a gable or flat roof, and an
optional corner tower. Points are sampled on surfaces proportionally to
area, carry analytic normals and a part-correlated color palette, and are
normalized into the [-0.5, 0.5] cube with y up. Every generated point
gets exactly one part label except a configurable unspecified fraction.

The embedding generator produces per-building text/image rows clustered
around per-class directions whose spread is a single separation knob:
separation 0 collapses every class onto one direction (the negative
control for alignment experiments).
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .data import (
    BUILDING_TYPES,
    SEGMENTATION_PARTS,
    DatasetSplit,
    PointCloud,
    save_point_cloud,
    save_split_manifest,
)
from .ulip import EmbeddingTriplet, save_class_prompts, save_embedding_triplet

PART_INDEX = {name: i for i, name in enumerate(SEGMENTATION_PARTS)}
TYPE_INDEX = {name: i for i, name in enumerate(BUILDING_TYPES)}

_PALETTE = {
    "wall": (0.74, 0.70, 0.62),
    "window": (0.28, 0.45, 0.82),
    "roof": (0.64, 0.28, 0.20),
    "door": (0.42, 0.26, 0.14),
    # towers are built from the same masonry as walls: color never
    # separates them, only geometric context does
    "tower": (0.74, 0.70, 0.62),
    "ground": (0.36, 0.46, 0.30),
}

COLOR_NOISE_SIGMA = 0.04
BUILDING_TINT_SIGMA = 0.05  # whole-building hue shift; colors are cues, not labels


@dataclass(frozen=True)
class TypeRule:
    """Structural parameters for one building type."""

    subclass: str
    class_prefix: str
    roof: str  # "gable" | "flat"
    tower: bool
    width: tuple  # footprint extent range along x
    aspect: tuple  # depth = width * aspect
    height: tuple  # wall (eave) height range
    roof_rise: tuple = (0.25, 0.45)  # gable ridge rise as a fraction of height

    def __post_init__(self):
        if self.roof not in ("gable", "flat"):
            raise ValueError(f"unknown roof kind {self.roof!r}")


DEFAULT_TYPE_RULES = (
    TypeRule("house", "RESIDENTIAL", roof="gable", tower=False,
             width=(8.0, 11.0), aspect=(0.7, 0.9), height=(3.0, 4.5)),
    TypeRule("office_building", "COMMERCIAL", roof="flat", tower=False,
             width=(6.0, 8.0), aspect=(0.9, 1.1), height=(14.0, 20.0)),
    TypeRule("church", "RELIGIOUS", roof="gable", tower=True,
             width=(7.0, 9.0), aspect=(1.6, 2.1), height=(6.0, 8.0)),
    TypeRule("castle", "HISTORICAL", roof="flat", tower=True,
             width=(14.0, 18.0), aspect=(0.9, 1.1), height=(7.0, 9.0)),
)


@dataclass(frozen=True)
class GeneratorSpec:
    type_rules: tuple = DEFAULT_TYPE_RULES
    part_vocab: tuple = ("wall", "window", "roof", "door", "tower", "ground")
    points_per_building: int = 4096
    unspecified_fraction: float = 0.02
    noise_sigma: float = 0.01  # surface roughness, pre-normalization units
    window_density: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for required in ("wall", "roof", "ground", "window"):
            if required not in self.part_vocab:
                raise ValueError(f"part vocabulary must include {required!r}")
        unknown = [p for p in self.part_vocab if p not in PART_INDEX]
        if unknown:
            raise ValueError(f"unknown part names {unknown}")
        for rule in self.type_rules:
            subclass_name = rule.subclass.replace("_", " ")
            if subclass_name not in TYPE_INDEX:
                raise ValueError(f"unknown building type {subclass_name!r}")
        if not 0 <= self.unspecified_fraction < 1:
            raise ValueError("unspecified_fraction must lie in [0, 1)")
        if self.points_per_building < 16:
            raise ValueError("points_per_building too small")

    @property
    def type_names(self):
        return tuple(r.subclass.replace("_", " ") for r in self.type_rules)

    @property
    def type_labels(self):
        return tuple(TYPE_INDEX[name] for name in self.type_names)


@dataclass
class _Surface:
    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    normal: np.ndarray
    part: str

    @property
    def area(self) -> float:
        return float(np.linalg.norm(np.cross(self.u, self.v)))


def _box_walls(w, d, h, part="wall", x0=0.0, z0=0.0, y0=0.0):
    """Four vertical rectangles around footprint (w, d) starting at y0."""
    hw, hd = w / 2.0, d / 2.0
    ex = np.array([1.0, 0, 0])
    ey = np.array([0, 1.0, 0])
    ez = np.array([0, 0, 1.0])
    return [
        _Surface(np.array([x0 - hw, y0, z0 + hd]), ex * w, ey * h, ez, part),
        _Surface(np.array([x0 - hw, y0, z0 - hd]), ex * w, ey * h, -ez, part),
        _Surface(np.array([x0 - hw, y0, z0 - hd]), ez * d, ey * h, -ex, part),
        _Surface(np.array([x0 + hw, y0, z0 - hd]), ez * d, ey * h, ex, part),
    ]


def _window_patches(w, d, h, rng, density):
    """Outward-offset window rectangles tiled over the walls.

    Each wall is divided into a grid of cells ~3 units on a side; a window
    covers about a third of its cell, so windows hold a healthy share of
    the wall's surface area at any building size.
    """
    patches = []
    rows = max(1, round(h / 3.0 * density))
    eps = 0.05
    for sign, axis in ((1, "z"), (-1, "z"), (1, "x"), (-1, "x")):
        span = w if axis == "z" else d
        cols = max(1, round(span / 3.0 * density))
        half_y = 0.30 * h / rows
        half_s = 0.28 * span / cols
        for r in range(rows):
            for c in range(cols):
                cy = (r + 0.5) / rows * h
                cs = ((c + 0.5) / cols - 0.5) * span
                if axis == "z":
                    origin = np.array([cs - half_s, cy - half_y, sign * (d / 2 + eps)])
                    u = np.array([2 * half_s, 0, 0])
                    normal = np.array([0.0, 0, sign])
                else:
                    origin = np.array([sign * (w / 2 + eps), cy - half_y, cs - half_s])
                    u = np.array([0, 0, 2 * half_s])
                    normal = np.array([float(sign), 0, 0])
                v = np.array([0, 2 * half_y, 0])
                patches.append(_Surface(origin, u, v, normal, "window"))
    return patches


def _build_surfaces(rule: TypeRule, spec: GeneratorSpec, rng) -> tuple[list, dict]:
    w = rng.uniform(*rule.width)
    d = w * rng.uniform(*rule.aspect)
    h = rng.uniform(*rule.height)
    surfaces = []
    ground_span = max(w, d) * 1.25
    surfaces.append(
        _Surface(
            np.array([-ground_span / 2, 0.0, -ground_span / 2]),
            np.array([ground_span, 0, 0]),
            np.array([0, 0, ground_span]),
            np.array([0, 1.0, 0]),
            "ground",
        )
    )
    surfaces += _box_walls(w, d, h)
    if "window" in spec.part_vocab:
        surfaces += _window_patches(w, d, h, rng, spec.window_density)
    if "door" in spec.part_vocab:
        door_h = min(3.4, 0.8 * h)
        for sign, axis in ((1, "z"), (-1, "z"), (1, "x"), (-1, "x")):
            span = w if axis == "z" else d
            face_depth = d if axis == "z" else w
            door_w = min(3.2, 0.4 * span)
            if axis == "z":
                origin = np.array([-door_w / 2, 0.0, sign * (face_depth / 2 + 0.05)])
                u = np.array([door_w, 0, 0])
                normal = np.array([0.0, 0, sign])
            else:
                origin = np.array([sign * (face_depth / 2 + 0.05), 0.0, -door_w / 2])
                u = np.array([0, 0, door_w])
                normal = np.array([float(sign), 0, 0])
            surfaces.append(
                _Surface(origin, u, np.array([0, door_h, 0]), normal, "door")
            )
    if rule.roof == "flat":
        surfaces.append(
            _Surface(
                np.array([-w / 2, h, -d / 2]),
                np.array([w, 0, 0]),
                np.array([0, 0, d]),
                np.array([0, 1.0, 0]),
                "roof",
            )
        )
        ridge = h
    else:
        rise = h * rng.uniform(*rule.roof_rise)
        ridge = h + rise
        for sign in (1, -1):
            # slope from the eave line z = sign*d/2 at y=h up to the ridge z=0
            origin = np.array([-w / 2, h, sign * d / 2])
            u = np.array([w, 0, 0])
            v = np.array([0, rise, -sign * d / 2])
            normal = np.cross(u, v) if sign > 0 else np.cross(v, u)
            normal = normal / np.linalg.norm(normal)
            if normal[1] < 0:
                normal = -normal
            surfaces.append(_Surface(origin, u, v, normal, "roof"))
    if rule.tower and "tower" in spec.part_vocab:
        tw = 0.35 * min(w, d)
        tx, tz = w / 2 - tw / 2, d / 2 - tw / 2
        th = ridge + 0.8 * h
        surfaces += _box_walls(tw, tw, th, part="tower", x0=tx, z0=tz)
        surfaces.append(
            _Surface(
                np.array([tx - tw / 2, th, tz - tw / 2]),
                np.array([tw, 0, 0]),
                np.array([0, 0, tw]),
                np.array([0, 1.0, 0]),
                "tower",
            )
        )
    bookkeeping = {"eave_height": h, "ridge_height": ridge, "width": w, "depth": d}
    return surfaces, bookkeeping


def generate_building(spec: GeneratorSpec, type_index: int, rng, sequence: int = 0):
    """One labeled building of the given type (index into spec.type_rules).

    Returns (PointCloud, bookkeeping dict). Deterministic given the rng
    state; colors are palette + Gaussian noise, clipped to [0, 1].
    """
    if not 0 <= type_index < len(spec.type_rules):
        raise ValueError(f"type index {type_index} outside the generator vocabulary")
    rule = spec.type_rules[type_index]
    surfaces, bookkeeping = _build_surfaces(rule, spec, rng)
    areas = np.array([s.area for s in surfaces])
    if (areas <= 0).any():
        raise ValueError("degenerate surface with zero area")
    counts = rng.multinomial(spec.points_per_building, areas / areas.sum())
    coords, normals, labels = [], [], []
    for surface, count in zip(surfaces, counts):
        if count == 0:
            continue
        uv = rng.random((count, 2))
        pts = surface.origin + uv[:, :1] * surface.u + uv[:, 1:] * surface.v
        coords.append(pts)
        normals.append(np.tile(surface.normal, (count, 1)))
        labels.append(np.full(count, PART_INDEX[surface.part], dtype=np.int32))
    coords = np.concatenate(coords)
    normals = np.concatenate(normals)
    labels = np.concatenate(labels)
    if spec.noise_sigma > 0:
        coords = coords + rng.normal(0.0, spec.noise_sigma, coords.shape)
    if spec.unspecified_fraction > 0:
        drop = rng.random(len(labels)) < spec.unspecified_fraction
        labels = np.where(drop, 0, labels)
    palette = np.array([_PALETTE[SEGMENTATION_PARTS[l]] if l else (0.5, 0.5, 0.5) for l in labels])
    tint = rng.normal(0.0, BUILDING_TINT_SIGMA, 3)
    colors = np.clip(
        palette + tint + rng.normal(0.0, COLOR_NOISE_SIGMA, palette.shape), 0.0, 1.0
    )
    # normalize into [-0.5, 0.5] preserving aspect, y stays up
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    center = (lo + hi) / 2.0
    scale = 1.0 / max(float((hi - lo).max()), 1e-9)
    coords = (coords - center) * scale
    bookkeeping = dict(
        bookkeeping,
        scale=scale,
        center=center.tolist(),
        label_counts={int(c): int(n) for c, n in enumerate(np.bincount(labels, minlength=32)) if n},
    )
    name = f"{rule.class_prefix}{rule.subclass}_mesh{sequence:04d}"
    cloud = PointCloud(
        coords=coords,
        normals=normals,
        colors=colors,
        seg_labels=labels,
        type_label=TYPE_INDEX[rule.subclass.replace("_", " ")],
        name=name,
    )
    return cloud, bookkeeping


def generate_dataset(spec: GeneratorSpec, counts: dict, out_dir) -> dict:
    """Write point-cloud files, manifests, and bookkeeping for all splits.

    ``counts`` maps split name to the number of buildings; types rotate
    round-robin so splits stay balanced. Returns {split_name: DatasetSplit}.
    Ground-truth label counts land in gen_counts.json for verification.
    """
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    splits = {}
    gen_counts = {}
    sequence = 0
    for split_name in ("train", "val", "test"):
        if split_name not in counts:
            continue
        count = counts[split_name]
        if count < 1:
            raise ValueError(f"{split_name}: need at least one building")
        split_dir = os.path.join(out_dir, split_name)
        os.makedirs(split_dir, exist_ok=True)
        entries = []
        seg_counts = np.zeros(32, dtype=np.int64)
        type_counts = np.zeros(len(BUILDING_TYPES), dtype=np.int64)
        for i in range(count):
            type_index = i % len(spec.type_rules)
            cloud_rng = np.random.default_rng(
                np.random.SeedSequence([spec.seed, sequence]).generate_state(4)
            )
            cloud, _ = generate_building(spec, type_index, cloud_rng, sequence=sequence)
            path = os.path.join(split_dir, cloud.name + ".pcloud")
            save_point_cloud(cloud, path)
            entries.append(os.path.join(split_name, cloud.name + ".pcloud"))
            seg_counts += np.bincount(cloud.seg_labels, minlength=32)
            type_counts[cloud.type_label] += 1
            sequence += 1
        split = DatasetSplit(split_name, tuple(entries))
        save_split_manifest(split, os.path.join(out_dir, f"{split_name}.txt"))
        splits[split_name] = split
        gen_counts[split_name] = {
            "seg": {str(c): int(n) for c, n in enumerate(seg_counts) if n},
            "type": {str(c): int(n) for c, n in enumerate(type_counts) if n},
        }
    with open(os.path.join(out_dir, "gen_counts.json"), "w", encoding="utf-8") as fh:
        json.dump(gen_counts, fh, indent=2, sort_keys=True)
    return splits


def class_directions(num_classes: int, dim: int, separation: float, rng) -> np.ndarray:
    """Unit class means whose pairwise spread grows with ``separation``."""
    common = rng.standard_normal(dim)
    common /= np.linalg.norm(common)
    means = np.empty((num_classes, dim))
    for c in range(num_classes):
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        mean = common + separation * direction
        means[c] = mean / np.linalg.norm(mean)
    return means


def generate_embeddings(
    spec: GeneratorSpec,
    buildings,
    out_dir,
    dim: int = 32,
    separation: float = 4.0,
    row_jitter: float = 0.05,
    text_rows: int = 64,
    image_rows: int = 16,
    rng=None,
) -> str:
    """Synthetic embedding triplets plus the class-prompt file.

    ``buildings`` is a sequence of (name, type_label) pairs, typically the
    generated dataset's clouds. Rows are the building's class mean plus
    Gaussian jitter, re-normalized. Returns the class-prompt file path.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed + 1)
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    means = class_directions(len(spec.type_rules), dim, separation, rng)
    label_to_row = {label: i for i, label in enumerate(spec.type_labels)}

    def rows(mean, count):
        noisy = mean + row_jitter * rng.standard_normal((count, dim))
        return (noisy / np.linalg.norm(noisy, axis=1, keepdims=True)).astype(np.float32)

    for name, type_label in buildings:
        mean = means[label_to_row[type_label]]
        triplet = EmbeddingTriplet(
            name=name,
            text_embeddings=rows(mean, text_rows),
            image_embeddings=rows(mean, image_rows),
        )
        save_embedding_triplet(triplet, os.path.join(out_dir, name + ".pfemb"))
    prompt_path = os.path.join(out_dir, "class_prompts.pfcls")
    save_class_prompts(spec.type_names, means.astype(np.float32), prompt_path)
    return prompt_path
