"""Hierarchical point-set encoder/decoder and task heads.

The encoder stacks set-abstraction stages (farthest point sampling, ball
query grouping, shared MLP, max reduction) with inverted-residual MLP
blocks at each scale; stage radii double per stage. The segmentation
decoder mirrors the encoder with feature-propagation blocks (inverse
distance k-NN interpolation fused with skip features); the classification
head consumes the max-pooled global feature. All heads can share one
backbone for multi-task training.

Geometry (sampling indices, neighbor sets, interpolation weights) is
computed with the kernels module and enters the autodiff graph as
constants; only features carry gradients.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .data import NUM_BUILDING_TYPES, NUM_PART_CLASSES
from .nn import BatchNorm, Dense, Module, load_into_module


@dataclass(frozen=True)
class StageSpec:
    stride: int
    radius: float
    neighbors: int
    blocks: int
    width: int

    def __post_init__(self):
        if self.stride < 1 or self.neighbors < 1 or self.blocks < 0:
            raise ValueError(f"invalid stage spec {self}")
        if self.radius <= 0 or self.width < 1:
            raise ValueError(f"invalid stage spec {self}")


@dataclass(frozen=True)
class HeadSpec:
    kind: str  # "classification" | "segmentation" | "multitask" | "encoder"
    num_types: int = NUM_BUILDING_TYPES
    num_parts: int = NUM_PART_CLASSES
    fc_widths: tuple = (512, 256)
    dropout: float = 0.5

    def __post_init__(self):
        if self.kind not in ("classification", "segmentation", "multitask", "encoder"):
            raise ValueError(f"unknown head kind {self.kind!r}")

    @property
    def wants_cls(self):
        return self.kind in ("classification", "multitask")

    @property
    def wants_seg(self):
        return self.kind in ("segmentation", "multitask")


@dataclass(frozen=True)
class ModelConfig:
    input_channels: int
    stem_width: int
    stages: tuple
    expansion: int
    head: HeadSpec
    preset: str = "custom"

    def __post_init__(self):
        radii = [s.radius for s in self.stages]
        if any(b > a for a, b in zip(radii[1:], radii[:-1])):
            raise ValueError(f"stage radii must be non-decreasing, got {radii}")
        if self.input_channels < 1 or self.stem_width < 1 or self.expansion < 1:
            raise ValueError("invalid model config")

    @property
    def encoder_width(self) -> int:
        return self.stages[-1].width


def stage_radii(base_radius: float, num_stages: int) -> list:
    """Doubling radius policy: r, 2r, 4r, ..."""
    return [base_radius * (2.0**i) for i in range(num_stages)]


# Named scaling presets. Widths/depths follow the PointNeXt family; the
# tiny preset exists for tests and desk-scale runs. Stride profiles: the
# classification variant downsamples less aggressively in stage 1.
PRESETS = {
    "tiny": dict(
        stem_width=16,
        widths=(16, 32),
        blocks=(1, 1),
        neighbors=(12, 12),
        expansion=4,
        fc_widths=(64, 32),
        strides={"seg": (4, 4), "cls": (2, 4)},
    ),
    "s": dict(
        stem_width=32,
        widths=(64, 128, 256, 512),
        blocks=(1, 1, 1, 1),
        neighbors=(32, 32, 32, 32),
        expansion=4,
        fc_widths=(512, 256),
        strides={"seg": (4, 4, 4, 4), "cls": (2, 4, 4, 4)},
    ),
    "xl": dict(
        stem_width=64,
        widths=(128, 256, 512, 1024),
        blocks=(4, 8, 4, 4),
        neighbors=(32, 32, 32, 32),
        expansion=4,
        fc_widths=(512, 256),
        strides={"seg": (4, 4, 4, 4), "cls": (2, 4, 4, 4)},
    ),
}


def make_config(
    preset: str,
    task: str,
    input_channels: int = 10,
    base_radius: float = 0.05,
    num_types: int = NUM_BUILDING_TYPES,
    num_parts: int = NUM_PART_CLASSES,
    stride_profile: str | None = None,
) -> ModelConfig:
    """Instantiate a preset for a task.

    ``stride_profile`` picks the encoder stride layout ("cls" or "seg");
    by default classification uses "cls" and everything else "seg", but
    classification models can be built on the segmentation backbone for
    transfer and multi-task comparisons.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
    p = PRESETS[preset]
    if stride_profile is None:
        stride_profile = "cls" if task == "classification" else "seg"
    strides = p["strides"][stride_profile]
    radii = stage_radii(base_radius, len(strides))
    stages = tuple(
        StageSpec(stride=s, radius=r, neighbors=k, blocks=b, width=w)
        for s, r, k, b, w in zip(strides, radii, p["neighbors"], p["blocks"], p["widths"])
    )
    head = HeadSpec(
        kind="encoder" if task == "ulip_pretrain" else task,
        num_types=num_types,
        num_parts=num_parts,
        fc_widths=p["fc_widths"],
    )
    return ModelConfig(
        input_channels=input_channels,
        stem_width=p["stem_width"],
        stages=stages,
        expansion=p["expansion"],
        head=head,
        preset=preset,
    )


def _group(coords: np.ndarray, centroid_idx: np.ndarray, feats: Tensor, radius, k):
    """Gather neighbor features and relative offsets around centroids.

    Returns (grouped Tensor (B, m, K, C+3), centroid coords (B, m, 3)).
    """
    b, n, _ = coords.shape
    nb = np.empty((b, centroid_idx.shape[1], k), dtype=np.int64)
    for i in range(b):
        nb[i] = kernels.ball_query(coords[i], centroid_idx[i], radius, k).neighbor_indices
    batch = np.arange(b)[:, None, None]
    centroids = coords[np.arange(b)[:, None], centroid_idx]
    offsets = coords[batch, nb] - centroids[:, :, None, :]
    gathered = ad.gather_points(feats, nb)
    offsets_t = Tensor(offsets.astype(feats.data.dtype))
    return ad.concat([offsets_t, gathered], axis=-1), centroids


class SetAbstraction(Module):
    """Downsample by FPS, group in-radius neighbors, shared MLP, max-reduce."""

    def __init__(self, in_ch, out_ch, stride, radius, neighbors):
        self.stride = stride
        self.radius = radius
        self.neighbors = neighbors
        self.mlp = Dense(in_ch + 3, out_ch, bias=False)
        self.norm = BatchNorm(out_ch)

    def __call__(self, coords, feats, training, rng):
        b, n, _ = coords.shape
        start = "deterministic" if rng is None else "random"
        idx = np.empty((b, max(1, n // self.stride)), dtype=np.int64)
        for i in range(b):
            idx[i] = kernels.farthest_point_sampling(
                coords[i], self.stride, start=start, rng=rng
            )
        grouped, centroids = _group(coords, idx, feats, self.radius, self.neighbors)
        h = ad.relu(self.norm(self.mlp(grouped), training))
        out, _ = ad.max_reduce(h, axis=2)
        return centroids, out, idx


class InvResMLP(Module):
    """Inverted-residual block: grouped MLP + max, expanded pointwise MLPs,
    and a shortcut (linear projection when widths differ)."""

    def __init__(self, width, radius, neighbors, expansion):
        self.radius = radius
        self.neighbors = neighbors
        self.grouped = Dense(width + 3, width, bias=False)
        self.norm1 = BatchNorm(width)
        self.expand = Dense(width, expansion * width, bias=False)
        self.norm2 = BatchNorm(expansion * width)
        self.project = Dense(expansion * width, width, bias=False)
        self.norm3 = BatchNorm(width)

    def __call__(self, coords, feats, training):
        b, m, _ = coords.shape
        all_idx = np.broadcast_to(np.arange(m, dtype=np.int64), (b, m))
        grouped, _ = _group(coords, all_idx, feats, self.radius, self.neighbors)
        h = ad.relu(self.norm1(self.grouped(grouped), training))
        h, _ = ad.max_reduce(h, axis=2)
        h = ad.relu(self.norm2(self.expand(h), training))
        h = self.norm3(self.project(h), training)
        return ad.relu(ad.add(h, feats))


class FeaturePropagation(Module):
    """Interpolate coarse features to fine points and fuse with skips."""

    K = 3

    def __init__(self, deep_ch, skip_ch, out_ch):
        self.mlp = Dense(deep_ch + skip_ch, out_ch, bias=False)
        self.norm = BatchNorm(out_ch)

    def __call__(self, deep_coords, deep_feats, fine_coords, skip_feats, training):
        b, nf, _ = fine_coords.shape
        k = min(self.K, deep_coords.shape[1])
        idx = np.empty((b, nf, k), dtype=np.int64)
        dist = np.empty((b, nf, k), dtype=np.float64)
        for i in range(b):
            idx[i], dist[i] = kernels.knn(deep_coords[i], fine_coords[i], k)
        w = 1.0 / (dist + 1e-8)
        w /= w.sum(axis=2, keepdims=True)
        gathered = ad.gather_points(deep_feats, idx)
        w_t = Tensor(w[:, :, :, None].astype(deep_feats.data.dtype))
        interp = ad.reduce_sum(ad.mul(gathered, w_t), axis=2)
        fused = ad.concat([skip_feats, interp], axis=-1)
        return ad.relu(self.norm(self.mlp(fused), training))


@dataclass
class EncoderOutput:
    coords: list  # per level: (B, m_t, 3) numpy
    features: list  # per level: Tensor (B, m_t, C_t)
    indices: list  # per stage: sampled indices into the previous level
    global_feature: Tensor  # (B, C_last) max-pooled


class Encoder(Module):
    def __init__(self, config: ModelConfig):
        self.stem = Dense(config.input_channels, config.stem_width, bias=False)
        self.stem_norm = BatchNorm(config.stem_width)
        stages = []
        blocks = []
        in_ch = config.stem_width
        for spec in config.stages:
            stages.append(
                SetAbstraction(in_ch, spec.width, spec.stride, spec.radius, spec.neighbors)
            )
            blocks.append(
                [
                    InvResMLP(spec.width, spec.radius, spec.neighbors, config.expansion)
                    for _ in range(spec.blocks)
                ]
            )
            in_ch = spec.width
        self.stages = stages
        self.block_lists = [blk for lst in blocks for blk in lst]  # flat for registration
        self._block_layout = [len(lst) for lst in blocks]

    def _stage_blocks(self, stage_i):
        lo = sum(self._block_layout[:stage_i])
        return self.block_lists[lo : lo + self._block_layout[stage_i]]

    def __call__(self, coords, feats, training, rng):
        h = ad.relu(self.stem_norm(self.stem(feats), training))
        level_coords = [coords]
        level_feats = [h]
        indices = []
        for si, stage in enumerate(self.stages):
            coords, h, idx = stage(level_coords[-1], level_feats[-1], training, rng)
            for block in self._stage_blocks(si):
                h = block(coords, h, training)
            level_coords.append(coords)
            level_feats.append(h)
            indices.append(idx)
        global_feature, _ = ad.max_reduce(level_feats[-1], axis=1)
        return EncoderOutput(level_coords, level_feats, indices, global_feature)


class Decoder(Module):
    def __init__(self, config: ModelConfig):
        widths = [config.stem_width] + [s.width for s in config.stages]
        fps = []
        for lvl in range(len(config.stages), 0, -1):
            fps.append(FeaturePropagation(widths[lvl], widths[lvl - 1], widths[lvl - 1]))
        self.fps = fps

    def __call__(self, encoded: EncoderOutput, training):
        levels = len(encoded.coords) - 1
        h = encoded.features[-1]
        for step, fp in enumerate(self.fps):
            lvl = levels - step  # propagate from lvl down to lvl - 1
            h = fp(
                encoded.coords[lvl],
                h,
                encoded.coords[lvl - 1],
                encoded.features[lvl - 1],
                training,
            )
        return h


class ClassificationHead(Module):
    def __init__(self, in_ch, fc_widths, num_types, dropout):
        self.dropout = dropout
        layers = []
        norms = []
        for w in fc_widths:
            layers.append(Dense(in_ch, w, bias=False))
            norms.append(BatchNorm(w))
            in_ch = w
        self.layers = layers
        self.norms = norms
        self.out = Dense(in_ch, num_types)

    def __call__(self, x, training, rng):
        for dense_l, norm in zip(self.layers, self.norms):
            x = ad.relu(norm(dense_l(x), training))
            if rng is not None:
                x = ad.dropout(x, self.dropout, rng, training)
        return self.out(x)


class SegmentationHead(Module):
    def __init__(self, in_ch, num_parts):
        self.hidden = Dense(in_ch, in_ch, bias=False)
        self.norm = BatchNorm(in_ch)
        self.out = Dense(in_ch, num_parts)

    def __call__(self, x, training):
        return self.out(ad.relu(self.norm(self.hidden(x), training)))


@dataclass
class ModelOutput:
    cls_logits: Tensor | None
    seg_logits: Tensor | None
    global_feature: Tensor
    encoded: EncoderOutput


class MultiTaskPointModel(Module):
    """Shared encoder with optional classification and segmentation heads.

    Segmentation logits score the ``num_parts`` labeled classes only; the
    unspecified class is never predicted, so logit channel c corresponds
    to part label c + 1.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.encoder = Encoder(config)
        if config.head.wants_seg:
            self.decoder = Decoder(config)
            self.seg_head = SegmentationHead(config.stem_width, config.head.num_parts)
        if config.head.wants_cls:
            self.cls_head = ClassificationHead(
                config.encoder_width,
                config.head.fc_widths,
                config.head.num_types,
                config.head.dropout,
            )

    def forward(
        self,
        coords: np.ndarray,
        feats,
        training: bool = False,
        rng=None,
        run_cls: bool = True,
        run_seg: bool = True,
    ) -> ModelOutput:
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 3:
            raise ValueError("coords must be (B, n, 3)")
        feats = feats if isinstance(feats, Tensor) else Tensor(np.asarray(feats))
        if feats.data.shape[-1] != self.config.input_channels:
            raise ValueError(
                f"feature width {feats.data.shape[-1]} != configured "
                f"{self.config.input_channels}"
            )
        encoded = self.encoder(coords, feats, training, rng)
        cls_logits = None
        seg_logits = None
        if run_cls and self.config.head.wants_cls:
            cls_logits = self.cls_head(encoded.global_feature, training, rng)
        if run_seg and self.config.head.wants_seg:
            fine = self.decoder(encoded, training)
            seg_logits = self.seg_head(fine, training)
        return ModelOutput(cls_logits, seg_logits, encoded.global_feature, encoded)


def build_model(config: ModelConfig, seed: int = 0) -> MultiTaskPointModel:
    model = MultiTaskPointModel(config)
    model.initialize(seed)
    return model


def classification_forward(model, coords, feats, training=False, rng=None) -> Tensor:
    out = model.forward(coords, feats, training, rng, run_seg=False)
    if out.cls_logits is None:
        raise ValueError("model has no classification head")
    return out.cls_logits


def segmentation_forward(model, coords, feats, training=False, rng=None) -> Tensor:
    out = model.forward(coords, feats, training, rng, run_cls=False)
    if out.seg_logits is None:
        raise ValueError("model has no segmentation head")
    return out.seg_logits


def multitask_forward(model, coords, feats, training=False, rng=None):
    out = model.forward(coords, feats, training, rng)
    if out.cls_logits is None or out.seg_logits is None:
        raise ValueError("model is not configured for multitask")
    return out.cls_logits, out.seg_logits


def load_checkpoint(model: MultiTaskPointModel, path, strict: bool = True):
    """Load parameters; non-strict loads the matching-name intersection."""
    return load_into_module(model, path, strict=strict)
