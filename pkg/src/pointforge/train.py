"""Experiment driver: training loops, evaluation, and prediction.

Every learning strategy is a TrainConfig combination: task (classification
/ segmentation / multitask / ulip_pretrain), scratch or checkpoint init
(strict or backbone-only), and the multi-task weight beta. Each epoch
makes ``loop_factor`` passes over the training split with fresh
augmentation draws; validation runs at epoch end and the best checkpoint
is kept by the task metric (accuracy, PartIoU, or their harmonic mean).

All randomness is derived from the config seed through named SeedSequence
streams (per entry, per step, per epoch), so runs are reproducible and
two tasks sharing a backbone consume identical streams for the shared
part. That makes the beta endpoints of the multi-task loss reproduce the
single-task trajectories bit for bit.

Test-time inference enumerates the exhaustive voxel sub-clouds and
averages per-point logits over every sub-cloud containing the point.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .augment import POST_VOXELIZE, PRE_VOXELIZE, AugmentConfig, apply_pipeline
from .backend import thread_count
from .data import (
    PointCloud,
    building_type_vocabulary,
    compute_heights,
    label_histogram,
    load_point_cloud,
    load_split_manifest,
    segmentation_vocabulary,
)
from .kernels import build_voxel_grid, enumerate_test_subclouds, sample_train_subcloud
from .losses import inverse_log_frequency_weights
from .metrics import EvalReport, harmonic_mean, overall_accuracy, part_iou, shape_iou
from .model import MultiTaskPointModel, build_model, load_checkpoint, make_config
from .nn import (
    LRSchedule,
    cosine_lr,
    fnv1a64_str,
    make_optimizer,
    parameter_checksum,
    save_checkpoint,
    save_metadata,
)
from .ulip import (
    ProjectionHead,
    load_class_prompts,
    load_embedding_triplet,
    pretrain_step,
    zero_shot_classify,
)

TASKS = ("classification", "segmentation", "multitask", "ulip_pretrain")

FEATURE_CHANNELS = 10  # normals(3) + colors(3) + heights(1) + coords(3)


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; surfaced with the epoch/step location."""


@dataclass(frozen=True)
class TrainConfig:
    task: str = "segmentation"
    preset: str = "tiny"
    stride_profile: str | None = None  # None: by task (cls -> "cls", else "seg")
    epochs: int = 100
    batch_size: int = 8
    base_lr: float = 0.01
    min_lr: float = 0.0
    schedule: str = "cosine"
    optimizer: str = "adam"
    momentum: float = 0.9
    weight_decay: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    beta: float = 0.01
    voxel_size: float = 0.02
    sample_size: int = 12_500
    radius: float = 0.05
    loop_factor: int = 12
    init: str | None = None
    strict: bool = True
    seed: int = 0
    deterministic: bool = False
    up_axis: str = "y"
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    embed_dim: int = 32

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.voxel_size <= 0 or self.radius <= 0 or self.sample_size < 1:
            raise ValueError("voxel_size, radius, sample_size must be positive")
        if self.loop_factor < 1:
            raise ValueError("loop_factor must be >= 1")

    @property
    def lr_schedule(self) -> LRSchedule:
        return LRSchedule(
            base_lr=self.base_lr,
            total_epochs=self.epochs,
            kind=self.schedule,
            min_lr=self.min_lr,
        )

    def hash(self) -> str:
        return f"{fnv1a64_str(repr(self)):016x}"


# Full-scale profile for the xl preset: finer voxels, more samples,
# tighter base radius. Representable here; training it needs real data
# and far more compute than the desk-scale configs.
XL_PROFILE = dict(
    preset="xl", voxel_size=0.01, sample_size=40_000, radius=0.025, epochs=100
)


@dataclass
class LoadedDataset:
    """In-memory splits plus optional embedding sidecars."""

    train: list
    val: list
    test: list = field(default_factory=list)
    embeddings: dict = field(default_factory=dict)
    class_prompt_path: str | None = None


def load_dataset(data_dir) -> LoadedDataset:
    """Load the manifests (and embeddings, when present) under a directory."""
    data_dir = str(data_dir)
    splits = {}
    for name in ("train", "val", "test"):
        manifest = os.path.join(data_dir, f"{name}.txt")
        if os.path.exists(manifest):
            split = load_split_manifest(manifest)
            splits[name] = [load_point_cloud(p) for p in split.entries]
    if "train" not in splits or "val" not in splits:
        raise FileNotFoundError(f"{data_dir}: need train.txt and val.txt manifests")
    embeddings = {}
    prompt_path = None
    emb_dir = os.path.join(data_dir, "embeddings")
    if os.path.isdir(emb_dir):
        for fname in sorted(os.listdir(emb_dir)):
            if fname.endswith(".pfemb"):
                triplet = load_embedding_triplet(os.path.join(emb_dir, fname))
                embeddings[triplet.name] = triplet
        candidate = os.path.join(emb_dir, "class_prompts.pfcls")
        prompt_path = candidate if os.path.exists(candidate) else None
    return LoadedDataset(
        train=splits["train"],
        val=splits["val"],
        test=splits.get("test", []),
        embeddings=embeddings,
        class_prompt_path=prompt_path,
    )


@dataclass(frozen=True)
class LabelMaps:
    """Active label sets: model channels <-> raw dataset label ids."""

    part_ids: tuple  # raw seg ids (subset of 1..31) scored by the model
    type_ids: tuple  # raw building-type ids the classifier scores

    @property
    def part_channel(self):
        return {pid: i for i, pid in enumerate(self.part_ids)}

    @property
    def type_channel(self):
        return {tid: i for i, tid in enumerate(self.type_ids)}


def derive_label_maps(train_clouds) -> LabelMaps:
    """Active parts/types present in the training split, in id order."""
    seg_hist = label_histogram(train_clouds, segmentation_vocabulary(), "segmentation")
    type_hist = label_histogram(train_clouds, building_type_vocabulary(), "classification")
    part_ids = tuple(int(c) for c in np.flatnonzero(seg_hist.counts))
    type_ids = tuple(int(c) for c in np.flatnonzero(type_hist.counts))
    if not part_ids or not type_ids:
        raise ValueError("training split has no labeled parts or types")
    return LabelMaps(part_ids=part_ids, type_ids=type_ids)


def _stream(seed: int, *tags) -> np.random.Generator:
    """Named substream of the run seed."""
    mixed = [seed & 0xFFFFFFFF]
    for tag in tags:
        mixed.append(fnv1a64_str(str(tag)) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(mixed))


def assemble_features(cloud: PointCloud) -> np.ndarray:
    """Per-point feature rows: normals, colors, heights, coords."""
    n = cloud.n
    parts = [
        cloud.normals if cloud.normals is not None else np.zeros((n, 3), np.float32),
        cloud.colors if cloud.colors is not None else np.zeros((n, 3), np.float32),
        cloud.heights[:, None],
        cloud.coords,
    ]
    return np.concatenate(parts, axis=1).astype(np.float32)


def training_sample(cloud: PointCloud, config: TrainConfig, rng) -> PointCloud:
    """Augment, voxelize, and sample one cloud to the configured size."""
    augmented = apply_pipeline(cloud, config.augment, PRE_VOXELIZE, rng)
    grid = build_voxel_grid(augmented.coords, config.voxel_size)
    indices = sample_train_subcloud(grid, config.sample_size, rng)
    sub = augmented.take(indices)
    sub = apply_pipeline(sub, config.augment, POST_VOXELIZE, rng)
    return compute_heights(sub, config.up_axis)


def _batch_arrays(clouds, maps: LabelMaps):
    coords = np.stack([c.coords for c in clouds]).astype(np.float64)
    feats = np.stack([assemble_features(c) for c in clouds])
    part_channel = maps.part_channel
    seg_targets = None
    if all(c.seg_labels is not None for c in clouds):
        seg_targets = np.stack(
            [
                np.array([part_channel.get(int(l), -1) for l in c.seg_labels], dtype=np.int64)
                for c in clouds
            ]
        )
    type_targets = None
    if all(c.type_label is not None for c in clouds):
        type_channel = maps.type_channel
        type_targets = np.array(
            [type_channel.get(c.type_label, -1) for c in clouds], dtype=np.int64
        )
    return coords, feats, seg_targets, type_targets


def _class_weight_arrays(train_clouds, maps: LabelMaps):
    seg_hist = label_histogram(train_clouds, segmentation_vocabulary(), "segmentation")
    seg_weights = inverse_log_frequency_weights(
        [seg_hist.counts[pid] for pid in maps.part_ids]
    ).weights.astype(np.float32)
    type_hist = label_histogram(train_clouds, building_type_vocabulary(), "classification")
    type_weights = inverse_log_frequency_weights(
        [type_hist.counts[tid] for tid in maps.type_ids]
    ).weights.astype(np.float32)
    return seg_weights, type_weights


@dataclass
class HistoryRow:
    epoch: int
    lr: float
    train_loss: float
    val_acc: float
    val_piou: float
    harmonic: float


def save_history(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss", "val_acc", "val_piou", "harmonic"])
        for r in rows:
            writer.writerow(
                [r.epoch, f"{r.lr:.8g}", f"{r.train_loss:.6g}",
                 f"{r.val_acc:.6g}", f"{r.val_piou:.6g}", f"{r.harmonic:.6g}"]
            )


def select_best_epoch(metric_values) -> int:
    """1-based epoch of the best (highest) metric; ties keep the earliest."""
    values = list(metric_values)
    if not values:
        raise ValueError("empty metric history")
    return int(np.argmax(values)) + 1


def _forward_cloud(model, cloud, up_axis):
    sub = compute_heights(cloud, up_axis)
    coords = sub.coords.astype(np.float64)[None]
    feats = assemble_features(sub)[None]
    return model.forward(coords, feats, training=False, rng=None)


def quick_validation(model, clouds, config: TrainConfig, maps: LabelMaps):
    """Cheap per-epoch metrics on the first test sub-cloud of every cloud."""
    seg_preds, seg_truths = [], []
    cls_pred, cls_true = [], []
    for cloud in clouds:
        grid = build_voxel_grid(cloud.coords, config.voxel_size)
        indices = enumerate_test_subclouds(grid)[0]
        out = _forward_cloud(model, cloud.take(indices), config.up_axis)
        if out.seg_logits is not None and cloud.seg_labels is not None:
            channel = np.argmax(out.seg_logits.data[0], axis=1)
            seg_preds.append(np.array([maps.part_ids[c] for c in channel]))
            seg_truths.append(cloud.seg_labels[indices])
        if out.cls_logits is not None and cloud.type_label is not None:
            cls_pred.append(maps.type_ids[int(np.argmax(out.cls_logits.data[0]))])
            cls_true.append(cloud.type_label)
    acc = overall_accuracy(cls_pred, cls_true) if cls_pred else float("nan")
    piou = float("nan")
    if seg_preds:
        _, piou = part_iou(seg_preds, seg_truths, num_classes=32, ignore_index=0)
    hm = harmonic_mean(acc, piou) if cls_pred and seg_preds else float("nan")
    return acc, piou, hm


@dataclass
class TrainResult:
    best_epoch: int
    best_metric: float
    history: list
    best_checkpoint: str
    last_checkpoint: str
    model: MultiTaskPointModel
    label_maps: LabelMaps
    head: ProjectionHead | None = None


def _loss_for_task(config, out, seg_targets, type_targets, seg_w, type_w):
    beta = config.beta
    if config.task == "classification":
        return ad.softmax_cross_entropy(out.cls_logits, type_targets, type_w, ignore_index=-1)
    if config.task == "segmentation":
        return ad.softmax_cross_entropy(out.seg_logits, seg_targets, seg_w, ignore_index=-1)
    # multitask: skip dead branches at the endpoints so the surviving
    # trajectory is bitwise identical to the single-task run
    if beta == 0.0:
        return ad.softmax_cross_entropy(out.seg_logits, seg_targets, seg_w, ignore_index=-1)
    if beta == 1.0:
        return ad.softmax_cross_entropy(out.cls_logits, type_targets, type_w, ignore_index=-1)
    cls_loss = ad.softmax_cross_entropy(out.cls_logits, type_targets, type_w, ignore_index=-1)
    seg_loss = ad.softmax_cross_entropy(out.seg_logits, seg_targets, seg_w, ignore_index=-1)
    return ad.add(ad.mul(cls_loss, beta), ad.mul(seg_loss, 1.0 - beta))


def train(config: TrainConfig, dataset: LoadedDataset, out_dir) -> TrainResult:
    """Run one learning strategy end to end; returns the best checkpoint."""
    os.makedirs(str(out_dir), exist_ok=True)
    if config.task == "ulip_pretrain":
        return _pretrain(config, dataset, out_dir)
    maps = derive_label_maps(dataset.train)
    seg_w, type_w = _class_weight_arrays(dataset.train, maps)
    model_config = make_config(
        config.preset,
        config.task,
        input_channels=FEATURE_CHANNELS,
        base_radius=config.radius,
        num_types=len(maps.type_ids),
        num_parts=len(maps.part_ids),
        stride_profile=config.stride_profile,
    )
    model = build_model(model_config, seed=config.seed)
    if config.init:
        load_checkpoint(model, config.init, strict=config.strict)
    optimizer = make_optimizer(
        config.optimizer,
        model.parameters(),
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
    )
    run_cls = config.task == "classification" or (config.task == "multitask" and config.beta > 0)
    run_seg = config.task == "segmentation" or (config.task == "multitask" and config.beta < 1)
    history = []
    best_metric = -np.inf
    best_epoch = 0
    best_state = None
    for epoch in range(1, config.epochs + 1):
        lr = cosine_lr(config.lr_schedule, epoch - 1)
        losses = []
        for loop_i in range(config.loop_factor):
            order = _stream(config.seed, "order", epoch, loop_i).permutation(len(dataset.train))
            for batch_start in range(0, len(order), config.batch_size):
                batch_ids = order[batch_start : batch_start + config.batch_size]
                samples = [
                    training_sample(
                        dataset.train[i],
                        config,
                        _stream(config.seed, "augment", epoch, loop_i, int(i)),
                    )
                    for i in batch_ids
                ]
                coords, feats, seg_t, type_t = _batch_arrays(samples, maps)
                step_rng = (
                    None
                    if config.deterministic
                    else _stream(config.seed, "step", epoch, loop_i, batch_start)
                )
                model.zero_grad()
                out = model.forward(
                    coords, feats, training=True, rng=step_rng,
                    run_cls=run_cls, run_seg=run_seg,
                )
                loss = _loss_for_task(config, out, seg_t, type_t, seg_w, type_w)
                if not np.isfinite(loss.data):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, "
                        f"loop {loop_i}, step {batch_start // config.batch_size}"
                    )
                loss.backward()
                optimizer.step(lr)
                losses.append(float(loss.data))
        acc, piou, hm = quick_validation(model, dataset.val, config, maps)
        history.append(HistoryRow(epoch, lr, float(np.mean(losses)), acc, piou, hm))
        metric = {"classification": acc, "segmentation": piou, "multitask": hm}[config.task]
        if np.isfinite(metric) and metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
    return _finalize(config, model, None, history, best_epoch, best_metric, best_state, maps, out_dir)


def _finalize(config, model, head, history, best_epoch, best_metric, best_state, maps, out_dir):
    out_dir = str(out_dir)
    last_path = os.path.join(out_dir, "last.ckpt")
    best_path = os.path.join(out_dir, "best.ckpt")
    state = model.state_arrays()
    if head is not None:
        state = dict(state)
        state.update({f"align_head.{k}": v for k, v in head.state_arrays().items()})
    save_checkpoint(state, last_path)
    if best_state is not None:
        save_checkpoint(best_state, best_path)
        # hand back the selected model, not the last-epoch weights
        model.load_state_arrays(
            {k: v for k, v in best_state.items() if not k.startswith("align_head.")}
        )
        if head is not None:
            head.load_state_arrays(
                {
                    k[len("align_head.") :]: v
                    for k, v in best_state.items()
                    if k.startswith("align_head.")
                }
            )
    else:
        best_path = last_path
    save_history(history, os.path.join(out_dir, "history.csv"))
    row = history[best_epoch - 1] if 0 < best_epoch <= len(history) else None
    save_metadata(
        os.path.join(out_dir, "best.meta.json"),
        epoch=best_epoch,
        metric=best_metric if np.isfinite(best_metric) else None,
        val_acc=None if row is None or not np.isfinite(row.val_acc) else row.val_acc,
        val_piou=None if row is None or not np.isfinite(row.val_piou) else row.val_piou,
        harmonic=None if row is None or not np.isfinite(row.harmonic) else row.harmonic,
        config_hash=config.hash(),
        parameter_checksum=f"{parameter_checksum(model):016x}",
        part_ids=list(maps.part_ids),
        type_ids=list(maps.type_ids),
        task=config.task,
        preset=config.preset,
    )
    return TrainResult(
        best_epoch=best_epoch,
        best_metric=float(best_metric),
        history=history,
        best_checkpoint=best_path,
        last_checkpoint=last_path,
        model=model,
        label_maps=maps,
        head=head,
    )


def _pretrain(config: TrainConfig, dataset: LoadedDataset, out_dir) -> TrainResult:
    if not dataset.embeddings:
        raise ValueError("ulip_pretrain needs embedding triplets in the dataset")
    maps = derive_label_maps(dataset.train)
    model_config = make_config(
        config.preset,
        "ulip_pretrain",
        input_channels=FEATURE_CHANNELS,
        base_radius=config.radius,
        stride_profile=config.stride_profile or "seg",
    )
    model = build_model(model_config, seed=config.seed)
    if config.init:
        load_checkpoint(model, config.init, strict=config.strict)
    sample = next(iter(dataset.embeddings.values()))
    head = ProjectionHead(model_config.encoder_width, sample.dim)
    head.initialize(config.seed + 1)
    params = model.parameters() + head.parameters()
    optimizer = make_optimizer(
        config.optimizer, params,
        momentum=config.momentum, weight_decay=config.weight_decay,
        beta1=config.adam_beta1, beta2=config.adam_beta2,
    )
    prompts = None
    if dataset.class_prompt_path:
        prompts = load_class_prompts(dataset.class_prompt_path)
    missing = [c.name for c in dataset.train if c.name not in dataset.embeddings]
    if missing:
        raise ValueError(f"missing embedding triplets for {missing[:3]}...")
    history = []
    best_metric = -np.inf
    best_epoch = 0
    best_state = None
    for epoch in range(1, config.epochs + 1):
        lr = cosine_lr(config.lr_schedule, epoch - 1)
        losses = []
        for loop_i in range(config.loop_factor):
            order = _stream(config.seed, "order", epoch, loop_i).permutation(len(dataset.train))
            for batch_start in range(0, len(order), config.batch_size):
                batch_ids = order[batch_start : batch_start + config.batch_size]
                clouds = [dataset.train[i] for i in batch_ids]
                samples = [
                    training_sample(
                        c, config, _stream(config.seed, "augment", epoch, loop_i, int(i))
                    )
                    for c, i in zip(clouds, batch_ids)
                ]
                coords, feats, _, _ = _batch_arrays(samples, maps)
                triplets = [dataset.embeddings[c.name] for c in clouds]
                step_rng = _stream(config.seed, "step", epoch, loop_i, batch_start)
                loss = pretrain_step(
                    model, head, optimizer, lr, coords, feats, triplets, step_rng
                )
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, "
                        f"loop {loop_i}, step {batch_start // config.batch_size}"
                    )
                losses.append(loss)
        if prompts is not None:
            acc = zero_shot_accuracy(model, head, dataset.val, prompts, config)
        else:
            acc = float("nan")
        history.append(HistoryRow(epoch, lr, float(np.mean(losses)), acc, float("nan"), float("nan")))
        metric = acc if np.isfinite(acc) else -float(np.mean(losses))
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
            best_state.update(
                {f"align_head.{k}": v.copy() for k, v in head.state_arrays().items()}
            )
    return _finalize(config, model, head, history, best_epoch, best_metric, best_state, maps, out_dir)


def zero_shot_accuracy(model, head, clouds, prompts, config: TrainConfig) -> float:
    """Nearest-prompt classification accuracy over deterministic encodings."""
    names, rows = prompts
    vocab = building_type_vocabulary()
    prompt_type_ids = [vocab.index(n) for n in names]
    correct = 0
    total = 0
    for cloud in clouds:
        if cloud.type_label is None:
            continue
        grid = build_voxel_grid(cloud.coords, config.voxel_size)
        indices = enumerate_test_subclouds(grid)[0]
        out = _forward_cloud(model, cloud.take(indices), config.up_axis)
        feature = head.project(out.global_feature).data[0]
        pred, _ = zero_shot_classify(feature, rows)
        correct += int(prompt_type_ids[pred] == cloud.type_label)
        total += 1
    return 100.0 * correct / max(1, total)


def evaluate(model, clouds, config: TrainConfig, maps: LabelMaps):
    """Exhaustive sub-cloud evaluation of a labeled collection.

    Every sub-cloud runs through the model; per-point logits are averaged
    (in sub-cloud order, float64) over all sub-clouds containing the point
    and classification logits over all sub-clouds. Returns (EvalReport,
    per-cloud predicted raw part labels).
    """
    workers = thread_count()
    results = []

    def run(cloud):
        return _evaluate_cloud(model, cloud, config, maps)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, clouds))
    else:
        results = [run(c) for c in clouds]
    seg_preds = [r[0] for r in results if r[0] is not None]
    cls_preds = [r[1] for r in results if r[1] is not None]
    seg_truths = [c.seg_labels for c, r in zip(clouds, results) if r[0] is not None]
    cls_truths = [c.type_label for c, r in zip(clouds, results) if r[1] is not None]
    per_class = piou = siou = acc = hm = None
    if seg_preds and all(t is not None for t in seg_truths):
        per_class, piou = part_iou(seg_preds, seg_truths, num_classes=32, ignore_index=0)
        siou = shape_iou(seg_preds, seg_truths, num_classes=32, ignore_index=0)
    if cls_preds and all(t is not None for t in cls_truths):
        acc = overall_accuracy(cls_preds, cls_truths)
    if piou is not None and acc is not None:
        hm = harmonic_mean(acc, piou)
    report = EvalReport(
        per_class_iou=per_class,
        part_iou=piou,
        shape_iou=siou,
        overall_accuracy=acc,
        harmonic_mean=hm,
    )
    return report, [r[0] for r in results]


def _evaluate_cloud(model, cloud, config: TrainConfig, maps: LabelMaps):
    grid = build_voxel_grid(cloud.coords, config.voxel_size)
    subclouds = enumerate_test_subclouds(grid)
    seg_sum = None
    seg_count = np.zeros(cloud.n, dtype=np.int64)
    cls_sum = None
    for indices in subclouds:
        out = _forward_cloud(model, cloud.take(indices), config.up_axis)
        if out.seg_logits is not None:
            if seg_sum is None:
                seg_sum = np.zeros((cloud.n, out.seg_logits.data.shape[-1]), dtype=np.float64)
            seg_sum[indices] += out.seg_logits.data[0].astype(np.float64)
            seg_count[indices] += 1
        if out.cls_logits is not None:
            if cls_sum is None:
                cls_sum = np.zeros(out.cls_logits.data.shape[-1], dtype=np.float64)
            cls_sum += out.cls_logits.data[0].astype(np.float64)
    seg_pred = None
    if seg_sum is not None:
        mean = seg_sum / seg_count[:, None]
        channel = np.argmax(mean, axis=1)
        seg_pred = np.array([maps.part_ids[c] for c in channel], dtype=np.int64)
    cls_pred = None
    if cls_sum is not None:
        cls_pred = maps.type_ids[int(np.argmax(cls_sum / len(subclouds)))]
    return seg_pred, cls_pred


def predict(model, clouds, config: TrainConfig, maps: LabelMaps, out_dir) -> list:
    """Write one label file per cloud: n lines of predicted raw part ids."""
    os.makedirs(str(out_dir), exist_ok=True)
    paths = []
    for cloud in clouds:
        seg_pred, _ = _evaluate_cloud(model, cloud, config, maps)
        if seg_pred is None:
            raise ValueError("predict requires a segmentation head")
        path = os.path.join(str(out_dir), f"{cloud.name}.labels.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(str(int(v)) for v in seg_pred) + "\n")
        paths.append(path)
    return paths
