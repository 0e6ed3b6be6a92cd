"""Command-line entry point.

Subcommands: gen-data, stats, train, pretrain, eval, predict, plot.
Configuration is a flat key=value file (# comments) merged with
command-line overrides; command line wins, unknown keys are rejected.
Every run's randomness flows from the single seed key. Plots are
self-contained SVG files with the plotted numbers embedded as comments.
"""

import argparse
import csv
import os
import sys

import numpy as np

from .augment import AugmentConfig
from .backend import thread_count
from .data import (
    SEGMENTATION_PARTS,
    label_histogram,
    load_point_cloud,
    load_split_manifest,
    segmentation_vocabulary,
)
from .kernels import build_voxel_grid
from .metrics import save_report
from .model import PRESETS
from .synthetic import DEFAULT_TYPE_RULES, GeneratorSpec, generate_dataset, generate_embeddings
from .train import (
    TASKS,
    TrainConfig,
    evaluate,
    load_dataset,
    predict,
    train,
)

DEFAULTS = {
    "task": "segmentation",
    "preset": "tiny",
    "stride_profile": "auto",
    "epochs": 100,
    "batch_size": 8,
    "lr": 0.01,
    "min_lr": 0.0,
    "schedule": "cosine",
    "optimizer": "adam",
    "momentum": 0.9,
    "weight_decay": 0.0001,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "beta": 0.01,
    "voxel_size": 0.02,
    "sample_size": 12500,
    "radius": 0.05,
    "loop_factor": 12,
    "init": "",
    "strict": True,
    "seed": 0,
    "deterministic": False,
    "up_axis": "y",
    "data_dir": "",
    "out_dir": "out",
    "rotation": True,
    "scale_lo": 0.9,
    "scale_hi": 1.1,
    "jitter_sigma": 0.005,
    "jitter_clip": 0.02,
    "color_drop_prob": 0.2,
    "color_contrast_prob": 0.2,
    "contrast_blend": 0.5,
    "gen_points": 4096,
    "gen_train": 64,
    "gen_val": 16,
    "gen_test": 0,
    "gen_unspecified_fraction": 0.02,
    "embed_dim": 32,
    "embed_separation": 4.0,
    "embed_row_jitter": 0.05,
    "embed_text_rows": 64,
    "embed_image_rows": 16,
    "voxel_sizes": "0.01,0.02,0.05",
}


class UsageError(ValueError):
    """Bad config key, value, or file; exits with status 2."""


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise UsageError(f"key {key!r}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise UsageError(f"key {key!r}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise UsageError(f"key {key!r}: expected a number, got {raw!r}") from None
    return raw


def parse_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, value = stripped.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip()
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, value.strip())
    return values


def emit_config(values: dict) -> str:
    """Canonical text form; emit -> parse -> emit is byte-stable."""
    lines = []
    for key in sorted(DEFAULTS):
        value = values.get(key, DEFAULTS[key])
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = f"{value:.10g}"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def resolve_config(args) -> dict:
    values = dict(DEFAULTS)
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    overrides = {
        "seed": args.seed,
        "out_dir": args.out,
        "data_dir": getattr(args, "data", None),
        "task": getattr(args, "task", None),
        "beta": getattr(args, "beta", None),
        "epochs": getattr(args, "epochs", None),
        "lr": getattr(args, "lr", None),
        "voxel_size": getattr(args, "voxel_size", None),
        "sample_size": getattr(args, "sample_size", None),
        "radius": getattr(args, "radius", None),
        "preset": getattr(args, "preset", None),
        "init": getattr(args, "init", None),
        "strict": getattr(args, "strict", None),
        "deterministic": getattr(args, "deterministic", None),
        "loop_factor": getattr(args, "loop_factor", None),
        "batch_size": getattr(args, "batch_size", None),
        "voxel_sizes": getattr(args, "voxel_sizes", None),
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if values["task"] not in TASKS:
        raise UsageError(f"invalid task {values['task']!r}; expected one of {TASKS}")
    if values["preset"] not in PRESETS:
        raise UsageError(f"invalid preset {values['preset']!r}; expected one of {sorted(PRESETS)}")
    return values


def train_config_from(values: dict) -> TrainConfig:
    augment = AugmentConfig(
        rotation_enabled=values["rotation"],
        up_axis=values["up_axis"],
        scale_range=(values["scale_lo"], values["scale_hi"]),
        jitter_sigma=values["jitter_sigma"],
        jitter_clip=values["jitter_clip"],
        color_drop_prob=values["color_drop_prob"],
        color_contrast_prob=values["color_contrast_prob"],
        contrast_blend=values["contrast_blend"],
        loop_factor=values["loop_factor"],
    )
    return TrainConfig(
        task=values["task"],
        preset=values["preset"],
        stride_profile=None if values["stride_profile"] == "auto" else values["stride_profile"],
        epochs=values["epochs"],
        batch_size=values["batch_size"],
        base_lr=values["lr"],
        min_lr=values["min_lr"],
        schedule=values["schedule"],
        optimizer=values["optimizer"],
        momentum=values["momentum"],
        weight_decay=values["weight_decay"],
        adam_beta1=values["adam_beta1"],
        adam_beta2=values["adam_beta2"],
        beta=values["beta"],
        voxel_size=values["voxel_size"],
        sample_size=values["sample_size"],
        radius=values["radius"],
        loop_factor=values["loop_factor"],
        init=values["init"] or None,
        strict=values["strict"],
        seed=values["seed"],
        deterministic=values["deterministic"],
        up_axis=values["up_axis"],
        augment=augment,
        embed_dim=values["embed_dim"],
    )


def _require_data_dir(values):
    if not values["data_dir"]:
        raise UsageError("this command needs --data (or the data_dir config key)")
    return values["data_dir"]


def cmd_gen_data(values) -> int:
    out_dir = values["out_dir"]
    spec = GeneratorSpec(
        type_rules=DEFAULT_TYPE_RULES,
        points_per_building=values["gen_points"],
        unspecified_fraction=values["gen_unspecified_fraction"],
        seed=values["seed"],
    )
    counts = {"train": values["gen_train"], "val": values["gen_val"]}
    if values["gen_test"] > 0:
        counts["test"] = values["gen_test"]
    splits = generate_dataset(spec, counts, out_dir)
    buildings = []
    for split in splits.values():
        for entry in split.entries:
            cloud = load_point_cloud(os.path.join(out_dir, entry))
            buildings.append((cloud.name, cloud.type_label))
    rng = np.random.default_rng(values["seed"] + 1)
    generate_embeddings(
        spec,
        buildings,
        os.path.join(out_dir, "embeddings"),
        dim=values["embed_dim"],
        separation=values["embed_separation"],
        row_jitter=values["embed_row_jitter"],
        text_rows=values["embed_text_rows"],
        image_rows=values["embed_image_rows"],
        rng=rng,
    )
    total = sum(len(s.entries) for s in splits.values())
    print(f"generated {total} buildings across {len(splits)} splits in {out_dir}")
    return 0


def cmd_stats(values) -> int:
    data_dir = _require_data_dir(values)
    out_dir = values["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    sizes = [float(s) for s in str(values["voxel_sizes"]).split(",") if s]
    if not sizes:
        raise UsageError("voxel_sizes must list at least one size")
    seg_vocab = segmentation_vocabulary()
    wrote = []
    for split_name in ("train", "val", "test"):
        manifest = os.path.join(data_dir, f"{split_name}.txt")
        if not os.path.exists(manifest):
            continue
        split = load_split_manifest(manifest)
        clouds = [load_point_cloud(p) for p in split.entries]
        for size in sizes:
            path = os.path.join(out_dir, f"voxels_{split_name}_{size:g}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["cloud", "voxel_count"])
                for cloud in clouds:
                    writer.writerow([cloud.name, build_voxel_grid(cloud.coords, size).n_cells])
            wrote.append(path)
        if all(c.seg_labels is not None for c in clouds):
            hist = label_histogram(clouds, seg_vocab, "segmentation")
            path = os.path.join(out_dir, f"labels_{split_name}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["class_index", "class_name", "count"])
                writer.writerow([0, "unspecified", hist.ignored])
                for c in range(1, len(seg_vocab)):
                    writer.writerow([c, SEGMENTATION_PARTS[c], int(hist.counts[c])])
            wrote.append(path)
    if not wrote:
        raise UsageError(f"no split manifests found under {data_dir}")
    print(f"wrote {len(wrote)} stats files to {out_dir}")
    return 0


def cmd_train(values, task_override=None) -> int:
    if task_override:
        values = dict(values, task=task_override)
    data_dir = _require_data_dir(values)
    dataset = load_dataset(data_dir)
    config = train_config_from(values)
    result = train(config, dataset, values["out_dir"])
    from .nn import load_checkpoint_state

    load_checkpoint_state(result.best_checkpoint)  # format self-check before exit 0
    print(
        f"trained {config.task} for {config.epochs} epochs; "
        f"best epoch {result.best_epoch} (metric {result.best_metric:.2f}); "
        f"checkpoint {result.best_checkpoint}"
    )
    return 0


def cmd_eval(values) -> int:
    data_dir = _require_data_dir(values)
    dataset = load_dataset(data_dir)
    values = dict(values, init=values["init"])
    if not values["init"]:
        raise UsageError("eval needs --init CHECKPOINT")
    config = train_config_from(values)
    from .model import build_model, load_checkpoint, make_config
    from .nn import load_metadata
    from .train import FEATURE_CHANNELS, derive_label_maps, LabelMaps

    maps = derive_label_maps(dataset.train)
    meta_path = os.path.join(os.path.dirname(values["init"]), "best.meta.json")
    if os.path.exists(meta_path):
        meta = load_metadata(meta_path)
        maps = LabelMaps(part_ids=tuple(meta["part_ids"]), type_ids=tuple(meta["type_ids"]))
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
    load_checkpoint(model, values["init"], strict=False)
    clouds = dataset.val if dataset.val else dataset.test
    report, _ = evaluate(model, clouds, config, maps)
    os.makedirs(values["out_dir"], exist_ok=True)
    report_path = os.path.join(values["out_dir"], "report.txt")
    save_report(report, report_path, class_names=SEGMENTATION_PARTS)
    print(f"evaluation report written to {report_path}")
    for key in ("overall_accuracy", "part_iou", "shape_iou", "harmonic_mean"):
        value = getattr(report, key)
        if value is not None:
            print(f"  {key} = {value:.2f}")
    return 0


def cmd_predict(values) -> int:
    data_dir = _require_data_dir(values)
    dataset = load_dataset(data_dir)
    if not values["init"]:
        raise UsageError("predict needs --init CHECKPOINT")
    config = train_config_from(values)
    from .model import build_model, load_checkpoint, make_config
    from .nn import load_metadata
    from .train import FEATURE_CHANNELS, derive_label_maps, LabelMaps

    maps = derive_label_maps(dataset.train)
    meta_path = os.path.join(os.path.dirname(values["init"]), "best.meta.json")
    if os.path.exists(meta_path):
        meta = load_metadata(meta_path)
        maps = LabelMaps(part_ids=tuple(meta["part_ids"]), type_ids=tuple(meta["type_ids"]))
    model_config = make_config(
        config.preset,
        "segmentation",
        input_channels=FEATURE_CHANNELS,
        base_radius=config.radius,
        num_types=len(maps.type_ids),
        num_parts=len(maps.part_ids),
        stride_profile=config.stride_profile,
    )
    model = build_model(model_config, seed=config.seed)
    load_checkpoint(model, values["init"], strict=False)
    clouds = dataset.test if dataset.test else dataset.val
    paths = predict(model, clouds, config, maps, values["out_dir"])
    print(f"wrote {len(paths)} prediction files to {values['out_dir']}")
    return 0


def _svg_line_chart(series: dict, title: str, width=640, height=360) -> str:
    """Minimal multi-series line chart; data embedded as an SVG comment."""
    pad = 48
    all_y = [v for ys in series.values() for v in ys if np.isfinite(v)]
    if not all_y:
        all_y = [0.0, 1.0]
    lo, hi = min(all_y), max(all_y)
    if hi == lo:
        hi = lo + 1.0
    n = max(len(ys) for ys in series.values())
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f"<!-- data: {series!r} -->",
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        f'fill="none" stroke="#999"/>',
    ]
    for i, (name, ys) in enumerate(series.items()):
        pts = []
        for j, y in enumerate(ys):
            if not np.isfinite(y):
                continue
            px = pad + (width - 2 * pad) * (j / max(1, n - 1))
            py = height - pad - (height - 2 * pad) * ((y - lo) / (hi - lo))
            pts.append(f"{px:.1f},{py:.1f}")
        color = colors[i % len(colors)]
        parts.append(
            f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{pad + 4}" y="{pad + 16 + 14 * i}" font-size="11" fill="{color}">{name}</text>'
        )
    parts.append(f'<text x="{pad}" y="{height - pad + 16}" font-size="10">min={lo:.3g}</text>')
    parts.append(f'<text x="{pad}" y="{pad - 6}" font-size="10">max={hi:.3g}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def _svg_bar_chart(labels, counts, title: str, width=640, height=360) -> str:
    pad = 48
    hi = max(counts) if counts else 1
    bar_w = (width - 2 * pad) / max(1, len(counts))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f"<!-- data: {dict(zip(labels, counts))!r} -->",
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for i, (label, count) in enumerate(zip(labels, counts)):
        bh = (height - 2 * pad) * (count / hi) if hi else 0
        x = pad + i * bar_w
        parts.append(
            f'<rect x="{x:.1f}" y="{height - pad - bh:.1f}" width="{bar_w * 0.8:.1f}" '
            f'height="{bh:.1f}" fill="#1f77b4"/>'
        )
        if len(labels) <= 40:
            parts.append(
                f'<text x="{x + bar_w * 0.4:.1f}" y="{height - pad + 12}" font-size="8" '
                f'text-anchor="middle">{label}</text>'
            )
    parts.append(f'<text x="{pad}" y="{pad - 6}" font-size="10">max={hi}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_plot(values, inputs) -> int:
    os.makedirs(values["out_dir"], exist_ok=True)
    wrote = []
    for path in inputs:
        if not os.path.exists(path):
            raise UsageError(f"plot input not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or len(rows) < 2:
            raise UsageError(f"{path}: no data rows to plot")
        header = rows[0]
        stem = os.path.splitext(os.path.basename(path))[0]
        out_path = os.path.join(values["out_dir"], f"{stem}.svg")
        if header[0] == "epoch":  # training history: line chart of metrics
            series = {}
            for col in range(2, len(header)):
                series[header[col]] = [float(r[col]) for r in rows[1:]]
            svg = _svg_line_chart(series, stem)
        else:  # histogram-style CSV: bar chart of the last numeric column
            labels = [r[0] if len(header) < 3 else r[1] for r in rows[1:]]
            counts = [float(r[-1]) for r in rows[1:]]
            svg = _svg_bar_chart(labels, counts, stem)
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(svg)
        wrote.append(out_path)
    print(f"wrote {len(wrote)} plots to {values['out_dir']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointforge",
        description="Multi-task point-cloud learning: data generation, training, "
        "pretraining, evaluation, prediction, and plots.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_train_flags=True):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--data", default=None, help="dataset directory (manifests + files)")
        if with_train_flags:
            p.add_argument("--task", default=None, choices=list(TASKS))
            p.add_argument("--beta", type=float, default=None)
            p.add_argument("--epochs", type=int, default=None)
            p.add_argument("--lr", type=float, default=None)
            p.add_argument("--voxel-size", dest="voxel_size", type=float, default=None)
            p.add_argument("--sample-size", dest="sample_size", type=int, default=None)
            p.add_argument("--radius", type=float, default=None)
            p.add_argument("--preset", default=None, choices=sorted(PRESETS))
            p.add_argument("--init", default=None, help="checkpoint to load")
            p.add_argument("--strict", type=lambda s: s.lower() in ("true", "1", "yes"), default=None)
            p.add_argument(
                "--deterministic",
                type=lambda s: s.lower() in ("true", "1", "yes"),
                default=None,
            )
            p.add_argument("--loop-factor", dest="loop_factor", type=int, default=None)
            p.add_argument("--batch-size", dest="batch_size", type=int, default=None)

    common(sub.add_parser("gen-data", help="generate the synthetic dataset"), False)
    stats = sub.add_parser("stats", help="voxel and label histograms as CSV")
    common(stats, False)
    stats.add_argument("--voxel-sizes", dest="voxel_sizes", default=None)
    common(sub.add_parser("train", help="train a model"))
    common(sub.add_parser("pretrain", help="contrastive multi-modal pretraining"))
    common(sub.add_parser("eval", help="evaluate a checkpoint"))
    common(sub.add_parser("predict", help="write per-point label files"))
    plot = sub.add_parser("plot", help="render history/stats CSVs as SVG")
    common(plot, False)
    plot.add_argument("inputs", nargs="+", help="CSV files to plot")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if os.environ.get("PF_THREADS"):
        thread_count()  # validated here so a bad value surfaces early
    try:
        values = resolve_config(args)
        if args.command == "gen-data":
            return cmd_gen_data(values)
        if args.command == "stats":
            return cmd_stats(values)
        if args.command == "train":
            return cmd_train(values)
        if args.command == "pretrain":
            return cmd_train(values, task_override="ulip_pretrain")
        if args.command == "eval":
            return cmd_eval(values)
        if args.command == "predict":
            return cmd_predict(values)
        if args.command == "plot":
            return cmd_plot(values, args.inputs)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError, IOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
