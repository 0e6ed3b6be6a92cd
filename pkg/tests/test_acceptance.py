"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Training-based criteria share one synthetic dataset (64 train / 16 val
buildings, 4096 points) and frozen seeds, so every run is reproducible.
A terminal summary hook in conftest.py prints the per-criterion verdicts.
"""

import math
import os
import time

import numpy as np
import pytest

from pointforge import autodiff as ad
from pointforge import kernels, metrics, nn
from pointforge import model as M
from pointforge import synthetic as S
from pointforge import train as T
from pointforge import ulip as U
from pointforge.autodiff import Tensor
from pointforge.data import PointCloud, load_point_cloud

from conftest import record_criterion
from oracles import (
    ball_query_oracle,
    confusion_oracle,
    iou_from_confusion,
    knn_oracle,
    voxel_oracle,
)

SEED = 3
DESK_SEED = 5  # desk-scale training runs; frozen independently of the oracle seed


def fps_oracle_bulk(coords, m, start=0):
    """Step-by-step FPS recomputation with explicit exclusion of chosen points."""
    n = coords.shape[0]
    chosen = [start]
    for _ in range(1, m):
        cand = np.setdiff1d(np.arange(n), np.asarray(chosen))
        d2 = ((coords[cand, None, :] - coords[None, chosen, :]) ** 2).sum(-1).min(axis=1)
        chosen.append(int(cand[np.argmax(d2)]))
    return np.asarray(chosen, dtype=np.int64)


@pytest.fixture(scope="session")
def accept_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_data")
    spec = S.GeneratorSpec(points_per_building=4096, seed=11)
    splits = S.generate_dataset(spec, {"train": 64, "val": 16}, root)
    buildings = []
    for split in splits.values():
        for entry in split.entries:
            cloud = load_point_cloud(os.path.join(root, entry))
            buildings.append((cloud.name, cloud.type_label))
    S.generate_embeddings(
        spec, buildings, os.path.join(root, "embeddings"), dim=32, separation=4.0
    )
    flat_dir = tmp_path_factory.mktemp("acceptance_flat_embeddings")
    S.generate_embeddings(
        spec, buildings, flat_dir, dim=32, separation=0.0
    )
    dataset = T.load_dataset(root)
    return dict(root=root, spec=spec, dataset=dataset, buildings=buildings,
                flat_embeddings_dir=str(flat_dir))


def desk_config(**kw):
    base = dict(
        task="segmentation",
        preset="tiny",
        epochs=30,
        batch_size=8,
        base_lr=0.002,
        optimizer="adam",
        voxel_size=0.05,
        sample_size=1024,
        radius=0.125,
        loop_factor=3,
        seed=DESK_SEED,
    )
    base.update(kw)
    return T.TrainConfig(**base)


@pytest.fixture(scope="session")
def seg_run(accept_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("accept_seg")
    start = time.perf_counter()
    result = T.train(desk_config(), accept_data["dataset"], out)
    elapsed = time.perf_counter() - start
    report, _ = T.evaluate(
        result.model, accept_data["dataset"].val, desk_config(), result.label_maps
    )
    return dict(result=result, report=report, train_seconds=elapsed)


@pytest.fixture(scope="session")
def pretrain_run(accept_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("accept_pretrain")
    config = desk_config(task="ulip_pretrain", epochs=25, base_lr=0.004, loop_factor=1)
    assert config.epochs * math.ceil(64 / config.batch_size) * config.loop_factor == 200
    result = T.train(config, accept_data["dataset"], out)
    return dict(result=result, config=config)


class TestCriterion1KernelOracles:
    def test_kernels_match_bruteforce(self):
        start = time.perf_counter()
        rng = np.random.default_rng(SEED)
        for trial in range(200):
            n = int(rng.integers(2, 257))
            coords = rng.uniform(-0.5, 0.5, (n, 3))
            stride = int(rng.integers(1, 9))
            m = max(1, n // stride)
            got_fps = kernels.farthest_point_sampling(coords, stride)
            np.testing.assert_array_equal(got_fps, fps_oracle_bulk(coords, m))

            q = int(rng.integers(1, min(n, 16) + 1))
            centroid_idx = rng.choice(n, size=q, replace=False)
            radius = float(rng.uniform(0.05, 0.4))
            k = int(rng.integers(1, 9))
            got_bq = kernels.ball_query(coords, centroid_idx, radius, k)
            np.testing.assert_array_equal(
                got_bq.neighbor_indices,
                ball_query_oracle(coords, coords[centroid_idx], radius, k),
            )

            kq = int(rng.integers(1, min(n, 8) + 1))
            queries = rng.uniform(-0.5, 0.5, (4, 3))
            got_idx, got_dist = kernels.knn(coords, queries, kq)
            want_idx, want_dist = knn_oracle(coords, queries, kq)
            np.testing.assert_array_equal(got_idx, want_idx)
            np.testing.assert_allclose(got_dist, want_dist, atol=1e-12)

            size = float(rng.uniform(0.05, 0.5))
            grid = kernels.build_voxel_grid(coords, size)
            want_cells = voxel_oracle(coords, size)
            cells = grid.cells
            assert set(cells) == set(want_cells)
            for key, members in want_cells.items():
                assert cells[key].tolist() == sorted(members)
        elapsed = time.perf_counter() - start
        passed = elapsed < 30.0
        record_criterion(
            1, passed, f"FPS/ball-query/kNN/voxel match O(n^2) oracles on 200 clouds "
            f"in {elapsed:.1f}s (< 30s)"
        )
        assert passed


class TestCriterion2GradientChecks:
    def test_layers_and_full_model(self):
        start = time.perf_counter()
        rng = np.random.default_rng(SEED)
        worst = {}

        x = Tensor(rng.standard_normal((4, 3, 5)), requires_grad=True)
        w = Tensor(rng.standard_normal((5, 6)), requires_grad=True)
        b = Tensor(rng.standard_normal(6), requires_grad=True)
        probe = rng.standard_normal((4, 3, 6))
        worst["dense"] = nn.gradient_check(
            lambda: ad.reduce_mean(ad.mul(ad.dense(x, w, b), Tensor(probe))), [x, w, b]
        )

        xr = Tensor(rng.standard_normal((6, 5)) + 0.05, requires_grad=True)
        worst["relu"] = nn.gradient_check(lambda: ad.reduce_mean(ad.relu(xr)), [xr])

        xb = Tensor(rng.standard_normal((8, 4)), requires_grad=True)
        gamma = Tensor(rng.uniform(0.5, 1.5, 4), requires_grad=True)
        beta = Tensor(rng.standard_normal(4), requires_grad=True)
        rm, rv = np.zeros(4), np.ones(4)
        probe_bn = rng.standard_normal((8, 4))
        worst["batch_norm"] = nn.gradient_check(
            lambda: ad.reduce_mean(
                ad.mul(ad.batch_norm(xb, gamma, beta, rm, rv, training=True), Tensor(probe_bn))
            ),
            [xb, gamma, beta],
        )

        xm = Tensor(rng.permutation(60).astype(np.float64).reshape(3, 4, 5) / 7.0,
                    requires_grad=True)
        probe_m = rng.standard_normal((3, 5))
        worst["max_reduce"] = nn.gradient_check(
            lambda: ad.reduce_mean(ad.mul(ad.max_reduce(xm, axis=1)[0], Tensor(probe_m))), [xm]
        )

        logits = Tensor(rng.standard_normal((6, 4)), requires_grad=True)
        targets = rng.integers(0, 4, 6)
        weights = rng.uniform(0.5, 2.0, 4)
        worst["softmax_ce"] = nn.gradient_check(
            lambda: ad.softmax_cross_entropy(logits, targets, class_weights=weights), [logits]
        )

        head = U.ProjectionHead(6, 5)
        head.initialize(SEED)
        head.cast(np.float64)
        feats = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
        probe_h = rng.standard_normal((4, 5))
        worst["projection_head"] = nn.gradient_check(
            lambda: ad.reduce_mean(ad.mul(head.project(feats), Tensor(probe_h))),
            [feats, head.proj.weight.tensor],
        )

        pc = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        log_tau = Tensor(np.asarray(math.log(0.2)), requires_grad=True)
        targets_c = rng.standard_normal((4, 5))
        worst["contrastive"] = nn.gradient_check(
            lambda: U.contrastive_alignment_loss(pc, targets_c, ad.exp(log_tau)),
            [pc, log_tau],
        )

        layer_worst = max(worst.values())

        # full multi-task model in float64, subset of coordinates per tensor
        micro = M.ModelConfig(
            input_channels=6,
            stem_width=4,
            stages=(
                M.StageSpec(stride=2, radius=0.4, neighbors=4, blocks=1, width=4),
                M.StageSpec(stride=2, radius=0.8, neighbors=4, blocks=1, width=8),
            ),
            expansion=2,
            head=M.HeadSpec("multitask", num_types=3, num_parts=4, fc_widths=(8,), dropout=0.0),
        )
        model = M.build_model(micro, seed=SEED).cast(np.float64)
        # four clouds keep the class-head batch norm well conditioned; a
        # two-point batch normalizes to exactly +/-1 and has eps-scale
        # input gradients that finite differences cannot resolve
        coords = rng.uniform(-0.5, 0.5, (4, 16, 3))
        feats_in = Tensor(rng.standard_normal((4, 16, 6)), requires_grad=True)
        type_t = np.array([0, 2, 1, 0])
        seg_t = rng.integers(0, 4, (4, 16))

        def full_loss():
            out = model.forward(coords, feats_in, training=True, rng=None)
            cls_l = ad.softmax_cross_entropy(out.cls_logits, type_t)
            seg_l = ad.softmax_cross_entropy(out.seg_logits, seg_t)
            return ad.add(ad.mul(cls_l, 0.3), ad.mul(seg_l, 0.7))

        params = [p.tensor for p in model.parameters()]
        # h an order below the layer checks: stem-level perturbations of
        # 1e-5 can hop a relu kink or flip a neighbor-max tie downstream
        model_worst = nn.gradient_check(full_loss, params + [feats_in], h=1e-6, max_coords=8)

        elapsed = time.perf_counter() - start
        passed = layer_worst < 1e-6 and model_worst < 1e-4 and elapsed < 60.0
        record_criterion(
            2, passed,
            f"gradient checks: layers max rel err {layer_worst:.2e} (< 1e-6), "
            f"full model {model_worst:.2e} (< 1e-4), {elapsed:.1f}s (< 60s)",
        )
        assert layer_worst < 1e-6, worst
        assert model_worst < 1e-4
        assert elapsed < 60.0


class TestCriterion3MetricOracles:
    def test_metrics_match_confusion_recomputation(self):
        rng = np.random.default_rng(SEED)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(10, 10_001))
            k = int(rng.integers(2, 9))
            truths = rng.integers(0, k, n)
            preds = rng.integers(0, k, n)
            per_class, piou = metrics.part_iou(
                [preds], [truths], num_classes=k, ignore_index=0
            )
            table = iou_from_confusion(confusion_oracle(preds, truths, k, 0))
            table.pop(0, None)
            assert set(per_class) == set(table)
            for c in table:
                worst = max(worst, abs(per_class[c] - table[c]))
            worst = max(worst, abs(piou - float(np.mean(list(table.values())))))

            siou = metrics.shape_iou([preds], [truths], num_classes=k, ignore_index=0)
            worst = max(worst, abs(siou - float(np.mean(list(table.values())))))

            acc = metrics.overall_accuracy(preds, truths)
            manual = 100.0 * sum(int(p == t) for p, t in zip(preds, truths)) / n
            worst = max(worst, abs(acc - manual))

        # hand-derived confusion example reproduces exactly
        truths = np.array([1, 1, 1, 2, 2, 2, 2])
        preds = np.array([1, 1, 0, 2, 2, 2, 1])
        per_class, piou = metrics.part_iou([preds], [truths], num_classes=3, ignore_index=0)
        hand_exact = per_class[1] == 50.0 and per_class[2] == 75.0 and piou == 62.5

        passed = worst < 1e-9 and hand_exact
        record_criterion(
            3, passed,
            f"metrics vs confusion oracle on 100 instances: max |err| {worst:.2e} "
            f"(< 1e-9); hand example 50/75 -> 62.5 {'exact' if hand_exact else 'WRONG'}",
        )
        assert passed


@pytest.fixture(scope="module")
def endpoint_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("endpoint_data")
    spec = S.GeneratorSpec(points_per_building=512, seed=21)
    S.generate_dataset(spec, {"train": 8, "val": 4}, root)
    return T.load_dataset(root)


class TestCriterion4BetaEndpoints:
    def _config(self, **kw):
        # 4 steps/epoch x 3 epochs = 12 optimizer steps (>= 10)
        base = dict(
            preset="tiny", epochs=3, batch_size=2, base_lr=0.002, optimizer="adam",
            voxel_size=0.08, sample_size=256, radius=0.2, loop_factor=1,
            seed=SEED, stride_profile="seg",
        )
        base.update(kw)
        return T.TrainConfig(**base)

    def test_beta_endpoints_bitwise(self, endpoint_data, tmp_path):
        details = []
        ok = True
        for beta, single_task in ((0.0, "segmentation"), (1.0, "classification")):
            single = T.train(
                self._config(task=single_task), endpoint_data, tmp_path / f"s{beta}"
            )
            multi = T.train(
                self._config(task="multitask", beta=beta), endpoint_data, tmp_path / f"m{beta}"
            )
            single_state = single.model.state_arrays()
            multi_state = multi.model.state_arrays()
            shared = sorted(set(single_state) & set(multi_state))
            assert any(k.startswith("encoder.") for k in shared)
            same_params = all(
                np.array_equal(single_state[k], multi_state[k]) for k in shared
            )
            same_losses = [r.train_loss for r in single.history] == [
                r.train_loss for r in multi.history
            ]
            ok = ok and same_params and same_losses
            details.append(f"beta={beta}: params {'=' if same_params else '!='}, "
                           f"losses {'=' if same_losses else '!='}")
        steps = 3 * len(endpoint_data.train) // 2
        record_criterion(
            4, ok, f"multitask beta endpoints bitwise over {steps} steps ({'; '.join(details)})"
        )
        assert ok


class TestCriterion5CheckpointSelection:
    def test_selection_and_harmonic_mean(self):
        chosen = T.select_best_epoch([50.0, 60.0, 55.0])
        hm = metrics.harmonic_mean(60.0, 30.0)
        passed = chosen == 2 and hm == 40.0
        record_criterion(
            5, passed, f"argmax epoch of [50,60,55] = {chosen} (want 2); "
            f"harmonic_mean(60,30) = {hm} (want exactly 40.0)"
        )
        assert passed


class TestCriterion6TestTimeCoverage:
    def test_subcloud_coverage_and_aggregation_oracle(self):
        start = time.perf_counter()
        rng = np.random.default_rng(SEED)
        cfg = M.make_config(
            "tiny", "segmentation", input_channels=10, base_radius=0.3, num_parts=6
        )
        model = M.build_model(cfg, seed=SEED)
        maps = T.LabelMaps(part_ids=(1, 2, 4, 6, 7, 9), type_ids=(0, 2, 6, 10))
        exact = True
        for trial in range(50):
            n = int(rng.integers(40, 257))
            cloud = PointCloud(coords=rng.uniform(-0.5, 0.5, (n, 3)))
            voxel = float(rng.uniform(0.12, 0.3))
            config = desk_config(voxel_size=voxel, sample_size=n)
            grid = kernels.build_voxel_grid(cloud.coords, voxel)
            subclouds = kernels.enumerate_test_subclouds(grid)
            assert len(subclouds) == grid.max_occupancy
            seen = np.zeros(n, dtype=int)
            for sub in subclouds:
                np.add.at(seen, sub, 1)
            assert (seen >= 1).all()

            seg_pred, _ = T._evaluate_cloud(model, cloud, config, maps)
            collected = [[] for _ in range(n)]
            for indices in subclouds:
                out = T._forward_cloud(model, cloud.take(indices), config.up_axis)
                logits = out.seg_logits.data[0]
                for pos, point in enumerate(indices):
                    collected[point].append(logits[pos])
            for i, rows in enumerate(collected):
                acc = np.zeros(rows[0].shape, dtype=np.float64)
                for row in rows:
                    acc += row.astype(np.float64)
                want = maps.part_ids[int(np.argmax(acc / len(rows)))]
                if want != seg_pred[i]:
                    exact = False
        elapsed = time.perf_counter() - start
        record_criterion(
            6, exact, f"50 clouds: sub-cloud count = max occupancy, full coverage, "
            f"aggregation exact vs logit-collection oracle ({elapsed:.1f}s)"
        )
        assert exact


def majority_class_baseline(train_clouds, val_clouds):
    """Constant predictor: the most frequent non-ignored train label."""
    counts = np.zeros(32, dtype=np.int64)
    for c in train_clouds:
        counts += np.bincount(c.seg_labels, minlength=32)
    counts[0] = 0
    majority = int(np.argmax(counts))
    preds = [np.full(c.n, majority, dtype=np.int64) for c in val_clouds]
    truths = [c.seg_labels for c in val_clouds]
    _, piou = metrics.part_iou(preds, truths, num_classes=32, ignore_index=0)
    return majority, piou


def nearest_height_centroid_baseline(train_clouds, val_clouds):
    """Per-point classifier on the height feature alone (threshold oracle)."""
    sums = np.zeros(32)
    counts = np.zeros(32, dtype=np.int64)
    for c in train_clouds:
        heights = c.coords[:, 1] - c.coords[:, 1].min()
        np.add.at(sums, c.seg_labels, heights)
        np.add.at(counts, c.seg_labels, 1)
    active = [cl for cl in range(1, 32) if counts[cl] > 0]
    centroids = np.array([sums[cl] / counts[cl] for cl in active])
    preds, truths = [], []
    for c in val_clouds:
        heights = c.coords[:, 1] - c.coords[:, 1].min()
        nearest = np.argmin(np.abs(heights[:, None] - centroids[None, :]), axis=1)
        preds.append(np.array([active[i] for i in nearest]))
        truths.append(c.seg_labels)
    _, piou = metrics.part_iou(preds, truths, num_classes=32, ignore_index=0)
    return piou


class TestCriterion7SegmentationTrainability:
    def test_desk_scale_segmentation(self, accept_data, seg_run):
        report = seg_run["report"]
        elapsed = seg_run["train_seconds"]
        dataset = accept_data["dataset"]
        _, majority_piou = majority_class_baseline(dataset.train, dataset.val)
        height_piou = nearest_height_centroid_baseline(dataset.train, dataset.val)
        piou = report.part_iou
        passed = (
            piou >= 80.0
            and piou - majority_piou >= 30.0
            and piou > height_piou
            and elapsed < 600.0
        )
        record_criterion(
            7, passed,
            f"val PartIoU {piou:.1f} (>= 80), majority baseline {majority_piou:.1f} "
            f"(margin {piou - majority_piou:.1f} >= 30), height baseline {height_piou:.1f}, "
            f"train {elapsed:.0f}s (< 600s)",
        )
        assert passed


class TestCriterion8ClassificationMultitask:
    def test_desk_scale_classification_and_multitask(self, accept_data, seg_run, tmp_path_factory):
        dataset = accept_data["dataset"]
        start = time.perf_counter()
        cls_out = tmp_path_factory.mktemp("accept_cls")
        cls_result = T.train(desk_config(task="classification"), dataset, cls_out)
        cls_report, _ = T.evaluate(
            cls_result.model, dataset.val, desk_config(task="classification"),
            cls_result.label_maps,
        )
        mt_out = tmp_path_factory.mktemp("accept_mt")
        mt_config = desk_config(task="multitask", beta=0.01)
        mt_result = T.train(mt_config, dataset, mt_out)
        mt_report, _ = T.evaluate(mt_result.model, dataset.val, mt_config, mt_result.label_maps)
        elapsed = time.perf_counter() - start

        seg_piou = seg_run["report"].part_iou
        acc = cls_report.overall_accuracy
        mt_acc = mt_report.overall_accuracy
        mt_piou = mt_report.part_iou
        passed = (
            acc >= 90.0
            and mt_acc >= acc - 5.0
            and mt_piou >= seg_piou - 5.0
            and elapsed < 600.0
        )
        record_criterion(
            8, passed,
            f"classification acc {acc:.1f} (>= 90); multitask beta=0.01: acc {mt_acc:.1f} "
            f"(>= {acc - 5:.1f}), PartIoU {mt_piou:.1f} (>= {seg_piou - 5:.1f}); "
            f"{elapsed:.0f}s (< 600s)",
        )
        assert passed


class TestCriterion9UlipAlignment:
    def test_zero_shot_and_finetune_trend(self, accept_data, seg_run, pretrain_run, tmp_path_factory):
        dataset = accept_data["dataset"]
        prompts = U.load_class_prompts(dataset.class_prompt_path)
        config = pretrain_run["config"]
        everything = dataset.train + dataset.val

        # chance level before training: random-init encoder + head
        untrained_cfg = M.make_config(
            "tiny", "ulip_pretrain", input_channels=T.FEATURE_CHANNELS,
            base_radius=config.radius, stride_profile="seg",
        )
        untrained = M.build_model(untrained_cfg, seed=SEED + 50)
        untrained_head = U.ProjectionHead(untrained_cfg.encoder_width, 32)
        untrained_head.initialize(SEED + 51)
        acc_before = T.zero_shot_accuracy(untrained, untrained_head, everything, prompts, config)

        acc_after = T.zero_shot_accuracy(
            pretrain_run["result"].model, pretrain_run["result"].head,
            everything, prompts, config,
        )

        # negative control: indistinguishable class embeddings
        flat_dataset = T.LoadedDataset(
            train=dataset.train,
            val=dataset.val,
            embeddings={},
            class_prompt_path=os.path.join(accept_data["flat_embeddings_dir"], "class_prompts.pfcls"),
        )
        for fname in sorted(os.listdir(accept_data["flat_embeddings_dir"])):
            if fname.endswith(".pfemb"):
                triplet = U.load_embedding_triplet(
                    os.path.join(accept_data["flat_embeddings_dir"], fname)
                )
                flat_dataset.embeddings[triplet.name] = triplet
        flat_out = tmp_path_factory.mktemp("accept_flat")
        flat_result = T.train(config, flat_dataset, flat_out)
        flat_prompts = U.load_class_prompts(flat_dataset.class_prompt_path)
        acc_flat = T.zero_shot_accuracy(
            flat_result.model, flat_result.head, everything, flat_prompts, config
        )

        # finetune trend: same training config as the from-scratch run,
        # differing only in the encoder init; must reach the criterion-7
        # PartIoU bar within 2/3 of that run's 30-epoch budget, and no
        # later than the scratch run itself reached it
        fine_out = tmp_path_factory.mktemp("accept_fine")
        fine_config = desk_config(
            init=pretrain_run["result"].last_checkpoint, strict=False
        )
        fine_result = T.train(fine_config, dataset, fine_out)

        def epochs_to(history, threshold):
            for row in history:
                if np.isfinite(row.val_piou) and row.val_piou >= threshold:
                    return row.epoch
            return None

        scratch_cross = epochs_to(seg_run["result"].history, 80.0)
        fine_cross = epochs_to(fine_result.history, 80.0)
        budget = desk_config().epochs  # the from-scratch epoch budget
        chance = 100.0 / 4

        passed = (
            acc_after >= 90.0
            and abs(acc_flat - chance) <= 10.0
            and fine_cross is not None
            and fine_cross <= (2 * budget) // 3
            and scratch_cross is not None
            and fine_cross <= scratch_cross
        )
        record_criterion(
            9, passed,
            f"zero-shot {acc_before:.1f} -> {acc_after:.1f} after 200 steps (>= 90); "
            f"separation-0 control {acc_flat:.1f} (chance 25 +/- 10); finetune reaches "
            f"PartIoU 80 at epoch {fine_cross} (<= {(2 * budget) // 3} = 2/3 of the "
            f"{budget}-epoch scratch budget; scratch crossed at {scratch_cross})",
        )
        assert acc_after >= 90.0
        assert abs(acc_flat - chance) <= 10.0
        assert fine_cross is not None and fine_cross <= (2 * budget) // 3
        assert fine_cross <= scratch_cross


class TestCriterion10FullScaleHook:
    def test_buildingnet_full_scale(self, tmp_path_factory):
        data_dir = os.environ.get("PF_BUILDINGNET_DIR")
        if not data_dir:
            record_criterion(
                10, True,
                "skipped (optional, out of desk scale): set PF_BUILDINGNET_DIR to "
                "a converted BuildingNet v1 dataset to run the s-preset profile",
            )
            pytest.skip("optional full-scale criterion: PF_BUILDINGNET_DIR not set")
        dataset = T.load_dataset(data_dir)
        config = T.TrainConfig(
            task="segmentation", preset="s", epochs=100, batch_size=8,
            base_lr=0.01, optimizer="adam", voxel_size=0.02, sample_size=12_500,
            radius=0.05, loop_factor=12, seed=SEED,
        )
        out = tmp_path_factory.mktemp("buildingnet_s")
        result = T.train(config, dataset, out)
        report, _ = T.evaluate(result.model, dataset.val, config, result.label_maps)
        passed = abs(report.part_iou - 31.66) <= 3.0
        record_criterion(10, passed, f"BuildingNet s-preset val PartIoU {report.part_iou:.2f} (31.66 +/- 3)")
        assert passed
