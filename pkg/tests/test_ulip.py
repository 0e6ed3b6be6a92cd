import numpy as np
import pytest

from pointforge import autodiff as ad
from pointforge import nn
from pointforge import ulip as U
from pointforge.autodiff import Tensor


def unit_rows(rng, n, d):
    rows = rng.standard_normal((n, d))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


class TestEmbeddingFiles:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        triplet = U.EmbeddingTriplet(
            name="RESIDENTIALhouse_mesh0001",
            text_embeddings=rng.standard_normal((64, 16)).astype(np.float32),
            image_embeddings=rng.standard_normal((16, 16)).astype(np.float32),
        )
        path = tmp_path / "b.pfemb"
        U.save_embedding_triplet(triplet, path)
        loaded = U.load_embedding_triplet(path)
        assert loaded.name == triplet.name
        np.testing.assert_array_equal(loaded.text_embeddings, triplet.text_embeddings)
        np.testing.assert_array_equal(loaded.image_embeddings, triplet.image_embeddings)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.pfemb"
        path.write_bytes(b"not an embedding file")
        with pytest.raises(U.EmbeddingError):
            U.load_embedding_triplet(path)

    def test_width_mismatch_rejected(self, rng):
        with pytest.raises(U.EmbeddingError):
            U.EmbeddingTriplet(
                name="x",
                text_embeddings=rng.standard_normal((4, 8)).astype(np.float32),
                image_embeddings=rng.standard_normal((4, 6)).astype(np.float32),
            )

    def test_class_prompt_roundtrip(self, tmp_path, rng):
        names = ["house", "castle", "church"]
        rows = rng.standard_normal((3, 12)).astype(np.float32)
        path = tmp_path / "prompts.pfcls"
        U.save_class_prompts(names, rows, path)
        got_names, got_rows = U.load_class_prompts(path)
        assert got_names == names
        np.testing.assert_array_equal(got_rows, rows)


class TestAverageTextEmbedding:
    def test_identical_rows(self, rng):
        row = unit_rows(rng, 1, 8)[0]
        triplet = U.EmbeddingTriplet(
            name="x",
            text_embeddings=np.tile(row, (5, 1)).astype(np.float32),
            image_embeddings=unit_rows(rng, 2, 8).astype(np.float32),
        )
        got = U.average_text_embedding(triplet)
        np.testing.assert_allclose(got, row, rtol=1e-6)

    def test_opposite_rows_error(self, rng):
        row = unit_rows(rng, 1, 8)[0].astype(np.float32)
        triplet = U.EmbeddingTriplet(
            name="x",
            text_embeddings=np.stack([row, -row]),
            image_embeddings=unit_rows(rng, 2, 8).astype(np.float32),
        )
        with pytest.raises(U.EmbeddingError):
            U.average_text_embedding(triplet)

    def test_matches_scalar_recomputation(self, rng):
        rows = rng.standard_normal((7, 5)).astype(np.float32)
        triplet = U.EmbeddingTriplet(
            name="x", text_embeddings=rows, image_embeddings=rows[:2]
        )
        got = U.average_text_embedding(triplet)
        mean = rows.mean(axis=0)
        want = mean / np.sqrt((mean.astype(np.float64) ** 2).sum())
        np.testing.assert_allclose(got, want, rtol=1e-6)
        np.testing.assert_allclose((got.astype(np.float64) ** 2).sum(), 1.0, rtol=1e-6)


class TestContrastiveLoss:
    def test_single_pair_is_zero(self, rng):
        p = unit_rows(rng, 1, 6)
        loss = U.contrastive_alignment_loss(p, p, tau=0.07)
        assert float(loss.data) == 0.0

    def test_orthonormal_pair_small_tau(self):
        p = np.eye(2, 6)
        loss = U.contrastive_alignment_loss(p, p, tau=1e-3)
        assert float(loss.data) < 1e-12

    def test_rotation_invariance(self, rng):
        p = rng.standard_normal((5, 8))
        t = rng.standard_normal((5, 8))
        q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        a = U.contrastive_alignment_loss(p, t, tau=0.1)
        b = U.contrastive_alignment_loss(p @ q, t @ q, tau=0.1)
        np.testing.assert_allclose(float(a.data), float(b.data), rtol=1e-5)

    def test_nonnegative_and_decreasing_in_alignment(self, rng):
        t = unit_rows(rng, 4, 8)
        noise = unit_rows(rng, 4, 8)
        losses = []
        for w in (0.0, 0.5, 0.9):
            p = (1 - w) * noise + w * t
            losses.append(float(U.contrastive_alignment_loss(p, t, tau=0.2).data))
        assert all(v >= 0 for v in losses)
        assert losses[0] > losses[1] > losses[2]

    def test_learnable_tau_receives_gradient(self, rng):
        head = U.ProjectionHead(8, 6)
        head.cast(np.float64)
        feats = Tensor(rng.standard_normal((4, 8)), requires_grad=True)
        targets = unit_rows(rng, 4, 6)
        loss = U.contrastive_alignment_loss(head.project(feats), targets, head.tau("text"))
        loss.backward()
        assert head.log_tau_text.tensor.grad is not None

    def test_gradient_check_including_tau(self, rng):
        p = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
        log_tau = Tensor(np.asarray(np.log(0.3)), requires_grad=True)
        targets = rng.standard_normal((4, 6))

        def fn():
            return U.contrastive_alignment_loss(p, targets, ad.exp(log_tau))

        assert nn.gradient_check(fn, [p, log_tau]) < 1e-6


class TestZeroShot:
    def test_exact_match(self, rng):
        rows = unit_rows(rng, 15, 8)
        pred, top5 = U.zero_shot_classify(rows[3], rows)
        assert pred == 3
        assert top5[0] == 3

    def test_orthogonal_except_one(self):
        rows = np.eye(15, 16)
        feature = np.zeros(16)
        feature[7] = 0.9
        pred, _ = U.zero_shot_classify(feature, rows)
        assert pred == 7

    def test_matches_exhaustive_scan(self, rng):
        for _ in range(50):
            rows = unit_rows(rng, 10, 6)
            f = rng.standard_normal(6)
            pred, top5 = U.zero_shot_classify(f, rows)
            sims = rows @ f
            order = sorted(range(10), key=lambda i: (-sims[i], i))
            assert pred == order[0]
            assert top5.tolist() == order[:5]

    def test_invariant_to_positive_rescaling(self, rng):
        rows = unit_rows(rng, 8, 5)
        f = rng.standard_normal(5)
        base = U.zero_shot_classify(f, rows)
        for c in (0.001, 3.0, 1000.0):
            scaled = U.zero_shot_classify(c * f, rows)
            assert scaled[0] == base[0]
            np.testing.assert_array_equal(scaled[1], base[1])

    def test_top1_in_top5(self, rng):
        for _ in range(20):
            rows = unit_rows(rng, 15, 4)
            pred, top5 = U.zero_shot_classify(rng.standard_normal(4), rows)
            assert pred in top5.tolist()

    def test_ties_take_lower_index(self):
        rows = np.stack([np.eye(4)[0], np.eye(4)[0], np.eye(4)[1]])
        pred, top5 = U.zero_shot_classify(np.eye(4)[0], rows)
        assert pred == 0
        assert top5.tolist()[:2] == [0, 1]


class TestPretrainStep:
    def _setup(self, rng):
        from pointforge.model import build_model, make_config
        from pointforge.nn import make_optimizer

        cfg = make_config("tiny", "ulip_pretrain", input_channels=10, base_radius=0.3)
        model = build_model(cfg, seed=0)
        head = U.ProjectionHead(cfg.encoder_width, 8)
        head.initialize(1)
        optimizer = make_optimizer("adam", model.parameters() + head.parameters())
        coords = rng.uniform(-0.5, 0.5, (4, 32, 3))
        feats = rng.standard_normal((4, 32, 10)).astype(np.float32)
        triplets = [
            U.EmbeddingTriplet(
                name=f"b{i}",
                text_embeddings=unit_rows(rng, 6, 8).astype(np.float32),
                image_embeddings=unit_rows(rng, 3, 8).astype(np.float32),
            )
            for i in range(4)
        ]
        return model, head, optimizer, coords, feats, triplets

    def test_zero_lr_leaves_parameters_unchanged(self, rng):
        model, head, optimizer, coords, feats, triplets = self._setup(rng)
        before = {k: v.copy() for k, v in model.state_arrays().items() if "running" not in k}
        U.pretrain_step(model, head, optimizer, 0.0, coords, feats, triplets, rng)
        after = model.state_arrays()
        for k, v in before.items():
            np.testing.assert_array_equal(after[k], v)

    def test_loss_decreases_on_clustered_embeddings(self, rng):
        model, head, optimizer, coords, feats, triplets = self._setup(rng)
        losses = [
            U.pretrain_step(model, head, optimizer, 0.01, coords, feats, triplets,
                            np.random.default_rng(i))
            for i in range(50)
        ]
        assert np.mean(losses[-5:]) < np.mean(losses[:5])

    def test_embedding_files_untouched_by_training(self, tmp_path, rng):
        model, head, optimizer, coords, feats, triplets = self._setup(rng)
        path = tmp_path / "frozen.pfemb"
        U.save_embedding_triplet(triplets[0], path)
        before = path.read_bytes()
        for i in range(3):
            U.pretrain_step(model, head, optimizer, 0.01, coords, feats, triplets,
                            np.random.default_rng(i))
        assert path.read_bytes() == before

    def test_targets_never_receive_gradients(self, rng):
        model, head, optimizer, coords, feats, triplets = self._setup(rng)
        text = np.stack([U.average_text_embedding(t) for t in triplets])
        frozen = text.copy()
        out = model.forward(coords, feats, training=True, rng=rng)
        loss = U.pretraining_losses(head, out.global_feature, text,
                                    np.stack([t.image_embeddings[0] for t in triplets]))
        loss.backward()
        np.testing.assert_array_equal(text, frozen)
