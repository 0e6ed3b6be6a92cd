import json
import os

import numpy as np
import pytest

from pointforge import synthetic as S
from pointforge import ulip as U
from pointforge.data import (
    SEGMENTATION_PARTS,
    label_histogram,
    load_point_cloud,
    load_split_manifest,
    segmentation_vocabulary,
)

PART = {name: i for i, name in enumerate(SEGMENTATION_PARTS)}


@pytest.fixture
def spec():
    return S.GeneratorSpec(points_per_building=1024, seed=5)


class TestGenerateBuilding:
    def test_zero_unspecified_fraction_uses_vocab_only(self, rng):
        spec = S.GeneratorSpec(points_per_building=512, unspecified_fraction=0.0)
        cloud, _ = S.generate_building(spec, 1, rng)  # office: flat roof
        allowed = {PART[p] for p in spec.part_vocab}
        assert set(np.unique(cloud.seg_labels)) <= allowed
        assert 0 not in np.unique(cloud.seg_labels)

    def test_gable_roof_sits_above_walls(self, spec, rng):
        cloud, book = S.generate_building(spec, 0, rng)  # house: gable
        roof = cloud.coords[cloud.seg_labels == PART["roof"], 1]
        wall = cloud.coords[cloud.seg_labels == PART["wall"], 1]
        assert len(roof) and len(wall)
        # every roof point sits at or above the eave line (up to noise)
        tolerance = 8 * spec.noise_sigma * book["scale"]
        assert roof.min() >= wall.max() - tolerance
        assert roof.mean() > wall.mean()

    def test_deterministic_given_rng(self, spec):
        a, _ = S.generate_building(spec, 2, np.random.default_rng(42), 7)
        b, _ = S.generate_building(spec, 2, np.random.default_rng(42), 7)
        np.testing.assert_array_equal(a.coords, b.coords)
        np.testing.assert_array_equal(a.colors, b.colors)
        np.testing.assert_array_equal(a.seg_labels, b.seg_labels)
        assert a.name == b.name

    def test_coords_normalized_to_half_cube(self, spec, rng):
        for t in range(4):
            cloud, _ = S.generate_building(spec, t, rng)
            assert cloud.coords.min() >= -0.5 - 1e-6
            assert cloud.coords.max() <= 0.5 + 1e-6
            assert np.isclose(np.abs(cloud.coords).max(), 0.5, atol=1e-5)

    def test_name_parses_back_to_type(self, spec, rng):
        from pointforge.data import building_type_vocabulary, parse_building_name

        vocab = building_type_vocabulary()
        for t in range(4):
            cloud, _ = S.generate_building(spec, t, rng, sequence=t)
            _, subclass = parse_building_name(cloud.name)
            assert vocab.index(subclass) == cloud.type_label

    def test_ground_is_lowest_band(self, spec, rng):
        cloud, _ = S.generate_building(spec, 3, rng)
        ground = cloud.coords[cloud.seg_labels == PART["ground"], 1]
        other = cloud.coords[(cloud.seg_labels != PART["ground"]) & (cloud.seg_labels != 0), 1]
        assert ground.mean() < other.mean()
        assert abs(ground.min() - cloud.coords[:, 1].min()) < 0.05

    def test_normals_unit_length(self, spec, rng):
        cloud, _ = S.generate_building(spec, 0, rng)
        norms = np.linalg.norm(cloud.normals, axis=1)
        np.testing.assert_allclose(norms, 1.0, rtol=1e-5)

    def test_bad_type_index(self, spec, rng):
        with pytest.raises(ValueError):
            S.generate_building(spec, 9, rng)


class TestGeneratorSpecValidation:
    def test_required_parts(self):
        with pytest.raises(ValueError):
            S.GeneratorSpec(part_vocab=("wall", "roof", "ground"))

    def test_unknown_part(self):
        with pytest.raises(ValueError):
            S.GeneratorSpec(part_vocab=("wall", "roof", "ground", "window", "blob"))

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            S.GeneratorSpec(unspecified_fraction=1.0)


class TestGenerateDataset:
    def test_counts_and_manifests(self, tmp_path, spec):
        splits = S.generate_dataset(spec, {"train": 8, "val": 2, "test": 2}, tmp_path)
        files = [p for p in os.listdir(tmp_path) if p.endswith(".txt")]
        assert sorted(files) == ["test.txt", "train.txt", "val.txt"]
        total = 0
        for name, split in splits.items():
            for entry in split.entries:
                assert os.path.exists(os.path.join(tmp_path, entry))
                total += 1
        assert total == 12

    def test_disjoint_split_membership(self, tmp_path, spec):
        splits = S.generate_dataset(spec, {"train": 4, "val": 4}, tmp_path)
        names = [set(s.entries) for s in splits.values()]
        assert names[0] & names[1] == set()

    def test_reload_round_trip(self, tmp_path, spec):
        S.generate_dataset(spec, {"train": 4, "val": 2}, tmp_path)
        split = load_split_manifest(os.path.join(tmp_path, "train.txt"))
        clouds = [load_point_cloud(p) for p in split.entries]
        assert all(c.n == spec.points_per_building for c in clouds)
        assert all(c.type_label is not None for c in clouds)

    def test_histograms_match_generator_bookkeeping(self, tmp_path, spec):
        S.generate_dataset(spec, {"train": 6, "val": 2}, tmp_path)
        with open(os.path.join(tmp_path, "gen_counts.json")) as fh:
            gen_counts = json.load(fh)
        split = load_split_manifest(os.path.join(tmp_path, "train.txt"))
        clouds = [load_point_cloud(p) for p in split.entries]
        hist = label_histogram(clouds, segmentation_vocabulary(), "segmentation")
        want = gen_counts["train"]["seg"]
        assert hist.ignored == want.get("0", 0)
        for c in range(1, 32):
            assert int(hist.counts[c]) == want.get(str(c), 0)

    def test_regeneration_is_identical(self, tmp_path, spec):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        S.generate_dataset(spec, {"train": 4, "val": 2}, a_dir)
        S.generate_dataset(spec, {"train": 4, "val": 2}, b_dir)
        for sub in ("train.txt", "val.txt", "gen_counts.json"):
            assert (a_dir / sub).read_bytes() == (b_dir / sub).read_bytes()
        split = load_split_manifest(a_dir / "train.txt")
        for entry in split.entries:
            rel = os.path.relpath(entry, a_dir)
            assert (a_dir / rel).read_bytes() == (b_dir / rel).read_bytes()


class TestGenerateEmbeddings:
    def test_high_separation_classifies_perfectly(self, tmp_path, spec, rng):
        buildings = [(f"b{i}", spec.type_labels[i % 4]) for i in range(16)]
        prompt_path = S.generate_embeddings(
            spec, buildings, tmp_path, dim=16, separation=5.0, row_jitter=0.02, rng=rng
        )
        names, rows = U.load_class_prompts(prompt_path)
        correct = 0
        for name, label in buildings:
            triplet = U.load_embedding_triplet(os.path.join(tmp_path, name + ".pfemb"))
            feature = U.average_text_embedding(triplet)
            pred, _ = U.zero_shot_classify(feature, rows)
            correct += int(spec.type_labels[pred] == label)
        assert correct == len(buildings)

    def test_zero_separation_collapses_classes(self, tmp_path, spec, rng):
        buildings = [(f"b{i}", spec.type_labels[i % 4]) for i in range(8)]
        prompt_path = S.generate_embeddings(
            spec, buildings, tmp_path, dim=16, separation=0.0, rng=rng
        )
        _, rows = U.load_class_prompts(prompt_path)
        # all class prompts collapse onto one direction
        sims = rows @ rows.T
        np.testing.assert_allclose(sims, 1.0, atol=1e-5)

    def test_file_round_trip_exact(self, tmp_path, spec, rng):
        buildings = [("only", spec.type_labels[0])]
        S.generate_embeddings(spec, buildings, tmp_path, dim=8, rng=rng)
        path = os.path.join(tmp_path, "only.pfemb")
        first = open(path, "rb").read()
        triplet = U.load_embedding_triplet(path)
        U.save_embedding_triplet(triplet, path)
        assert open(path, "rb").read() == first


class TestLearnableStructure:
    def test_type_stump_separates_two_types(self, rng):
        # mean height + footprint aspect split house from office building
        spec = S.GeneratorSpec(points_per_building=512)
        feats, labels = [], []
        for i in range(40):
            t = i % 2  # house (gable, squat) vs office (flat, tall)
            cloud, _ = S.generate_building(spec, t, np.random.default_rng(100 + i))
            heights = cloud.coords[:, 1] - cloud.coords[:, 1].min()
            extent = cloud.coords.max(0) - cloud.coords.min(0)
            feats.append([heights.mean(), extent[0] / max(extent[2], 1e-9)])
            labels.append(t)
        feats = np.asarray(feats)
        labels = np.asarray(labels)
        best = 0.0
        for dim in range(feats.shape[1]):
            for threshold in np.unique(feats[:, dim]):
                pred = (feats[:, dim] > threshold).astype(int)
                best = max(best, (pred == labels).mean(), (1 - pred == labels).mean())
        assert best > 0.9
