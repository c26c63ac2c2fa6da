import numpy as np
import pytest

from reidlab.data import (GALLERY, QUERY, TRAIN, Dataset, SynthSpec,
                          load_jsonl, save_jsonl, split_query_gallery,
                          synth_generate, synth_generate_full)
from reidlab.rng import Rng


def tiny_spec(**overrides) -> SynthSpec:
    base = dict(num_classes=6, num_scenes=2, dim=4, samples_per_class=4,
                pair_fraction=0.0, pair_sep=1.0, cluster_sigma=0.2,
                scene_shift_magnitude=0.0, seed=0)
    base.update(overrides)
    return SynthSpec(**base)


class TestSynthGenerate:
    def test_shapes_and_ids(self):
        ds = synth_generate(tiny_spec())
        assert len(ds) == 24
        assert ds.features.shape == (24, 4)
        assert set(ds.class_ids.tolist()) == set(range(6))
        assert set(ds.scene_ids.tolist()) == {0, 1}
        assert np.all(ds.split == TRAIN)

    def test_round_robin_scenes(self):
        ds = synth_generate(tiny_spec(num_scenes=3, samples_per_class=6))
        for cls in range(6):
            scenes = ds.scene_ids[ds.class_ids == cls]
            assert scenes.tolist() == [0, 1, 2, 0, 1, 2]

    def test_deterministic(self):
        a = synth_generate(tiny_spec(seed=5))
        b = synth_generate(tiny_spec(seed=5))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.class_ids, b.class_ids)

    def test_zero_shift_keeps_class_tight(self):
        ds, info = synth_generate_full(tiny_spec(cluster_sigma=0.01))
        assert np.all(info.scene_offsets == 0.0)
        for cls in range(6):
            feats = ds.features[ds.class_ids == cls]
            spread = np.linalg.norm(feats - info.centers[cls], axis=1)
            assert spread.max() < 0.01 * 10  # noise-scale only

    def test_scene_shift_moves_scenes_apart(self):
        ds, info = synth_generate_full(tiny_spec(scene_shift_magnitude=5.0,
                                                 cluster_sigma=0.01))
        for cls in range(6):
            rows = ds.class_ids == cls
            s0 = ds.features[rows & (ds.scene_ids == 0)].mean(axis=0)
            s1 = ds.features[rows & (ds.scene_ids == 1)].mean(axis=0)
            gap = np.linalg.norm(s0 - s1)
            expected = np.linalg.norm(info.scene_offsets[0] - info.scene_offsets[1])
            assert gap == pytest.approx(expected, abs=0.2)

    def test_planted_pairs_are_mutual_nearest_centers(self):
        spec = tiny_spec(num_classes=10, pair_fraction=1.0, pair_sep=0.1,
                         center_radius=20.0)
        _, info = synth_generate_full(spec)
        assert info.paired_classes == [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
        d = np.linalg.norm(info.centers[:, None] - info.centers[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        for a, b in info.paired_classes:
            assert d[a].argmin() == b
            assert d[b].argmin() == a
            assert d[a, b] == pytest.approx(0.1, abs=1e-9)

    def test_pair_fraction_half(self):
        _, info = synth_generate_full(tiny_spec(num_classes=8, pair_fraction=0.5))
        assert info.paired_classes == [(0, 1), (2, 3)]

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError, match="samples_per_class"):
            synth_generate(tiny_spec(samples_per_class=1))


class TestJsonl:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        ds = load_jsonl(path)
        assert len(ds) == 0
        assert ds.num_classes == 0
        assert ds.num_scenes == 0

    def test_roundtrip_is_exact(self, tmp_path):
        ds = synth_generate(tiny_spec(seed=3))
        path = tmp_path / "ds.jsonl"
        save_jsonl(path, ds)
        back = load_jsonl(path)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.class_ids, ds.class_ids)
        np.testing.assert_array_equal(back.scene_ids, ds.scene_ids)
        np.testing.assert_array_equal(back.split, ds.split)

    def test_single_line(self, tmp_path):
        path = tmp_path / "one.jsonl"
        path.write_text('{"id": 0, "scene": 1, "features": [0.25, -1.5]}\n')
        ds = load_jsonl(path)
        assert len(ds) == 1
        assert ds.num_classes == 1
        assert ds.num_scenes == 2
        np.testing.assert_array_equal(ds.features, [[0.25, -1.5]])

    def test_missing_id_names_field_and_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": 0, "scene": 0, "features": [1.0]}\n'
                        '{"scene": 0, "features": [1.0]}\n')
        with pytest.raises(ValueError, match=r"line 2: missing field 'id'"):
            load_jsonl(path)

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "bad2.jsonl"
        path.write_text('{"id": 0, "scene": 0, "features": [1.0]}\n{not json\n')
        with pytest.raises(ValueError, match="line 2: invalid JSON"):
            load_jsonl(path)

    def test_inconsistent_dims_rejected(self, tmp_path):
        path = tmp_path / "dims.jsonl"
        path.write_text('{"id": 0, "scene": 0, "features": [1.0, 2.0]}\n'
                        '{"id": 1, "scene": 0, "features": [1.0]}\n')
        with pytest.raises(ValueError, match="line 2: feature length"):
            load_jsonl(path)

    def test_mixed_records_rejected(self, tmp_path):
        path = tmp_path / "mixed.jsonl"
        path.write_text('{"id": 0, "scene": 0, "features": [1.0]}\n'
                        '{"id": 1, "scene": 0, "image": "a.ppm"}\n')
        with pytest.raises(ValueError, match="line 2: cannot mix"):
            load_jsonl(path)

    def test_image_backed_dataset(self, tmp_path):
        path = tmp_path / "img.jsonl"
        path.write_text('{"id": 0, "scene": 0, "image": "a.ppm"}\n'
                        '{"id": 0, "scene": 1, "image": "b.ppm"}\n')
        ds = load_jsonl(path)
        assert not ds.is_vector_backed
        assert ds.image_paths == ["a.ppm", "b.ppm"]

    def test_split_tags_roundtrip(self, tmp_path):
        ds = synth_generate(tiny_spec(seed=9))
        tagged = split_query_gallery(ds, [0, 1], Rng(4))
        path = tmp_path / "tagged.jsonl"
        save_jsonl(path, tagged)
        back = load_jsonl(path)
        np.testing.assert_array_equal(back.split, tagged.split)


class TestSplitQueryGallery:
    def test_one_class_two_scenes(self):
        # 4 samples, 2 per scene -> 2 queries + 2 gallery
        ds = Dataset(class_ids=np.array([0, 0, 0, 0, 1, 1]),
                     scene_ids=np.array([0, 0, 1, 1, 0, 1]),
                     num_classes=2, num_scenes=2,
                     features=np.arange(12, dtype=np.float64).reshape(6, 2))
        out = split_query_gallery(ds, [0], Rng(0))
        assert (out.split[:4] == QUERY).sum() == 2
        assert (out.split[:4] == GALLERY).sum() == 2
        assert np.all(out.split[4:] == TRAIN)
        # one query per scene
        q_scenes = out.scene_ids[out.split == QUERY]
        assert sorted(q_scenes.tolist()) == [0, 1]

    def test_empty_holdout_all_train(self):
        ds = synth_generate(tiny_spec())
        out = split_query_gallery(ds, [], Rng(0))
        assert np.all(out.split == TRAIN)

    def test_deterministic(self):
        ds = synth_generate(tiny_spec(seed=2))
        a = split_query_gallery(ds, [1, 3], Rng(7))
        b = split_query_gallery(ds, [1, 3], Rng(7))
        np.testing.assert_array_equal(a.split, b.split)

    def test_single_scene_class_rejected(self):
        ds = Dataset(class_ids=np.array([0, 0, 1, 1]),
                     scene_ids=np.array([0, 0, 0, 1]),
                     num_classes=2, num_scenes=2,
                     features=np.zeros((4, 2)))
        with pytest.raises(ValueError, match="single scene"):
            split_query_gallery(ds, [0], Rng(0))

    def test_unmatchable_query_rejected(self):
        # one sample per scene: queries would empty the gallery
        ds = Dataset(class_ids=np.array([0, 0]),
                     scene_ids=np.array([0, 1]),
                     num_classes=1, num_scenes=2,
                     features=np.zeros((2, 2)))
        with pytest.raises(ValueError, match="no .*cross-scene"):
            split_query_gallery(ds, [0], Rng(0))

    def test_partition_and_cross_scene_invariants(self):
        ds = synth_generate(tiny_spec(num_classes=8, samples_per_class=6,
                                      num_scenes=3, seed=11))
        out = split_query_gallery(ds, [2, 5, 7], Rng(3))
        assert np.isin(out.split, [TRAIN, QUERY, GALLERY]).all()
        q_rows = out.indices_of(QUERY)
        g_rows = out.indices_of(GALLERY)
        for r in q_rows:
            same_class = g_rows[out.class_ids[g_rows] == out.class_ids[r]]
            assert (out.scene_ids[same_class] != out.scene_ids[r]).any()
        # holdout classes never appear in train
        t_rows = out.indices_of(TRAIN)
        assert not np.isin(out.class_ids[t_rows], [2, 5, 7]).any()
