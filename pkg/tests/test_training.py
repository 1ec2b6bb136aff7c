"""Dataset assembly and the training loop."""

import numpy as np
import pytest

from nmfseg.corpus import Manifest, ManifestRow
from nmfseg.errors import DimensionError
from nmfseg.network import init_model
from nmfseg.training import (FrontendSettings, TrainConfig, build_segments,
                             evaluate_split, load_split, pretrain_dictionary, train)


@pytest.fixture(scope="module")
def trained_setup(small_corpus):
    _, manifest = small_corpus
    settings = FrontendSettings()
    dictionary = pretrain_dictionary(manifest, settings, k=16, mu=0.1,
                                     max_iters=100, seed=0, max_frames=1000)
    return manifest, settings, dictionary


class TestDataAssembly:
    def test_split_loading_and_alignment(self, trained_setup):
        manifest, settings, _ = trained_setup
        clips = load_split(manifest, "train", settings)
        for clip in clips:
            assert clip.features.shape[1] == clip.spect.shape[1] == clip.labels.shape[1]
            assert clip.features.shape[0] == 80
            assert clip.spect.shape[0] == 257

    def test_missing_split(self, trained_setup):
        manifest, settings, _ = trained_setup
        with pytest.raises(ValueError, match="no 'nope' rows"):
            load_split(manifest, "nope", settings)

    def test_segment_chunking(self, trained_setup):
        manifest, settings, _ = trained_setup
        clips = load_split(manifest, "train", settings)
        segments = build_segments(clips, segment_seconds=4.0)
        seg_frames = int(round(4.0 / clips[0].hop))
        assert all(s.features.shape[1] == seg_frames for s in segments)
        assert all(s.labels.frames == seg_frames for s in segments)
        # a 10 s clip yields two full 4 s segments; the tail is dropped
        assert len(segments) == 2 * len(clips)

    def test_length_mismatch_beyond_one_frame(self, tmp_path, small_corpus):
        _, manifest = small_corpus
        row = manifest.for_split("train")[0]
        bad_dir = tmp_path / "bad"
        bad_dir.mkdir()
        import shutil
        shutil.copy(manifest.resolve(row.audio), bad_dir / "clip.wav")
        from nmfseg.labels import read_label_file, write_label_file
        frames, hop = read_label_file(manifest.resolve(row.labels))
        write_label_file(bad_dir / "clip.lab", frames[:, :-5], hop)
        bad_manifest = Manifest(rows=[ManifestRow("clip", "clip.wav", "", "clip.lab", "train")],
                                root=bad_dir)
        with pytest.raises(DimensionError, match="more than one"):
            load_split(bad_manifest, "train", FrontendSettings())

    def test_external_feature_files_used(self, tmp_path, small_corpus):
        _, manifest = small_corpus
        row = manifest.for_split("train")[0]
        import shutil
        ext_dir = tmp_path / "ext"
        ext_dir.mkdir()
        shutil.copy(manifest.resolve(row.audio), ext_dir / "clip.wav")
        shutil.copy(manifest.resolve(row.labels), ext_dir / "clip.lab")
        from nmfseg.frontend import FeatureSequence, write_features
        rng = np.random.default_rng(0)
        t = 499  # matches the 10 s clip's frame count
        write_features(FeatureSequence(values=rng.normal(size=(12, t)).astype(np.float32),
                                       hop=0.02), ext_dir / "clip.nsf")
        ext_manifest = Manifest(rows=[ManifestRow("clip", "clip.wav", "clip.nsf",
                                                  "clip.lab", "train")], root=ext_dir)
        clips = load_split(ext_manifest, "train", FrontendSettings())
        assert clips[0].features.shape[0] == 12


class TestTrain:
    def test_seeded_runs_identical(self, trained_setup):
        manifest, settings, dictionary = trained_setup
        results = []
        for _ in range(2):
            model = init_model(d=80, k=16, c=4, seed=1)
            model.attach_dictionary(dictionary)
            cfg = TrainConfig(alpha=10, beta=1, gamma=0.1, batch_size=8, epochs=2, seed=1)
            model, trace = train(model, manifest, cfg, settings)
            results.append((model, trace))
        for (_, a), (_, b) in zip(results[0][0].parameters(), results[1][0].parameters()):
            np.testing.assert_array_equal(a, b)
        assert results[0][1] == results[1][1]

    def test_loss_trace_finite(self, trained_setup):
        manifest, settings, dictionary = trained_setup
        model = init_model(d=80, k=16, c=4, seed=2)
        model.attach_dictionary(dictionary)
        cfg = TrainConfig(alpha=10, beta=1, gamma=0.1, batch_size=8, epochs=2, seed=0)
        _, trace = train(model, manifest, cfg, settings)
        for entry in trace:
            for key in ("train_total", "train_bce", "train_nmf", "train_l1", "dev_bce"):
                assert np.isfinite(entry[key]), key

    def test_dev_bce_decreases_first_three_epochs(self, trained_setup):
        # classification-only training isolates the decreasing quantity
        manifest, settings, dictionary = trained_setup
        model = init_model(d=80, k=16, c=4, seed=0)
        model.attach_dictionary(dictionary)
        cfg = TrainConfig(alpha=10, beta=0, gamma=0, batch_size=8, epochs=3, seed=0)
        _, trace = train(model, manifest, cfg, settings)
        bces = [entry["dev_bce"] for entry in trace]
        assert bces[0] > bces[1] > bces[2], bces

    def test_best_checkpoint_retained(self, trained_setup):
        manifest, settings, dictionary = trained_setup
        model = init_model(d=80, k=16, c=4, seed=3)
        model.attach_dictionary(dictionary)
        cfg = TrainConfig(alpha=10, beta=1, gamma=0.1, batch_size=8, epochs=3, seed=0)
        model, trace = train(model, manifest, cfg, settings)
        best = trace[-1]["best_epoch"]
        assert 0 <= best < 3
        best_macro = max(e["dev_macro_f1"] for e in trace)
        assert trace[best]["dev_macro_f1"] == best_macro

    def test_empty_manifest_rejected(self, trained_setup):
        _, settings, dictionary = trained_setup
        model = init_model(d=80, k=16, c=4, seed=0)
        model.attach_dictionary(dictionary)
        empty = Manifest(rows=[])
        with pytest.raises(ValueError):
            train(model, empty, TrainConfig(epochs=1), settings)


class TestTrainConfig:
    def test_requires_positive_weight(self):
        with pytest.raises(ValueError):
            TrainConfig(alpha=0, beta=0, gamma=0)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(alpha=-1, beta=1, gamma=0)

    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.lr == 1e-3
        assert cfg.batch_size == 64
        assert cfg.segment_seconds == 4.0
        assert cfg.threshold == 0.5
