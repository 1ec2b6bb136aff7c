"""Label files, corpus generation, and manifest handling."""

import numpy as np
import pytest

from nmfseg.corpus import (CLASS_NAMES, CorpusSpec, Manifest, generate_corpus,
                           load_manifest, save_manifest, synthesize_clip)
from nmfseg.errors import FormatError
from nmfseg.labels import (UNANNOTATED, label_matrix_from_range, read_label_file,
                           write_label_file)


class TestLabelFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        frames = rng.choice([0, 1, UNANNOTATED], size=(4, 25)).astype(np.int8)
        p = tmp_path / "x.lab"
        write_label_file(p, frames, hop=0.02)
        back, hop = read_label_file(p)
        np.testing.assert_array_equal(back, frames)
        assert hop == 0.02

    def test_header_required(self, tmp_path):
        p = tmp_path / "bad.lab"
        p.write_text("0 1 0 1\n")
        with pytest.raises(FormatError, match="FRAMES"):
            read_label_file(p)

    def test_invalid_symbol(self, tmp_path):
        p = tmp_path / "bad.lab"
        p.write_text("FRAMES 0.020000 2\n0 x\n")
        with pytest.raises(FormatError, match="symbol"):
            read_label_file(p)

    def test_mask_from_range(self):
        frames = np.array([[1, 1, 0, 0], [0, UNANNOTATED, 0, 1]], dtype=np.int8)
        lab = label_matrix_from_range(frames, 0, 2)
        assert lab.mask.tolist() == [True, False]
        np.testing.assert_array_equal(lab.values[0], [1.0, 1.0])
        lab2 = label_matrix_from_range(frames, 2, 4)
        assert lab2.mask.tolist() == [True, True]


class TestSynthesizeClip:
    def test_deterministic(self):
        spec = CorpusSpec(seed=7, train_minutes=1, dev_minutes=1, test_minutes=1)
        a_samples, a_labels = synthesize_clip(spec, 0, 3)
        b_samples, b_labels = synthesize_clip(spec, 0, 3)
        np.testing.assert_array_equal(a_samples, b_samples)
        np.testing.assert_array_equal(a_labels, b_labels)

    def test_overlap_implies_speech(self):
        spec = CorpusSpec(seed=3, train_minutes=1, dev_minutes=1, test_minutes=1)
        for clip_index in range(6):
            _, labels = synthesize_clip(spec, 0, clip_index)
            assert np.all(labels[0][labels[1] == 1] == 1)

    def test_all_frames_fully_annotated(self):
        spec = CorpusSpec(seed=3, train_minutes=1, dev_minutes=1, test_minutes=1)
        _, labels = synthesize_clip(spec, 1, 0)
        assert set(np.unique(labels)) <= {0, 1}

    def test_amplitudes_bounded(self):
        spec = CorpusSpec(seed=9, train_minutes=1, dev_minutes=1, test_minutes=1)
        samples, _ = synthesize_clip(spec, 0, 0)
        assert np.abs(samples).max() <= 0.99 + 1e-9


class TestGenerateCorpus:
    def test_seeded_bytes_identical(self, tmp_path):
        spec = CorpusSpec(seed=21, train_minutes=0.5, dev_minutes=0.5, test_minutes=0.5,
                          clip_seconds=5.0)
        m1 = generate_corpus(spec, tmp_path / "a")
        m2 = generate_corpus(spec, tmp_path / "b")
        assert (tmp_path / "a" / "manifest.csv").read_text() == (tmp_path / "b" / "manifest.csv").read_text()
        for row in m1.rows:
            assert (tmp_path / "a" / row.audio).read_bytes() == (tmp_path / "b" / row.audio).read_bytes()
            assert (tmp_path / "a" / row.labels).read_bytes() == (tmp_path / "b" / row.labels).read_bytes()

    def test_manifest_round_trip_and_splits(self, small_corpus):
        _, manifest = small_corpus
        loaded = load_manifest(manifest.root / "manifest.csv")
        assert len(loaded.rows) == len(manifest.rows)
        ids = {split: {r.clip_id for r in loaded.for_split(split)}
               for split in ("train", "dev", "test")}
        assert not (ids["train"] & ids["dev"]) and not (ids["train"] & ids["test"])
        assert all(loaded.resolve(r.audio).exists() for r in loaded.rows)

    def test_missing_file_rejected(self, tmp_path):
        spec = CorpusSpec(seed=2, train_minutes=0.5, dev_minutes=0.5, test_minutes=0.5,
                          clip_seconds=5.0)
        manifest = generate_corpus(spec, tmp_path)
        (tmp_path / manifest.rows[0].audio).unlink()
        with pytest.raises(FormatError, match="missing"):
            load_manifest(tmp_path / "manifest.csv")

    def test_event_rate_statistics(self, tmp_path):
        # deterministic event counts per clip leave only duration variance,
        # which is well inside 10 percent over ten minutes
        spec = CorpusSpec(seed=11, train_minutes=10, dev_minutes=0.5, test_minutes=0.5)
        manifest = generate_corpus(spec, tmp_path / "stats")
        totals = {name: 0.0 for name in CLASS_NAMES}
        for row in manifest.for_split("train"):
            frames, hop = read_label_file(manifest.resolve(row.labels))
            for i, name in enumerate(CLASS_NAMES):
                totals[name] += float((frames[i] == 1).sum()) * hop
        for name in CLASS_NAMES:
            expected = spec.expected_class_seconds(name, 10.0)
            assert abs(totals[name] - expected) / expected < 0.10, (name, totals[name], expected)

    def test_parallel_generation_identical(self, tmp_path):
        spec = CorpusSpec(seed=4, train_minutes=0.5, dev_minutes=0.5, test_minutes=0.5,
                          clip_seconds=5.0)
        m1 = generate_corpus(spec, tmp_path / "serial", workers=1)
        m2 = generate_corpus(spec, tmp_path / "parallel", workers=2)
        for r1, r2 in zip(m1.rows, m2.rows):
            assert (tmp_path / "serial" / r1.audio).read_bytes() == (tmp_path / "parallel" / r2.audio).read_bytes()
