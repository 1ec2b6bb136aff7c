"""Sparse NMF: multiplicative updates, training behavior, and the NSD1 format."""

import numpy as np
import pytest

from nmfseg.errors import DimensionError, FormatError
from nmfseg.nmf import (Dictionary, SnmfConfig, dictionary_from_bytes,
                        dictionary_to_bytes, load_dictionary, nmf_loss,
                        normalize_columns, reconstruct, save_dictionary,
                        snmf_objective, train_snmf, update_h, update_w)


class TestUpdateH:
    def test_scalar_fixed_point(self):
        h = update_h(np.array([[4.0]]), np.array([[2.0]]), np.array([[1.0]]), mu=0.0)
        assert h[0, 0] == pytest.approx(2.0, rel=1e-9)

    def test_scalar_with_sparsity(self):
        h = update_h(np.array([[4.0]]), np.array([[2.0]]), np.array([[1.0]]), mu=4.0)
        assert h[0, 0] == pytest.approx(1.0, rel=1e-9)

    def test_zero_entries_absorbing(self):
        rng = np.random.default_rng(0)
        x = rng.random((6, 8))
        w = rng.random((6, 4))
        h = rng.random((4, 8))
        h[2, 5] = 0.0
        out = update_h(x, w, h, mu=0.1)
        assert out[2, 5] == 0.0

    def test_objective_non_increasing_single_step(self):
        rng = np.random.default_rng(1)
        for mu in (0.0, 0.1, 1.0):
            x = rng.random((12, 20))
            w = rng.random((12, 5))
            h = rng.random((5, 20))
            before = snmf_objective(x, w, h, mu)
            after = snmf_objective(x, w, update_h(x, w, h, mu), mu)
            assert after <= before * (1 + 1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            update_h(np.ones((3, 4)), np.ones((3, 2)), np.ones((5, 4)), mu=0.0)


class TestUpdateW:
    def test_exact_factorization_is_fixed_point(self):
        rng = np.random.default_rng(2)
        w = rng.random((10, 4))
        h = rng.random((4, 16))
        x = w @ h
        w2 = update_w(x, w, h)
        assert np.max(np.abs(w2 - w)) / np.max(w) < 1e-6

    def test_zero_entries_absorbing(self):
        rng = np.random.default_rng(3)
        x = rng.random((6, 8))
        w = rng.random((6, 4))
        w[1, 2] = 0.0
        out = update_w(x, w, rng.random((4, 8)))
        assert out[1, 2] == 0.0

    def test_normalization_contract(self):
        rng = np.random.default_rng(4)
        w = rng.random((9, 5)) * 3.0
        h = rng.random((5, 7))
        w2, h2 = normalize_columns(w, h)
        np.testing.assert_allclose(np.linalg.norm(w2, axis=0), 1.0, atol=1e-6)
        np.testing.assert_allclose(w2 @ h2, w @ h, rtol=1e-12)


class TestReconstructAndLoss:
    def test_hand_product(self):
        x = reconstruct(np.array([[1.0], [0.0]]), np.array([[3.0, 5.0]]))
        np.testing.assert_array_equal(x, [[3.0, 5.0], [0.0, 0.0]])

    def test_zero_activations(self):
        rng = np.random.default_rng(5)
        out = reconstruct(rng.random((6, 3)), np.zeros((3, 9)))
        assert np.all(out == 0.0)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(6)
        for f, k, t in ((8, 4, 6), (64, 256, 256)):
            w = rng.random((f, k))
            h = rng.random((k, t))
            got = reconstruct(w, h)
            oracle = np.empty((f, t))
            for i in range(f):
                for j in range(t):
                    oracle[i, j] = float(np.sum(w[i] * h[:, j]))
            np.testing.assert_allclose(got, oracle, rtol=1e-6)

    def test_loss_identity_and_single_entry(self):
        rng = np.random.default_rng(7)
        w = rng.random((5, 3))
        h = rng.random((3, 4))
        assert nmf_loss(w @ h, w, h) == pytest.approx(0.0, abs=1e-18)
        assert nmf_loss(np.array([[0.0]]), np.array([[3.0]]), np.array([[1.0]])) == 9.0

    def test_loss_matches_scalar_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.random((5, 6))
        w = rng.random((5, 2))
        h = rng.random((2, 6))
        wh = w @ h
        oracle = sum((x[i, j] - wh[i, j]) ** 2 for i in range(5) for j in range(6))
        assert nmf_loss(x, w, h) == pytest.approx(oracle, rel=1e-12)


class TestTrainSnmf:
    def test_low_rank_recovery(self):
        rng = np.random.default_rng(9)
        x = rng.random((64, 4)) @ rng.random((4, 256))
        d, h = train_snmf(x, SnmfConfig(k=4, mu=0.0, max_iters=500, rel_tol=1e-9, seed=0))
        err = nmf_loss(x, d.values, h.values) / np.sum(x * x)
        assert err < 0.01

    def test_sparsity_reduces_activation_mass(self):
        rng = np.random.default_rng(10)
        x = rng.random((32, 100))
        _, h0 = train_snmf(x, SnmfConfig(k=8, mu=0.0, max_iters=200, seed=3))
        _, h1 = train_snmf(x, SnmfConfig(k=8, mu=0.1, max_iters=200, seed=3))
        assert np.abs(h1.values).mean() < np.abs(h0.values).mean()

    def test_all_zero_input(self):
        d, h = train_snmf(np.zeros((10, 12)), SnmfConfig(k=3, mu=0.1, max_iters=50, seed=1))
        assert np.all(h.values == 0.0)
        assert d.objective_trace == [0.0]
        np.testing.assert_allclose(np.linalg.norm(d.values, axis=0), 1.0, atol=1e-6)

    def test_monotone_objective_trace(self):
        rng = np.random.default_rng(11)
        for seed in range(5):
            x = rng.random((20, 30))
            for mu in (0.0, 0.1):
                d, _ = train_snmf(x, SnmfConfig(k=6, mu=mu, max_iters=200, rel_tol=1e-12, seed=seed))
                tr = np.asarray(d.objective_trace)
                assert np.all(tr[1:] <= tr[:-1] * (1 + 1e-9))

    def test_nonnegativity_preserved(self):
        rng = np.random.default_rng(12)
        x = rng.random((16, 25))
        d, h = train_snmf(x, SnmfConfig(k=5, mu=0.05, max_iters=100, seed=7))
        assert np.all(d.values >= 0)
        assert np.all(h.values >= 0)

    def test_few_frames_warns(self):
        rng = np.random.default_rng(13)
        with pytest.warns(UserWarning, match="frames"):
            train_snmf(rng.random((8, 3)), SnmfConfig(k=5, mu=0.0, max_iters=5, seed=0))

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        x = rng.random((12, 18))
        cfg = SnmfConfig(k=4, mu=0.1, max_iters=60, seed=42)
        d1, h1 = train_snmf(x, cfg)
        d2, h2 = train_snmf(x, cfg)
        np.testing.assert_array_equal(d1.values, d2.values)
        np.testing.assert_array_equal(h1.values, h2.values)


class TestDictionaryFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(15)
        w, _ = normalize_columns(rng.random((7, 3)).astype(np.float32).astype(np.float64),
                                 np.ones((3, 1)))
        d = Dictionary(values=np.asarray(w, dtype=np.float32), mu=0.25, seed=99)
        p = tmp_path / "d.nsd"
        save_dictionary(d, p)
        back = load_dictionary(p)
        np.testing.assert_allclose(back.values, d.values, rtol=1e-6)
        assert back.mu == 0.25
        assert back.seed == 99

    def test_byte_layout(self):
        d = Dictionary(values=np.eye(2), mu=0.5, seed=-3)
        blob = dictionary_to_bytes(d)
        assert blob[:4] == b"NSD1"
        assert len(blob) == 4 + 8 + 4 * 4 + 16
        back = dictionary_from_bytes(blob)
        np.testing.assert_array_equal(back.values, np.eye(2))
        assert back.seed == -3

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            dictionary_from_bytes(b"ZZZZ" + bytes(40))

    def test_truncated(self):
        d = Dictionary(values=np.eye(3))
        with pytest.raises(FormatError):
            dictionary_from_bytes(dictionary_to_bytes(d)[:-4])
