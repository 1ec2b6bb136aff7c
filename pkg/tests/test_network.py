"""Encoder architecture: initialization, forward contract, checkpoint format."""

import numpy as np
import pytest

from conftest import make_tiny_model
from nmfseg.errors import DimensionError, FormatError
from nmfseg.network import (INPUT_CENTER, INPUT_SCALE, SegModel, forward,
                            init_model, load_model, save_model)
from nmfseg.nmf import Dictionary


class TestInit:
    def test_same_seed_bitwise_identical(self):
        a = init_model(80, 256, 4, seed=9)
        b = init_model(80, 256, 4, seed=9)
        for (na, pa), (nb, pb) in zip(a.parameters(), b.parameters()):
            assert na == nb
            np.testing.assert_array_equal(pa, pb)

    def test_theta_size(self):
        model = init_model(80, 256, 4, seed=0)
        assert model.theta.size == 1024

    def test_different_seeds_differ(self):
        a = init_model(16, 8, 4, seed=0)
        b = init_model(16, 8, 4, seed=1)
        assert any(not np.array_equal(pa, pb)
                   for (_, pa), (_, pb) in zip(a.parameters(), b.parameters()))

    def test_biases_zero_and_bounds(self):
        model = init_model(10, 6, 3, seed=2, channels=8)
        assert np.all(model.bneck_b == 0) and np.all(model.out_b == 0)
        assert np.abs(model.bneck_w).max() <= np.sqrt(1 / 10)
        assert np.abs(model.conv_w[0][0]).max() <= np.sqrt(1 / (8 * 3))
        assert np.abs(model.theta).max() <= np.sqrt(1 / 6)

    def test_parameter_count_depends_only_on_dims(self):
        a = init_model(12, 7, 3, seed=0)
        b = init_model(12, 7, 3, seed=99)
        assert a.parameter_count() == b.parameter_count()


def straight_line_forward(model, s):
    """Independent loop-based reimplementation of the forward pass."""
    s = (np.asarray(s, dtype=np.float64) - INPUT_CENTER) / INPUT_SCALE

    def conv1x1(x, w, b):
        return w @ x + b[:, None]

    def dconv(x, w, b, d):
        out_ch, _, _ = w.shape
        t_len = x.shape[1]
        y = np.zeros((out_ch, t_len))
        for o in range(out_ch):
            for t in range(t_len):
                acc = b[o]
                for j in range(3):
                    src = t + (j - 1) * d
                    if 0 <= src < t_len:
                        acc += float(w[o, :, j] @ x[:, src])
                y[o, t] = acc
        return y

    x = conv1x1(s, model.bneck_w, model.bneck_b)
    skip = np.zeros_like(x)
    for b in range(model.n_blocks):
        u = x.copy()
        v = u
        for l, d in enumerate(model.dilations):
            v = np.maximum(dconv(v, model.conv_w[b][l], model.conv_b[b][l], d), 0.0)
        x = u + v
        skip = skip + x
    h = np.maximum(conv1x1(skip, model.out_w, model.out_b), 0.0)
    return h, model.theta @ h


class TestForward:
    def test_zero_weights_give_zero_outputs(self):
        model = init_model(6, 5, 3, seed=0, channels=4)
        zeros = {name: np.zeros_like(arr) for name, arr in model.parameters()}
        model.load_parameters(zeros)
        h, logits = forward(model, np.random.default_rng(0).normal(size=(6, 9)))
        assert np.all(h.values == 0.0)
        assert np.all(logits == 0.0)

    def test_h_nonnegative(self):
        rng = np.random.default_rng(1)
        model = make_tiny_model()
        for _ in range(5):
            h, _ = forward(model, rng.normal(size=(8, 23)) * 5)
            assert h.values.min() >= 0.0

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(42)
        model = make_tiny_model(seed=3)
        for name, arr in model.parameters():
            if arr.ndim == 1:
                arr += rng.uniform(-0.2, 0.2, size=arr.shape)
        s = rng.normal(size=(8, 10))
        h, logits = forward(model, s)
        h_ref, logits_ref = straight_line_forward(model, s)
        np.testing.assert_allclose(h.values, h_ref, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(logits, logits_ref, rtol=1e-6, atol=1e-9)

    def test_preserves_frame_count(self):
        rng = np.random.default_rng(2)
        model = make_tiny_model()
        for t in (1, 2, 3, 5, 17, 33, 200):
            h, logits = forward(model, rng.normal(size=(8, t)))
            assert h.values.shape == (12, t)
            assert logits.shape == (4, t)

    def test_dimension_mismatch(self):
        model = make_tiny_model()
        with pytest.raises(DimensionError):
            forward(model, np.zeros((9, 10)))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = make_tiny_model(seed=5)
        p = tmp_path / "m.nsm"
        save_model(model, p)
        back = load_model(p)
        assert (back.d, back.k, back.c, back.channels) == (8, 12, 4, 8)
        assert back.dilations == model.dilations
        for (_, a), (_, b) in zip(model.parameters(), back.parameters()):
            np.testing.assert_allclose(a, b, atol=1e-6)  # f32 storage
        np.testing.assert_allclose(back.w_ref.values, model.w_ref.values, atol=1e-7)

    def test_forward_equivalence_after_reload(self, tmp_path):
        rng = np.random.default_rng(3)
        model = make_tiny_model(seed=5)
        p = tmp_path / "m.nsm"
        save_model(model, p)
        back = load_model(p)
        s = rng.normal(size=(8, 14))
        h1, l1 = forward(model, s)
        h2, l2 = forward(back, s)
        np.testing.assert_allclose(l1, l2, atol=1e-4)

    def test_save_load_deterministic_bytes(self, tmp_path):
        model = make_tiny_model(seed=5)
        p1, p2 = tmp_path / "a.nsm", tmp_path / "b.nsm"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.nsm"
        p.write_bytes(b"JUNKJUNKJUNK" + bytes(64))
        with pytest.raises(FormatError):
            load_model(p)

    def test_without_dictionary(self, tmp_path):
        model = init_model(6, 5, 3, seed=1, channels=4)
        p = tmp_path / "nodict.nsm"
        save_model(model, p)
        back = load_model(p)
        assert back.w_ref is None

    def test_attach_dictionary_validates_k(self):
        model = init_model(6, 5, 3, seed=1, channels=4)
        with pytest.raises(DimensionError):
            model.attach_dictionary(Dictionary(values=np.full((9, 4), 0.5)))
