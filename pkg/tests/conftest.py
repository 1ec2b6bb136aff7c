"""Shared fixtures: tiny models, a small corpus, and a kink-free gradcheck point."""

import numpy as np
import pytest

from nmfseg.corpus import CorpusSpec, generate_corpus
from nmfseg.network import SegModel, _forward_cache, init_model
from nmfseg.nmf import Dictionary, normalize_columns


def make_tiny_model(seed=3, d=8, k=12, c=4, channels=8, f=20, dict_seed=7):
    """Small model with an attached random unit-column dictionary."""
    model = init_model(d, k, c, seed=seed, channels=channels)
    rng = np.random.default_rng(dict_seed)
    w = 1.0 - rng.random((f, k))
    w, _ = normalize_columns(w, np.ones((k, 1)))
    model.attach_dictionary(Dictionary(values=w))
    return model


def _min_pre_margin(model: SegModel, s: np.ndarray) -> float:
    cache = _forward_cache(model, s[None])
    lay = cache["layout"]
    pres = [lay.core(cache["layer_pres"][b][l]) for b in range(model.n_blocks)
            for l in range(len(model.dilations))] + [lay.core(cache["pre_out"])]
    return min(float(np.abs(p).min()) for p in pres)


def nudge_away_from_relu_kinks(model: SegModel, s: np.ndarray, margin: float = 2e-2,
                               rounds: int = 200) -> float:
    """Adjust biases until no pre-activation sits within ``margin`` of zero.

    Central finite differences straddle the ReLU kink whenever a perturbation
    can flip a gate; moving every pre-activation away from zero makes the
    checked point locally smooth.  One worst channel per layer is nudged per
    round (against a stale forward pass, which converges well enough in
    practice).  Returns the final minimum margin.
    """
    for _ in range(rounds):
        cache = _forward_cache(model, s[None])
        lay = cache["layout"]
        moved = False
        for b in range(model.n_blocks):
            for l in range(len(model.dilations)):
                pre = lay.core(cache["layer_pres"][b][l])[:, 0, :]
                bad = np.abs(pre).min(axis=1) < margin
                if bad.any():
                    ch = int(np.argmax(bad))
                    worst = pre[ch, np.argmin(np.abs(pre[ch]))]
                    model.conv_b[b][l][ch] += 2 * margin if worst >= 0 else -2 * margin
                    moved = True
        pre = lay.core(cache["pre_out"])[:, 0, :]
        bad = np.abs(pre).min(axis=1) < margin
        if bad.any():
            ch = int(np.argmax(bad))
            worst = pre[ch, np.argmin(np.abs(pre[ch]))]
            model.out_b[ch] += 2 * margin if worst >= 0 else -2 * margin
            moved = True
        if not moved:
            break
    return _min_pre_margin(model, s)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """1.5 min train / 0.5 min dev / 0.5 min test synthetic corpus."""
    out = tmp_path_factory.mktemp("corpus")
    spec = CorpusSpec(seed=123, train_minutes=1.5, dev_minutes=0.5, test_minutes=0.5)
    manifest = generate_corpus(spec, out)
    return spec, manifest
