"""Sparse NMF dictionary learning on a toy spectrogram.

Run from the repository root:  python demos/02_sparse_nmf.py
"""

import numpy as np

from nmfseg import SnmfConfig, nmf_loss, reconstruct, train_snmf

rng = np.random.default_rng(0)

# a matrix with true rank 5: five spectral "atoms" mixed with random gains
true_w = rng.random((64, 5))
true_h = rng.random((5, 300)) * (rng.random((5, 300)) > 0.5)
x = true_w @ true_h
print(f"target matrix {x.shape}, built from 5 hidden components\n")

for mu in (0.0, 0.2):
    cfg = SnmfConfig(k=5, mu=mu, max_iters=400, rel_tol=1e-9, seed=1)
    dictionary, acts = train_snmf(x, cfg)
    trace = dictionary.objective_trace
    err = nmf_loss(x, dictionary.values, acts.values) / np.sum(x * x)
    active = float(np.mean(acts.values > 1e-3))
    print(f"mu={mu}: {len(trace)-1} iterations, objective {trace[0]:.1f} -> {trace[-1]:.3f}")
    print(f"        relative reconstruction error {err:.2e}, "
          f"fraction of active activation cells {active:.2f}")
    drops = np.diff(trace)
    print(f"        objective non-increasing at every iteration: {bool(np.all(drops <= 1e-12))}\n")

# reconstruction is a plain matrix product
cfg = SnmfConfig(k=5, mu=0.0, max_iters=400, seed=1)
dictionary, acts = train_snmf(x, cfg)
x_hat = reconstruct(dictionary.values, acts.values)
print(f"reconstruct() returns W @ H: shape {x_hat.shape}, min {x_hat.min():.3f} (non-negative)")
norms = np.linalg.norm(dictionary.values, axis=0)
print(f"dictionary column L2 norms: min {norms.min():.6f}, max {norms.max():.6f} (unit)")
