"""Component relevance, modularity, and compactness of the latent code.

Builds relevance records from random activation/head pairs to show the
machinery; demo 07 runs the same analysis on a trained model.

Run from the repository root:  python demos/05_explainability.py
"""

import numpy as np

from nmfseg import binarize, component_report, make_record, pool_time, relevance
from nmfseg.explain import report_summary

rng = np.random.default_rng(42)
K, CLASSES, PER_CLASS = 48, 4, 5
theta = rng.normal(size=(CLASSES, K))

# simulate class-structured activations: each class prefers its own atom group
records = []
for class_id in range(CLASSES):
    for i in range(PER_CLASS):
        h = rng.random((K, 40)) * 0.05
        group = slice(10 * class_id, 10 * class_id + 6)
        h[group] += rng.uniform(0.8, 1.6)
        records.append(make_record(f"c{class_id}-s{i}", class_id, h, theta, tau=0.5))

# the pieces compose: pooling, relevance, min-max + threshold
h_example = records[0]
z = pool_time(rng.random((K, 40)))
r = relevance(z, theta[0])
r_norm, b = binarize(r, tau=0.5)
print(f"pooled z: {z.shape}, relevance r: {r.shape}, "
      f"normalized to [{r_norm.min():.2f}, {r_norm.max():.2f}], {b.sum()} active components\n")

report = component_report(records, samples_per_class=PER_CLASS, band=1, compact_limit=20)
summary = report_summary(report)
print(f"components: {summary['components']}")
print(f"inactive (never selected): {summary['inactive']} ({summary['inactive_fraction']:.1%})")
print(f"modular (active for about one class's worth of samples): "
      f"{summary['modular']} ({summary['modular_fraction']:.1%})")
print(f"samples represented by <= {report.compact_limit} components: "
      f"{summary['compact_fraction']:.1%}")
print(f"\nper-component counts n_k (first 16): {report.n[:16].tolist()}")
print(f"per-sample counts m_i (first 10):    {report.m[:10].tolist()}")
print(f"count exchange identity sum(n) == sum(m): {report.n.sum()} == {report.m.sum()}")
