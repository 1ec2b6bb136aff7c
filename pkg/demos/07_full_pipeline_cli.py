"""Drive every pipeline stage through the command-line interface.

Equivalent shell session (at a reduced scale so it finishes quickly):

    nmfseg gen-data      --config fast.cfg --out run/
    nmfseg pretrain-dict --config fast.cfg --manifest run/corpus/manifest.csv --out run/
    nmfseg train         --config fast.cfg --manifest run/corpus/manifest.csv \
                         --dict run/dictionary.nsd --out run/
    nmfseg eval          --config fast.cfg --model run/model.nsm \
                         --manifest run/corpus/manifest.csv --split test --out run/
    nmfseg segment ... / explain ... / probe ... / report --dir run/ --out run/

Run from the repository root:  python demos/07_full_pipeline_cli.py
"""

import json
import tempfile
from pathlib import Path

from nmfseg.cli import run_command

work = Path(tempfile.mkdtemp(prefix="nmfseg-demo-"))
cfg = work / "fast.cfg"
cfg.write_text(
    "train_minutes = 2\ndev_minutes = 0.5\ntest_minutes = 0.5\n"
    "k = 24\ndict_iters = 150\nepochs = 30\nbatch = 16\nseed = 0\n"
    "probe_per_class = 6\nprobe_epochs = 100\n"
)
out = work / "run"
manifest = out / "corpus" / "manifest.csv"

steps = [
    ["gen-data", "--config", str(cfg), "--out", str(out)],
    ["pretrain-dict", "--config", str(cfg), "--manifest", str(manifest), "--out", str(out)],
    ["train", "--config", str(cfg), "--manifest", str(manifest),
     "--dict", str(out / "dictionary.nsd"), "--out", str(out)],
    ["eval", "--config", str(cfg), "--model", str(out / "model.nsm"),
     "--manifest", str(manifest), "--split", "test", "--out", str(out)],
    ["segment", "--config", str(cfg), "--model", str(out / "model.nsm"),
     "--manifest", str(manifest), "--split", "test", "--out", str(out)],
    ["explain", "--config", str(cfg), "--model", str(out / "model.nsm"),
     "--manifest", str(manifest), "--split", "train", "--samples-per-class", "3",
     "--out", str(out)],
    ["probe", "--config", str(cfg), "--model", str(out / "model.nsm"), "--out", str(out)],
    ["report", "--dir", str(out), "--out", str(out)],
]
for argv in steps:
    print(f"$ nmfseg {' '.join(argv)}")
    rc = run_command(argv)
    assert rc == 0, f"step failed with exit {rc}"
print()

scores = json.loads((out / "f1.json").read_text())
print("test-split F1 per class:")
for name, entry in sorted(scores.items()):
    print(f"  {name:<8} f1={entry['f1']:.3f} +- {entry['ci95']:.3f} (N={entry['n']})")

summary = json.loads((out / "summary.json").read_text())
print(f"\nexplainability: {summary['modular']} modular / {summary['inactive']} inactive "
      f"components of {summary['components']}; "
      f"{summary['compact_fraction']:.0%} of samples compact")

probes = json.loads((out / "probe_results.json").read_text())
print("probe accuracies:", {k: round(v["accuracy"], 3) for k, v in probes.items()})
print(f"\nartifacts and run logs under {out}")
