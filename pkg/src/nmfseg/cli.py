"""Command-line surface tying the pipeline stages together.

Every subcommand takes --config (flat key=value file), --out (artifact
directory), and optionally --seed to override the configured seed.  Each run
writes a machine-readable ``<command>.run.json`` with the resolved
configuration, its hash, and the run's metrics; logs carry no timestamps, so
identical runs produce identical bytes.  On failure, files created by the
failed run are removed.

NMFSEG_THREADS caps worker parallelism (currently used by corpus synthesis).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .corpus import CLASS_NAMES, generate_corpus, load_manifest
from .errors import NmfsegError
from .evaluate import (FrameDecisions, frames_to_segments, report_to_dict,
                       write_f1_csv, write_f1_json, write_segments)
from .explain import (component_report, make_record, report_summary,
                      write_component_csv, write_sample_csv, write_spectrum_csv,
                      write_summary_json)
from .labels import label_matrix_from_range
from .network import init_model, load_model, save_model, sigmoid, _forward_cache
from .nmf import save_dictionary, load_dictionary
from .probing import build_synthetic_task, eval_probe, load_probe_manifest, train_probe, write_result_json
from .training import (dev_metrics, evaluate_split, load_split, mean_activation_l1,
                       pretrain_dictionary, reconstruction_error, train)


class _Run:
    """Tracks files created by one command so failures leave no partial outputs."""

    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.created: list[Path] = []

    def path(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.created.append(p)
        return p

    def track_tree(self, root: Path) -> None:
        self.created.append(root)

    def cleanup(self) -> None:
        import shutil
        for p in reversed(self.created):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists():
                p.unlink()


def _write_run_log(run: _Run, command: str, cfg: dict, inputs: dict, metrics: dict,
                   artifacts: list) -> None:
    payload = {
        "command": command,
        "config": {k: (int(v) if isinstance(v, bool) else v) for k, v in sorted(cfg.items())},
        "config_hash": cfgmod.config_hash(cfg),
        "seed": cfg["seed"],
        "inputs": inputs,
        "metrics": metrics,
        "artifacts": sorted(str(a) for a in artifacts),
    }
    with open(run.path(f"{command}.run.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _workers() -> int:
    raw = os.environ.get("NMFSEG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _cmd_gen_data(args, cfg, run: _Run):
    spec = cfgmod.corpus_spec(cfg)
    corpus_dir = run.out / "corpus"
    run.track_tree(corpus_dir)
    manifest = generate_corpus(spec, corpus_dir, workers=_workers())
    counts = {}
    for split in ("train", "dev", "test"):
        counts[split] = len(manifest.for_split(split))
    _write_run_log(run, "gen-data", cfg, {}, {"clips": counts},
                   [corpus_dir / "manifest.csv"])
    return 0


def _cmd_pretrain_dict(args, cfg, run: _Run):
    manifest = load_manifest(args.manifest)
    settings = cfgmod.frontend_settings(cfg)
    snmf = cfgmod.snmf_config(cfg)
    dictionary = pretrain_dictionary(manifest, settings, k=snmf.k, mu=snmf.mu,
                                     max_iters=snmf.max_iters, rel_tol=snmf.rel_tol,
                                     seed=snmf.seed, max_frames=cfg["dict_frames"])
    out = run.path("dictionary.nsd")
    save_dictionary(dictionary, out)
    metrics = {"iterations": len(dictionary.objective_trace) - 1,
               "final_objective": dictionary.objective_trace[-1]}
    _write_run_log(run, "pretrain-dict", cfg, {"manifest": str(args.manifest)}, metrics, [out])
    return 0


def _load_dims(manifest, settings):
    clips = load_split(manifest, "train", settings)
    return clips, clips[0].features.shape[0], clips[0].labels.shape[0]


def _cmd_train(args, cfg, run: _Run):
    manifest = load_manifest(args.manifest)
    settings = cfgmod.frontend_settings(cfg)
    dictionary = load_dictionary(args.dict)
    tc = cfgmod.train_config(cfg)
    probe_clips = load_split(manifest, "train", settings)
    d, c = probe_clips[0].features.shape[0], probe_clips[0].labels.shape[0]
    model = init_model(d=d, k=dictionary.components, c=c, seed=cfg["seed"],
                       channels=cfg["channels"])
    model.attach_dictionary(dictionary)
    model, trace = train(model, manifest, tc, settings)
    model_path = run.path("model.nsm")
    save_model(model, model_path)
    trace_path = run.path("trace.json")
    with open(trace_path, "w") as fh:
        json.dump(trace, fh, indent=2, sort_keys=True)
        fh.write("\n")
    last = trace[-1]
    metrics = {"best_epoch": last["best_epoch"], "epochs": len(trace),
               "final_dev_macro_f1": last["dev_macro_f1"], "final_dev_bce": last["dev_bce"]}
    _write_run_log(run, "train", cfg,
                   {"manifest": str(args.manifest), "dict": str(args.dict)},
                   metrics, [model_path, trace_path])
    return 0


def _cmd_segment(args, cfg, run: _Run):
    model = load_model(args.model)
    settings = cfgmod.frontend_settings(cfg)
    manifest = load_manifest(args.manifest)
    seg_dir = run.out / "segments"
    artifacts = []
    for clip in load_split(manifest, args.split, settings):
        cache = _forward_cache(model, clip.features[None])
        probs = sigmoid(cache["logits"][0])
        decisions = FrameDecisions(probs=probs, binary=(probs > cfg["threshold"]).astype(np.int8),
                                   hop=clip.hop, threshold=cfg["threshold"])
        segments = frames_to_segments(decisions, min_dur=cfg["min_dur"], class_names=CLASS_NAMES)
        out = run.path("segments", f"{clip.clip_id}.seg")
        write_segments(out, clip.clip_id, segments)
        artifacts.append(out)
    _write_run_log(run, "segment", cfg,
                   {"model": str(args.model), "manifest": str(args.manifest), "split": args.split},
                   {"files": len(artifacts)}, artifacts)
    return 0


def _cmd_eval(args, cfg, run: _Run):
    model = load_model(args.model)
    settings = cfgmod.frontend_settings(cfg)
    manifest = load_manifest(args.manifest)
    report = evaluate_split(model, manifest, args.split, settings, threshold=cfg["threshold"])
    csv_path = run.path("f1.csv")
    json_path = run.path("f1.json")
    write_f1_csv(report, csv_path)
    write_f1_json(report, json_path)
    _write_run_log(run, "eval", cfg,
                   {"model": str(args.model), "manifest": str(args.manifest), "split": args.split},
                   {"f1": report_to_dict(report), "macro_f1": report.macro_f1()},
                   [csv_path, json_path])
    return 0


def _dominant_class(labels: np.ndarray) -> int:
    return int(np.argmax((labels == 1).mean(axis=1)))


def _cmd_explain(args, cfg, run: _Run):
    model = load_model(args.model)
    settings = cfgmod.frontend_settings(cfg)
    manifest = load_manifest(args.manifest)
    clips = load_split(manifest, args.split, settings)

    per_class = args.samples_per_class
    chosen = []
    for c in range(len(CLASS_NAMES)):
        matching = [clip for clip in clips if _dominant_class(clip.labels) == c]
        chosen.extend((clip, c) for clip in matching[:per_class])
    if not chosen:
        raise NmfsegError("no clips with a dominant class; cannot build relevance records")
    records = []
    for clip, c in chosen:
        cache = _forward_cache(model, clip.features[None])
        records.append(make_record(clip.clip_id, c, cache["h"][0], model.theta, tau=args.tau))
    report = component_report(records, samples_per_class=per_class)

    comp_csv = run.path("components.csv")
    samp_csv = run.path("samples.csv")
    summary = run.path("summary.json")
    write_component_csv(report, comp_csv)
    write_sample_csv(report, samp_csv)
    write_summary_json(report, summary)
    artifacts = [comp_csv, samp_csv, summary]
    if model.w_ref is not None:
        for k in report.modular_ids[:8]:
            spectrum = run.path("spectra", f"component_{k:03d}.csv")
            write_spectrum_csv(model.w_ref, k, spectrum,
                               sample_rate=16000, n_fft=settings.n_fft)
            artifacts.append(spectrum)
    _write_run_log(run, "explain", cfg,
                   {"model": str(args.model), "manifest": str(args.manifest), "split": args.split},
                   report_summary(report), artifacts)
    return 0


def _cmd_probe(args, cfg, run: _Run):
    model = load_model(args.model)
    settings = cfgmod.frontend_settings(cfg)
    results = {}
    if args.task_manifest:
        task = load_probe_manifest(model, args.task_manifest, name="manifest", settings=settings)
        eval_task = load_probe_manifest(model, args.eval_manifest or args.task_manifest,
                                        name="manifest-eval", settings=settings)
        weights = train_probe(task, epochs=cfg["probe_epochs"], lr=cfg["probe_lr"], seed=cfg["seed"])
        results["manifest"] = eval_probe(weights, eval_task)
    else:
        for task_name, n_classes in (("tone-class", 3), ("noise-color", 3), ("am-rate", 3)):
            train_task = build_synthetic_task(model, task_name, n_classes, cfg["probe_per_class"],
                                              seed=cfg["seed"], settings=settings,
                                              seconds=cfg["probe_seconds"])
            eval_task = build_synthetic_task(model, task_name, n_classes, cfg["probe_per_class"],
                                             seed=cfg["seed"] + 7919, settings=settings,
                                             seconds=cfg["probe_seconds"])
            weights = train_probe(train_task, epochs=cfg["probe_epochs"], lr=cfg["probe_lr"],
                                  seed=cfg["seed"])
            results[task_name] = eval_probe(weights, eval_task)
    out = run.path("probe_results.json")
    write_result_json(results, out)
    metrics = {name: {"accuracy": r.accuracy, "uar": r.uar} for name, r in results.items()}
    _write_run_log(run, "probe", cfg, {"model": str(args.model)}, metrics, [out])
    return 0


def _cmd_ablate_beta(args, cfg, run: _Run):
    manifest = load_manifest(args.manifest)
    settings = cfgmod.frontend_settings(cfg)
    dictionary = load_dictionary(args.dict)
    clips = load_split(manifest, "train", settings)
    d, c = clips[0].features.shape[0], clips[0].labels.shape[0]

    rows = []
    for beta in (0.0, 1.0, 5.0):
        sub = dict(cfg)
        sub["beta"] = beta
        tc = cfgmod.train_config(sub)
        model = init_model(d=d, k=dictionary.components, c=c, seed=cfg["seed"],
                           channels=cfg["channels"])
        model.attach_dictionary(dictionary)
        model, _ = train(model, manifest, tc, settings)
        recon = reconstruction_error(model, manifest, "test", settings)
        report = evaluate_split(model, manifest, "test", settings, threshold=cfg["threshold"])
        model_path = run.path(f"model_beta{beta:g}.nsm")
        save_model(model, model_path)
        rows.append({"beta": beta, "recon_per_frame": recon,
                     "f1": {name: entry.f1 for name, entry in report.per_class.items() if entry.defined}})

    recons = [r["recon_per_frame"] for r in rows]
    metrics = {"rows": rows, "recon_non_increasing": all(a >= b for a, b in zip(recons, recons[1:]))}
    out = run.path("ablation.json")
    with open(out, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    import csv as csvmod
    csv_path = run.path("ablation.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csvmod.writer(fh)
        writer.writerow(["beta", "recon_per_frame"] + [f"f1_{n}" for n in CLASS_NAMES])
        for r in rows:
            writer.writerow([f"{r['beta']:g}", f"{r['recon_per_frame']:.6f}"]
                            + [f"{r['f1'].get(n, float('nan')):.6f}" for n in CLASS_NAMES])
    _write_run_log(run, "ablate-beta", cfg,
                   {"manifest": str(args.manifest), "dict": str(args.dict)},
                   metrics, [out, csv_path])
    return 0


def _cmd_report(args, cfg, run: _Run):
    root = Path(args.dir)
    logs = sorted(root.rglob("*.run.json"))
    summary = []
    for log in logs:
        with open(log) as fh:
            payload = json.load(fh)
        summary.append({"path": str(log.relative_to(root)), "command": payload["command"],
                        "config_hash": payload["config_hash"], "metrics": payload["metrics"]})
        print(f"{payload['command']:14s} {payload['config_hash'][:12]}  {log}")
    out = run.path("report.json")
    with open(out, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_log(run, "report", cfg, {"dir": str(args.dir)}, {"runs": len(summary)}, [out])
    return 0


_COMMANDS = {
    "gen-data": (_cmd_gen_data, ()),
    "pretrain-dict": (_cmd_pretrain_dict, ("manifest",)),
    "train": (_cmd_train, ("manifest", "dict")),
    "segment": (_cmd_segment, ("model", "manifest")),
    "eval": (_cmd_eval, ("model", "manifest")),
    "explain": (_cmd_explain, ("model", "manifest")),
    "probe": (_cmd_probe, ("model",)),
    "ablate-beta": (_cmd_ablate_beta, ("manifest", "dict")),
    "report": (_cmd_report, ("dir",)),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmfseg",
                                     description="NMF-tied explainable multilabel audio segmentation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, required) in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        if "manifest" in required:
            p.add_argument("--manifest", required=True)
        if "dict" in required:
            p.add_argument("--dict", required=True)
        if "model" in required:
            p.add_argument("--model", required=True)
        if "dir" in required:
            p.add_argument("--dir", required=True)
        if name in ("segment", "eval", "explain"):
            p.add_argument("--split", default="test")
        if name == "explain":
            p.add_argument("--samples-per-class", type=int, default=5)
            p.add_argument("--tau", type=float, default=0.5)
        if name == "probe":
            p.add_argument("--task-manifest", default=None)
            p.add_argument("--eval-manifest", default=None)
    return parser


def run_command(argv) -> int:
    """Execute one subcommand; nonzero exit and clean outputs on failure."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = cfgmod.parse_config(args.config) if args.config else cfgmod.default_config()
    if args.seed is not None:
        cfg["seed"] = args.seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = _Run(out_dir)
    handler = _COMMANDS[args.command][0]
    try:
        return handler(args, cfg, run)
    except (NmfsegError, OSError, ValueError) as exc:
        run.cleanup()
        print(f"nmfseg {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
