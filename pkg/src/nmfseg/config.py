"""Flat key=value experiment configuration.

A config file holds one ``key = value`` pair per line ('#' starts a comment).
Every key has a typed default; unknown keys are rejected.  The resolved
configuration (defaults plus overrides) is what runs, what lands in run logs,
and what the config hash covers.
"""

from __future__ import annotations

import hashlib

from .corpus import CorpusSpec
from .errors import ConfigError
from .nmf import SnmfConfig
from .training import FrontendSettings, TrainConfig

_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no"}


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


# key -> (type constructor, default)
SCHEMA = {
    "seed": (int, 0),
    # loss weights and optimization
    "alpha": (float, 10.0),
    "beta": (float, 1.0),
    "gamma": (float, 0.1),
    "lr": (float, 1e-3),
    "batch": (int, 16),
    "epochs": (int, 120),
    "segment_seconds": (float, 4.0),
    "threshold": (float, 0.5),
    # model
    "k": (int, 64),
    "channels": (int, 64),
    # dictionary pretraining
    "mu": (float, 0.1),
    "dict_iters": (int, 300),
    "dict_tol": (float, 1e-5),
    "dict_frames": (int, 3000),
    # frontend
    "n_fft": (int, 512),
    "win_len": (int, 400),
    "hop": (int, 320),
    "n_mels": (int, 80),
    "f_min": (float, 0.0),
    "f_max": (float, 8000.0),
    "recon_log": (_parse_bool, False),
    # corpus generation
    "train_minutes": (float, 20.0),
    "dev_minutes": (float, 5.0),
    "test_minutes": (float, 5.0),
    "clip_seconds": (float, 10.0),
    "rate_speech": (float, 6.0),
    "rate_overlap": (float, 6.0),
    "rate_music": (float, 6.0),
    "rate_noise": (float, 6.0),
    # inference / reporting
    "min_dur": (float, 0.0),
    # probes
    "probe_epochs": (int, 300),
    "probe_lr": (float, 1e-2),
    "probe_per_class": (int, 20),
    "probe_seconds": (float, 1.0),
}


def default_config() -> dict:
    return {key: default for key, (_, default) in SCHEMA.items()}


def parse_config(path) -> dict:
    """Read a config file and return the fully resolved configuration."""
    cfg = default_config()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            ctor = SCHEMA[key][0]
            try:
                cfg[key] = ctor(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return cfg


def serialize_config(cfg: dict) -> str:
    lines = []
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, bool):
            value = int(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()


def corpus_spec(cfg: dict) -> CorpusSpec:
    return CorpusSpec(
        seed=cfg["seed"],
        train_minutes=cfg["train_minutes"],
        dev_minutes=cfg["dev_minutes"],
        test_minutes=cfg["test_minutes"],
        clip_seconds=cfg["clip_seconds"],
        rate_speech=cfg["rate_speech"],
        rate_overlap=cfg["rate_overlap"],
        rate_music=cfg["rate_music"],
        rate_noise=cfg["rate_noise"],
    )


def frontend_settings(cfg: dict) -> FrontendSettings:
    return FrontendSettings(
        n_fft=cfg["n_fft"],
        win_len=cfg["win_len"],
        hop=cfg["hop"],
        n_mels=cfg["n_mels"],
        f_min=cfg["f_min"],
        f_max=cfg["f_max"],
        recon_log=cfg["recon_log"],
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        alpha=cfg["alpha"],
        beta=cfg["beta"],
        gamma=cfg["gamma"],
        lr=cfg["lr"],
        batch_size=cfg["batch"],
        segment_seconds=cfg["segment_seconds"],
        epochs=cfg["epochs"],
        seed=cfg["seed"],
        threshold=cfg["threshold"],
    )


def snmf_config(cfg: dict) -> SnmfConfig:
    return SnmfConfig(
        k=cfg["k"],
        mu=cfg["mu"],
        max_iters=cfg["dict_iters"],
        rel_tol=cfg["dict_tol"],
        seed=cfg["seed"],
    )
