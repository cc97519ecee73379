"""Pipeline configuration: one canonical YAML format, schema-validated
with unknown keys rejected, plus dotted-path CLI overrides.

Every key has a documented default; the shipped ``configs/paper.yaml``
profile carries the full-scale hyperparameters (8000-piece vocabulary,
0.95 language-id threshold, 512-dim/width-3/20-layer model, dropout 0.1,
4000-token batches, beam 10, patience 3, 16000 warm-up steps at base
learning rate 0.25, length bounds 10-30) and ``configs/toy.yaml`` scales
them down to CPU budgets.
"""

from __future__ import annotations

import copy

import yaml

from .errors import ConfigError

DEFAULTS: dict = {
    "seed": 0,
    "output_dir": "pipeline-out",
    "corpus": {
        "source_lang": "en",
        "target_lang": "hi",
        "train_source": None,
        "train_target": None,
        "dev_source": None,
        "dev_target": None,
        "test_source": None,
        "test_target": None,
        "monolingual_target": None,
    },
    "tokenizer": {
        "kind": "unigram",          # unigram | bpe
        "vocab_budget": 8000,
        "seed_multiplier": 4.0,
        "prune_fraction": 0.2,
    },
    "filter": {
        "langid_enabled": False,
        "langid_threshold": 0.95,
        "length_enabled": False,
        "min_tokens": 10,
        "max_tokens": 30,
        "length_side": "both",
        "lowercase": False,         # ablation flag; default keeps true case
    },
    "model": {
        "embed_dim": 64,
        "hidden_dim": 64,
        "kernel_width": 3,
        "layers": 2,
        "dropout": 0.1,
        "max_positions": 256,
        "dtype": "float32",
        "residual_scaling": True,
        "attention_every_layer": True,
    },
    "training": {
        "max_epochs": 50,
        "patience": 3,
        "batch_token_budget": 4000,
        "momentum": 0.99,
        "clip_norm": 0.1,
        "accumulation": 1,
        "schedule": {
            "kind": "warmup-exp-decay",
            "base_lr": 0.25,
            "warmup_steps": 16000,
            "decay_rate": 0.9995,
        },
    },
    "decoding": {
        "beam_width": 10,
        "max_len": 64,
        "length_penalty": 1.0,
    },
    "backtranslation": {
        "enabled": True,
        "confidence_threshold": 0.3,
        "min_tokens": 10,
        "max_tokens": 30,
        "length_side": "source",
        "merge_policy": "concat-with-provenance-tag",
    },
}


def _merge(defaults: dict, overrides: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown configuration key: {where}")
        if isinstance(defaults[key], dict) and defaults[key]:
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a mapping")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: list[str] | None = None) -> dict:
    """Load a pipeline configuration.

    ``overrides`` are ``dotted.path=value`` strings (values parsed as
    YAML) and take precedence over the file.
    """
    user: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        user = loaded
    cfg = _merge(DEFAULTS, user)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = cfg
        keys = dotted.split(".")
        probe = DEFAULTS
        for key in keys[:-1]:
            if not isinstance(probe, dict) or key not in probe:
                raise ConfigError(f"unknown configuration key: {dotted}")
            probe = probe[key]
            node = node[key]
        leaf = keys[-1]
        if not isinstance(probe, dict) or leaf not in probe:
            raise ConfigError(f"unknown configuration key: {dotted}")
        node[leaf] = value
    return cfg


def describe_defaults() -> str:
    """Human-readable dump of every config key and its default."""
    return yaml.safe_dump(DEFAULTS, sort_keys=True, default_flow_style=False)
