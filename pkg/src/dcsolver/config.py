"""Config file loading, dotted-path overrides, and object builders.

Configs are JSON with a fixed set of sections; unknown keys are rejected so a
typo cannot silently fall back to a default.  Overrides arrive as dotted paths
(`--dc.lr 0.1`) and values parse as JSON when they can, else as strings.
"""
from __future__ import annotations

import json
from copy import deepcopy

from .errors import ConfigError
from .model import DenoisingModel, GaussianMixtureModel, GuidedModel
from .schedule import SPACINGS, NoiseSchedule, VPCosineSchedule, VPLinearSchedule

CONFIG_VERSION = 1

_SECTIONS = {
    "version": None,
    "schedule": {"kind", "beta0", "beta1", "t_start", "t_end", "offset"},
    "spacing": None,
    "model": {"kind", "means", "weights", "scale", "uncond", "endpoint", "dim"},
    "sampler": {"order", "use_corrector", "param"},
    "dc": {"K", "n_datapoints", "iterations", "lr", "optimizer", "box", "fd_eps"},
    "eval": {
        "orders",
        "correctors",
        "nfes",
        "cfgs",
        "dc_modes",
        "n_eval",
        "gt_nfe",
        "eval_seed_base",
        "cpr_file",
        "timing",
    },
    "cpr": {"degrees"},
    "sample": {"nfe", "seed", "cfg", "cond"},
}


def validate_config(config: dict) -> dict:
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    version = config.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version {version}, expected {CONFIG_VERSION}")
    for key, value in config.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config section {key!r}")
        allowed = _SECTIONS[key]
        if allowed is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be an object")
        if key == "model":
            _validate_model_spec(value)
            continue
        unknown = set(value) - allowed
        if unknown:
            raise ConfigError(f"unknown keys in section {key!r}: {sorted(unknown)}")
    return config


def _validate_model_spec(spec: dict):
    unknown = set(spec) - _SECTIONS["model"]
    if unknown:
        raise ConfigError(f"unknown keys in model spec: {sorted(unknown)}")
    uncond = spec.get("uncond")
    if uncond is not None:
        _validate_model_spec(uncond)


def load_config(path) -> dict:
    try:
        with open(path) as f:
            try:
                config = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}") from e
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e.strerror}") from e
    return validate_config(config)


def apply_overrides(config: dict, overrides: list[tuple[str, str]]) -> dict:
    """Set dotted paths; values parse as JSON when possible, else stay strings."""
    config = deepcopy(config)
    for path, raw in overrides:
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = path.split(".")
        node = config
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return validate_config(config)


def build_schedule(spec: dict | None) -> NoiseSchedule:
    spec = dict(spec or {})
    kind = spec.pop("kind", "vp_linear")
    try:
        if kind == "vp_linear":
            return VPLinearSchedule(**spec)
        if kind == "vp_cosine":
            return VPCosineSchedule(**spec)
    except TypeError as e:
        raise ConfigError(f"bad schedule options for {kind!r}: {e}") from e
    raise ConfigError(f"unknown schedule kind {kind!r}")


def build_model(spec: dict, schedule: NoiseSchedule, cfg_scale: float = 1.0) -> DenoisingModel:
    """Build the model for one run; a guided pair forms when `uncond` is present."""
    if not isinstance(spec, dict):
        raise ConfigError("model spec must be an object")
    kind = spec.get("kind", "gmm")
    if kind == "remote":
        from .remote import RemoteDenoiser

        if "endpoint" not in spec or "dim" not in spec:
            raise ConfigError("remote model spec needs 'endpoint' and 'dim'")
        model: DenoisingModel = RemoteDenoiser(spec["endpoint"], int(spec["dim"]))
    elif kind == "gmm":
        for key in ("means", "weights", "scale"):
            if key not in spec:
                raise ConfigError(f"gmm model spec needs {key!r}")
        model = GaussianMixtureModel(schedule, spec["means"], spec["weights"], spec["scale"])
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    uncond_spec = spec.get("uncond")
    if uncond_spec is not None:
        uncond = build_model(uncond_spec, schedule)
        model = GuidedModel(model, uncond, scale=cfg_scale, schedule=schedule)
    elif cfg_scale != 1.0:
        raise ConfigError("guidance scale != 1 needs an 'uncond' branch in the model spec")
    return model


def resolve_spacing(config: dict) -> str:
    spacing = config.get("spacing", "uniform_t")
    if spacing not in SPACINGS:
        raise ConfigError(f"unknown spacing {spacing!r}, expected one of {SPACINGS}")
    return spacing
