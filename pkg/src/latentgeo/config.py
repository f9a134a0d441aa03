"""Sectioned ``key = value`` run configuration.

Every key has a typed default; shipped presets in ``latentgeo/configs``
transcribe the hyperparameter tables one dataset per file. Unknown sections
or keys are rejected with the offending line number.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from importlib import resources
from pathlib import Path


class ConfigError(ValueError):
    pass


def _float(s):
    s = s.strip()
    if s.endswith("pi"):
        head = s[:-2].strip() or "1"
        return float(head) * math.pi
    return float(s)


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def _names(s):
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _opt_float(s):
    return None if not s.strip() else _float(s)


SCHEMA = {
    "run": {"seed": (int, 0), "output_dir": (str, "runs/swiss_roll")},
    "dataset": {"name": (str, "swiss_roll"), "n_points": (int, 8192),
                "angle_min": (_float, 1.5 * math.pi), "angle_max": (_float, 4.5 * math.pi),
                "radius_scale": (_float, 1.0), "noise_std": (_float, 0.01), "seed": (int, 0),
                "idx_path": (str, "")},
    "gan": {"kind": (str, "vanilla"), "latent_dim": (int, 2), "prior": (str, "standard_gaussian"),
            "prior_lo": (_float, -1.0), "prior_hi": (_float, 1.0),
            "g_hidden": (_ints, (64, 64)), "d_hidden": (_ints, (64, 64)), "slope": (_float, 0.2),
            "batch_size": (int, 256), "steps": (int, 20000),
            "lr_generator": (_float, 1e-3), "lr_discriminator": (_float, 1e-3),
            "critic_iters": (int, 5), "gp_weight": (_float, 10.0),
            "beta1": (_float, 0.5), "beta2": (_float, 0.999), "seed": (int, 0),
            "checkpoint": (str, "model.npz")},
    "finetune": {"steps": (int, 0), "lr_critic": (_float, 5e-4), "lr_gen": (_float, 1e-4),
                 "checkpoint": (str, "model_finetuned.npz")},
    "calibrate": {"n_samples": (int, 5000), "seed": (int, 0)},
    "geodesic": {"d_checkpoint": (str, ""), "start": (int, 1), "end": (int, 2), "n_pairs": (int, 1),
                 "n_interp_pts": (int, 1024), "poly_degree": (int, 6), "n_train_steps": (int, 1000),
                 "learn_rate": (_float, 1e-3), "lambda": (_float, 50.0), "eps": (_float, 1e-3),
                 "coefficient_init": (_float, 0.1),
                 "methods": (_names, ("Linear", "SqDiff", "SqDiffD")),
                 "geometric_averaging": (_bool, True), "ensemble_size": (int, 4),
                 "feature_map": (str, ""), "feature_taps": (_ints, ()), "seed": (int, 0)},
    "eval": {"n_eval_pts": (int, 100), "hist_bins": (int, 50), "n_hist": (int, 5000),
             "coverage_delta": (_opt_float, None), "seed": (int, 0)},
}


class RunConfig(dict):
    """Nested mapping ``section -> key -> typed value``."""

    def __init__(self, values, text=""):
        super().__init__(values)
        self.text = text

    def get_value(self, dotted):
        sec, key = dotted.split(".", 1)
        return self[sec][key]

    def to_ini(self):
        lines = []
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            for key in SCHEMA[sec]:
                lines.append(f"{key} = {_render(self[sec][key])}")
            lines.append("")
        return "\n".join(lines)

    def hash(self):
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:12]


def _render(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def defaults():
    return RunConfig({sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()})


def _line_of(text, section, key=None):
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            if key is None and current == section:
                return n
        elif key is not None and current == section and "=" in s:
            if s.split("=", 1)[0].strip().lower() == key:
                return n
    return 0


def parse(text, source="<config>"):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = defaults()
    cfg.text = text
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}:{_line_of(text, sec)}: unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}:{_line_of(text, sec, key)}: unknown key {sec}.{key}")
            conv = SCHEMA[sec][key][0]
            try:
                cfg[sec][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}:{_line_of(text, sec, key)}: bad value for {sec}.{key}: {exc}") from None
    return cfg


def load(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse(path.read_text(), str(path))


def apply_overrides(cfg, overrides):
    """Apply ``section.key=value`` strings (flag > config > default)."""
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        sec, key = dotted.strip().split(".", 1)
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown override key {dotted}")
        try:
            cfg[sec][key] = SCHEMA[sec][key][0](raw)
        except ValueError as exc:
            raise ConfigError(f"bad override value for {dotted}: {exc}") from None
    return cfg


def preset(name):
    """Text of a shipped preset, e.g. ``"swiss_roll"`` or ``"mnist"``."""
    return resources.files("latentgeo.configs").joinpath(f"{name}.ini").read_text()
