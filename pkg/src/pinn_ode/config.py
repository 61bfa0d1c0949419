"""Experiment configuration: defaults, file format, and assembly.

Configs are flat ``key = value`` text (a TOML-compatible subset): strings
quoted, numbers bare, booleans ``true``/``false``, lists in brackets.
Problem parameter overrides use dotted keys (``param.rho = 28``). Every
field has a default except the problem name; CLI flags override file
values.

Loss-weight lists follow per-problem conventions:

* ``rlc``             — ``[ode, data, ic(v), ic(v')]`` (four weights),
* first-order systems — ``[data, ode, ic]``,
* ``mass-spring``     — ``[ode, ic]`` (no data term).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .engine import LossWeights, TrainConfig, make_synthetic_observations
from .errors import ConfigError
from .network import ACTIVATIONS, FeatureMap, NetworkSpec, OutputTransform
from .problems import PROBLEMS, get_problem

__all__ = [
    "ExperimentConfig",
    "PRESET_DEFAULTS",
    "weights_from_list",
    "weights_to_list",
    "parse_config_text",
    "serialize_config",
    "load_config",
    "save_config",
]

SEED_ENV_VAR = "PINN_ODE_SEED"

# per-problem defaults mirroring the benchmark studies
PRESET_DEFAULTS = {
    "rlc": dict(
        layers=3, neurons=25, activation="sine", epochs=100000,
        learning_rate=1e-4, lbfgs=0, colloc=400,
        loss_weights=[1e-7, 1e3, 1.0, 1.0], obs="synthetic", obs_n=100,
        obs_sigma=0.0, constraint="soft", input_scale=20.0,
    ),
    "mass-spring": dict(
        layers=3, neurons=40, activation="tanh", epochs=50000,
        learning_rate=1e-3, lbfgs=15000, colloc=400,
        loss_weights=[1.0, 1.0], obs="none", constraint="soft", input_scale=1.0,
    ),
    "lorenz": dict(
        layers=3, neurons=40, activation="tanh", epochs=50000,
        learning_rate=1e-3, lbfgs=15000, colloc=400,
        loss_weights=[1.0, 1.0, 1.0], obs="synthetic", obs_n=100,
        obs_sigma=0.2, constraint="soft", input_scale=1.0,
    ),
    "lotka-volterra": dict(
        layers=6, neurons=64, activation="sine", epochs=20000,
        learning_rate=1e-3, lbfgs=15000, colloc=400,
        loss_weights=[1.0, 1.0, 1.0], obs="none", constraint="hard",
        input_scale=1.0,
    ),
}


def weights_from_list(problem_name, values, dimension=None, n_conditions=None):
    """Interpret a flat weight list using the problem's convention."""
    values = [float(v) for v in values]
    if any(v < 0 for v in values):
        raise ConfigError("loss weights must be nonnegative")
    if problem_name == "rlc":
        if len(values) != 4:
            raise ConfigError("rlc expects four loss weights [ode, data, ic(v), ic(v')]")
        ode, data, ic_v, ic_vp = values
        return LossWeights(data=data, ode=ode, ic=1.0, ic_per=(ic_v, ic_vp))
    if problem_name == "mass-spring":
        if len(values) != 2:
            raise ConfigError("mass-spring expects two loss weights [ode, ic]")
        return LossWeights(data=0.0, ode=values[0], ic=values[1])
    if len(values) != 3:
        raise ConfigError(f"{problem_name} expects three loss weights [data, ode, ic]")
    return LossWeights(data=values[0], ode=values[1], ic=values[2])


def weights_to_list(problem_name, w):
    if problem_name == "rlc":
        per = w.ic_per or (1.0, 1.0)
        return [w.ode, w.data, per[0] * w.ic, per[1] * w.ic]
    if problem_name == "mass-spring":
        return [w.ode, w.ic]
    return [w.data, w.ode, w.ic]


# field registry: name -> (kind, default). Kinds drive parsing/serialization.
_FIELDS = {
    "problem": ("str", None),
    "t_end": ("optfloat", None),
    "layers": ("optint", None),
    "neurons": ("optint", None),
    "activation": ("optstr", None),
    "initializer": ("str", "glorot-normal"),
    "feature_map": ("str", "identity"),
    "n_features": ("int", 10),
    "input_scale": ("optfloat", None),
    "constraint": ("str", "preset"),
    "loss_weights": ("optfloatlist", None),
    "epochs": ("optint", None),
    "learning_rate": ("optfloat", None),
    "lbfgs": ("optint", None),
    "colloc": ("optint", None),
    "colloc_strategy": ("str", "uniform-grid"),
    "obs": ("str", "preset"),
    "obs_n": ("optint", None),
    "obs_sigma": ("optfloat", None),
    "obs_seed": ("optint", None),
    "eval_points": ("int", 1000),
    "error_every": ("int", 500),
    "seed": ("optint", None),
    "out": ("str", "runs"),
}


@dataclass
class ExperimentConfig:
    """One training run, fully described. ``None`` means "preset default"."""

    problem: str
    t_end: float | None = None
    layers: int | None = None
    neurons: int | None = None
    activation: str | None = None
    initializer: str = "glorot-normal"
    feature_map: str = "identity"
    n_features: int = 10
    input_scale: float | None = None
    constraint: str = "preset"
    loss_weights: list | None = None
    epochs: int | None = None
    learning_rate: float | None = None
    lbfgs: int | None = None
    colloc: int | None = None
    colloc_strategy: str = "uniform-grid"
    obs: str = "preset"
    obs_n: int | None = None
    obs_sigma: float | None = None
    obs_seed: int | None = None
    eval_points: int = 1000
    error_every: int = 500
    seed: int | None = None
    out: str = "runs"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(
                f"unknown problem {self.problem!r}; available: {', '.join(sorted(PROBLEMS))}"
            )
        if self.constraint not in ("preset", "soft", "hard", "positivity"):
            raise ConfigError(f"unknown constraint mode {self.constraint!r}")
        if self.obs not in ("preset", "none", "synthetic"):
            raise ConfigError(f"unknown observation source {self.obs!r}")
        if self.feature_map not in ("identity", "sinusoidal"):
            raise ConfigError(f"unknown feature map {self.feature_map!r}")
        if self.activation is not None and self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    # -- effective values after preset defaults ------------------------------

    def _preset(self, key):
        return PRESET_DEFAULTS[self.problem].get(key)

    def effective_seed(self):
        if self.seed is not None:
            return self.seed
        env = os.environ.get(SEED_ENV_VAR)
        return int(env) if env else 0

    def resolved(self):
        """Copy with every ``None`` replaced by its preset default."""
        preset = PRESET_DEFAULTS[self.problem]
        updates = {}
        for cfg_key, preset_key in [
            ("layers", "layers"), ("neurons", "neurons"),
            ("activation", "activation"), ("epochs", "epochs"),
            ("learning_rate", "learning_rate"), ("lbfgs", "lbfgs"),
            ("colloc", "colloc"), ("input_scale", "input_scale"),
        ]:
            if getattr(self, cfg_key) is None:
                updates[cfg_key] = preset[preset_key]
        if self.loss_weights is None:
            updates["loss_weights"] = list(preset["loss_weights"])
        if self.obs == "preset":
            updates["obs"] = preset["obs"]
        if self.obs_n is None:
            updates["obs_n"] = preset.get("obs_n", 100)
        if self.obs_sigma is None:
            updates["obs_sigma"] = preset.get("obs_sigma", 0.0)
        constraint = self.constraint
        if constraint == "preset":
            updates["constraint"] = preset["constraint"]
        if self.seed is None:
            updates["seed"] = self.effective_seed()
        if self.obs_seed is None:
            updates["obs_seed"] = updates.get("seed", self.seed)
        return replace(self, **updates)

    # -- assembly -------------------------------------------------------------

    def build(self):
        """(problem, network spec, train config) ready for ``engine.train``."""
        cfg = self.resolved()
        overrides = dict(cfg.params)
        if cfg.t_end is not None:
            base = get_problem(cfg.problem, **overrides)
            overrides["domain"] = (base.domain[0], cfg.t_end)
        problem = get_problem(cfg.problem, **overrides)

        if cfg.constraint == "soft":
            transform = OutputTransform.identity(problem.dimension)
        elif cfg.constraint == "hard":
            transform = OutputTransform.hard_ic(
                problem.domain[0], problem.u0, problem.v0
            )
        else:  # positivity
            transform = OutputTransform.positivity(problem.dimension)

        fmap = (
            FeatureMap("sinusoidal", cfg.n_features)
            if cfg.feature_map == "sinusoidal"
            else FeatureMap()
        )
        spec = NetworkSpec(
            hidden_layers=cfg.layers,
            width=cfg.neurons,
            activation=cfg.activation,
            d_out=problem.dimension,
            initializer=cfg.initializer,
            feature_map=fmap,
            output_transform=transform,
            input_scale=cfg.input_scale,
        )

        observations = None
        if cfg.obs == "synthetic":
            observations = make_synthetic_observations(
                problem, cfg.obs_n, cfg.obs_sigma, cfg.obs_seed
            )

        train_cfg = TrainConfig(
            weights=weights_from_list(cfg.problem, cfg.loss_weights),
            adam_iters=cfg.epochs,
            learning_rate=cfg.learning_rate,
            lbfgs_cap=cfg.lbfgs,
            colloc_n=cfg.colloc,
            colloc_strategy=cfg.colloc_strategy,
            observations=observations,
            seed=cfg.seed,
            eval_points=cfg.eval_points,
            error_every=cfg.error_every,
        )
        return problem, spec, train_cfg


# -- text format --------------------------------------------------------------


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text):
    text = text.strip()
    if not text:
        raise ConfigError("empty value in config")
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(x) for x in inner.split(",")]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse config value: {text!r}") from exc


def serialize_config(cfg):
    """Flat key = value text; round-trips through ``parse_config_text``."""
    lines = []
    for f in fields(cfg):
        if f.name == "params":
            continue
        v = getattr(cfg, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {_format_value(v)}")
    for k in sorted(cfg.params):
        lines.append(f"param.{k} = {_format_value(cfg.params[k])}")
    return "\n".join(lines) + "\n"


def parse_config_text(text):
    entries = {}
    params = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        parsed = _parse_value(value)
        if key.startswith("param."):
            params[key[len("param."):]] = parsed
        elif key in _FIELDS:
            entries[key] = parsed
        else:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
    if "problem" not in entries:
        raise ConfigError("config must set the problem name")
    kind_errors = _check_kinds(entries)
    if kind_errors:
        raise ConfigError("; ".join(kind_errors))
    return ExperimentConfig(params=params, **entries)


def _check_kinds(entries):
    errors = []
    for key, value in entries.items():
        kind, _ = _FIELDS[key]
        if kind in ("int", "optint") and not isinstance(value, int):
            errors.append(f"{key} must be an integer")
        elif kind in ("float", "optfloat") and not isinstance(value, (int, float)):
            errors.append(f"{key} must be a number")
        elif kind in ("str", "optstr") and not isinstance(value, str):
            errors.append(f"{key} must be a quoted string")
        elif kind == "optfloatlist" and not isinstance(value, list):
            errors.append(f"{key} must be a list of numbers")
        if kind in ("float", "optfloat") and isinstance(value, int):
            entries[key] = float(value)
    return errors


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def save_config(cfg, path):
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))
