"""Experiment configuration: one key=value sections file per experiment.

Every key is validated before any computation runs: unknown sections or
keys, type errors, and cross-field violations all raise ``ConfigError``
with the offending ``section.key`` named.  Command-line overrides
(``--seed``, ``--out``, ``--threads``) are applied after parsing.
"""

import configparser
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .barycenter import TrainConfig
from .congruent import ConjugateSolveConfig
from .errors import ConfigError
from .measures import TOY2D_SHAPES, check_weights

__all__ = [
    "EXPERIMENT_KINDS",
    "CongruentSettings",
    "InverseSettings",
    "ExperimentConfig",
    "parse_config",
    "default_config",
]

EXPERIMENT_KINDS = (
    "gaussian-bench",
    "uniform-bench",
    "toy2d",
    "congruent-dataset",
    "win-train",
    "inverse-maps",
    "lemma-checks",
)

_TRAIN_KINDS = ("gaussian-bench", "uniform-bench", "toy2d", "win-train")
_CONGRUENT_KINDS = ("congruent-dataset", "win-train", "lemma-checks")


@dataclass(frozen=True)
class CongruentSettings:
    """Construction of the known-barycenter population."""

    family: str = "log_sum_exp"        # quadratic | log_sum_exp
    n_functions: int = 2               # members = n_functions + 1 (chain layout)
    n_planes: int = 8
    strong_convexity: float = 0.2
    mix_scale: float = 1.0
    betas: tuple = ()                  # empty: all 1/2
    base_weights: tuple = ()           # empty: uniform
    solver_lr: float = 2e-2
    solver_max_steps: int = 1000
    solver_tol: float = 1e-8

    def solve_config(self):
        """Inner conjugate-solve configuration for non-quadratic families."""
        return ConjugateSolveConfig(learning_rate=self.solver_lr,
                                    max_steps=self.solver_max_steps,
                                    tol=self.solver_tol)


@dataclass(frozen=True)
class InverseSettings:
    """Follow-up stage: maps from the inputs onto a trained barycenter."""

    run_dir: str = ""
    rounds: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment: kind, problem shape, and stage settings.

    Built by :func:`parse_config` / :func:`default_config`; every field is
    validated before any computation starts.
    """

    kind: str
    dimension: int = 2
    n_inputs: int = 4
    weights: tuple = ()                # empty: kind-dependent default
    seed: int = 0
    output_dir: str = "runs/latest"
    shift_scale: float = 0.0
    toy_shapes: tuple = TOY2D_SHAPES
    export_samples: int = 2048
    train: TrainConfig = field(default_factory=TrainConfig)
    congruent: CongruentSettings = field(default_factory=CongruentSettings)
    inverse: InverseSettings = field(default_factory=InverseSettings)

    def resolved_weights(self, n=None):
        """Barycenter weights, defaulted by kind when not given explicitly."""
        n = self.n_inputs if n is None else n
        if self.weights:
            return check_weights(np.array(self.weights), n)
        if self.kind in ("gaussian-bench", "uniform-bench") and n == 4:
            return np.array([0.1, 0.2, 0.3, 0.4])
        return np.full(n, 1.0 / n)


def _parse_bool(raw):
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_floats(raw):
    parts = [p for p in raw.replace(",", " ").split() if p]
    return tuple(float(p) for p in parts)


def _parse_strings(raw):
    return tuple(p for p in raw.replace(",", " ").split() if p)


# section -> key -> parser; targets resolved by _apply below.
_SCHEMA = {
    "experiment": {
        "kind": str.strip,
        "dimension": int,
        "n_inputs": int,
        "weights": _parse_floats,
        "seed": int,
        "output_dir": str.strip,
        "shift_scale": float,
        "toy_shapes": _parse_strings,
        "export_samples": int,
    },
    "train": {
        "outer_iterations": int,
        "generator_steps": int,
        "potential_steps": int,
        "map_inner_steps": int,
        "batch_size": int,
        "lr_generator": float,
        "lr_potential": float,
        "lr_map": float,
        "lr_decay_every": int,
        "lr_decay_every_map": int,
        "lr_decay_factor": float,
        "latent_dim": int,
        "hidden_width": int,
        "hidden_depth": int,
        "eval_samples": int,
        "reset_solver_moments": _parse_bool,
        "n_threads": int,
    },
    "congruent": {
        "family": str.strip,
        "n_functions": int,
        "n_planes": int,
        "strong_convexity": float,
        "mix_scale": float,
        "betas": _parse_floats,
        "base_weights": _parse_floats,
        "solver_lr": float,
        "solver_max_steps": int,
        "solver_tol": float,
    },
    "inverse": {
        "run_dir": str.strip,
        "rounds": int,
    },
}


def _read_section(parser, section):
    values = {}
    if not parser.has_section(section):
        return values
    schema = _SCHEMA[section]
    for key, raw in parser.items(section):
        if key not in schema:
            raise ConfigError(f"unknown key {section}.{key}")
        try:
            values[key] = schema[key](raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc
    return values


def parse_config(path):
    """Parse and validate an experiment config file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError:
        raise
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: malformed config: {exc}") from exc
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
    exp = _read_section(parser, "experiment")
    if "kind" not in exp:
        raise ConfigError("missing required key experiment.kind")
    return build_config(exp,
                        _read_section(parser, "train"),
                        _read_section(parser, "congruent"),
                        _read_section(parser, "inverse"))


def build_config(exp, train_keys=None, congruent_keys=None, inverse_keys=None):
    """Assemble and cross-validate an ExperimentConfig from key dicts."""
    train_keys = dict(train_keys or {})
    congruent_keys = dict(congruent_keys or {})
    inverse_keys = dict(inverse_keys or {})
    kind = exp.get("kind", "")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"experiment.kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
    try:
        train = TrainConfig(**train_keys)
    except Exception as exc:
        raise ConfigError(f"bad [train] section: {exc}") from exc
    try:
        congruent = CongruentSettings(**congruent_keys)
        congruent.solve_config()
    except Exception as exc:
        raise ConfigError(f"bad [congruent] section: {exc}") from exc
    inverse = InverseSettings(**inverse_keys)
    cfg = ExperimentConfig(
        kind=kind,
        dimension=int(exp.get("dimension", 2)),
        n_inputs=int(exp.get("n_inputs", 0) or 0),
        weights=tuple(exp.get("weights", ())),
        seed=int(exp.get("seed", 0)),
        output_dir=str(exp.get("output_dir", "runs/latest")),
        shift_scale=float(exp.get("shift_scale", 0.0)),
        toy_shapes=tuple(exp.get("toy_shapes", TOY2D_SHAPES)),
        export_samples=int(exp.get("export_samples", 2048)),
        train=train,
        congruent=congruent,
        inverse=inverse,
    )
    return _validate(cfg)


def _validate(cfg):
    if cfg.dimension < 1:
        raise ConfigError(f"experiment.dimension must be >= 1, got {cfg.dimension}")
    if cfg.seed < 0:
        raise ConfigError(f"experiment.seed must be >= 0, got {cfg.seed}")
    if cfg.export_samples < 0:
        raise ConfigError(f"experiment.export_samples must be >= 0, got {cfg.export_samples}")
    if cfg.shift_scale < 0:
        raise ConfigError(f"experiment.shift_scale must be >= 0, got {cfg.shift_scale}")
    n_inputs = cfg.n_inputs
    if cfg.kind == "toy2d":
        if cfg.dimension != 2:
            raise ConfigError("toy2d requires experiment.dimension = 2")
        for shape in cfg.toy_shapes:
            if shape not in TOY2D_SHAPES:
                raise ConfigError(f"unknown toy shape {shape!r}, expected one of {TOY2D_SHAPES}")
        n_inputs = len(cfg.toy_shapes)
        if n_inputs < 1:
            raise ConfigError("toy2d needs at least one shape")
    elif cfg.kind in ("gaussian-bench", "uniform-bench"):
        n_inputs = n_inputs or 4
        if n_inputs < 1:
            raise ConfigError(f"experiment.n_inputs must be >= 1, got {n_inputs}")
    elif cfg.kind in ("win-train", "congruent-dataset", "lemma-checks"):
        if cfg.weights:
            raise ConfigError(f"{cfg.kind} derives weights from the congruent system; "
                              "remove experiment.weights")
        n_inputs = cfg.congruent.n_functions + 1
    if cfg.kind == "inverse-maps" and not cfg.inverse.run_dir:
        raise ConfigError("inverse-maps requires inverse.run_dir")
    if cfg.congruent.family not in ("quadratic", "log_sum_exp"):
        raise ConfigError(f"congruent.family must be quadratic or log_sum_exp, "
                          f"got {cfg.congruent.family!r}")
    if cfg.congruent.n_functions < 1 or cfg.congruent.n_planes < 1:
        raise ConfigError("congruent.n_functions and n_planes must be >= 1")
    if cfg.congruent.strong_convexity <= 0 or cfg.congruent.mix_scale <= 0:
        raise ConfigError("congruent.strong_convexity and mix_scale must be positive")
    if cfg.congruent.betas and len(cfg.congruent.betas) != cfg.congruent.n_functions:
        raise ConfigError("congruent.betas length must equal n_functions")
    if (cfg.congruent.base_weights
            and len(cfg.congruent.base_weights) != cfg.congruent.n_functions):
        raise ConfigError("congruent.base_weights length must equal n_functions")
    if cfg.inverse.rounds < 1:
        raise ConfigError("inverse.rounds must be >= 1")
    cfg = replace(cfg, n_inputs=n_inputs)
    if cfg.weights:
        try:
            check_weights(np.array(cfg.weights), n_inputs)
        except Exception as exc:
            raise ConfigError(f"experiment.weights: {exc}") from exc
    return cfg


def default_config(kind, **overrides):
    """Programmatic config with defaults, same validation as parse_config."""
    exp = {"kind": kind}
    exp.update({k: v for k, v in overrides.items() if k in _SCHEMA["experiment"]})
    train_keys = {k: v for k, v in overrides.items() if k in _SCHEMA["train"]}
    congruent_keys = {k: v for k, v in overrides.items() if k in _SCHEMA["congruent"]}
    inverse_keys = {k: v for k, v in overrides.items() if k in _SCHEMA["inverse"]}
    known = set(_SCHEMA["experiment"]) | set(_SCHEMA["train"]) | set(_SCHEMA["congruent"]) | set(_SCHEMA["inverse"])
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return build_config(exp, train_keys, congruent_keys, inverse_keys)


def config_to_dict(cfg):
    """Resolved config as a JSON-friendly dict (manifest payload)."""
    out = {
        "kind": cfg.kind,
        "dimension": cfg.dimension,
        "n_inputs": cfg.n_inputs,
        "weights": list(cfg.weights),
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "shift_scale": cfg.shift_scale,
        "toy_shapes": list(cfg.toy_shapes),
        "export_samples": cfg.export_samples,
        "train": {f.name: getattr(cfg.train, f.name) for f in fields(cfg.train)},
        "congruent": {f.name: getattr(cfg.congruent, f.name) for f in fields(cfg.congruent)},
        "inverse": {f.name: getattr(cfg.inverse, f.name) for f in fields(cfg.inverse)},
    }
    out["congruent"]["betas"] = list(cfg.congruent.betas)
    out["congruent"]["base_weights"] = list(cfg.congruent.base_weights)
    return out
