"""Experiment and sweep configuration.

Configs are TOML files with three sections::

    [experiment]   seed, n, dim_x, n_positions, n_actions, n_dims,
                   n_categories, n_deficient, n_contexts, unobserved_dims
    [reward]       kind, space, sigma_r, behavior, catalogue,
                   behavior_lambda, g_max
    [policy]       beta, epsilon
    [sweep]        variable, values, estimators, replications, root_seed,
                   value_budget, delta, n_jobs

Every key can be overridden with ``section.key=value`` (or the bare key).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Bumped whenever a generation convention (parameter priors, stream layout)
# changes, so old fingerprints never match new data.
CONVENTIONS = "v1:latent_e~N(0,I);eta~U[0,1]/sum;M,theta~N(0,1);G~U[0,g_max];deficient=random-subset"

REWARD_KINDS = ("gaussian", "bernoulli")
REWARD_SPACES = ("embedding", "action")
SWEEP_VARIABLES = (
    "sample_size",
    "unique_actions",
    "ranking_length",
    "unobserved_dims",
    "noise",
    "beta",
    "epsilon",
    "deficient_actions",
    "behavior_complexity",
)
COMPLEXITY_ORDER = ("independent", "top_2_cascade", "neighbor_1", "cascade", "inverse_cascade", "standard")


class ConfigError(ValueError):
    """Invalid configuration file or override."""


def _as_counts(value: Union[int, Iterable[int]]) -> Union[int, Tuple[int, ...]]:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return int(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """One synthetic environment plus its data-generation settings.

    ``n_actions`` and ``n_categories`` accept a single count or one count per
    position (dimension). ``n_contexts = 0`` draws fresh Gaussian contexts;
    a positive value fixes a finite pool with uniform probability, which is
    what exact policy values need. ``catalogue`` (non-empty) switches to
    per-sample behaviors drawn from ``p(c|x)``; otherwise ``behavior`` fixes
    one behavior matrix for every sample.
    """

    seed: int = 0
    n: int = 10000
    dim_x: int = 5
    n_positions: int = 5
    n_actions: Union[int, Tuple[int, ...]] = 20
    n_dims: int = 3
    n_categories: Union[int, Tuple[int, ...]] = 2
    n_deficient: int = 0
    n_contexts: int = 0
    unobserved_dims: int = 0
    reward_kind: str = "gaussian"
    reward_space: str = "embedding"
    sigma_r: float = 0.5
    behavior: str = "standard"
    catalogue: Tuple[str, ...] = ()
    behavior_lambda: float = 1.0
    g_max: Optional[float] = None
    beta: float = -1.0
    epsilon: float = 0.3

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_actions", _as_counts(self.n_actions))
        object.__setattr__(self, "n_categories", _as_counts(self.n_categories))
        object.__setattr__(self, "catalogue", tuple(str(c) for c in self.catalogue))
        for name in ("sigma_r", "behavior_lambda", "beta", "epsilon"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.g_max is not None:
            object.__setattr__(self, "g_max", float(self.g_max))

    @property
    def action_counts(self) -> Tuple[int, ...]:
        if isinstance(self.n_actions, tuple):
            return self.n_actions
        return (self.n_actions,) * self.n_positions

    @property
    def category_counts(self) -> Tuple[int, ...]:
        if isinstance(self.n_categories, tuple):
            return self.n_categories
        return (self.n_categories,) * self.n_dims

    @property
    def interaction_max(self) -> float:
        if self.g_max is not None:
            return self.g_max
        return 3.0 if self.reward_kind == "gaussian" else 15.0

    @property
    def retained_dims(self) -> int:
        return self.n_dims - self.unobserved_dims

    def validate(self) -> "ExperimentConfig":
        from .synthenv import is_behavior_name

        if self.n < 0:
            raise ConfigError("n must be >= 0")
        for name in ("dim_x", "n_positions", "n_dims"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if len(self.action_counts) != self.n_positions or min(self.action_counts) < 1:
            raise ConfigError("n_actions must be positive, one count or one per position")
        if len(self.category_counts) != self.n_dims or min(self.category_counts) < 1:
            raise ConfigError("n_categories must be positive, one count or one per dimension")
        if not 0 <= self.n_deficient < min(self.action_counts):
            raise ConfigError("n_deficient must lie in [0, |A_k|)")
        if self.n_contexts < 0:
            raise ConfigError("n_contexts must be >= 0")
        if not 0 <= self.unobserved_dims < self.n_dims:
            raise ConfigError("unobserved_dims must lie in [0, n_dims)")
        if self.reward_kind not in REWARD_KINDS:
            raise ConfigError(f"reward kind must be one of {REWARD_KINDS}")
        if self.reward_space not in REWARD_SPACES:
            raise ConfigError(f"reward space must be one of {REWARD_SPACES}")
        if self.sigma_r < 0:
            raise ConfigError("sigma_r must be >= 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if self.g_max is not None and self.g_max < 0:
            raise ConfigError("g_max must be >= 0")
        for name in (self.behavior,) + self.catalogue:
            if not is_behavior_name(name):
                raise ConfigError(f"unknown behavior {name!r}")
        return self

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    def fingerprint(self) -> str:
        """Stable 16-hex digest of the canonicalized config plus conventions."""
        payload = json.dumps({"config": self.to_dict(), "conventions": CONVENTIONS}, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def behavior_complexity_schedule(level: float) -> Tuple[str, ...]:
    """Behavior catalogue for a complexity level in [0, 1].

    Returns the first ``round(1 + 5 * level)`` entries of
    ``independent, top_2_cascade, neighbor_1, cascade, inverse_cascade, standard``.
    Halves round up (level 0.5 gives 4 entries), unlike Python's ``round``.
    """
    level = float(level)
    if not 0.0 <= level <= 1.0:
        raise ConfigError("behavior complexity level must lie in [0, 1]")
    length = int(1 + 5 * level + 0.5 + 1e-12)
    return COMPLEXITY_ORDER[: min(length, len(COMPLEXITY_ORDER))]


def apply_sweep_value(cfg: ExperimentConfig, variable: str, value: Any) -> ExperimentConfig:
    """Config for one point of a sweep."""
    if variable == "sample_size":
        return cfg.replace(n=int(value))
    if variable == "unique_actions":
        return cfg.replace(n_actions=int(value))
    if variable == "ranking_length":
        counts = cfg.n_actions if isinstance(cfg.n_actions, int) else cfg.n_actions[0]
        return cfg.replace(n_positions=int(value), n_actions=counts)
    if variable == "unobserved_dims":
        return cfg.replace(unobserved_dims=int(value))
    if variable == "noise":
        return cfg.replace(sigma_r=float(value))
    if variable == "beta":
        return cfg.replace(beta=float(value))
    if variable == "epsilon":
        return cfg.replace(epsilon=float(value))
    if variable == "deficient_actions":
        return cfg.replace(n_deficient=int(value))
    if variable == "behavior_complexity":
        return cfg.replace(catalogue=behavior_complexity_schedule(value))
    raise ConfigError(f"unknown sweep variable {variable!r}; expected one of {SWEEP_VARIABLES}")


@dataclass(frozen=True)
class SweepConfig:
    base: ExperimentConfig
    variable: str = "sample_size"
    values: Tuple[Any, ...] = (10000,)
    estimators: Tuple[str, ...] = ("snSIPS", "snIIPS", "snRIPS", "MSIPS", "MIIPS", "MRIPS")
    replications: int = 200
    root_seed: int = 0
    value_budget: int = 1_000_000
    delta: float = 0.05
    n_jobs: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "estimators", tuple(self.estimators))

    def validate(self) -> "SweepConfig":
        from .core import EstimatorSpec

        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {self.variable!r}; expected one of {SWEEP_VARIABLES}")
        if not self.values:
            raise ConfigError("sweep values must be non-empty")
        if self.replications < 2:
            raise ConfigError("replications must be >= 2")
        if self.value_budget < 1:
            raise ConfigError("value_budget must be >= 1")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        for name in self.estimators:
            try:
                EstimatorSpec.parse(name, delta=self.delta)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        for value in self.values:
            apply_sweep_value(self.base, self.variable, value).validate()
        return self

    def point(self, value: Any) -> ExperimentConfig:
        return apply_sweep_value(self.base, self.variable, value)


_EXPERIMENT_KEYS = {
    "experiment": {
        "seed": "seed",
        "n": "n",
        "dim_x": "dim_x",
        "n_positions": "n_positions",
        "n_actions": "n_actions",
        "n_dims": "n_dims",
        "n_categories": "n_categories",
        "n_deficient": "n_deficient",
        "n_contexts": "n_contexts",
        "unobserved_dims": "unobserved_dims",
    },
    "reward": {
        "kind": "reward_kind",
        "space": "reward_space",
        "sigma_r": "sigma_r",
        "behavior": "behavior",
        "catalogue": "catalogue",
        "behavior_lambda": "behavior_lambda",
        "g_max": "g_max",
    },
    "policy": {"beta": "beta", "epsilon": "epsilon"},
}
_SWEEP_KEYS = ("variable", "values", "estimators", "replications", "root_seed", "value_budget", "delta", "n_jobs")


def _parse_scalar(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _resolve_key(key: str) -> Tuple[str, str]:
    """Map ``section.key`` or a bare key to (section, key)."""
    if "." in key:
        section, name = key.split(".", 1)
        known = _SWEEP_KEYS if section == "sweep" else _EXPERIMENT_KEYS.get(section, {})
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        return section, name
    hits = [s for s, keys in _EXPERIMENT_KEYS.items() if key in keys]
    if key in _SWEEP_KEYS:
        hits.append("sweep")
    if not hits:
        raise ConfigError(f"unknown config key {key!r}")
    if len(hits) > 1:
        raise ConfigError(f"ambiguous key {key!r}; use one of {[h + '.' + key for h in hits]}")
    return hits[0], key


def parse_overrides(pairs: Iterable[str]) -> Dict[str, Dict[str, Any]]:
    out: Dict[str, Dict[str, Any]] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        section, name = _resolve_key(key.strip())
        out.setdefault(section, {})[name] = _parse_scalar(raw.strip())
    return out


def _merge(doc: Dict[str, Any], overrides: Dict[str, Dict[str, Any]]) -> Dict[str, Any]:
    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in doc.items()}
    for section, values in overrides.items():
        merged.setdefault(section, {}).update(values)
    return merged


def _experiment_from_doc(doc: Dict[str, Any]) -> ExperimentConfig:
    kwargs: Dict[str, Any] = {}
    for section, keys in _EXPERIMENT_KEYS.items():
        block = doc.get(section, {})
        unknown = set(block) - set(keys)
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        for key, value in block.items():
            kwargs[keys[key]] = value
    try:
        return ExperimentConfig(**kwargs).validate()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _read(path: Optional[Union[str, Path]]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def load_experiment(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    doc = _merge(_read(path), parse_overrides(overrides))
    return _experiment_from_doc(doc)


def load_sweep(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> SweepConfig:
    doc = _merge(_read(path), parse_overrides(overrides))
    base = _experiment_from_doc(doc)
    block = doc.get("sweep", {})
    unknown = set(block) - set(_SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys in [sweep]: {sorted(unknown)}")
    values = block.get("values", [base.n])
    if not isinstance(values, list):
        values = [values]
    estimators = block.get("estimators", list(SweepConfig.estimators))
    if isinstance(estimators, str):
        estimators = [estimators]
    try:
        sweep = SweepConfig(
            base=base,
            variable=block.get("variable", "sample_size"),
            values=tuple(values),
            estimators=tuple(estimators),
            replications=int(block.get("replications", 200)),
            root_seed=int(block.get("root_seed", 0)),
            value_budget=int(block.get("value_budget", 1_000_000)),
            delta=float(block.get("delta", 0.05)),
            n_jobs=int(block.get("n_jobs", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return sweep.validate()
