"""Run configuration: strict TOML parsing into dataclasses.

A run document has top-level ``run_id`` and ``seed`` keys and the tables
``env``, ``algorithm``, ``schedule``, ``critic``, ``sampled``, ``tuner`` and
``diagnostics``. Unknown keys anywhere are errors.
"""

from __future__ import annotations

import inspect
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .bellman import CLAMP_PLACEMENTS, INFINITE, TARGET_MODES
from .envs import chain_mdp, garnet, gridworld
from .errors import ConfigError
from .policy_update import SCHEDULE_MODES

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

RUN_FAMILIES = ("npg_rkl", "spma_rkl", "npg_fkl", "spma_fkl", "dsac")
MODES = ("exact", "sampled")
ACTOR_SOLVERS = ("closed_form", "inner_loop")
ENV_BUILDERS = {"garnet": garnet, "chain": chain_mdp, "gridworld": gridworld}


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


def _integer(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return value


def _choice(value: Any, options: tuple[str, ...], name: str) -> str:
    if value not in options:
        raise ConfigError(f"{name} must be one of {options}, got {value!r}")
    return value


@dataclass(frozen=True)
class EnvSpec:
    name: str = "chain"
    params: dict = field(default_factory=lambda: {"length": 10})

    def __post_init__(self) -> None:
        if self.name == "json":
            if set(self.params) != {"path"}:
                raise ConfigError("json environments take exactly one key: path")
            return
        if self.name not in ENV_BUILDERS:
            raise ConfigError(f"unknown environment {self.name!r}; choose from {sorted(ENV_BUILDERS) + ['json']}")
        sig = inspect.signature(ENV_BUILDERS[self.name])
        unknown = set(self.params) - set(sig.parameters)
        if unknown:
            raise ConfigError(f"unknown keys for {self.name}: {sorted(unknown)}")
        missing = [
            p.name for p in sig.parameters.values() if p.default is inspect.Parameter.empty and p.name not in self.params
        ]
        if missing:
            raise ConfigError(f"missing keys for {self.name}: {missing}")


@dataclass(frozen=True)
class AlgorithmConfig:
    """``tau`` may be ``"auto"``; ``zeta`` may be ``"tau"`` to track the actor's entropy weight."""

    family: str = "npg_rkl"
    mode: str = "exact"
    tau: float | str = 0.1
    zeta: float | str = 0.1
    K: int = 100
    actor_solver: str = "closed_form"
    n: int = 1
    inner_step: float = 1.0
    inner_backtracking: bool = True
    inner_tol: float | None = None
    fkl_tol: float = 1e-10

    def __post_init__(self) -> None:
        _choice(self.family, RUN_FAMILIES, "algorithm.family")
        _choice(self.mode, MODES, "algorithm.mode")
        _choice(self.actor_solver, ACTOR_SOLVERS, "algorithm.actor_solver")
        if self.tau != "auto" and _number(self.tau, "algorithm.tau") < 0:
            raise ConfigError("algorithm.tau must be nonnegative or 'auto'")
        if self.zeta != "tau" and _number(self.zeta, "algorithm.zeta") < 0:
            raise ConfigError("algorithm.zeta must be nonnegative or 'tau'")
        if _integer(self.K, "algorithm.K") < 0:
            raise ConfigError("algorithm.K must be nonnegative")
        if _integer(self.n, "algorithm.n") < 1:
            raise ConfigError("algorithm.n must be at least 1")
        if _number(self.inner_step, "algorithm.inner_step") < 0:
            raise ConfigError("algorithm.inner_step must be nonnegative")
        if self.inner_tol is not None and _number(self.inner_tol, "algorithm.inner_tol") <= 0:
            raise ConfigError("algorithm.inner_tol must be positive")
        if _number(self.fkl_tol, "algorithm.fkl_tol") <= 0:
            raise ConfigError("algorithm.fkl_tol must be positive")
        if self.family == "dsac" and self.tau != "auto" and not float(self.tau) > 0:
            raise ConfigError("dsac needs tau > 0 or tau = 'auto'")
        if self.tau == "auto" and self.mode == "exact":
            raise ConfigError("tau = 'auto' is only available in sampled mode")

    @property
    def auto_tau(self) -> bool:
        return self.tau == "auto"


@dataclass(frozen=True)
class ScheduleConfig:
    """``c = "floor"`` picks the smallest constant the guarantees admit; ``eta_const = "theorem"`` picks
    the horizon-dependent constant step of the unregularized guarantees."""

    mode: str = "theory_decay"
    c: float | str = 0.0
    eta_const: float | str = 1.0

    def __post_init__(self) -> None:
        _choice(self.mode, SCHEDULE_MODES, "schedule.mode")
        if self.c != "floor" and _number(self.c, "schedule.c") < 0:
            raise ConfigError("schedule.c must be nonnegative or 'floor'")
        if self.eta_const != "theorem" and _number(self.eta_const, "schedule.eta_const") <= 0:
            raise ConfigError("schedule.eta_const must be positive or 'theorem'")


@dataclass(frozen=True)
class CriticSection:
    """``clamp`` defaults to on in exact mode and off in sampled mode."""

    m_steps: int | float = 1
    clamp: bool | None = None
    clamp_placement: str = "output"
    target_mode: str = "expected"
    critic_lr: float = 0.5
    critic_steps: int = 1
    target_smoothing: float = 1.0
    updates_per_iteration: int = 1

    def __post_init__(self) -> None:
        m = self.m_steps
        if isinstance(m, str):
            if m.lower() not in ("inf", "infinite"):
                raise ConfigError(f"critic.m_steps must be a positive integer or 'infinite', got {m!r}")
            object.__setattr__(self, "m_steps", INFINITE)
        elif isinstance(m, float) and math.isinf(m):
            object.__setattr__(self, "m_steps", INFINITE)
        elif _integer(m, "critic.m_steps") < 1:
            raise ConfigError("critic.m_steps must be at least 1")
        if self.clamp is not None and not isinstance(self.clamp, bool):
            raise ConfigError("critic.clamp must be a boolean")
        _choice(self.clamp_placement, CLAMP_PLACEMENTS, "critic.clamp_placement")
        _choice(self.target_mode, TARGET_MODES, "critic.target_mode")
        if _number(self.critic_lr, "critic.critic_lr") <= 0:
            raise ConfigError("critic.critic_lr must be positive")
        if _integer(self.critic_steps, "critic.critic_steps") < 1:
            raise ConfigError("critic.critic_steps must be at least 1")
        if not 0 < _number(self.target_smoothing, "critic.target_smoothing") <= 1:
            raise ConfigError("critic.target_smoothing must lie in (0, 1]")
        if _integer(self.updates_per_iteration, "critic.updates_per_iteration") < 1:
            raise ConfigError("critic.updates_per_iteration must be at least 1")


@dataclass(frozen=True)
class SampledConfig:
    N: int = 10
    batch_size: int = 64
    buffer_capacity: int = 100_000
    episode_length: int = 50
    warmup_steps: int = 0
    actor_batch_size: int | None = None

    def __post_init__(self) -> None:
        if _integer(self.N, "sampled.N") < 0:
            raise ConfigError("sampled.N must be nonnegative")
        for name in ("batch_size", "buffer_capacity"):
            if _integer(getattr(self, name), f"sampled.{name}") < 1:
                raise ConfigError(f"sampled.{name} must be positive")
        if _integer(self.episode_length, "sampled.episode_length") < 0:
            raise ConfigError("sampled.episode_length must be nonnegative (0 disables resets)")
        if _integer(self.warmup_steps, "sampled.warmup_steps") < 0:
            raise ConfigError("sampled.warmup_steps must be nonnegative")
        if self.actor_batch_size is not None and _integer(self.actor_batch_size, "sampled.actor_batch_size") < 1:
            raise ConfigError("sampled.actor_batch_size must be positive")


@dataclass(frozen=True)
class TunerConfig:
    init_alpha: float = 1.0
    target_entropy_scale: float = 1.0
    lr: float = 3e-3

    def __post_init__(self) -> None:
        if _number(self.init_alpha, "tuner.init_alpha") <= 0:
            raise ConfigError("tuner.init_alpha must be positive")
        if _number(self.target_entropy_scale, "tuner.target_entropy_scale") < 0:
            raise ConfigError("tuner.target_entropy_scale must be nonnegative")
        if _number(self.lr, "tuner.lr") <= 0:
            raise ConfigError("tuner.lr must be positive")


@dataclass(frozen=True)
class DiagnosticsConfig:
    """``record_tables`` keeps per-iteration policies and q tables (default: exact mode only);
    ``eval_every`` sets how often sampled runs compute exact diagnostics."""

    record_tables: bool | None = None
    eval_every: int = 100

    def __post_init__(self) -> None:
        if self.record_tables is not None and not isinstance(self.record_tables, bool):
            raise ConfigError("diagnostics.record_tables must be a boolean")
        if _integer(self.eval_every, "diagnostics.eval_every") < 1:
            raise ConfigError("diagnostics.eval_every must be positive")


@dataclass(frozen=True)
class RunConfig:
    run_id: str = "run"
    seed: int = 0
    env: EnvSpec = field(default_factory=EnvSpec)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    critic: CriticSection = field(default_factory=CriticSection)
    sampled: SampledConfig | None = None
    tuner: TunerConfig | None = None
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)

    def __post_init__(self) -> None:
        if _integer(self.seed, "seed") < 0:
            raise ConfigError("seed must be nonnegative")
        if self.algorithm.mode == "exact" and self.sampled is not None:
            raise ConfigError("exact mode does not accept a [sampled] table")
        if self.algorithm.mode == "sampled" and self.sampled is None:
            raise ConfigError("sampled mode requires a [sampled] table")
        if self.algorithm.auto_tau and self.tuner is None:
            raise ConfigError("tau = 'auto' requires a [tuner] table")
        if not self.algorithm.auto_tau and self.tuner is not None:
            raise ConfigError("a [tuner] table is only valid with tau = 'auto'")

    @property
    def clamp_enabled(self) -> bool:
        if self.critic.clamp is not None:
            return self.critic.clamp
        return self.algorithm.mode == "exact"

    @property
    def record_tables(self) -> bool:
        if self.diagnostics.record_tables is not None:
            return self.diagnostics.record_tables
        return self.algorithm.mode == "exact"

    def with_overrides(self, **changes) -> RunConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {"run_id": self.run_id, "seed": self.seed}
        doc["env"] = {"name": self.env.name, **self.env.params}
        for name in ("algorithm", "schedule", "critic", "sampled", "tuner", "diagnostics"):
            section = getattr(self, name)
            if section is None:
                continue
            table = {f.name: getattr(section, f.name) for f in fields(section)}
            doc[name] = {k: ("infinite" if isinstance(v, float) and math.isinf(v) else v) for k, v in table.items() if v is not None}
        return doc


_SECTIONS = {
    "algorithm": AlgorithmConfig,
    "schedule": ScheduleConfig,
    "critic": CriticSection,
    "sampled": SampledConfig,
    "tuner": TunerConfig,
    "diagnostics": DiagnosticsConfig,
}


def _section(cls, table: Any, name: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return cls(**table)


def parse_run_config(doc: dict) -> RunConfig:
    """Build a :class:`RunConfig` from a parsed TOML document."""
    allowed = {"run_id", "seed", "env", *_SECTIONS}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    if "run_id" in doc:
        if not isinstance(doc["run_id"], str):
            raise ConfigError("run_id must be a string")
        kwargs["run_id"] = doc["run_id"]
    if "seed" in doc:
        kwargs["seed"] = doc["seed"]
    if "env" not in doc:
        raise ConfigError("an [env] table is required")
    if not isinstance(doc["env"], dict) or "name" not in doc["env"]:
        raise ConfigError("[env] needs a name")
    env = dict(doc["env"])
    kwargs["env"] = EnvSpec(env.pop("name"), env)
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _section(cls, doc[name], name)
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_toml(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_run_config(path: str | Path) -> RunConfig:
    return parse_run_config(load_toml(path))
