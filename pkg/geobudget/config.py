"""
Configuration management for geobudget experiments.
"""

import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
from dotenv import load_dotenv

from geobudget.utils import load_json

SCHEMA_PATH = Path(__file__).parent.parent / "schemas" / "experiment.schema.json"

QUERY_MODES = {
    "range_count": ("bm_point", "bm_dist", "pm_point", "pm_dist"),
    "multi_query": ("bm_point", "bm_dist", "pm_point", "pm_dist"),
    "kde": ("bm_point", "bm_dist", "pm_point", "pm_dist"),
    "knn": ("bm_point", "bm_dist", "pm_point", "pm_dist"),
    "threshold": ("bm", "pm"),
}


class ConfigError(ValueError):
    """Raised for invalid experiment configuration."""


@dataclass
class ProtocolConfig:
    """Scheduler and filter search settings shared by every experiment."""
    schedule_start: float = 0.75
    bisection_rtol: float = 1e-9
    grid_rtol: float = 1e-3
    grid_points: int = 2000

    def search_settings(self) -> Dict[str, Any]:
        return {"rtol": self.bisection_rtol, "grid_points": self.grid_points, "grid_rtol": self.grid_rtol}


@dataclass
class EliminationConfig:
    """Failure probability split and round settings for elimination."""
    beta: float = 0.1
    beta0_share: float = 0.25
    rounds: int = 4
    split: str = "even"

    @property
    def beta0(self) -> float:
        return self.beta0_share * self.beta

    @property
    def beta1(self) -> float:
        return (1.0 - self.beta0_share) * self.beta


@dataclass
class RunnerConfig:
    log_level: str = "INFO"
    max_workers: int = 4
    output_dir: str = "outputs"
    log_file: str = "geobudget.log"


@dataclass
class GeobudgetConfig:
    """Top-level configuration."""
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    runner: RunnerConfig = field(default_factory=RunnerConfig)

    def __post_init__(self):
        """Apply environment overrides."""
        load_dotenv()
        self.runner.log_level = os.getenv("GEOBUDGET_LOG_LEVEL", self.runner.log_level)
        self.runner.output_dir = os.getenv("GEOBUDGET_OUTPUT_DIR", self.runner.output_dir)
        workers = os.getenv("GEOBUDGET_MAX_WORKERS")
        if workers:
            try:
                self.runner.max_workers = int(workers)
            except ValueError:
                raise ConfigError(f"GEOBUDGET_MAX_WORKERS must be an integer, got {workers!r}")


def load_config() -> GeobudgetConfig:
    """Load configuration from environment and defaults."""
    return GeobudgetConfig()


@dataclass
class ExperimentConfig:
    """One experiment: a query family, its modes, data source and privacy parameters."""
    query: str
    modes: List[str] = field(default_factory=list)
    n: int = 1000
    d: int = 2
    rho: float = 1.0
    budget: Optional[float] = None
    rounds: int = 4
    split: str = "even"
    m: int = 1
    width: float = 2.0
    center: Optional[List[float]] = None
    bandwidth: float = 1.0
    k: int = 3
    q: float = 0.5
    records: int = 10000
    positives: Optional[int] = None
    beta: float = 0.1
    beta0_share: float = 0.25
    shift: bool = True
    filter_kind: str = "cgp"
    lam: Optional[float] = None
    delta: float = 1e-6
    trials: int = 100
    seed: int = 0
    data: Dict[str, Any] = field(default_factory=lambda: {"generator": "uniform", "params": {}})
    setting: Optional[str] = None

    def __post_init__(self):
        if not self.modes:
            self.modes = list(QUERY_MODES.get(self.query, ()))
        if self.setting is None:
            prefix = "log-" if self.split == "doubling" else ""
            self.setting = f"{prefix}c{self.rounds}"
            if self.m > 1:
                self.setting += f"-m{self.m}"
            if not self.shift and self.query in ("range_count", "multi_query"):
                self.setting += "-NoShift"

    @property
    def total_budget(self) -> float:
        """B: the per-user budget over the whole experiment."""
        return self.budget if self.budget is not None else self.rho * self.m

    @property
    def lam_value(self) -> float:
        return math.inf if self.lam is None else float(self.lam)

    @property
    def elimination(self) -> EliminationConfig:
        return EliminationConfig(self.beta, self.beta0_share, self.rounds, self.split)

    def validate(self) -> None:
        if self.query not in QUERY_MODES:
            raise ConfigError(f"Unknown query kind: {self.query}")
        allowed = QUERY_MODES[self.query]
        bad = [mode for mode in self.modes if mode not in allowed]
        if bad:
            raise ConfigError(f"Modes {bad} are not valid for {self.query}; choose from {list(allowed)}")
        if self.query == "knn" and not 1 <= self.k < self.n:
            raise ConfigError(f"knn needs 1 <= k < n, got k={self.k}, n={self.n}")
        if self.query == "threshold":
            if not 0 < self.q < 1:
                raise ConfigError(f"q must lie in (0, 1), got {self.q}")
            if self.positives is not None and not 0 <= self.positives <= self.records:
                raise ConfigError(f"positives must lie in [0, records], got {self.positives}")
        if self.query in ("range_count", "multi_query") and self.d != 2:
            raise ConfigError(f"{self.query} uses axis-aligned rectangles in the plane and needs d=2, got d={self.d}")
        if self.query == "multi_query" and self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.total_budget < self.rho:
            raise ConfigError(f"Budget {self.total_budget} cannot cover a single query at rho={self.rho}")
        if self.center is not None and self.query != "threshold" and len(self.center) != self.d:
            raise ConfigError(f"center has {len(self.center)} coordinates, expected d={self.d}")
        if self.filter_kind == "pure_gp":
            raise ConfigError("Experiments privatize with Gaussian noise, which a pure_gp filter cannot account")
        if self.filter_kind == "approx_gp" and self.lam is None:
            raise ConfigError("approx_gp filters need a finite lam; with lam = inf they accept no cost at all")
        if "csv" not in self.data and "generator" not in self.data:
            raise ConfigError("data needs either a 'generator' or a 'csv' entry")


def load_experiment_config(path: Path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Load, schema-validate and apply CLI overrides to an experiment config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        raw = load_json(path)
    except ValueError as e:
        raise ConfigError(str(e))
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    schema = load_json(SCHEMA_PATH)
    try:
        jsonschema.validate(instance=raw, schema=schema)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"Invalid experiment config {path}: {e.message}")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
    config = ExperimentConfig(**raw)
    config.validate()
    return config
