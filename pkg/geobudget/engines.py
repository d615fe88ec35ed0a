"""
Data source management: synthetic generator plugins and CSV point files.
"""

import csv
import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from geobudget.config import ConfigError
from geobudget.utils import discover_plugins

logger = logging.getLogger(__name__)

GENERATOR_DIR = Path(os.path.dirname(__file__)) / '../data_generators'


def load_points_csv(path: Path, d: Optional[int] = None) -> np.ndarray:
    """Read points from a CSV with header x1,...,xd and one point per line."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Point file not found: {path}")
    with open(path, newline='') as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"Point file {path} is empty")
        expected = [f"x{j}" for j in range(1, len(header) + 1)]
        if [h.strip() for h in header] != expected:
            raise ConfigError(f"Point file {path} needs header {','.join(expected)}, got {','.join(header)}")
        if d is not None and len(header) != d:
            raise ConfigError(f"Point file {path} has {len(header)} columns, expected d={d}")
        try:
            rows = [[float(value) for value in row] for row in reader if row]
        except ValueError as e:
            raise ConfigError(f"Non-numeric value in {path}: {e}")
    if any(len(row) != len(header) for row in rows):
        raise ConfigError(f"Point file {path} has rows of the wrong length")
    return np.asarray(rows, dtype=float).reshape(-1, len(header))


class GeneratorManager:
    """Loads synthetic data generators as plugins and resolves experiment data specs."""

    def __init__(self, plugin_dir: Optional[Path] = None):
        self.plugin_dir = Path(plugin_dir) if plugin_dir is not None else GENERATOR_DIR
        self.generators = self._load_generators()

    def _load_generators(self) -> Dict[str, Callable]:
        plugins = discover_plugins(self.plugin_dir.resolve(), 'gen_')
        if not plugins:
            raise RuntimeError(f"No data generators available in {self.plugin_dir}")
        logger.info(f"Available data generators: {sorted(plugins)}")
        return plugins

    def get_available_generators(self) -> List[str]:
        return sorted(self.generators)

    def gen_data(self, spec: Dict[str, Any], n: int, d: int, rng: np.random.Generator) -> np.ndarray:
        """Points of shape (n, d) for a data spec: {"generator": name, "params": {...}} or {"csv": path}."""
        if "csv" in spec:
            return load_points_csv(Path(spec["csv"]), d)
        name = str(spec.get("generator", "")).lower()
        if name not in self.generators:
            raise ConfigError(f"Unknown generator '{name}'. Available: {self.get_available_generators()}")
        try:
            points = self.generators[name](n, d, rng, **spec.get("params", {}))
        except TypeError as e:
            raise ConfigError(f"Bad parameters for generator '{name}': {e}")
        points = np.asarray(points, dtype=float)
        if points.shape != (n, d):
            raise RuntimeError(f"Generator '{name}' returned shape {points.shape}, expected {(n, d)}")
        return points

    def gen_trajectory(self, spec: Dict[str, Any], n: int, d: int, m: int, rng: np.random.Generator) -> np.ndarray:
        """Positions at m time steps, shape (m, n, d): the generated points plus Gaussian drift per step."""
        start = self.gen_data(spec, n, d, rng)
        drift = float(spec.get("drift", 0.0))
        if drift == 0:
            return np.repeat(start[None, :, :], m, axis=0)
        steps = drift * rng.standard_normal((m, start.shape[0], d))
        steps[0] = 0.0
        return start[None, :, :] + np.cumsum(steps, axis=0)
