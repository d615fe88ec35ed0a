"""
Utility functions for geobudget.
"""

import hashlib
import importlib.util
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np


def setup_logging(level: str = "INFO", log_file: Optional[str] = "geobudget.log") -> logging.Logger:
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )
    return logging.getLogger("geobudget")


def make_rng(*keys: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, trial, ...); independent of call order elsewhere."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def spawn_rngs(rng: np.random.Generator, count: int) -> List[np.random.Generator]:
    """Split count independent child streams off a generator's seed sequence."""
    seed_seq = rng.bit_generator.seed_seq
    return [np.random.Generator(np.random.Philox(child)) for child in seed_seq.spawn(count)]


def output_digest(output: Any) -> Optional[str]:
    if output is None:
        return None
    data = np.ascontiguousarray(np.asarray(output, dtype=float)).tobytes()
    return hashlib.sha256(data).hexdigest()[:16]


def load_json(file_path: Path) -> Dict[str, Any]:
    try:
        with open(file_path, 'r') as f:
            return json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"File not found: {file_path}")
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in {file_path}: {e}")


def write_jsonl(records: Iterable[Dict[str, Any]], file_path: Path) -> None:
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, 'w') as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def ensure_directory(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def discover_plugins(directory: Path, function_prefix: str) -> Dict[str, Callable]:
    plugins = {}
    for py_file in sorted(directory.glob('*.py')):
        if py_file.name == '__init__.py':
            continue
        module_name = f"geobudget_plugin_{py_file.stem}"
        spec = importlib.util.spec_from_file_location(module_name, py_file)
        if not spec or not spec.loader:
            continue
        module = importlib.util.module_from_spec(spec)
        sys.modules[module_name] = module
        try:
            spec.loader.exec_module(module)
        except Exception as e:
            logging.warning(f"Failed to import plugin {py_file.stem}: {e}")
            continue
        for attr in dir(module):
            if attr.startswith(function_prefix):
                func = getattr(module, attr)
                if callable(func):
                    plugins[attr[len(function_prefix):]] = func
    return plugins
