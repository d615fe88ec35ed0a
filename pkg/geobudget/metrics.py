"""
Metric spaces over user data.

Each data component lives in its own metric space; tuples of components are
compared with the product metric dist_inf (max over components).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence

import numpy as np


class MetricError(ValueError):
    """Raised when points do not conform to their metric."""


class MetricKind(str, Enum):
    EUCLIDEAN = "euclidean"
    HAMMING = "hamming"
    DISCRETE01 = "discrete01"


@dataclass(frozen=True)
class MetricDescriptor:
    """A metric kind plus its dimension (euclidean only)."""
    kind: MetricKind
    dimension: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if self.kind is MetricKind.EUCLIDEAN:
            if self.dimension is None or int(self.dimension) < 1:
                raise MetricError(f"Euclidean metric needs a positive dimension, got {self.dimension}")
            object.__setattr__(self, "dimension", int(self.dimension))
        elif self.dimension is not None:
            raise MetricError(f"{self.kind.value} metric takes no dimension")

    @classmethod
    def euclidean(cls, dimension: int) -> "MetricDescriptor":
        return cls(MetricKind.EUCLIDEAN, dimension)

    @classmethod
    def hamming(cls) -> "MetricDescriptor":
        return cls(MetricKind.HAMMING)

    @classmethod
    def discrete01(cls) -> "MetricDescriptor":
        return cls(MetricKind.DISCRETE01)

    def conform(self, point: Any) -> Any:
        """Return the canonical representation of a point, validating its shape."""
        if self.kind is MetricKind.EUCLIDEAN:
            arr = np.atleast_1d(np.asarray(point, dtype=float))
            if arr.ndim != 1 or arr.shape[0] != self.dimension:
                raise MetricError(f"Expected a point of dimension {self.dimension}, got shape {arr.shape}")
            return arr
        if self.kind is MetricKind.HAMMING:
            if isinstance(point, (str, bytes)) or not isinstance(point, Iterable):
                raise MetricError("Hamming points must be sequences of records")
            return tuple(point)
        return point


@dataclass(frozen=True)
class ComponentSpec:
    """The metric space (U_l, dist_l) of component l."""
    index: int
    metric: MetricDescriptor

    def __post_init__(self):
        if int(self.index) < 1:
            raise MetricError(f"Component index must be positive, got {self.index}")


@dataclass(frozen=True)
class DataTuple:
    """A user's data: component index -> point."""
    components: Mapping[int, Any] = field(default_factory=dict)

    def __getitem__(self, index: int) -> Any:
        return self.components[index]

    def __contains__(self, index: int) -> bool:
        return index in self.components

    def keys(self):
        return self.components.keys()

    def with_component(self, index: int, point: Any) -> "DataTuple":
        merged: Dict[int, Any] = dict(self.components)
        merged[index] = point
        return DataTuple(merged)

    @classmethod
    def build(cls, specs: Sequence[ComponentSpec], points: Mapping[int, Any]) -> "DataTuple":
        """Build a tuple, conforming every point to its registered component."""
        by_index = {spec.index: spec for spec in specs}
        conformed = {}
        for index, point in points.items():
            if index not in by_index:
                raise MetricError(f"Component {index} has no registered metric")
            conformed[index] = by_index[index].metric.conform(point)
        return cls(conformed)


def distance(metric: MetricDescriptor, a: Any, b: Any) -> float:
    """dist(a, b) under the given metric."""
    a = metric.conform(a)
    b = metric.conform(b)
    if metric.kind is MetricKind.EUCLIDEAN:
        return float(np.linalg.norm(a - b))
    if metric.kind is MetricKind.HAMMING:
        shared = min(len(a), len(b))
        differing = sum(1 for x, y in zip(a[:shared], b[:shared]) if x != y)
        return float(differing + abs(len(a) - len(b)))
    return 0.0 if a == b else 1.0


def product_distance(specs: Sequence[ComponentSpec], x: DataTuple, y: DataTuple) -> float:
    """dist_inf(x, y) = max over components of dist_l(x(l), y(l))."""
    if set(x.keys()) != set(y.keys()):
        raise MetricError(f"Tuples define different components: {sorted(x.keys())} vs {sorted(y.keys())}")
    by_index = {spec.index: spec for spec in specs}
    result = 0.0
    for index in x.keys():
        if index not in by_index:
            raise MetricError(f"Component {index} has no registered metric")
        result = max(result, distance(by_index[index].metric, x[index], y[index]))
    return result
