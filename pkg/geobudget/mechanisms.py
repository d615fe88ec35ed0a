"""
Noise mechanisms for GP/CGP, Gaussian tail bounds and valid triples.

A mechanism privatizes a K-Lipschitz function f of a point as f(x) + K * Z:
Z ~ N(0, I/(2 rho)) gives rho-CGP, and Z with density proportional to
exp(-eps * ||z||) gives eps-GP.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, List, Optional, Sequence, Union

import numpy as np

Value = Union[float, np.ndarray]


class MechanismError(ValueError):
    """Raised for invalid mechanism parameters."""


class NoiseFamily(str, Enum):
    GAUSSIAN_CGP = "gaussian_cgp"
    LAPLACE_GP = "laplace_gp"
    NULL = "null"


@dataclass(frozen=True)
class MechanismSpec:
    """Declarative description of one privatization step; the unit of privacy accounting."""
    noise: NoiseFamily
    lipschitz: float = 1.0
    privacy_param: float = 0.0
    out_dim: int = 1
    # K-Lipschitz function applied to the point before noise; identity when None.
    query: Optional[Callable[[Any], Value]] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "noise", NoiseFamily(self.noise))
        if int(self.out_dim) < 1:
            raise MechanismError(f"Output dimension must be positive, got {self.out_dim}")
        if self.noise is NoiseFamily.NULL:
            if self.privacy_param != 0:
                raise MechanismError("The null mechanism has privacy parameter 0")
            return
        if not self.privacy_param > 0:
            raise MechanismError(f"{self.noise.value} needs a positive privacy parameter, got {self.privacy_param}")
        if not self.lipschitz > 0:
            raise MechanismError(f"Lipschitz constant must be positive, got {self.lipschitz}")

    @property
    def is_null(self) -> bool:
        return self.noise is NoiseFamily.NULL

    @classmethod
    def gaussian(cls, rho: float, lipschitz: float = 1.0, out_dim: int = 1, query=None) -> "MechanismSpec":
        return cls(NoiseFamily.GAUSSIAN_CGP, lipschitz, rho, out_dim, query)

    @classmethod
    def laplace(cls, eps: float, lipschitz: float = 1.0, out_dim: int = 1, query=None) -> "MechanismSpec":
        return cls(NoiseFamily.LAPLACE_GP, lipschitz, eps, out_dim, query)


NULL_MECHANISM = MechanismSpec(NoiseFamily.NULL)


def _as_value(arr: np.ndarray) -> Value:
    return float(arr) if arr.ndim == 0 else arr


def sample_gaussian_mech(value: Value, K: float, rho: float, rng: np.random.Generator) -> Value:
    """value + (K / sqrt(2 rho)) * Z with Z standard normal."""
    if not rho > 0:
        raise MechanismError(f"rho must be > 0, got {rho}")
    arr = np.asarray(value, dtype=float)
    noise = rng.standard_normal(arr.shape)
    return _as_value(arr + (K / math.sqrt(2.0 * rho)) * noise)


def sample_laplace_gp(value: Value, K: float, eps: float, d: int, rng: np.random.Generator) -> Value:
    """value + K * Z where Z has density proportional to exp(-eps * ||z||) in d dimensions.

    ||Z|| ~ Gamma(shape=d, rate=eps) and Z/||Z|| is uniform on the unit sphere.
    """
    if not eps > 0:
        raise MechanismError(f"eps must be > 0, got {eps}")
    arr = np.asarray(value, dtype=float)
    if arr.size != d:
        raise MechanismError(f"Value has {arr.size} coordinates, expected {d}")
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    radius = rng.gamma(shape=d, scale=1.0 / eps)
    return _as_value(arr + K * radius * direction.reshape(arr.shape))


def run_mechanism(spec: MechanismSpec, point: Any, rng: np.random.Generator) -> Optional[Value]:
    """Apply spec's query to point and add the declared noise; the null mechanism yields None."""
    if spec.is_null:
        return None
    value = spec.query(point) if spec.query is not None else point
    if spec.noise is NoiseFamily.GAUSSIAN_CGP:
        return sample_gaussian_mech(value, spec.lipschitz, spec.privacy_param, rng)
    return sample_laplace_gp(value, spec.lipschitz, spec.privacy_param, spec.out_dim, rng)


def lambda_bound(d: int, beta: float) -> float:
    """High-probability bound on ||Z|| for Z ~ N(0, I_d): P(||Z|| > bound) <= beta.

    d = 2 uses sqrt(2 ln(1/beta)) without the factor 2 inside the log that d = 1 has.
    """
    if not 0 < beta < 1:
        raise MechanismError(f"beta must lie in (0, 1), got {beta}")
    if d < 1:
        raise MechanismError(f"d must be positive, got {d}")
    log_term = math.log(1.0 / beta)
    if d == 1:
        return math.sqrt(2.0 * math.log(2.0 / beta))
    if d == 2:
        return math.sqrt(2.0 * log_term)
    return math.sqrt(d + 2.0 * math.sqrt(d * log_term) + 2.0 * log_term)


@dataclass
class NoisyEstimateSeries:
    """Per-round noisy outputs and the privacy parameters they were produced with."""
    outputs: List[Value] = field(default_factory=list)
    params: List[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.outputs) != len(self.params):
            raise MechanismError("Outputs and params must have the same length")
        if any(not r > 0 for r in self.params):
            raise MechanismError("Round parameters must be positive")

    def __len__(self) -> int:
        return len(self.outputs)

    def append(self, output: Value, r: float) -> None:
        if not r > 0:
            raise MechanismError(f"Round parameter must be positive, got {r}")
        self.outputs.append(output)
        self.params.append(float(r))

    def cumulative(self, j: int) -> float:
        """rho_bar_j = sum of the first j round parameters."""
        return float(math.fsum(self.params[:j]))


def weighted_prefix_mean(series: NoisyEstimateSeries, j: Optional[int] = None) -> Value:
    """(1 / rho_bar_j) * sum_{s <= j} r_s * v(s); j defaults to the full series."""
    j = len(series) if j is None else j
    if not 1 <= j <= len(series):
        raise MechanismError(f"Round index {j} out of range 1..{len(series)}")
    weights = np.asarray(series.params[:j], dtype=float)
    stacked = np.asarray(series.outputs[:j], dtype=float)
    mean = np.tensordot(weights, stacked, axes=1) / weights.sum()
    return _as_value(np.asarray(mean))


@dataclass(frozen=True)
class ValidTriple:
    """A (privatizer, estimator, width) bundle for estimating a 1-Lipschitz phi.

    For any u, prefix length j and beta: P(|estimate(prefix) - phi(u)| <= width(params, beta)) >= 1 - beta.
    """
    name: str
    transform: Callable[[Any], Value]
    out_dim: int
    estimate: Callable[[NoisyEstimateSeries], float]
    width: Callable[[Sequence[float], float], float]

    def mechanism_spec(self, r: float) -> MechanismSpec:
        return MechanismSpec.gaussian(r, lipschitz=1.0, out_dim=self.out_dim, query=self.transform)

    def privatize(self, u: Any, r: float, rng: np.random.Generator) -> Value:
        return run_mechanism(self.mechanism_spec(r), u, rng)


def _gaussian_width(d: int) -> Callable[[Sequence[float], float], float]:
    def width(params: Sequence[float], beta: float) -> float:
        total = math.fsum(params)
        if not total > 0:
            raise MechanismError("Width needs a positive cumulative privacy parameter")
        return lambda_bound(d, beta) / math.sqrt(2.0 * total)
    return width


def make_triple_point(phi: Callable[[np.ndarray], float], d: int) -> ValidTriple:
    """Privatize the point itself; estimate phi at the weighted mean of the noisy points."""
    def transform(u):
        return np.asarray(u, dtype=float).reshape(d)

    def estimate(series: NoisyEstimateSeries) -> float:
        return float(phi(np.asarray(weighted_prefix_mean(series), dtype=float).reshape(d)))

    return ValidTriple("point", transform, d, estimate, _gaussian_width(d))


def make_triple_scalar(phi: Callable[[Any], float], metric=None) -> ValidTriple:
    """Privatize phi(u) directly; works for any metric phi is 1-Lipschitz under."""
    def transform(u):
        return float(phi(u))

    def estimate(series: NoisyEstimateSeries) -> float:
        return float(weighted_prefix_mean(series))

    name = "scalar" if metric is None else f"scalar[{metric.kind.value}]"
    return ValidTriple(name, transform, 1, estimate, _gaussian_width(1))
