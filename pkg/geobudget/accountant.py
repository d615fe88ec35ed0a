"""
Worst-case privacy accounting and privacy filters.

E_Lambda / R_Lambda are computed analytically from declared MechanismSpecs.
Filters decide, before a mechanism runs, whether a user's ledger can absorb
its cost: pure-GP and CGP filters cap the plain sum of costs, the approx-GP
filter caps the tightest (eps, delta, Lambda)-GP conversion of that sum.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from geobudget.mechanisms import MechanismSpec, NoiseFamily

logger = logging.getLogger(__name__)

S_MIN_OFFSET = 1e-6
S_MAX = 1e6


class AccountingError(ValueError):
    """Raised for invalid accounting inputs."""


class Flag(str, Enum):
    CONT = "CONT"
    HALT = "HALT"


class FilterKind(str, Enum):
    PURE_GP = "pure_gp"
    CGP = "cgp"
    APPROX_GP = "approx_gp"


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind
    budget: float
    delta: Optional[float] = None
    lam: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "kind", FilterKind(self.kind))
        if not self.budget >= 0:
            raise AccountingError(f"Budget must be >= 0, got {self.budget}")
        if not self.lam > 0:
            raise AccountingError(f"Lambda must be positive or inf, got {self.lam}")
        if self.kind is FilterKind.APPROX_GP:
            if self.delta is None or not 0 < self.delta < 1:
                raise AccountingError(f"approx_gp filters need delta in (0, 1), got {self.delta}")

    def implied_approx_gp(self, delta: float) -> float:
        """eps of the (eps, delta, Lambda)-GP guarantee a CGP filter with this budget gives."""
        return filter_implied_gp(self, delta)


@dataclass
class FilterState:
    """A user's ledger of accepted per-step costs r_j."""
    consumed: List[float] = field(default_factory=list)
    halted: bool = False

    @property
    def total(self) -> float:
        return math.fsum(self.consumed)

    def record(self, cost: float) -> None:
        if self.halted:
            raise AccountingError("A halted filter never records further costs")
        self.consumed.append(float(cost))

    def halt(self) -> None:
        self.halted = True


def worst_case_cost(spec: MechanismSpec, lam: float = math.inf) -> float:
    """E_Lambda for laplace_gp, R_Lambda for gaussian_cgp, 0 for the null mechanism.

    Both suprema are attained uniformly over dist <= Lambda, so lam does not change the value.
    """
    if spec.is_null:
        return 0.0
    return float(spec.privacy_param)


def gp_to_cgp(eps: float) -> float:
    """An eps-GP mechanism is also (eps^2 / 2)-CGP."""
    if eps < 0:
        raise AccountingError(f"eps must be >= 0, got {eps}")
    return eps * eps / 2.0


def filter_cost(filter_spec: FilterSpec, mech: MechanismSpec, lam: Optional[float] = None) -> float:
    """Cost charged to a filter of the given kind for running mech."""
    lam = filter_spec.lam if lam is None else lam
    cost = worst_case_cost(mech, lam)
    if mech.is_null:
        return cost
    if filter_spec.kind is FilterKind.PURE_GP:
        if mech.noise is NoiseFamily.GAUSSIAN_CGP:
            raise AccountingError("Gaussian mechanisms carry no pure GP guarantee")
        return cost
    if mech.noise is NoiseFamily.LAPLACE_GP:
        return gp_to_cgp(cost)
    return cost


def g_delta(s: float, delta: float) -> float:
    """(s / (s - 1)) * 2 * sqrt(ln(2 / ((s + 1) * delta)))."""
    if not s > 1:
        raise AccountingError(f"s must be > 1, got {s}")
    if not 0 < delta < 1:
        raise AccountingError(f"delta must be in (0, 1), got {delta}")
    log_term = math.log(2.0 / ((s + 1.0) * delta))
    if log_term < 0:
        raise AccountingError(f"ln(2 / ((s + 1) delta)) is negative for s={s}, delta={delta}")
    return (s / (s - 1.0)) * 2.0 * math.sqrt(log_term)


def _s_upper(delta: float) -> float:
    # g_delta needs (s + 1) * delta <= 2
    return min(S_MAX, 2.0 / delta - 1.0)


def _approx_gp_branches(s: float, total: float, delta: float, lam: float) -> Tuple[float, float]:
    return g_delta(s, delta) * math.sqrt(total), s * lam * total


def minimize_approx_gp(total: float, delta: float, lam: float, rtol: float = 1e-9,
                       grid_points: int = 2000, grid_rtol: float = 1e-3) -> Tuple[float, float]:
    """min over s > 1 of max(g_delta(s) sqrt(T), s Lambda T); returns (value, s*).

    The two branches cross where one decreases and the other increases; the crossing is
    found by root bracketing and certified against a log-spaced grid over s.
    """
    if total < 0:
        raise AccountingError(f"Total cost must be >= 0, got {total}")
    if total == 0:
        return 0.0, math.nan
    if math.isinf(lam):
        return math.inf, math.nan
    s_lo = 1.0 + S_MIN_OFFSET * 1e-3
    s_hi = _s_upper(delta)
    if not s_hi > s_lo:
        raise AccountingError(f"delta={delta} leaves no admissible s > 1")

    def gap(s: float) -> float:
        decreasing, increasing = _approx_gp_branches(s, total, delta, lam)
        return decreasing - increasing

    if gap(s_hi) >= 0:
        s_star = s_hi
    else:
        s_star = brentq(gap, s_lo, s_hi, rtol=rtol, xtol=1e-15)
    value = max(_approx_gp_branches(s_star, total, delta, lam))

    grid = 1.0 + np.geomspace(S_MIN_OFFSET, s_hi - 1.0, grid_points)
    log_terms = np.log(2.0 / ((grid + 1.0) * delta))
    ok = log_terms >= 0
    decreasing = (grid[ok] / (grid[ok] - 1.0)) * 2.0 * np.sqrt(log_terms[ok]) * math.sqrt(total)
    increasing = grid[ok] * lam * total
    envelope = np.maximum(decreasing, increasing)
    best = int(np.argmin(envelope))
    if envelope[best] < value * (1.0 - grid_rtol):
        logger.warning(f"Grid search beat the branch crossing for T={total}: {envelope[best]} < {value}")
        return float(envelope[best]), float(grid[ok][best])
    return float(value), float(s_star)


def cgp_to_approx_gp(rho: float, delta: float, lam: float = math.inf, optimize: bool = False) -> float:
    """eps such that (rho, Lambda)-CGP implies (eps, delta, Lambda)-GP.

    By default uses the particular s = 1 + 2 sqrt(rho ln(1/delta)) / (rho Lambda), giving
    rho Lambda + 2 sqrt(rho ln(1/delta)); optimize=True minimizes over s numerically instead.
    """
    if not 0 < delta < 1:
        raise AccountingError(f"delta must be in (0, 1), got {delta}")
    if rho < 0:
        raise AccountingError(f"rho must be >= 0, got {rho}")
    if rho == 0:
        return 0.0
    if math.isinf(lam):
        return math.inf
    if optimize:
        return minimize_approx_gp(rho, delta, lam)[0]
    return rho * lam + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


def filter_check(spec: FilterSpec, state: FilterState, candidate: float, rtol: float = 1e-9,
                 grid_points: int = 2000, grid_rtol: float = 1e-3) -> Flag:
    """CONT if the ledger plus the candidate cost stays within the filter's budget."""
    if candidate < 0:
        raise AccountingError(f"Candidate cost must be >= 0, got {candidate}")
    total = math.fsum([*state.consumed, candidate])
    if spec.kind in (FilterKind.PURE_GP, FilterKind.CGP):
        return Flag.CONT if total <= spec.budget else Flag.HALT
    value, _ = minimize_approx_gp(total, spec.delta, spec.lam, rtol, grid_points, grid_rtol)
    return Flag.CONT if value <= spec.budget else Flag.HALT


def gaussian_renyi_divergence(alpha: float, mu1: float, mu2: float, sigma: float) -> float:
    """D_alpha(N(mu1, sigma^2) || N(mu2, sigma^2)) = alpha (mu1 - mu2)^2 / (2 sigma^2)."""
    if not alpha > 1:
        raise AccountingError(f"alpha must be > 1, got {alpha}")
    return alpha * (mu1 - mu2) ** 2 / (2.0 * sigma ** 2)


def filter_implied_gp(spec: FilterSpec, delta: float) -> float:
    """A CGP filter with budget B makes the whole interaction (B Lambda + 2 sqrt(B ln(1/delta)), delta, Lambda)-GP."""
    if spec.kind is not FilterKind.CGP:
        raise AccountingError("Only CGP filters convert to approximate GP")
    return cgp_to_approx_gp(spec.budget, delta, spec.lam)
