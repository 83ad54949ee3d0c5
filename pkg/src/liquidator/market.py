"""Linear market-impact model across several trading venues.

The permanent impact of the trader's flow is shared between venues through
no-arbitrage weights ``beta`` (summing to one), while each venue charges its
own temporary concession ``eta_tem`` on the instantaneous rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import LengthMismatch, NonpositiveImpact, ValidationError, WeightsNotSimplex

SIMPLEX_TOL = 1e-12
NEGATIVE_RATE_TOL = 1e-9
BUDGET_TOL = 1e-9


@dataclass(frozen=True)
class Venue:
    beta: float
    eta_tem: float


@dataclass(frozen=True)
class VenueSet:
    """Validated venues plus the common permanent-impact coefficient."""

    venues: tuple[Venue, ...]
    eta_per: float

    def __len__(self) -> int:
        return len(self.venues)

    @property
    def betas(self) -> np.ndarray:
        return np.array([v.beta for v in self.venues])

    @property
    def eta_tems(self) -> np.ndarray:
        return np.array([v.eta_tem for v in self.venues])

    @classmethod
    def identical(cls, n: int, eta_tem: float, eta_per: float) -> "VenueSet":
        """``n`` identical venues, each with weight ``1/n``."""
        return validate_venues([(1.0 / n, eta_tem)] * n, eta_per)

    def is_symmetric(self) -> bool:
        first = self.venues[0]
        return all(v == first for v in self.venues[1:])


@dataclass(frozen=True)
class ImpactAggregates:
    a_n: np.ndarray
    b_n: np.ndarray
    c_n: np.ndarray
    a: float
    b: float
    c: float

    @property
    def discriminant(self) -> float:
        """``b**2 - 4ac``; never positive (Hoelder)."""
        return self.b * self.b - 4.0 * self.a * self.c


@dataclass(frozen=True)
class ConstantVol:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class SlowOU:
    """Volatility ``phi(nu)`` driven by a slowly mean-reverting OU factor ``nu``."""

    m: float
    epsilon: float
    xi: float
    rho: float
    phi: Callable[[np.ndarray], np.ndarray] = field(default=np.exp, compare=False)

    def __post_init__(self):
        # epsilon == 0 and xi == 0 are allowed as the frozen-factor limit used by tests
        if self.epsilon < 0:
            raise ValidationError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.xi < 0:
            raise ValidationError(f"xi must be non-negative, got {self.xi}")
        if not abs(self.rho) < 1:
            raise ValidationError(f"|rho| must be < 1, got {self.rho}")


VolatilityModel = Union[ConstantVol, SlowOU]


@dataclass(frozen=True)
class ModelParams:
    """Liquidation target ``Q`` over ``[0, T]`` with risk aversion ``lam``.

    ``K`` is the slope of the linear clearing cost ``C(q) = K q`` applied to
    whatever is left at ``T-``.
    """

    Q: float
    T: float
    lam: float
    K: float
    vol: VolatilityModel

    def __post_init__(self):
        if not self.Q > 0:
            raise ValidationError(f"Q must be positive, got {self.Q}")
        if not self.T > 0:
            raise ValidationError(f"T must be positive, got {self.T}")
        if not self.lam >= 0:
            raise ValidationError(f"lambda must be non-negative, got {self.lam}")
        if not self.K > 0:
            raise ValidationError(f"K must be positive, got {self.K}")


@dataclass(frozen=True)
class AdmissibilityReport:
    nonnegative: bool
    consistent: bool
    max_violation: float
    integral: float

    @property
    def admissible(self) -> bool:
        return self.nonnegative and self.consistent


def validate_venues(raw: Sequence[tuple[float, float]], eta_per: float) -> VenueSet:
    """Build a :class:`VenueSet` from ``(beta, eta_tem)`` pairs.

    A single venue must carry ``beta = 1``; with several venues every weight
    lies strictly inside ``(0, 1)``.
    """
    raw = list(raw)
    if not raw:
        raise ValidationError("at least one venue is required")
    if not (math.isfinite(eta_per) and eta_per >= 0):
        raise NonpositiveImpact(f"eta_per must be finite and >= 0, got {eta_per}")
    venues = []
    for i, (beta, eta_tem) in enumerate(raw):
        beta, eta_tem = float(beta), float(eta_tem)
        if not (math.isfinite(eta_tem) and eta_tem > 0):
            raise NonpositiveImpact(f"venue {i}: eta_tem must be > 0, got {eta_tem}")
        upper_ok = beta <= 1.0 if len(raw) == 1 else beta < 1.0
        if not (beta > 0.0 and upper_ok):
            raise WeightsNotSimplex(f"venue {i}: beta={beta} outside (0, 1]")
        venues.append(Venue(beta, eta_tem))
    total = math.fsum(v.beta for v in venues)
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise WeightsNotSimplex(f"weights sum to {total!r}, expected 1")
    return VenueSet(tuple(venues), float(eta_per))


def aggregate_impacts(v: VenueSet) -> ImpactAggregates:
    eta = v.eta_tems
    pb = v.eta_per * v.betas
    a_n = 1.0 / eta
    b_n = pb / eta
    c_n = pb * pb / (4.0 * eta)
    agg = ImpactAggregates(a_n, b_n, c_n, float(a_n.sum()), float(b_n.sum()), float(c_n.sum()))
    # rounding can leave a tiny positive value in the symmetric case
    assert agg.discriminant <= 1e-12 * max(agg.b * agg.b, 1e-300), agg.discriminant
    return agg


def permanent_drift(v: VenueSet, rates: Sequence[float]) -> float:
    """Magnitude of the downward drift ``eta_per * sum(beta_n * theta_n)``."""
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (len(v),):
        raise LengthMismatch(f"expected {len(v)} rates, got shape {rates.shape}")
    return float(v.eta_per * np.dot(v.betas, rates))


def execution_price(mid: float, eta_tem_n: float, rate: float) -> float:
    return mid - eta_tem_n * rate


def terminal_liquidation_value(q: float, s: float, K: float) -> float:
    """Cash from clearing ``q`` shares at ``T-`` under the linear penalty."""
    if q < 0:
        raise ValidationError(f"terminal inventory must be >= 0, got {q}")
    return q * (s - K * q)


def check_admissibility(rate_path, Q: float, T: float, grid=None) -> AdmissibilityReport:
    """Check sign and budget constraints on a sampled rate path.

    ``rate_path`` has one row per grid time and one column per venue. When
    ``grid`` is omitted the samples are taken to sit on ``linspace(0, T, n)``.
    The budget test tolerates the estimated error of the trapezoidal rule
    (odd sample counts only), so a smooth exact schedule is not rejected for
    quadrature noise.
    """
    rates = np.asarray(rate_path, dtype=float)
    if rates.ndim == 1:
        rates = rates[:, None]
    if grid is None:
        grid = np.linspace(0.0, T, rates.shape[0])
    grid = np.asarray(grid, dtype=float)
    if grid.shape[0] != rates.shape[0]:
        raise LengthMismatch("grid and rate path lengths differ")
    worst_negative = float(max(0.0, -rates.min())) if rates.size else 0.0
    total = rates.sum(axis=1)
    integral = float(np.trapezoid(total, grid)) if rates.shape[0] > 1 else 0.0
    # allow for the trapezoid's own error; the halved-grid difference is three
    # times the Richardson estimate, kept whole as a safety margin
    quad_err = 0.0
    if rates.shape[0] >= 5 and rates.shape[0] % 2 == 1:
        quad_err = abs(integral - float(np.trapezoid(total[::2], grid[::2])))
    overshoot = max(0.0, integral - Q)
    return AdmissibilityReport(
        nonnegative=worst_negative <= NEGATIVE_RATE_TOL,
        consistent=integral <= Q * (1.0 + BUDGET_TOL) + quad_err,
        max_violation=max(worst_negative, overshoot),
        integral=integral,
    )


def split_equally(total_rates, n: int) -> np.ndarray:
    """Spread a total rate schedule evenly over ``n`` venues; shape ``(len, n)``."""
    total = np.asarray(total_rates, dtype=float)
    return np.repeat(total[:, None] / n, n, axis=1)


def temporary_cost(rate_path, eta_tems, grid) -> float:
    """``int sum_n eta_n theta_n**2 dt``: cash lost to temporary impact (trapezoidal)."""
    rates = np.asarray(rate_path, dtype=float)
    if rates.ndim == 1:
        rates = rates[:, None]
    eta = np.asarray(eta_tems, dtype=float)
    if eta.shape != (rates.shape[1],):
        raise LengthMismatch(f"expected {rates.shape[1]} impact coefficients, got shape {eta.shape}")
    return float(np.trapezoid((rates * rates) @ eta, np.asarray(grid, dtype=float)))
