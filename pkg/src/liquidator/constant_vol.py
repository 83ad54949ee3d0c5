"""Closed-form liquidation strategy under constant volatility.

With ``J(t, q) = h(t) q**2`` the HJB equation collapses to the scalar Riccati
equation

    h' = Delta_N - a (h + b / 2a)**2,    h(T-) = -K,

whose solution is hyperbolic when ``Delta_N >= 0`` and trigonometric
otherwise. Rates are linear feedback in the remaining inventory.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError, StepTooLarge, TanSingularity, ValidationError
from .market import (
    ConstantVol,
    ImpactAggregates,
    ModelParams,
    VenueSet,
    aggregate_impacts,
    check_admissibility,
)

DELTA_SERIES_THRESHOLD = 1e-14
DEFAULT_TRAJECTORY_POINTS = 2000


class Branch(enum.Enum):
    HYPERBOLIC = "hyperbolic"
    TRIGONOMETRIC = "trigonometric"


class RiccatiBlowUp(NumericalError):
    """The hyperbolic branch reaches a pole inside the horizon (K far too small)."""


def delta_n(agg: ImpactAggregates, lam: float, sigma: float) -> float:
    return lam * sigma * sigma + agg.discriminant / (4.0 * agg.a)


def terminal_penalty_threshold(agg: ImpactAggregates, delta: float) -> float:
    return agg.b / (2.0 * agg.a) + math.sqrt(abs(delta) / agg.a)


def check_condition_14(K: float, agg: ImpactAggregates, delta: float) -> bool:
    return bool(K > terminal_penalty_threshold(agg, delta))


@dataclass(frozen=True)
class ConstantVolSolution:
    params: ModelParams
    venues: VenueSet
    agg: ImpactAggregates
    delta_N: float
    varsigma: float | None
    branch: Branch
    admissible: bool

    @property
    def sigma(self) -> float:
        return self.params.vol.sigma

    @property
    def T(self) -> float:
        return self.params.T

    def restarted(self, q: float) -> "ConstantVolSolution":
        """Same market and clock, new inventory; the feedback law is unchanged."""
        return solve_constant_vol(replace(self.params, Q=q), self.venues)


def _equal_weights(venues: VenueSet) -> bool:
    betas = venues.betas
    return bool(np.all(np.abs(betas - betas[0]) <= 1e-12))


def solve_constant_vol(params: ModelParams, venues: VenueSet) -> ConstantVolSolution:
    """Closed-form solution; ``admissible`` records the sufficient condition for
    non-negative rates within budget: ``K`` above the threshold and equal weights.
    """
    if not isinstance(params.vol, ConstantVol):
        raise ValidationError("constant-vol solver needs a ConstantVol model")
    agg = aggregate_impacts(venues)
    delta = delta_n(agg, params.lam, params.vol.sigma)
    varsigma = None
    if delta >= 0:
        branch = Branch.HYPERBOLIC
        if delta > 0:
            k = (2.0 * params.K * agg.a - agg.b) / (2.0 * math.sqrt(agg.a * delta))
            varsigma = (1.0 - k) / (1.0 + k) if k != -1.0 else math.inf
    else:
        branch = Branch.TRIGONOMETRIC
    sol = ConstantVolSolution(
        params, venues, agg, delta, varsigma, branch,
        admissible=check_condition_14(params.K, agg, delta) and _equal_weights(venues),
    )
    _check_no_escape(sol)
    return sol


def riccati_flow(u0, delta, a, tau):
    """Exact flow of ``dU/dtau = a U**2 - delta`` from ``U(0) = u0``.

    This is the Riccati equation run backward in time (``tau`` is time to
    go). Works for either sign of ``delta`` and is smooth through
    ``delta = 0``. Arrays broadcast.
    """
    u0, delta, tau = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (u0, delta, tau)))
    k = _tanh_ratio(delta, a, tau)
    return (u0 - (delta / a) * k) / (1.0 - u0 * k)


def _tanh_ratio(delta, a, tau):
    # tanh(sqrt(a*delta)*tau) / sqrt(delta/a), continued to delta <= 0 via tan
    x2 = a * delta * tau * tau
    out = np.empty_like(x2)
    small = np.abs(x2) < 1e-8
    out[small] = a * tau[small] * (1.0 - x2[small] / 3.0 + 2.0 * x2[small] ** 2 / 15.0)
    pos = ~small & (delta > 0)
    r = np.sqrt(a * delta[pos])
    out[pos] = np.tanh(r * tau[pos]) / (r / a)
    neg = ~small & (delta < 0)
    r = np.sqrt(-a * delta[neg])
    out[neg] = np.tan(r * tau[neg]) / (r / a)
    return out


def _escape_argument(sol: ConstantVolSolution, t):
    a, b, K, d = sol.agg.a, sol.agg.b, sol.params.K, sol.delta_N
    return math.atan((b - 2.0 * a * K) / (2.0 * math.sqrt(-a * d))) + math.sqrt(-a * d) * (sol.T - t)


def _check_no_escape(sol: ConstantVolSolution) -> None:
    if abs(sol.delta_N) < DELTA_SERIES_THRESHOLD:
        # U = U0 / (1 - a U0 tau) has a pole only for U0 > 0
        u0 = -sol.params.K + sol.agg.b / (2 * sol.agg.a)
        if u0 > 0 and sol.agg.a * u0 * sol.T >= 1.0:
            raise RiccatiBlowUp("value function escapes before t=0")
        return
    if sol.branch is Branch.TRIGONOMETRIC:
        arg = _escape_argument(sol, 0.0)
        if not (-math.pi / 2 < arg < math.pi / 2):
            raise TanSingularity(f"tan argument {arg:.6g} leaves (-pi/2, pi/2) on [0, T]")
        return
    k = (2.0 * sol.params.K * sol.agg.a - sol.agg.b) / (2.0 * math.sqrt(sol.agg.a * sol.delta_N))
    if k < -1.0:
        E0 = math.exp(-2.0 * math.sqrt(sol.agg.a * sol.delta_N) * sol.T)
        if (1.0 - k) * E0 + (1.0 + k) <= 0.0:
            raise RiccatiBlowUp("hyperbolic solution has a pole inside [0, T]")


def h_closed_form(t, sol: ConstantVolSolution):
    """``h(t)`` from the explicit hyperbolic / trigonometric formulas."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > sol.T):
        raise ValidationError("t must lie in [0, T]")
    out = h_time_to_go(sol.T - t, sol.delta_N, sol.agg.a, sol.agg.b, sol.params.K)
    return float(out) if out.ndim == 0 else out


def h_time_to_go(tau, delta, a: float, b: float, K: float):
    """Vectorised closed form in time-to-go ``tau``; ``delta`` may be an array.

    Hyperbolic branch for ``delta >= 0``, tangent branch for ``delta < 0``,
    and a series through the ``delta -> 0`` limit. Exactly ``-K`` at ``tau=0``.
    """
    tau, delta = np.broadcast_arrays(np.asarray(tau, dtype=float), np.asarray(delta, dtype=float))
    shift = b / (2.0 * a)
    out = np.empty(tau.shape)
    tiny = np.abs(delta) < DELTA_SERIES_THRESHOLD
    if tiny.any():
        out[tiny] = riccati_flow(-K + shift, delta[tiny], a, tau[tiny]) - shift
    hyp = ~tiny & (delta > 0)
    if hyp.any():
        d = delta[hyp]
        r = np.sqrt(a * d)
        k = (2.0 * K * a - b) / (2.0 * r)
        E = np.exp(-2.0 * r * tau[hyp])
        # (varsigma*E - 1) / (varsigma*E + 1) with the (1 + k) denominator cleared
        out[hyp] = np.sqrt(d / a) * ((1.0 - k) * E - (1.0 + k)) / ((1.0 - k) * E + (1.0 + k)) - shift
    trig = ~tiny & (delta < 0)
    if trig.any():
        d = delta[trig]
        r = np.sqrt(-a * d)
        out[trig] = np.sqrt(-d / a) * np.tan(np.arctan((b - 2.0 * a * K) / (2.0 * r)) + r * tau[trig]) - shift
    out[tau == 0.0] = -K
    return out


def _h_rhs(h: float, d: float, a: float, shift: float) -> float:
    u = h + shift
    return d - a * u * u


def h_ode_oracle(sol: ConstantVolSolution, grid, substeps: int | None = None, tol: float = 1e-6):
    """Integrate the Riccati ODE backward from ``h(T) = -K`` with RK4.

    Each substep is taken once with step ``dt`` and twice with ``dt/2``; the
    difference serves as the local error estimate and the Richardson
    combination of the two is what gets propagated.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or not math.isclose(grid[-1], sol.T, rel_tol=0, abs_tol=1e-12):
        raise ValidationError("oracle grid must be 1-D and end at T")
    a, b, K, d = sol.agg.a, sol.agg.b, sol.params.K, sol.delta_N
    shift = b / (2.0 * a)
    if substeps is None:
        stiff = 2.0 * a * (abs(K - shift) + math.sqrt(abs(d) / a)) + 1.0
        spacing = float(np.max(np.abs(np.diff(grid))))
        substeps = max(1, math.ceil(spacing * stiff / 0.02))

    def rk4(h, dt):
        k1 = _h_rhs(h, d, a, shift)
        k2 = _h_rhs(h + 0.5 * dt * k1, d, a, shift)
        k3 = _h_rhs(h + 0.5 * dt * k2, d, a, shift)
        k4 = _h_rhs(h + dt * k3, d, a, shift)
        return h + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0

    out = np.empty_like(grid)
    h = -K
    out[-1] = h
    for i in range(grid.size - 1, 0, -1):
        dt = (grid[i - 1] - grid[i]) / substeps
        for _ in range(substeps):
            coarse = rk4(h, dt)
            fine = rk4(rk4(h, 0.5 * dt), 0.5 * dt)
            err = abs(fine - coarse) / 15.0
            if not err <= tol:
                raise StepTooLarge(f"local error {err:.3g} exceeds {tol:g} at t={grid[i]:.6g}")
            h = fine + (fine - coarse) / 15.0
        out[i - 1] = h
    return out


def rate_coefficients(t, sol: ConstantVolSolution) -> np.ndarray:
    """Per-venue feedback coefficients ``theta_n = coef_n * q``; shape ``t.shape + (N,)``."""
    h = np.asarray(h_closed_form(t, sol))
    pb = sol.venues.eta_per * sol.venues.betas
    return -(2.0 * h[..., None] + pb) / (2.0 * sol.venues.eta_tems)


def optimal_rates(t: float, q: float, sol: ConstantVolSolution) -> np.ndarray:
    if q < 0:
        raise ValidationError("inventory must be non-negative")
    return rate_coefficients(t, sol) * q


def value_function(t, q, sol: ConstantVolSolution):
    return h_closed_form(t, sol) * np.asarray(q) ** 2


@dataclass(frozen=True)
class TradingCurve:
    grid: np.ndarray
    inventory: np.ndarray
    rates: np.ndarray  # (len(grid), N)


def inventory_trajectory(sol: ConstantVolSolution, grid=None) -> TradingCurve:
    """Deterministic optimal inventory ``X_t = Q exp(int_0^t sum_n coef_n du)``.

    The exponent is accumulated with the trapezoidal rule on ``grid``
    (default: 2000 uniform intervals on ``[0, T]``, the last point standing
    for ``T-``).
    """
    if grid is None:
        grid = np.linspace(0.0, sol.T, DEFAULT_TRAJECTORY_POINTS + 1)
    grid = np.asarray(grid, dtype=float)
    coef = rate_coefficients(grid, sol)
    total = -coef.sum(axis=1)
    exponent = np.concatenate(([0.0], np.cumsum(0.5 * (total[1:] + total[:-1]) * np.diff(grid))))
    X = sol.params.Q * np.exp(exponent)
    return TradingCurve(grid, X, coef * X[:, None])


def inventory_exact(t, sol: ConstantVolSolution):
    """Closed-form inventory for ``Delta_N > 0``; used to cross-check the quadrature."""
    a, d = sol.agg.a, sol.delta_N
    if not d > 0:
        raise ValidationError("exact inventory implemented for Delta_N > 0 only")
    r = math.sqrt(a * d)
    k = (2.0 * sol.params.K * a - sol.agg.b) / (2.0 * r)
    t = np.asarray(t, dtype=float)

    def w(s):
        return np.exp(-r * s) * ((1.0 + k) + (1.0 - k) * np.exp(-2.0 * r * (sol.T - s)))

    return sol.params.Q * w(t) / w(0.0)


def equal_venue_rate_coefficient(t, N: int, params: ModelParams, eta_tem: float, eta_per: float):
    """Per-venue speed ``J(t, N)`` with ``theta_n = J(t, N) X_t`` for N identical venues."""
    sol = solve_constant_vol(params, VenueSet.identical(N, eta_tem, eta_per))
    return rate_coefficients(t, sol)[..., 0]


def admissibility_of_solution(sol: ConstantVolSolution, grid=None):
    curve = inventory_trajectory(sol, grid)
    return check_admissibility(curve.rates, sol.params.Q, sol.T, curve.grid)
