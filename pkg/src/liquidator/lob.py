"""Risk-neutral liquidation with market orders, optionally combined with limit orders.

Buy market orders from other participants arrive at Poisson rate
``lambda_M = A exp(-kappa Delta)`` and lift one share of the trader's resting
sell limit order at ``S + Delta``; fills push the bid up, while the absence
of a fill makes a compensating down-jump likely (adverse selection).

With ``J = f + g q + h q**2`` the quadratic coefficient is the same as in the
market-order-only problem; the linear coefficient ``g > 0`` slows the
market-order rate down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePenalty, ProbabilityOverflow, ValidationError
from .quadrature import running_integral, tail_integral, until_stable


@dataclass(frozen=True)
class LobParams:
    Q: float
    T: float
    K: float
    eta_per: float
    eta_tem: float
    sigma: float
    lambda_M: float
    Delta: float
    eta_u: float
    eta_d: float
    eta_I: float
    lam: float = 0.0  # only used for the reported quadratic-variation penalty

    def __post_init__(self):
        if not (self.Q > 0 and self.T > 0 and self.K > 0):
            raise ValidationError("Q, T and K must be positive")
        if not (self.eta_tem > 0 and self.eta_per >= 0):
            raise ValidationError("need eta_tem > 0 and eta_per >= 0")
        if self.lambda_M < 0 or self.Delta < 0 or self.sigma < 0:
            raise ValidationError("lambda_M, Delta and sigma must be non-negative")
        if self.lambda_M > 0 and not (self.eta_u > 0 and self.eta_d > 0):
            raise ValidationError("adverse selection needs eta_u, eta_d > 0")
        if self.eta_I < 0:
            raise ValidationError("eta_I must be non-negative")

    @property
    def excess_penalty(self) -> float:
        """``2K - eta_per``; positive iff the single-venue risk-neutral condition holds."""
        return 2.0 * self.K - self.eta_per

    def weight(self, t):
        """``w(t)`` with ``exp((1/2 eta_tem) int_t^r (2h + eta_per)) = w(r) / w(t)``."""
        return 1.0 / self.excess_penalty + (self.T - np.asarray(t, dtype=float)) / (2.0 * self.eta_tem)


def arrival_rate(A: float, kappa: float, Delta: float) -> float:
    if A < 0 or kappa < 0:
        raise ValidationError("A and kappa must be non-negative")
    return A * math.exp(-kappa * Delta)


def _require_feasible(p: LobParams) -> None:
    if not p.excess_penalty > 0:
        raise InfeasiblePenalty(f"need 2K > eta_per, got K={p.K}, eta_per={p.eta_per}")


def h_risk_neutral(t, p: LobParams):
    """Quadratic coefficient shared by both risk-neutral strategies; ``-K`` at ``T``."""
    _require_feasible(p)
    t = np.asarray(t, dtype=float)
    out = 1.0 / (2.0 / (p.eta_per - 2.0 * p.K) - (p.T - t) / p.eta_tem) - 0.5 * p.eta_per
    out = np.where(t == p.T, -p.K, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MoOnlySolution:
    params: LobParams
    X_T: float

    def J(self, t, q):
        return h_risk_neutral(t, self.params) * np.asarray(q) ** 2

    def theta(self, t, q):
        p = self.params
        return -(2.0 * h_risk_neutral(t, p) + p.eta_per) * np.asarray(q) / (2.0 * p.eta_tem)

    def inventory(self, t):
        """Deterministic inventory under ``theta``: a straight line from ``Q`` to ``X_T``."""
        p = self.params
        return p.Q * p.weight(t) / p.weight(0.0)


def mo_only_solution(p: LobParams) -> MoOnlySolution:
    _require_feasible(p)
    # X_T = Q w(T) / w(0), the endpoint of the trajectory generated by theta
    X_T = 2.0 * p.eta_tem * p.Q / (2.0 * p.eta_tem + p.T * p.excess_penalty)
    return MoOnlySolution(p, X_T)


@dataclass(frozen=True)
class LobCoefficients:
    params: LobParams
    grid: np.ndarray
    h: np.ndarray
    g: np.ndarray
    f: np.ndarray

    def at(self, t):
        """``(h, g, f)`` at ``t``; ``h`` is exact, ``g`` and ``f`` interpolated."""
        return (h_risk_neutral(t, self.params), np.interp(t, self.grid, self.g), np.interp(t, self.grid, self.f))


def _coefficients_on(p: LobParams, grid: np.ndarray):
    h = h_risk_neutral(grid, p)
    w = p.weight(grid)
    g = -2.0 * p.lambda_M * tail_integral(w * h, grid) / w
    f_rate = p.lambda_M * (p.eta_u + p.Delta + h - g) + g * g / (4.0 * p.eta_tem)
    f = tail_integral(f_rate, grid)
    g[-1] = 0.0
    f[-1] = 0.0
    return h, g, f


def lob_coefficients(p: LobParams, grid=None, n0: int = 1000, rtol: float = 1e-8) -> LobCoefficients:
    """``h`` in closed form; ``g`` and ``f`` by composite Simpson on a refined grid.

    The refinement of ``grid`` is doubled until ``g`` and ``f`` on the
    original nodes agree to ``rtol`` between passes.
    """
    _require_feasible(p)
    if grid is None:
        grid = np.linspace(0.0, p.T, n0 + 1)
    grid = np.asarray(grid, dtype=float)
    if not math.isclose(grid[-1], p.T, abs_tol=1e-12):
        raise ValidationError("coefficient grid must end at T")

    def evaluate(sub):
        fine = np.linspace(grid[0], grid[-1], (grid.size - 1) * sub + 1)
        _, g, f = _coefficients_on(p, fine)
        return np.stack([g[::sub], f[::sub]])

    (g, f), _ = until_stable(evaluate, 1, rtol=rtol, atol=1e-14)
    return LobCoefficients(p, grid, h_risk_neutral(grid, p), g, f)


def g_closed_form(t, p: LobParams):
    """Integration-by-parts form of ``g``; an independent check on the quadrature."""
    _require_feasible(p)
    tau = p.T - np.asarray(t, dtype=float)
    w_t = p.weight(t)
    c = 1.0 / p.excess_penalty
    int_w = c * tau + tau * tau / (4.0 * p.eta_tem)
    return -2.0 * p.eta_tem * p.lambda_M * (c / w_t - 1.0 - (p.eta_per / (2.0 * p.eta_tem)) * int_w / w_t)


def capped_g_horizon(p: LobParams) -> float:
    """Largest ``T`` for which ``g <= 2 eta_tem lambda_M`` on the whole horizon."""
    e = p.excess_penalty
    return 2.0 * p.eta_tem / e * (math.sqrt(1.0 + 2.0 * e / p.eta_per) - 1.0)


def theta_ml(t, q, coeffs: LobCoefficients):
    """Market-order rate when limit orders also work the position (may be negative)."""
    p = coeffs.params
    h, g, _ = coeffs.at(t)
    return -(g + (2.0 * h + p.eta_per) * np.asarray(q)) / (2.0 * p.eta_tem)


def theta_mo(t, q, p: LobParams):
    return -(2.0 * h_risk_neutral(t, p) + p.eta_per) * np.asarray(q) / (2.0 * p.eta_tem)


def _grid_values(coeffs: LobCoefficients):
    p = coeffs.params
    w = p.weight(coeffs.grid)
    drain = p.lambda_M - coeffs.g / (2.0 * p.eta_tem)
    return p, w, running_integral(drain / w, coeffs.grid)


def expected_inventory(t, p: LobParams, coeffs: LobCoefficients):
    """``E[X_t]`` under the combined strategy, ignoring the clamp at zero."""
    p, w, acc = _grid_values(coeffs)
    curve = w * (p.Q / w[0] - acc)
    return np.interp(t, coeffs.grid, curve)


def min_feasible_target(p: LobParams, coeffs: LobCoefficients) -> float:
    """Smallest ``Q`` keeping the expected market-order rate non-negative on the grid."""
    p, w, acc = _grid_values(coeffs)
    inner = w[0] * acc
    speed = 2.0 * coeffs.h + p.eta_per
    tail = -(w[0] / w) * coeffs.g / speed
    return float(max(0.0, np.max(inner + tail)))


def adverse_jump_prob(lambda_M: float, eta_u: float, eta_d: float, dt: float, mo_arrived: bool) -> float:
    """Probability of a compensating down-jump in one step of length ``dt``."""
    if mo_arrived:
        return 0.0
    prob = lambda_M * (eta_u / eta_d) * dt
    if prob > 1.0:
        raise ProbabilityOverflow(f"jump probability {prob} > 1; reduce dt")
    return prob


def estimate_lambda_from_fills(fill_count: int, T: float) -> float:
    if not T > 0:
        raise ValidationError("T must be positive")
    return fill_count / T
