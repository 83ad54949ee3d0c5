"""Single-venue liquidation with slow mean-reverting stochastic volatility.

Volatility is ``phi(nu)`` with ``nu`` an Ornstein-Uhlenbeck factor reverting
at rate ``epsilon``. For small ``epsilon`` the quadratic coefficient of the
value function expands as ``h = h0 + epsilon * h1 + O(epsilon**2)``: ``h0``
is the constant-volatility solution frozen at ``sigma = phi(nu)`` and ``h1``
is a discounted time integral of the factor generator applied to ``h0``.

The full semilinear PDE for ``h(t, nu)`` is also solved on a grid; it serves
as ground truth for the size of the truncation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .constant_vol import h_time_to_go, riccati_flow
from .errors import NumericalError, UnstableScheme, ValidationError
from .market import ModelParams, SlowOU
from .quadrature import running_integral, simpson, tail_integral, until_stable

OUParams = SlowOU


@dataclass(frozen=True)
class StochVolProblem:
    """Model parameters for the single-venue stochastic-volatility setting."""

    params: ModelParams
    eta_tem: float
    eta_per: float

    def __post_init__(self):
        if not isinstance(self.params.vol, SlowOU):
            raise ValidationError("stochastic-vol problem needs a SlowOU volatility model")
        if not self.eta_tem > 0 or not self.eta_per >= 0:
            raise ValidationError("impact coefficients must satisfy eta_tem > 0, eta_per >= 0")

    @property
    def ou(self) -> SlowOU:
        return self.params.vol

    @property
    def a(self) -> float:
        return 1.0 / self.eta_tem

    @property
    def b(self) -> float:
        return self.eta_per / self.eta_tem

    def with_epsilon(self, epsilon: float) -> "StochVolProblem":
        ou = self.ou
        vol = SlowOU(ou.m, epsilon, ou.xi, ou.rho, ou.phi)
        p = self.params
        return StochVolProblem(ModelParams(p.Q, p.T, p.lam, p.K, vol), self.eta_tem, self.eta_per)


def ou_transition(nu0, t, ou: SlowOU):
    """Mean and variance of ``nu_t`` given ``nu_0``: the exact Gaussian law."""
    if np.any(np.asarray(t) < 0):
        raise ValidationError("t must be non-negative")
    decay = np.exp(-ou.epsilon * np.asarray(t, dtype=float))
    mean = ou.m + (np.asarray(nu0, dtype=float) - ou.m) * decay
    var = 0.5 * ou.xi**2 * -np.expm1(-2.0 * ou.epsilon * np.asarray(t, dtype=float))
    if np.ndim(mean) == 0:
        return float(mean), float(var)
    return mean, var


def _local_delta(nu, prob: StochVolProblem):
    sigma = np.asarray(prob.ou.phi(np.asarray(nu, dtype=float)), dtype=float)
    return prob.params.lam * sigma * sigma


def h0(t, nu, prob: StochVolProblem):
    """Zeroth-order term: the constant-vol ``h`` evaluated at ``sigma = phi(nu)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > prob.params.T):
        raise ValidationError("t must lie in [0, T]")
    out = h_time_to_go(prob.params.T - t, _local_delta(nu, prob), prob.a, prob.b, prob.params.K)
    return float(out) if out.ndim == 0 else out


def _nu_step(nu):
    return 1e-4 * np.maximum(1.0, np.abs(nu))


def generator_L0_h0(t, nu, prob: StochVolProblem, step=None):
    """``(m - nu) d/dnu h0 + xi**2/2 d2/dnu2 h0`` by central differences."""
    t, nu = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(nu, dtype=float))
    d = _nu_step(nu) if step is None else np.broadcast_to(np.asarray(step, dtype=float), nu.shape)
    up, mid, down = h0(t, nu + d, prob), h0(t, nu, prob), h0(t, nu - d, prob)
    first = (up - down) / (2.0 * d)
    second = (up - 2.0 * mid + down) / (d * d)
    ou = prob.ou
    out = (ou.m - nu) * first + 0.5 * ou.xi**2 * second
    return float(out) if np.ndim(out) == 0 else out


def _h1_on_nodes(t: float, nu, prob: StochVolProblem, n: int):
    r = np.linspace(t, prob.params.T, n + 1)[:, None]
    nu = np.atleast_1d(np.asarray(nu, dtype=float))[None, :]
    speed = 2.0 * h0(r, nu, prob) + prob.eta_per
    discount = np.exp(running_integral(speed, r[:, 0], axis=0) / prob.eta_tem)
    return simpson(discount * generator_L0_h0(r, nu, prob), x=r[:, 0], axis=0)


def h1(t, nu, prob: StochVolProblem, n0: int = 200, rtol: float = 1e-8):
    """First-order correction ``int_t^T D(r; t) L0 h0(r, nu) dr``.

    ``D`` and the outer integral share one composite-Simpson grid, which is
    doubled from ``n0`` subintervals until two passes agree to ``rtol``
    (with an absolute floor of ``1e-10``: the finite-difference generator
    carries noise around ``1e-12``).
    """
    T = prob.params.T
    if not 0.0 <= t <= T:
        raise ValidationError("t must lie in [0, T]")
    scalar = np.ndim(nu) == 0
    if t == T:
        return 0.0 if scalar else np.zeros(np.shape(nu))
    val, _ = until_stable(lambda n: _h1_on_nodes(t, nu, prob, n), n0, rtol=rtol, atol=1e-10)
    return float(val[0]) if scalar else val


def h1_table(t_grid, nu_grid, prob: StochVolProblem, rtol: float = 1e-8):
    """``h1`` on a whole uniform time grid (ending at ``T``) for each ``nu`` node.

    Uses ``h1(t) = exp(-G(t)) int_t^T exp(G(r)) L0 h0(r) dr`` with ``G`` the
    integral of ``(2 h0 + eta_per) / eta_tem`` anchored at ``T`` (so ``G >= 0``
    and nothing underflows near the horizon); every time node is served by
    one refined pass. Rows follow ``t_grid``, columns ``nu_grid``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    nu = np.asarray(nu_grid, dtype=float)[None, :]

    def evaluate(sub):
        fine = np.linspace(t_grid[0], t_grid[-1], (t_grid.size - 1) * sub + 1)[:, None]
        G = -tail_integral(2.0 * h0(fine, nu, prob) + prob.eta_per, fine[:, 0], axis=0) / prob.eta_tem
        if G.max() > 700.0:
            raise NumericalError("discount factor overflows; shorten the horizon or the nu range")
        tail = tail_integral(np.exp(G) * generator_L0_h0(fine, nu, prob), fine[:, 0], axis=0)
        return (np.exp(-G) * tail)[::sub]

    table, _ = until_stable(evaluate, 1, rtol=rtol, atol=1e-14)
    return table


def theta_moving_constant(t, nu, q, prob: StochVolProblem):
    """Constant-vol feedback re-evaluated at the current factor value."""
    return -(2.0 * h0(t, nu, prob) + prob.eta_per) * q / (2.0 * prob.eta_tem)


def theta_corrected(t, nu, q, prob: StochVolProblem):
    base = theta_moving_constant(t, nu, q, prob)
    eps = prob.ou.epsilon
    if eps == 0.0:
        return base
    return base - eps * h1(t, nu, prob) * q / prob.eta_tem


# ---------------------------------------------------------------- PDE oracle


@dataclass(frozen=True)
class PdeGridSolution:
    times: np.ndarray
    nu: np.ndarray
    h: np.ndarray  # (len(times), len(nu))
    scheme: dict = field(default_factory=dict)

    def at(self, t: float, nu: float) -> float:
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, abs_tol=1e-12):
            raise ValidationError(f"time {t} was not stored")
        return float(np.interp(nu, self.nu, self.h[i]))


def default_nu_grid(prob: StochVolProblem, nu0: float, dnu: float, width: float | None = None):
    """Uniform grid through ``nu0`` spanning five stationary standard deviations each side."""
    if width is None:
        width = 5.0 * prob.ou.xi / math.sqrt(2.0)
    half = max(2, math.ceil(width / dnu))
    return nu0 + dnu * np.arange(-half, half + 1)


def _interior_operator(nu, ou: SlowOU):
    """Tridiagonal ``L0`` on interior nodes, boundaries eliminated by linear extrapolation."""
    dnu = nu[1] - nu[0]
    inner = nu[1:-1]
    drift = ou.m - inner
    diff = 0.5 * ou.xi**2 / (dnu * dnu)
    lower = diff - drift / (2.0 * dnu)
    main = np.full(inner.size, -2.0 * diff)
    upper = diff + drift / (2.0 * dnu)
    # node 1: h_0 = 2 h_1 - h_2 kills the second difference, first difference becomes forward
    main[0], upper[0] = -drift[0] / dnu, drift[0] / dnu
    main[-1], lower[-1] = drift[-1] / dnu, -drift[-1] / dnu
    return lower, main, upper


def solve_h_pde(prob: StochVolProblem, t_steps: int, nu_grid, store_times=None) -> PdeGridSolution:
    """Backward solve of ``(d_t + eps L0) h - lam phi^2 + (2h + eta_per)^2 / 4 eta_tem = 0``.

    Strang splitting per step: half a step of the pointwise quadratic source
    (integrated exactly, it is a constant-coefficient Riccati equation at
    each node), one Crank-Nicolson step of the linear generator, then the
    second source half step. The boundaries carry a zero second derivative.
    """
    ou, p = prob.ou, prob.params
    nu = np.asarray(nu_grid, dtype=float)
    if nu.size < 5 or not np.allclose(np.diff(nu), nu[1] - nu[0], rtol=1e-9, atol=0):
        raise ValidationError("nu grid must be uniform with at least 5 nodes")
    dnu = nu[1] - nu[0]
    dt = p.T / t_steps
    if ou.xi > 0:
        peclet = float(np.max(np.abs(ou.m - nu))) * dnu / (0.5 * ou.xi**2)
        if peclet > 2.0:
            raise UnstableScheme(f"cell Peclet number {peclet:.3g} > 2; refine the nu grid")
    delta = _local_delta(nu, prob)
    a, shift = prob.a, 0.5 * prob.eta_per
    sigma_max = float(np.sqrt(np.max(delta) / p.lam)) if p.lam > 0 else 0.0
    bound = 10.0 * (p.K + prob.eta_per + math.sqrt(prob.eta_tem * p.lam) * sigma_max)

    lower, main, upper = _interior_operator(nu, ou)
    c = 0.5 * dt * ou.epsilon
    ab = np.zeros((3, nu.size - 2))
    ab[0, 1:] = -c * upper[:-1]
    ab[1] = 1.0 - c * main
    ab[2, :-1] = -c * lower[1:]

    store = {0.0, p.T} if store_times is None else set(float(s) for s in store_times)
    stored: dict[float, np.ndarray] = {}
    h = np.full(nu.size, -p.K)
    if p.T in store:
        stored[p.T] = h.copy()
    for k in range(t_steps, 0, -1):
        u = riccati_flow(h + shift, delta, a, 0.5 * dt)
        if ou.epsilon > 0:
            inner = u[1:-1]
            rhs = inner + c * (main * inner)
            rhs[1:] += c * lower[1:] * inner[:-1]
            rhs[:-1] += c * upper[:-1] * inner[1:]
            inner = solve_banded((1, 1), ab, rhs)
            u = np.concatenate(([2 * inner[0] - inner[1]], inner, [2 * inner[-1] - inner[-2]]))
        h = riccati_flow(u, delta, a, 0.5 * dt) - shift
        if not np.all(np.isfinite(h)) or np.max(np.abs(h)) > bound:
            raise UnstableScheme(f"|h| left the bound {bound:.3g} at step {k}")
        t = (k - 1) * dt
        for s in store:
            if math.isclose(s, t, abs_tol=0.5 * dt) and s not in stored:
                stored[s] = h.copy()
    times = np.array(sorted(stored))
    return PdeGridSolution(
        times, nu, np.array([stored[s] for s in times]),
        scheme={"t_steps": t_steps, "dnu": dnu, "splitting": "strang", "linear": "crank-nicolson",
                "boundary": "zero second derivative"},
    )


@dataclass(frozen=True)
class ResidualStudy:
    epsilons: np.ndarray
    residuals: np.ndarray  # |theta* - theta~| at the probe state
    slope: float


def pde_value(prob: StochVolProblem, t: float, nu0: float, dnu: float, t_steps: int, richardson: bool = True):
    """PDE value ``h(t, nu0)``, optionally Richardson-extrapolated in the grid spacing."""
    coarse = solve_h_pde(prob, t_steps, default_nu_grid(prob, nu0, dnu), store_times=[t]).at(t, nu0)
    if not richardson:
        return coarse
    fine = solve_h_pde(prob, t_steps, default_nu_grid(prob, nu0, dnu / 2), store_times=[t]).at(t, nu0)
    return (4.0 * fine - coarse) / 3.0


def residual_order_study(prob: StochVolProblem, epsilons, t: float = 0.0, nu: float = 0.5, q: float = 100.0,
                         dnu: float = 0.01, t_steps: int = 400, richardson: bool = True) -> ResidualStudy:
    """Fit the order of ``|theta* - theta~|`` in ``epsilon`` with the PDE as truth."""
    eps = np.asarray(sorted(epsilons), dtype=float)
    residuals = []
    for e in eps:
        pe = prob.with_epsilon(float(e))
        exact = pde_value(pe, t, nu, dnu, t_steps, richardson)
        approx = h0(t, nu, pe) + (e * h1(t, nu, pe) if e > 0 else 0.0)
        residuals.append(abs(exact - approx) * q / prob.eta_tem)
    residuals = np.array(residuals)
    pos = (eps > 0) & (residuals > 0)
    if pos.sum() < 2:
        slope = float("nan")
    else:
        slope = float(np.polyfit(np.log(eps[pos]), np.log(residuals[pos]), 1)[0])
    return ResidualStudy(eps, residuals, slope)
