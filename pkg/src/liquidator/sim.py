"""Monte Carlo engine for the three liquidation settings.

Every path owns a random stream derived from ``(seed, path_index)``. All
random numbers a path needs are drawn up front, and the strategy is turned
into per-step feedback coefficients, so the stepping kernel itself is
deterministic. Paths run in chunks on a thread pool and are written back by
index, so results do not depend on scheduling or on the worker count.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as _stats

from . import kernels
from .constant_vol import rate_coefficients, solve_constant_vol
from .errors import DegenerateSample, InventoryUnderflow, ValidationError
from .lob import LobParams, adverse_jump_prob, lob_coefficients
from .market import ConstantVol, ModelParams, SlowOU, VenueSet, validate_venues
from .stoch_vol import StochVolProblem, h0, h1_table

CHUNK = 64
LOB_MAX_EVENT_PROB = 0.1
STEP_TOL = 1e-9


class Strategy(str, enum.Enum):
    CONSTANT_VOL = "constant_vol"
    MOVING_CONSTANT_VOL = "moving_constant_vol"
    VOL_ADJUSTED = "vol_adjusted"
    MO_ONLY = "mo_only"
    MARKET_AND_LIMIT = "market_and_limit"


STOCH_STRATEGIES = (Strategy.CONSTANT_VOL, Strategy.MOVING_CONSTANT_VOL, Strategy.VOL_ADJUSTED)
LOB_STRATEGIES = (Strategy.MO_ONLY, Strategy.MARKET_AND_LIMIT)


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo experiment.

    ``model`` is a :class:`ModelParams` (constant or stochastic volatility,
    traded on ``venues``) or a :class:`LobParams`. ``dt=None`` picks
    ``1e-3 T`` (``1e-4 T`` for the limit-order setting). ``forced_rate``
    replaces the strategy by a constant total rate split equally across venues.
    """

    model: ModelParams | LobParams
    strategy: Strategy = Strategy.CONSTANT_VOL
    venues: VenueSet | None = None
    dt: float | None = None
    n_paths: int = 1000
    seed: int = 0
    S0: float = 15.0
    nu0: float = 0.5
    shocks: str = "binomial"
    forced_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.dt is None:
            object.__setattr__(self, "dt", self.model.T * (1e-4 if self.setting == "lob" else 1e-3))
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        ratio = self.model.T / self.dt
        if abs(ratio - round(ratio)) > STEP_TOL * max(1.0, ratio):
            raise ValidationError(f"T/dt = {ratio!r} is not an integer")
        if int(self.n_paths) < 1:
            raise ValidationError("n_paths must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.shocks not in ("binomial", "gaussian"):
            raise ValidationError(f"shocks must be 'binomial' or 'gaussian', got {self.shocks!r}")
        if self.setting == "lob":
            if self.strategy not in LOB_STRATEGIES:
                raise ValidationError(f"strategy {self.strategy.value} does not apply to the limit-order setting")
            if self.model.lambda_M * self.dt > LOB_MAX_EVENT_PROB:
                raise ValidationError("lambda_M * dt must not exceed 0.1")
            if self.model.Q != int(self.model.Q):
                raise ValidationError("limit orders fill one share at a time; Q must be an integer")
        else:
            if self.venues is None:
                raise ValidationError("venues are required outside the limit-order setting")
            if self.setting == "stoch_vol":
                if self.strategy not in STOCH_STRATEGIES:
                    raise ValidationError(f"strategy {self.strategy.value} does not apply to stochastic vol")
                if len(self.venues) != 1:
                    raise ValidationError("the stochastic-vol setting trades on a single venue")
            elif self.strategy is not Strategy.CONSTANT_VOL:
                raise ValidationError(f"strategy {self.strategy.value} does not apply to constant vol")

    @property
    def setting(self) -> str:
        if isinstance(self.model, LobParams):
            return "lob"
        return "stoch_vol" if isinstance(self.model.vol, SlowOU) else "constant_vol"

    @property
    def n_steps(self) -> int:
        return int(round(self.model.T / self.dt))

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.model.T, self.n_steps + 1)

    @property
    def lam(self) -> float:
        return self.model.lam


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    inventory: np.ndarray
    price: np.ndarray  # affected price at the start of each step (last entry: T-)
    rates: np.ndarray | None = None  # (n_steps, N) market-order rates actually used


@dataclass(frozen=True)
class PathResult:
    gain_loss: float
    quadratic_variation: float
    final_inventory: float
    final_price: float
    fills: int
    lam: float
    trajectory: Trajectory | None = None

    @property
    def qv_penalty(self) -> float:
        return self.lam * self.quadratic_variation

    @property
    def objective(self) -> float:
        return self.gain_loss - self.qv_penalty


@dataclass(frozen=True)
class EnsembleStats:
    n: int
    mean: float
    std: float
    skewness: float
    kurtosis: float
    mean_objective: float
    mean_final_inventory: float
    std_final_inventory: float

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.n)


@dataclass(frozen=True)
class EnsembleResult:
    config: SimConfig
    stats: EnsembleStats
    records: np.ndarray = field(repr=False)  # (n_paths, 5), columns kernels.OUT_COLUMNS

    def column(self, name: str) -> np.ndarray:
        return self.records[:, kernels.OUT_COLUMNS.index(name)]

    @property
    def gain_loss(self) -> np.ndarray:
        return self.column("gain_loss")

    @property
    def objective(self) -> np.ndarray:
        return self.gain_loss - self.config.lam * self.column("quadratic_variation")

    def paths(self) -> list[PathResult]:
        return [_path_result(row, self.config.lam) for row in self.records]


# ------------------------------------------------------------------ random streams


def path_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for path ``index`` of an experiment seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def _shock(rng: np.random.Generator, n: int, kind: str) -> np.ndarray:
    if kind == "gaussian":
        return rng.standard_normal(n)
    return rng.integers(0, 2, size=n) * 2.0 - 1.0


def _draw(cfg: SimConfig, rng: np.random.Generator) -> dict:
    n = cfg.n_steps
    if cfg.setting == "lob":
        u_arrival = rng.random(n)
        u_adverse = rng.random(n)
        return {"u_arrival": u_arrival, "u_adverse": u_adverse, "shocks": _shock(rng, n, cfg.shocks)}
    price = _shock(rng, n, cfg.shocks)
    if cfg.setting == "stoch_vol":
        return {"shocks": price, "vol_shocks": _shock(rng, n, cfg.shocks)}
    return {"shocks": price}


def _stack(draws: list[dict]) -> dict:
    return {key: np.ascontiguousarray(np.stack([d[key] for d in draws])) for key in draws[0]}


# ------------------------------------------------------------------ strategy set-up


def _factor_paths(cfg: SimConfig, price_shocks, vol_shocks) -> np.ndarray:
    """Factor values at the start of every step, ``(P, n_steps + 1)``."""
    ou = cfg.model.vol
    dt = cfg.dt
    P, n = price_shocks.shape
    nu = np.empty((P, n + 1))
    nu[:, 0] = cfg.nu0
    diffusion = ou.xi * math.sqrt(ou.epsilon) * math.sqrt(dt)
    mix = math.sqrt(1.0 - ou.rho * ou.rho)
    for k in range(n):
        cur = nu[:, k]
        nu[:, k + 1] = cur + ou.epsilon * (ou.m - cur) * dt + diffusion * (ou.rho * price_shocks[:, k] + mix * vol_shocks[:, k])
    return nu


def stoch_problem(cfg: SimConfig) -> StochVolProblem:
    v = cfg.venues.venues[0]
    return StochVolProblem(cfg.model, v.eta_tem, cfg.venues.eta_per)


def frozen_constant_vol(cfg: SimConfig):
    """Constant-vol solution with ``sigma = phi(nu0)``, ignoring the factor dynamics."""
    p = cfg.model
    sigma = float(p.vol.phi(np.asarray(cfg.nu0, dtype=float)))
    return solve_constant_vol(ModelParams(p.Q, p.T, p.lam, p.K, ConstantVol(sigma)), cfg.venues)


def h1_nu_grid(cfg: SimConfig, dnu: float = 0.02) -> np.ndarray:
    """Factor nodes for tabulating ``h1``, wide enough for eight standard deviations
    of the factor over the horizon (paths beyond are clamped to the end nodes).
    """
    ou = cfg.model.vol
    half = abs(ou.m - cfg.nu0) + 8.0 * ou.xi * math.sqrt(max(ou.epsilon, 1e-12) * cfg.model.T) + 0.25
    n = int(math.ceil(half / dnu))
    return cfg.nu0 + dnu * np.arange(-n, n + 1)


class _Prepared:
    """Strategy data shared by all chunks of an experiment (read-only)."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.grid = cfg.grid
        t = self.grid[:-1]
        n = cfg.n_steps
        if cfg.setting == "lob":
            p = cfg.model
            self.lob = lob_coefficients(p, self.grid)
            self.coef = np.ascontiguousarray(-(2.0 * self.lob.h[:-1] + p.eta_per) / (2.0 * p.eta_tem))
            if cfg.strategy is Strategy.MARKET_AND_LIMIT:
                self.offset = np.ascontiguousarray(-self.lob.g[:-1] / (2.0 * p.eta_tem))
            else:
                self.offset = np.zeros(n)
            self.adverse_prob = adverse_jump_prob(p.lambda_M, p.eta_u, p.eta_d, cfg.dt, False) if p.lambda_M > 0 else 0.0
            return
        v = cfg.venues
        self.eta_tem = np.ascontiguousarray(v.eta_tems)
        self.eta_per_beta = np.ascontiguousarray(v.eta_per * v.betas)
        N = len(v)
        self.offset = np.zeros((1, n, N))
        self.coef = None
        self.h1 = None
        if cfg.forced_rate is not None:
            self.coef = np.zeros((1, n, N))
            self.offset = np.full((1, n, N), cfg.forced_rate / N)
        elif cfg.setting == "constant_vol":
            self.coef = np.ascontiguousarray(rate_coefficients(t, solve_constant_vol(cfg.model, v))[None])
        elif cfg.strategy is Strategy.CONSTANT_VOL:
            self.coef = np.ascontiguousarray(rate_coefficients(t, frozen_constant_vol(cfg))[None])
        else:
            self.problem = stoch_problem(cfg)
            if cfg.strategy is Strategy.VOL_ADJUSTED and self.problem.ou.epsilon > 0:
                self.nu_grid = h1_nu_grid(cfg)
                self.h1 = h1_table(self.grid, self.nu_grid, self.problem)
        if cfg.setting == "constant_vol":
            self.sigma = np.full((1, n), cfg.model.vol.sigma)

    def path_inputs(self, draws: dict):
        """Coefficient and volatility arrays for one chunk of stochastic-vol paths."""
        cfg = self.cfg
        if cfg.setting == "constant_vol":
            return self.coef, self.sigma
        nu = _factor_paths(cfg, draws["shocks"], draws["vol_shocks"])
        sigma = np.ascontiguousarray(cfg.model.vol.phi(nu[:, :-1]), dtype=float)
        if self.coef is not None:
            return self.coef, sigma
        prob = self.problem
        t = self.grid[None, :-1]
        h = h0(np.broadcast_to(t, nu[:, :-1].shape), nu[:, :-1], prob)
        if self.h1 is not None:
            corr = np.empty_like(h)
            for k in range(cfg.n_steps):
                corr[:, k] = np.interp(nu[:, k], self.nu_grid, self.h1[k])
            h = h + prob.ou.epsilon * corr
        coef = -(2.0 * h + prob.eta_per) / (2.0 * prob.eta_tem)
        return np.ascontiguousarray(coef[:, :, None]), sigma


def _empty_record():
    return np.zeros((0, 0))


def _run_chunk(prep: _Prepared, draws: dict, out: np.ndarray, backend, x_rec=None, s_rec=None):
    cfg = prep.cfg
    x_rec = _empty_record() if x_rec is None else x_rec
    s_rec = _empty_record() if s_rec is None else s_rec
    sqrt_dt = math.sqrt(cfg.dt)
    if cfg.setting == "lob":
        p = cfg.model
        backend.lob_paths(
            prep.coef, prep.offset, draws["u_arrival"], draws["u_adverse"], draws["shocks"],
            p.lambda_M * cfg.dt, prep.adverse_prob, cfg.strategy is Strategy.MARKET_AND_LIMIT,
            p.sigma, p.eta_tem, p.eta_per, p.Delta, p.eta_I, cfg.dt, sqrt_dt,
            float(p.Q), cfg.S0, p.K, out, x_rec, s_rec,
        )
    else:
        coef, sigma = prep.path_inputs(draws)
        m = cfg.model
        backend.linear_paths(
            coef, prep.offset, sigma, draws["shocks"], prep.eta_tem, prep.eta_per_beta,
            cfg.dt, sqrt_dt, m.Q, cfg.S0, m.K, out, x_rec, s_rec,
        )
    if np.any(out[:, 2] < 0.0):
        raise InventoryUnderflow("simulated inventory went negative")
    return coef if cfg.setting != "lob" else None


def _path_result(row, lam, trajectory=None) -> PathResult:
    return PathResult(float(row[0]), float(row[1]), float(row[2]), float(row[3]), int(row[4]), lam, trajectory)


# ------------------------------------------------------------------ single paths


def _simulate_path(cfg: SimConfig, rng: np.random.Generator, record: bool, backend=None) -> PathResult:
    backend = kernels if backend is None else backend
    prep = _Prepared(cfg)
    draws = _stack([_draw(cfg, rng)])
    out = np.zeros((1, len(kernels.OUT_COLUMNS)))
    n = cfg.n_steps
    x_rec = np.zeros((1, n + 1)) if record else None
    s_rec = np.zeros((1, n + 1)) if record else None
    coef = _run_chunk(prep, draws, out, backend, x_rec, s_rec)
    traj = None
    if record:
        X = x_rec[0]
        if cfg.setting == "lob":
            rates = np.maximum(prep.coef * X[:-1] + prep.offset, 0.0)[:, None]
        else:
            rates = np.maximum(coef[0] * X[:-1, None] + prep.offset[0], 0.0)
            sold = rates.sum(axis=1) * cfg.dt
            capped = sold > X[:-1]
            rates[capped] *= (X[:-1][capped] / sold[capped])[:, None]
        traj = Trajectory(cfg.grid, X, s_rec[0], rates)
    return _path_result(out[0], cfg.lam, traj)


def simulate_constant_vol_path(cfg: SimConfig, rng: np.random.Generator, record: bool = False) -> PathResult:
    if cfg.setting != "constant_vol":
        raise ValidationError("config is not a constant-vol experiment")
    return _simulate_path(cfg, rng, record)


def simulate_stoch_vol_path(cfg: SimConfig, rng: np.random.Generator, record: bool = False) -> PathResult:
    if cfg.setting != "stoch_vol":
        raise ValidationError("config is not a stochastic-vol experiment")
    return _simulate_path(cfg, rng, record)


def simulate_lob_path(cfg: SimConfig, rng: np.random.Generator, record: bool = False) -> PathResult:
    if cfg.setting != "lob":
        raise ValidationError("config is not a limit-order experiment")
    return _simulate_path(cfg, rng, record)


def factor_path(cfg: SimConfig, rng: np.random.Generator):
    """Price shocks and factor path of one stochastic-vol path (same draws as the simulator)."""
    d = _draw(cfg, rng)
    nu = _factor_paths(cfg, d["shocks"][None], d["vol_shocks"][None])[0]
    return d["shocks"], nu


# ------------------------------------------------------------------ accounting


def gain_loss(traj: Trajectory, venues: VenueSet, K: float, Q: float, S0: float) -> float:
    """Revenue at execution prices plus terminal clearing, relative to ``Q S0``.

    Left-endpoint sums on the step grid, the same convention as the kernel,
    so the two agree up to rounding.
    """
    dt = np.diff(traj.t)
    S = traj.price[:-1, None]
    exec_price = S - venues.eta_tems[None, :] * traj.rates
    revenue = float(np.sum(exec_price * traj.rates * dt[:, None]))
    X_T, S_T = traj.inventory[-1], traj.price[-1]
    return revenue + X_T * (S_T - K * X_T) - Q * S0


def qv_penalty(path: PathResult, lam: float) -> float:
    """``lam`` times the left Riemann sum of ``sigma^2 X^2 dt``."""
    return lam * path.quadratic_variation


# ------------------------------------------------------------------ ensembles


def worker_count(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get("LIQUIDATOR_THREADS", "0").strip() or "0"
        try:
            threads = int(raw)
        except ValueError:
            raise ValidationError(f"LIQUIDATOR_THREADS must be an integer, got {raw!r}") from None
    if threads < 0:
        raise ValidationError("thread count must be non-negative")
    return threads or (os.cpu_count() or 1)


def run_monte_carlo(cfg: SimConfig, threads: int | None = None, backend=None) -> EnsembleResult:
    backend = kernels if backend is None else backend
    prep = _Prepared(cfg)
    out = np.zeros((cfg.n_paths, len(kernels.OUT_COLUMNS)))

    def work(start):
        stop = min(start + CHUNK, cfg.n_paths)
        draws = _stack([_draw(cfg, path_stream(cfg.seed, i)) for i in range(start, stop)])
        block = np.zeros((stop - start, out.shape[1]))
        _run_chunk(prep, draws, block, backend)
        out[start:stop] = block

    starts = range(0, cfg.n_paths, CHUNK)
    workers = min(worker_count(threads), len(starts))
    if workers <= 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, starts))
    gl = out[:, 0]
    objective = gl - cfg.lam * out[:, 1]
    stats = summary_stats(gl, objective=objective, final_inventory=out[:, 2], strict=False)
    return EnsembleResult(cfg, stats, out)


def summary_stats(samples, objective=None, final_inventory=None, strict: bool = True) -> EnsembleStats:
    """Mean, ``n-1`` standard deviation and standardized third/fourth moments.

    Kurtosis is the raw (non-excess) value. With ``strict`` a zero-variance
    or too-small sample raises; otherwise the undefined moments are NaN.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n == 0:
        raise DegenerateSample("empty sample")
    mean = float(x.mean())
    std = float(x.std(ddof=1)) if n > 1 else math.nan
    degenerate = n < 4 or not np.ptp(x) > 0
    if degenerate and strict:
        raise DegenerateSample("need at least 4 samples with nonzero variance")
    if degenerate:
        skew = kurt = math.nan
    else:
        skew = float(_stats.skew(x))
        kurt = float(_stats.kurtosis(x, fisher=False))
    obj = x if objective is None else np.asarray(objective, dtype=float)
    inv = np.zeros(1) if final_inventory is None else np.asarray(final_inventory, dtype=float)
    return EnsembleStats(
        n=n, mean=mean, std=std, skewness=skew, kurtosis=kurt,
        mean_objective=float(obj.mean()),
        mean_final_inventory=float(inv.mean()),
        std_final_inventory=float(inv.std(ddof=1)) if inv.size > 1 else 0.0,
    )


@dataclass(frozen=True)
class FrontierPoint:
    lam: float
    std_gl: float
    mean_gl: float
    stderr: float


def efficient_frontier(lambda_grid, cfg: SimConfig, threads: int | None = None) -> list[FrontierPoint]:
    """One ensemble per risk aversion, all on the same seed (common random numbers)."""
    lams = [float(x) for x in lambda_grid]
    if lams != sorted(lams) or not lams or lams[0] != 0.0:
        raise ValidationError("lambda grid must be sorted ascending and start at 0")
    points = []
    for lam in lams:
        res = run_monte_carlo(replace(cfg, model=replace(cfg.model, lam=lam)), threads)
        points.append(FrontierPoint(lam, res.stats.std, res.stats.mean, res.stats.stderr))
    return points


# ------------------------------------------------------------------ time consistency


def time_consistency_gap(cfg: SimConfig, rng: np.random.Generator, split: float = 0.5) -> float:
    """Largest difference between the original rates after ``split * T`` and those
    of a problem restarted there from the realised inventory.
    """
    if cfg.setting != "constant_vol" or cfg.forced_rate is not None:
        raise ValidationError("restart check is defined for the constant-vol strategy")
    path = _simulate_path(cfg, rng, record=True)
    traj = path.trajectory
    m = int(round(split * cfg.n_steps))
    t_m = traj.t[m]
    X_m = traj.inventory[m]
    if X_m <= 0:
        return 0.0
    p = cfg.model
    rest = solve_constant_vol(ModelParams(X_m, p.T - t_m, p.lam, p.K, p.vol), cfg.venues)
    local = traj.t[m:-1] - t_m
    redone = rate_coefficients(local, rest) * traj.inventory[m:-1, None]
    return float(np.max(np.abs(redone - traj.rates[m:])))


def venues_for(n: int, eta_tem: float, eta_per: float) -> VenueSet:
    return VenueSet.identical(n, eta_tem, eta_per) if n > 1 else validate_venues([(1.0, eta_tem)], eta_per)
