"""Pure numpy path-stepping kernels (fallback for the compiled ``_kernels`` module).

Both backends receive the same pre-drawn randomness and perform the same
floating-point operations in the same order, so their outputs agree
bit-for-bit. Here the loop runs over time and is vectorised across paths.

Output columns of ``out``: gain/loss, integral of sigma^2 X^2 dt, X at T-,
affected price at T-, number of limit-order fills.
"""

import numpy as np

OUT_COLUMNS = ("gain_loss", "quadratic_variation", "final_inventory", "final_price", "fills")


def _row(arr, k):
    # leading axis is either 1 (shared by all paths) or one entry per path
    return arr[:, k]


def linear_paths(coef, offset, sigma, shocks, eta_tem, eta_per_beta,
                 dt, sqrt_dt, Q, S0, K, out, x_rec, s_rec):
    """Feedback rates ``max(0, coef * X + offset)`` per venue, capped at the inventory.

    ``coef`` and ``offset`` are ``(1 or P, n_steps, N)``, ``sigma`` is
    ``(1 or P, n_steps)`` and ``shocks`` is ``(P, n_steps)``.
    """
    P, n_steps = shocks.shape
    N = eta_tem.shape[0]
    record = x_rec.shape[0] > 0
    X = np.full(P, float(Q))
    S = np.full(P, float(S0))
    cash = np.zeros(P)
    qv = np.zeros(P)
    if record:
        x_rec[:, 0] = X
        s_rec[:, 0] = S
    for k in range(n_steps):
        sig = _row(sigma, k)
        qv += sig * sig * (X * X) * dt
        c = coef[:, k, :]
        o = offset[:, k, :]
        thetas = []
        total = np.zeros(P)
        for n in range(N):
            th = c[:, n] * X + o[:, n]
            th = np.where(th < 0.0, 0.0, th)
            thetas.append(th)
            total += th
        sold = total * dt
        capped = sold > X
        if capped.any():
            scale = np.where(capped, X / np.where(capped, sold, 1.0), 1.0)
            thetas = [np.where(capped, th * scale, th) for th in thetas]
        drift = np.zeros(P)
        for n in range(N):
            th = thetas[n]
            cash += (S - eta_tem[n] * th) * th * dt
            drift += eta_per_beta[n] * th
        X = np.where(capped, 0.0, X - sold)
        S = S - drift * dt
        S = S + sig * sqrt_dt * shocks[:, k]
        if record:
            x_rec[:, k + 1] = X
            s_rec[:, k + 1] = S
    cash += X * (S - K * X)
    out[:, 0] = cash - Q * S0
    out[:, 1] = qv
    out[:, 2] = X
    out[:, 3] = S
    out[:, 4] = 0.0


def lob_paths(coef, offset, u_arrival, u_adverse, shocks, lambda_dt, adverse_prob, use_lo,
              sigma, eta_tem, eta_per, Delta, eta_I, dt, sqrt_dt, Q, S0, K, out, x_rec, s_rec):
    """Market orders at ``max(0, coef * X + offset)`` plus unit limit-order fills.

    A buy market order arrives when ``u_arrival < lambda_dt``; it fills the
    trader's resting sell order (if ``use_lo`` and at least one share is
    left) and lifts the price by ``eta_I``. In steps without an arrival the
    price drops by ``eta_I`` when ``u_adverse < adverse_prob``.
    """
    P, n_steps = shocks.shape
    record = x_rec.shape[0] > 0
    X = np.full(P, float(Q))
    S = np.full(P, float(S0))
    cash = np.zeros(P)
    qv = np.zeros(P)
    fills = np.zeros(P)
    s2 = sigma * sigma
    vol_step = sigma * sqrt_dt
    if record:
        x_rec[:, 0] = X
        s_rec[:, 0] = S
    for k in range(n_steps):
        qv += s2 * (X * X) * dt
        th = coef[k] * X + offset[k]
        th = np.where(th < 0.0, 0.0, th)
        capped = th * dt > X
        th = np.where(capped, X / dt, th)
        arrived = u_arrival[:, k] < lambda_dt
        filled = arrived & (X >= 1.0) if use_lo else np.zeros(P, dtype=bool)
        market = ~filled
        mo_cash = (S - eta_tem * th) * th * dt
        mo_X = np.where(capped, 0.0, X - th * dt)
        mo_S = S - eta_per * th * dt
        adverse = (~arrived) & (u_adverse[:, k] < adverse_prob)
        mo_S = np.where(arrived, mo_S + eta_I, np.where(adverse, mo_S - eta_I, mo_S))
        cash = np.where(market, cash + mo_cash, cash + (S + Delta))
        X = np.where(market, mo_X, X - 1.0)
        S = np.where(market, mo_S, S + eta_I)
        fills += filled
        S = S + vol_step * shocks[:, k]
        if record:
            x_rec[:, k + 1] = X
            s_rec[:, k + 1] = S
    cash += X * (S - K * X)
    out[:, 0] = cash - Q * S0
    out[:, 1] = qv
    out[:, 2] = X
    out[:, 3] = S
    out[:, 4] = fills
