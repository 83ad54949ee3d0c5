# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path-stepping kernels; see ``_kernels_py`` for the reference semantics."""

from libc.stdlib cimport malloc, free


def linear_paths(const double[:, :, ::1] coef, const double[:, :, ::1] offset,
                 const double[:, ::1] sigma, const double[:, ::1] shocks,
                 const double[::1] eta_tem, const double[::1] eta_per_beta,
                 double dt, double sqrt_dt, double Q, double S0, double K,
                 double[:, ::1] out, double[:, ::1] x_rec, double[:, ::1] s_rec):
    cdef Py_ssize_t P = shocks.shape[0]
    cdef Py_ssize_t n_steps = shocks.shape[1]
    cdef Py_ssize_t N = eta_tem.shape[0]
    cdef bint record = x_rec.shape[0] > 0
    cdef bint shared_coef = coef.shape[0] == 1
    cdef bint shared_offset = offset.shape[0] == 1
    cdef bint shared_sigma = sigma.shape[0] == 1
    cdef Py_ssize_t p, k, n, pc, po, ps
    cdef double X, S, cash, qv, sig, th, total, sold, scale, drift
    cdef bint capped
    cdef double *theta = <double *> malloc(N * sizeof(double))
    if theta == NULL:
        raise MemoryError()
    try:
        with nogil:
            for p in range(P):
                pc = 0 if shared_coef else p
                po = 0 if shared_offset else p
                ps = 0 if shared_sigma else p
                X = Q
                S = S0
                cash = 0.0
                qv = 0.0
                if record:
                    x_rec[p, 0] = X
                    s_rec[p, 0] = S
                for k in range(n_steps):
                    sig = sigma[ps, k]
                    qv = qv + sig * sig * (X * X) * dt
                    total = 0.0
                    for n in range(N):
                        th = coef[pc, k, n] * X + offset[po, k, n]
                        if th < 0.0:
                            th = 0.0
                        theta[n] = th
                        total = total + th
                    sold = total * dt
                    capped = sold > X
                    if capped:
                        scale = X / sold
                        for n in range(N):
                            theta[n] = theta[n] * scale
                    drift = 0.0
                    for n in range(N):
                        th = theta[n]
                        cash = cash + (S - eta_tem[n] * th) * th * dt
                        drift = drift + eta_per_beta[n] * th
                    if capped:
                        X = 0.0
                    else:
                        X = X - sold
                    S = S - drift * dt
                    S = S + sig * sqrt_dt * shocks[p, k]
                    if record:
                        x_rec[p, k + 1] = X
                        s_rec[p, k + 1] = S
                cash = cash + X * (S - K * X)
                out[p, 0] = cash - Q * S0
                out[p, 1] = qv
                out[p, 2] = X
                out[p, 3] = S
                out[p, 4] = 0.0
    finally:
        free(theta)


def lob_paths(const double[::1] coef, const double[::1] offset,
              const double[:, ::1] u_arrival, const double[:, ::1] u_adverse,
              const double[:, ::1] shocks, double lambda_dt, double adverse_prob, bint use_lo,
              double sigma, double eta_tem, double eta_per, double Delta, double eta_I,
              double dt, double sqrt_dt, double Q, double S0, double K,
              double[:, ::1] out, double[:, ::1] x_rec, double[:, ::1] s_rec):
    cdef Py_ssize_t P = shocks.shape[0]
    cdef Py_ssize_t n_steps = shocks.shape[1]
    cdef bint record = x_rec.shape[0] > 0
    cdef Py_ssize_t p, k
    cdef double X, S, cash, qv, fills, th
    cdef double s2 = sigma * sigma
    cdef double vol_step = sigma * sqrt_dt
    cdef bint capped, arrived
    with nogil:
        for p in range(P):
            X = Q
            S = S0
            cash = 0.0
            qv = 0.0
            fills = 0.0
            if record:
                x_rec[p, 0] = X
                s_rec[p, 0] = S
            for k in range(n_steps):
                qv = qv + s2 * (X * X) * dt
                th = coef[k] * X + offset[k]
                if th < 0.0:
                    th = 0.0
                capped = th * dt > X
                if capped:
                    th = X / dt
                arrived = u_arrival[p, k] < lambda_dt
                if use_lo and arrived and X >= 1.0:
                    cash = cash + (S + Delta)
                    X = X - 1.0
                    S = S + eta_I
                    fills = fills + 1.0
                else:
                    cash = cash + (S - eta_tem * th) * th * dt
                    if capped:
                        X = 0.0
                    else:
                        X = X - th * dt
                    S = S - eta_per * th * dt
                    if arrived:
                        S = S + eta_I
                    elif u_adverse[p, k] < adverse_prob:
                        S = S - eta_I
                S = S + vol_step * shocks[p, k]
                if record:
                    x_rec[p, k + 1] = X
                    s_rec[p, k + 1] = S
            cash = cash + X * (S - K * X)
            out[p, 0] = cash - Q * S0
            out[p, 1] = qv
            out[p, 2] = X
            out[p, 3] = S
            out[p, 4] = fills
