import os
import subprocess
import sys

import numpy as np
import pytest

from liquidator import kernels
from liquidator.kernels import OUT_COLUMNS, get_backend

try:
    CY = get_backend("cython")
except ImportError:  # extension not built
    CY = None
PY = get_backend("python")
needs_ext = pytest.mark.skipif(CY is None, reason="compiled kernels not built")


def _linear_inputs(rng, P=7, n=300, N=3, shared=True):
    lead = 1 if shared else P
    return dict(
        coef=rng.uniform(0.5, 3.0, (lead, n, N)),
        offset=rng.uniform(-20.0, 5.0, (lead, n, N)),
        sigma=rng.uniform(0.5, 3.0, (lead, n)),
        shocks=rng.choice([-1.0, 1.0], (P, n)),
        eta_tem=rng.uniform(0.005, 0.02, N),
        eta_per_beta=rng.uniform(0.001, 0.003, N),
        dt=1.0 / n, sqrt_dt=(1.0 / n) ** 0.5, Q=100.0, S0=15.0, K=0.1,
    )


def _run_linear(backend, inp, P, n, record=True):
    out = np.zeros((P, len(OUT_COLUMNS)))
    x_rec = np.zeros((P, n + 1)) if record else np.zeros((0, 0))
    s_rec = np.zeros((P, n + 1)) if record else np.zeros((0, 0))
    backend.linear_paths(**inp, out=out, x_rec=x_rec, s_rec=s_rec)
    return out, x_rec, s_rec


def _lob_inputs(rng, P=9, n=2000):
    return dict(
        coef=rng.uniform(5.0, 20.0, n), offset=rng.uniform(-120.0, 0.0, n),
        u_arrival=rng.random((P, n)), u_adverse=rng.random((P, n)), shocks=rng.choice([-1.0, 1.0], (P, n)),
        lambda_dt=0.01, adverse_prob=0.01, use_lo=True, sigma=2.7, eta_tem=0.01, eta_per=0.005,
        Delta=0.3, eta_I=0.02, dt=1.0 / n, sqrt_dt=(1.0 / n) ** 0.5, Q=100.0, S0=15.0, K=0.1,
    )


def _run_lob(backend, inp, P, n):
    out = np.zeros((P, len(OUT_COLUMNS)))
    x_rec, s_rec = np.zeros((P, n + 1)), np.zeros((P, n + 1))
    backend.lob_paths(**inp, out=out, x_rec=x_rec, s_rec=s_rec)
    return out, x_rec, s_rec


@needs_ext
@pytest.mark.parametrize("shared", [True, False])
def test_linear_backends_agree_bitwise(shared):
    inp = _linear_inputs(np.random.default_rng(1), shared=shared)
    a = _run_linear(PY, inp, 7, 300)
    b = _run_linear(CY, inp, 7, 300)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


@needs_ext
@pytest.mark.parametrize("use_lo", [True, False])
def test_lob_backends_agree_bitwise(use_lo):
    inp = _lob_inputs(np.random.default_rng(2))
    inp["use_lo"] = use_lo
    a = _run_lob(PY, inp, 9, 2000)
    b = _run_lob(CY, inp, 9, 2000)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    assert (a[0][:, 4].sum() > 0) == use_lo


@pytest.mark.parametrize("backend", [PY, pytest.param(CY, marks=needs_ext)], ids=["python", "cython"])
def test_recording_does_not_change_results(backend):
    inp = _linear_inputs(np.random.default_rng(3))
    with_rec = _run_linear(backend, inp, 7, 300)[0]
    without = _run_linear(backend, inp, 7, 300, record=False)[0]
    assert np.array_equal(with_rec, without)


@pytest.mark.parametrize("backend", [PY, pytest.param(CY, marks=needs_ext)], ids=["python", "cython"])
def test_inventory_never_negative_and_capped(backend):
    inp = _linear_inputs(np.random.default_rng(4))
    inp["offset"] = inp["offset"] + 1e5  # far more than the inventory in one step
    out, x, _ = _run_linear(backend, inp, 7, 300)
    assert np.all(x >= 0) and np.all(x[:, 1:] == 0.0)
    assert np.all(out[:, 2] == 0.0)


@pytest.mark.parametrize("backend", [PY, pytest.param(CY, marks=needs_ext)], ids=["python", "cython"])
def test_market_order_arrival_step(backend):
    # one arrival in the first step, no volatility: X 50 -> 49, cash +15.3, price +eta_I
    inp = _lob_inputs(np.random.default_rng(5), P=1, n=2)
    inp.update(Q=50.0, sigma=0.0, coef=np.zeros(2), offset=np.zeros(2),
               u_arrival=np.array([[0.0, 0.5]]), u_adverse=np.ones((1, 2)))
    out, x, s = _run_lob(backend, inp, 1, 2)
    assert x[0, 1] == 49.0 and s[0, 1] == pytest.approx(15.02, abs=1e-14)
    # no further trading: cash is the fill plus the terminal block sale
    final = 15.3 + 49.0 * (15.02 - 0.1 * 49.0) - 50.0 * 15.0
    assert out[0, 0] == pytest.approx(final, abs=1e-12)
    assert out[0, 4] == 1.0


def test_default_backend_and_env_override():
    assert kernels.BACKEND in ("cython", "python")
    env = dict(os.environ, LIQUIDATOR_PURE_PYTHON="1")
    code = "from liquidator import kernels; print(kernels.BACKEND)"
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "python"
    with pytest.raises(ValueError):
        get_backend("fortran")
