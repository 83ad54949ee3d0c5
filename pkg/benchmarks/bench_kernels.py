"""Compare the compiled and numpy path-stepping kernels.

Runs each backend on the same pre-drawn inputs (kernel only) and through
the full ensemble driver, reports best-of-``--repeat`` wall times and checks
that both backends return identical records.

    python3 benchmarks/bench_kernels.py --paths 1000 --repeat 3
"""

import argparse
import math
import time

import numpy as np

from liquidator.kernels import OUT_COLUMNS, get_backend
from liquidator.lob import LobParams
from liquidator.market import ConstantVol, ModelParams
from liquidator.sim import SimConfig, Strategy, _draw, _Prepared, _run_chunk, _stack, path_stream, run_monte_carlo, venues_for


def scenarios(paths: int):
    cv = ModelParams(100.0, 1.0, 0.1, 0.1, ConstantVol(math.e))
    lob = LobParams(Q=100.0, T=1.0, K=0.1, eta_per=0.005, eta_tem=0.01, sigma=math.e, lambda_M=100.0,
                    Delta=0.3, eta_u=0.02, eta_d=0.02, eta_I=0.02)
    return {
        "constant vol, N=1, dt=1e-3": SimConfig(cv, venues=venues_for(1, 0.01, 0.005), dt=1e-3, n_paths=paths),
        "constant vol, N=10, dt=1e-3": SimConfig(cv, venues=venues_for(10, 0.01, 0.005), dt=1e-3, n_paths=paths),
        "limit orders, dt=1e-4": SimConfig(lob, strategy=Strategy.MARKET_AND_LIMIT, dt=1e-4, n_paths=paths),
    }


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--paths", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    backends = {"python": get_backend("python")}
    try:
        backends["cython"] = get_backend("cython")
    except ImportError:
        print("compiled kernels not built; timing the numpy backend only")

    header = f"{'scenario':<30} {'stage':<9}" + "".join(f"{name:>10}" for name in backends) + f"{'speed-up':>10}"
    print(header)
    print("-" * len(header))
    for label, cfg in scenarios(args.paths).items():
        prep = _Prepared(cfg)
        draws = _stack([_draw(cfg, path_stream(cfg.seed, i)) for i in range(cfg.n_paths)])
        kernel_t, ensemble_t, records = {}, {}, {}
        for name, mod in backends.items():
            out = np.zeros((cfg.n_paths, len(OUT_COLUMNS)))
            kernel_t[name] = best_of(lambda: _run_chunk(prep, draws, out, mod), args.repeat)
            ensemble_t[name] = best_of(lambda: run_monte_carlo(cfg, threads=1, backend=mod), args.repeat)
            records[name] = run_monte_carlo(cfg, threads=1, backend=mod).records
        for stage, t in (("kernel", kernel_t), ("ensemble", ensemble_t)):
            cells = "".join(f"{t[name]:>9.3f}s" for name in backends)
            ratio = f"{t['python'] / t['cython']:>9.1f}x" if "cython" in t else f"{'-':>10}"
            print(f"{label:<30} {stage:<9}{cells}{ratio}")
        if "cython" in records and not np.array_equal(records["python"], records["cython"]):
            print(f"  WARNING: backends disagree on {label}")
            return 1
    print("records identical across backends" if "cython" in backends else "")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
