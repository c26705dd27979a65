"""Backend benchmark: timings of the hot kernels on the compiled extension
versus the pure NumPy/Python reference, with a byte-identity check on each
workload (both backends consume streams identically by contract)."""

from __future__ import annotations

import time

import numpy as np

from ._kernels import _pyref

try:
    from ._kernels import _core
except ImportError:
    _core = None


def _ph(sid: int):
    return np.random.Philox(key=np.array([2024, sid], dtype=np.uint64))


def _time(fn, reps=3):
    best = float("inf")
    out = None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _workloads(quick: bool):
    L, M = 64, 65
    delta = 1.0 / (L * M)
    mig = delta * L * L / 2.0
    steps = 500 if quick else 4000

    def spde(mod):
        k = np.full(L, M // 2, dtype=np.int64)
        return mod.spde_evolve(k, M, mig, 0.0, steps, _ph(1)), k.sum()

    def euler(mod):
        u = np.full(L, 0.5)
        return mod.euler_evolve(u, mig, 0.0, np.sqrt(delta * L), steps,
                                _ph(2)), u.sum()

    n_ev = 200 if quick else 5000
    sites = np.array([0, 40, 80, 120], dtype=np.int64)
    cols = np.array([0, 0, 1, 1], dtype=np.uint8)

    def walk(mod):
        return mod.lattice_walk_run(sites, cols, 256, 1.0, 0.5, 1.0, 1e9,
                                    None, True, False, False, 64, _ph(3),
                                    n_ev)["t_final"]

    def endgame(mod):
        out = 0.0
        for i in range(4 if quick else 50):
            out += mod.pair_endgame(0, 256, 1.0, 1.0, _ph(100 + i))[1]
        return out

    n_rep = 8 if quick else 16
    fv_steps = 200 if quick else 1500

    def ensemble(mod):
        st = np.full((n_rep, L), M // 2, dtype=np.int64)
        r = mod.resampled_ensemble_run(st, M, mig, 0.0, fv_steps,
                                       fv_steps // 2, 50,
                                       np.array([0], dtype=np.int64),
                                       np.array([0, 16], dtype=np.int64),
                                       _ph(4))
        return r["replaced_after_burn"], st.sum()

    return [("stepping-stone evolve", spde),
            ("euler evolve", euler),
            ("event-driven walk", walk),
            ("two-particle endgame", endgame),
            ("resampled ensemble", ensemble)]


def run_benchmark(quick: bool = False):
    if _core is None:
        print("compiled backend unavailable; showing fallback timings only")
    rows = []
    for name, load in _workloads(quick):
        t_py, out_py = _time(lambda: load(_pyref), reps=1 if quick else 2)
        if _core is not None:
            t_c, out_c = _time(lambda: load(_core), reps=1 if quick else 3)
            match = repr(out_py) == repr(out_c)
            rows.append((name, t_c, t_py, t_py / t_c, match))
        else:
            rows.append((name, float("nan"), t_py, float("nan"), True))
    print(f"{'workload':28s} {'compiled':>10s} {'fallback':>10s} "
          f"{'speedup':>8s} {'identical':>9s}")
    for name, t_c, t_py, speed, match in rows:
        print(f"{name:28s} {t_c * 1e3:9.2f}ms {t_py * 1e3:9.2f}ms "
              f"{speed:7.1f}x {str(match):>9s}")
    return rows
