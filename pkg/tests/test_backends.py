"""Cross-backend contract: the compiled and reference kernels consume the
shared stream identically, so every kernel output is byte-identical."""

import numpy as np
import pytest

from fkpp_qsd._kernels import _pyref

_core = pytest.importorskip("fkpp_qsd._kernels._core")


def ph(sid):
    return np.random.Philox(key=np.array([42, sid], dtype=np.uint64))


def same(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(np.asarray(a), np.asarray(b))
    if isinstance(a, dict):
        return set(a) == set(b) and all(same(a[k], b[k]) for k in a)
    if a is None or b is None:
        return a is b
    return a == b


def test_backend_names():
    assert _core.backend_name() == "compiled"
    assert _pyref.backend_name() == "fallback"


def test_spde_evolve_identical():
    k1 = np.full(16, 4, dtype=np.int64)
    k2 = k1.copy()
    r1 = _core.spde_evolve(k1, 8, 0.25, 0.001, 500, ph(1))
    r2 = _pyref.spde_evolve(k2, 8, 0.25, 0.001, 500, ph(1))
    assert r1 == r2
    assert np.array_equal(k1, k2)


def test_euler_evolve_identical():
    u1 = np.full(16, 0.5)
    u2 = u1.copy()
    r1 = _core.euler_evolve(u1, 0.25, 0.001, 0.3, 300, ph(2))
    r2 = _pyref.euler_evolve(u2, 0.25, 0.001, 0.3, 300, ph(2))
    assert r1 == r2
    assert np.array_equal(u1, u2)


def test_pair_endgame_identical():
    for d0 in (0, 5, 16):
        for sid in range(4):
            a = _core.pair_endgame(d0, 32, 1.0, 1.3, ph(100 + sid))
            b = _pyref.pair_endgame(d0, 32, 1.0, 1.3, ph(100 + sid))
            assert a == b
    a = _core.pair_meet_time(9, 64, 0.7, ph(200))
    b = _pyref.pair_meet_time(9, 64, 0.7, ph(200))
    assert a == b


def test_lattice_walk_identical():
    sites = np.array([0, 3, 9, 9], dtype=np.int64)
    cols = np.array([0, 0, 1, 1], dtype=np.uint8)
    cps = np.array([0.0, 0.05, 0.1])
    for sid in range(4):
        ra = _core.lattice_walk_run(sites, cols, 16, 1.0, 0.5, 1.0, 0.2, cps,
                                    True, False, False, 100, ph(300 + sid))
        rb = _pyref.lattice_walk_run(sites, cols, 16, 1.0, 0.5, 1.0, 0.2, cps,
                                     True, False, False, 100, ph(300 + sid))
        assert same(ra, rb)
    # single-event and colour-blind/accelerated modes
    ra = _core.lattice_walk_run(sites, cols, 16, 1.0, 0.5, 1.0, 10.0, None,
                                True, False, False, 100, ph(310), 1)
    rb = _pyref.lattice_walk_run(sites, cols, 16, 1.0, 0.5, 1.0, 10.0, None,
                                 True, False, False, 100, ph(310), 1)
    assert same(ra, rb)
    cb_sites = np.arange(8, dtype=np.int64) * 4
    cb_cols = np.zeros(8, dtype=np.uint8)
    ra = _core.lattice_walk_run(cb_sites, cb_cols, 32, 1.0, 0.0, 1.0, 1e9,
                                None, False, True, True, 64, ph(311))
    rb = _pyref.lattice_walk_run(cb_sites, cb_cols, 32, 1.0, 0.0, 1.0, 1e9,
                                 None, False, True, True, 64, ph(311))
    assert same(ra, rb)


def test_continuous_walk_identical():
    pos = np.array([0.1, 0.4, 0.42])
    cols = np.array([0, 1, 1], dtype=np.uint8)
    tab = np.linspace(0.3, 0.0, 100) ** 2
    cps = np.array([0.0, 0.01, 0.02])
    for sid in range(3):
        ra = _core.continuous_walk_run(pos, cols, 1.0, 0.5, 1.0, 1e-3, 0.05,
                                       cps, True, tab, 100, ph(400 + sid))
        rb = _pyref.continuous_walk_run(pos, cols, 1.0, 0.5, 1.0, 1e-3, 0.05,
                                        cps, True, tab, 100, ph(400 + sid))
        assert same(ra, rb)


def test_resampled_ensemble_identical():
    st1 = np.full((6, 8), 3, dtype=np.int64)
    st2 = st1.copy()
    ps = np.array([0, 2], dtype=np.int64)
    po = np.array([0, 4], dtype=np.int64)
    ra = _core.resampled_ensemble_run(st1, 6, 0.2, 0.0, 400, 100, 50, ps, po,
                                      ph(500))
    rb = _pyref.resampled_ensemble_run(st2, 6, 0.2, 0.0, 400, 100, 50, ps, po,
                                       ph(500))
    assert same(ra, rb)
    assert np.array_equal(st1, st2)


def test_stream_reproducibility_and_independence():
    from fkpp_qsd.rng import RngStream

    g1 = RngStream(7, 3).generator().random(8)
    g2 = RngStream(7, 3).generator().random(8)
    g3 = RngStream(7, 4).generator().random(8)
    assert np.array_equal(g1, g2)
    assert not np.array_equal(g1, g3)


def test_benchmark_smoke(capsys):
    from fkpp_qsd.bench import run_benchmark

    rows = run_benchmark(quick=True)
    assert all(r[4] for r in rows)  # identical outputs on every workload
