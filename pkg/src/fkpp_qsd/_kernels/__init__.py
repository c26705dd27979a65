"""Kernel backend selection.

The compiled extension (`_core`, Cython) is preferred; the pure NumPy/Python
reference (`_pyref`) is the fallback and an executable specification.  Both
consume random streams identically, so the choice never changes results.
Set FKPP_QSD_FORCE_FALLBACK=1 to force the reference backend (used by the
cross-backend tests and the benchmark).
"""

from __future__ import annotations

import os

from . import _pyref

if os.environ.get("FKPP_QSD_FORCE_FALLBACK", "") not in ("", "0"):
    _impl = _pyref
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _pyref

backend_name = _impl.backend_name
spde_evolve = _impl.spde_evolve
euler_evolve = _impl.euler_evolve
pair_endgame = _impl.pair_endgame
pair_meet_time = _impl.pair_meet_time
lattice_walk_run = _impl.lattice_walk_run
continuous_walk_run = _impl.continuous_walk_run
resampled_ensemble_run = _impl.resampled_ensemble_run

fallback = _pyref
