"""Backend dispatch for the hot kernels.

The compiled extension (`sdfl._biht_cy`) is preferred when importable;
otherwise the numpy implementations in `sdfl._kernels_np` are used. Set
SDFL_PURE_PYTHON=1 to force the numpy path (useful for benchmarking and
for debugging the compiled kernels). `python -m sdfl.cli --version` and
every summary.json report which backend ran.

Both backends follow identical deterministic rules, so supports and sign
decisions agree; floating-point sums may differ in the last ulps between
them. Within one backend all kernels are exactly reproducible.
"""

import os

from . import _kernels_np

if os.environ.get("SDFL_PURE_PYTHON", "") == "1":
    _impl = _kernels_np
else:
    try:
        from . import _biht_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_np

top_s_indices = _impl.top_s_indices
biht_solve = _impl.biht_solve


def backend() -> str:
    """Name of the active kernel backend: 'cython' or 'numpy'."""
    return _impl.BACKEND


def backends_available():
    """Names of all importable backends (for the benchmark script)."""
    names = ["numpy"]
    try:
        from . import _biht_cy  # noqa: F401
        names.insert(0, "cython")
    except ImportError:
        pass
    return names
