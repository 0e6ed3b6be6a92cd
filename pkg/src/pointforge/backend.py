"""Kernel backend selection.

The hot geometry kernels (farthest point sampling, ball query, k-NN,
scatter-add, checksumming) ship in two interchangeable implementations:
numba-jitted loops and a pure-numpy fallback. Both produce bit-identical
results; the numba path is simply faster on large clouds.

Selection happens once at import via the ``PF_BACKEND`` environment
variable ("auto", "numba", or "numpy"; default "auto" prefers numba when
importable) and can be overridden at runtime with :func:`use_backend`,
which the test suite and ``bench/bench_kernels.py`` use to compare paths.

``PF_THREADS`` bounds worker parallelism for the few operations that fan
out across clouds (dataset generation, evaluation); kernels themselves
run single-threaded so results never depend on scheduling.
"""

import os

VALID_BACKENDS = ("auto", "numba", "numpy")

_NUMBA_IMPORT_ERROR = None


def numba_available() -> bool:
    global _NUMBA_IMPORT_ERROR
    try:
        import numba  # noqa: F401
    except ImportError as exc:  # pragma: no cover - depends on environment
        _NUMBA_IMPORT_ERROR = exc
        return False
    return True


def _resolve(name: str) -> str:
    if name not in VALID_BACKENDS:
        raise ValueError(
            f"invalid backend {name!r}: expected one of {VALID_BACKENDS}"
        )
    if name == "numpy":
        return "numpy"
    if numba_available():
        return "numba"
    if name == "numba":
        raise RuntimeError(
            f"PF_BACKEND=numba requested but numba is not importable: "
            f"{_NUMBA_IMPORT_ERROR}"
        )
    return "numpy"


_active = _resolve(os.environ.get("PF_BACKEND", "auto"))


def active_backend() -> str:
    """Name of the backend currently serving kernel calls."""
    return _active


def use_backend(name: str) -> str:
    """Force a backend ("auto", "numba", or "numpy"). Returns the resolved name."""
    global _active
    _active = _resolve(name)
    return _active


def thread_count() -> int:
    """Worker bound from PF_THREADS (>= 1); 1 when unset or malformed."""
    raw = os.environ.get("PF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
