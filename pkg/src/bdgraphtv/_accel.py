"""Backend selection for the hot pair-sum kernels.

Numba is used when importable unless ``BDGRAPHTV_DISABLE_NUMBA`` is set to a
truthy value, in which case every kernel runs its pure-numpy fallback. Callers
can also pick a backend per call with ``backend="numba" | "numpy"``.
"""
import os
import threading

_FALSY = {"", "0", "false", "no", "off"}

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
        # Parallel kernels run one at a time (see PARALLEL_LOCK), so any layer
        # will do; try TBB last to avoid its version warning on old installs.
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


# Numba's fallback workqueue threading layer aborts on concurrent parallel
# launches, so parallel kernels are entered one at a time; each one already
# uses every worker thread.
PARALLEL_LOCK = threading.Lock()


def numba_disabled_by_env():
    return os.environ.get("BDGRAPHTV_DISABLE_NUMBA", "").strip().lower() not in _FALSY


def njit(fn=None, **kwargs):
    """Compile ``fn`` with numba when available; leave it as plain Python otherwise."""
    if fn is None:
        return lambda f: njit(f, **kwargs)
    if not HAVE_NUMBA:
        return fn
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(**kwargs)(fn)


def resolve_backend(backend=None):
    """Return ``"numba"`` or ``"numpy"`` for an explicit request or the env default."""
    if backend is None:
        return "numba" if HAVE_NUMBA and not numba_disabled_by_env() else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend


def thread_cap():
    """Worker cap from ``BDGRAPHTV_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("BDGRAPHTV_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"BDGRAPHTV_THREADS must be an integer, got {raw!r}") from None
        if value < 1:
            raise ValueError("BDGRAPHTV_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1
