import os

THREADS_ENV = "SHAPEMETRIC_THREADS"


def max_threads() -> int:
    """Thread cap from ``SHAPEMETRIC_THREADS`` (default: all cores)."""
    cores = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return cores
    try:
        n = int(raw)
    except ValueError:
        return cores
    return max(1, min(n, cores))


def configure_numba():
    import numba

    # the bundled TBB is too old for numba; prefer OpenMP, then the portable workqueue
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    return numba


def apply_thread_cap() -> int:
    n = max_threads()
    try:
        numba = configure_numba()
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except (ImportError, ValueError):
        pass
    return n
