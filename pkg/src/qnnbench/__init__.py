"""qnnbench: quantum neural network training and benchmarking at desk scale."""

__version__ = "0.1.0"

# The numba sweeps own both cores; a multi-threaded BLAS spin-waiting next to
# them roughly triples metric-tensor wall time. All BLAS calls here are small,
# so pin BLAS to one thread for the life of the process.
try:
    from threadpoolctl import threadpool_limits as _threadpool_limits

    _BLAS_LIMIT = _threadpool_limits(limits=1, user_api="blas")
except Exception:  # pragma: no cover - threadpoolctl ships with scikit-learn
    _BLAS_LIMIT = None
