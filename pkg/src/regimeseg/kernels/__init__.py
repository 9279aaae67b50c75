"""Hot numeric kernels with a selectable backend.

The forward recursion, forward-backward pass, Viterbi decode, and
forward-filter/backward-sample draw dominate runtime, so they exist twice:
a numba ``@njit`` build and a pure-numpy fallback. Selection happens once
at import via the ``REGIME_SEG_BACKEND`` environment variable:

* ``auto`` (default) - numba when it imports cleanly, else numpy
* ``numba``          - require the JIT build, raise if unavailable
* ``numpy``          - force the fallback

``benchmarks/bench_kernels.py`` times the two builds side by side.
"""

import math
import os

import numpy as np

from . import _numpy as _numpy_impl

_ENV_VAR = "REGIME_SEG_BACKEND"
_LOG_2PI = math.log(2.0 * math.pi)


def _select_backend():
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV_VAR} must be auto, numba, or numpy (got {choice!r})")
    if choice == "numpy":
        return _numpy_impl, "numpy"
    try:
        from . import _numba as _numba_impl

        return _numba_impl, "numba"
    except ImportError:
        if choice == "numba":
            raise
        return _numpy_impl, "numpy"


_impl, _BACKEND = _select_backend()

forward_loglik = _impl.forward_loglik
forward_backward = _impl.forward_backward
viterbi_path = _impl.viterbi_path
ffbs_path = _impl.ffbs_path


def backend_name() -> str:
    """Name of the kernel backend selected at import time."""
    return _BACKEND


def log_obs_matrix(values: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """Per-state emission log-likelihoods for a whole series, shape (T, K).

    ``values`` is (T, M, 2); ``means`` (K, M, 2); ``covs`` (K, M, 2, 2).
    Channels are conditionally independent given the state, so the entries
    sum the per-modality Gaussian log-densities.
    """
    T = values.shape[0]
    K, M = means.shape[0], means.shape[1]
    out = np.zeros((T, K))
    for k in range(K):
        for m in range(M):
            c = covs[k, m]
            det = c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0]
            inv = np.array([[c[1, 1], -c[0, 1]], [-c[1, 0], c[0, 0]]]) / det
            diff = values[:, m, :] - means[k, m]
            quad = np.einsum("ti,ij,tj->t", diff, inv, diff)
            out[:, k] += -0.5 * (quad + np.log(det)) - _LOG_2PI
    return out
