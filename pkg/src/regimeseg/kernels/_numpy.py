"""Pure-numpy reference implementations of the hot recursions.

Signatures and semantics must stay in lockstep with ``_numba``; the parity
test suite compares both backends on random instances.
"""

import numpy as np


def _lse(v):
    m = v.max()
    safe = m if np.isfinite(m) else 0.0
    with np.errstate(divide="ignore"):
        return float(np.log(np.exp(v - safe).sum()) + safe)


def _lse_axis0(scores):
    m = scores.max(axis=0)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(scores - safe).sum(axis=0)) + safe


def forward_loglik(log_init, log_trans, log_obs):
    """log p(x_1..x_T) via the log-domain forward recursion."""
    T, K = log_obs.shape
    alpha = log_init + log_obs[0]
    for t in range(1, T):
        alpha = _lse_axis0(alpha[:, None] + log_trans) + log_obs[t]
    return _lse(alpha)


def forward_backward(log_init, log_trans, log_obs):
    """Posterior state marginals and summed pair marginals.

    Returns (gamma[T,K], xi_sum[K,K], loglik) where xi_sum[j,k] is the
    expected count of j->k transitions.
    """
    T, K = log_obs.shape
    la = np.empty((T, K))
    lb = np.empty((T, K))
    la[0] = log_init + log_obs[0]
    for t in range(1, T):
        la[t] = _lse_axis0(la[t - 1][:, None] + log_trans) + log_obs[t]
    lb[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        scores = log_trans + (log_obs[t + 1] + lb[t + 1])[None, :]
        lb[t] = _lse_axis0(scores.T)
    ll = _lse(la[T - 1])
    gamma = np.exp(la + lb - ll)
    xi_sum = np.zeros((K, K))
    for t in range(T - 1):
        xi_sum += np.exp(
            la[t][:, None] + log_trans + (log_obs[t + 1] + lb[t + 1])[None, :] - ll
        )
    return gamma, xi_sum, ll


def viterbi_path(log_init, log_trans, log_obs):
    """Most probable state path; ties break toward the lower state index."""
    T, K = log_obs.shape
    delta = log_init + log_obs[0]
    psi = np.zeros((T, K), dtype=np.int64)
    for t in range(1, T):
        scores = delta[:, None] + log_trans
        psi[t] = np.argmax(scores, axis=0)  # first max = lowest index
        delta = scores[psi[t], np.arange(K)] + log_obs[t]
    last = int(np.argmax(delta))
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = last
    for t in range(T - 1, 0, -1):
        path[t - 1] = psi[t, path[t]]
    return path, float(delta[last])


def _draw_categorical(logw, u):
    m = logw.max()
    safe = m if np.isfinite(m) else 0.0
    p = np.exp(logw - safe)
    c = np.cumsum(p)
    idx = int(np.searchsorted(c, u * c[-1], side="left"))
    return min(idx, logw.shape[0] - 1)


def ffbs_path(log_init, log_trans, log_obs, uniforms):
    """One exact blocked posterior draw of the state path.

    ``uniforms`` supplies the T categorical draws so all randomness stays
    with the caller's generator.
    """
    T, K = log_obs.shape
    la = np.empty((T, K))
    la[0] = log_init + log_obs[0]
    for t in range(1, T):
        la[t] = _lse_axis0(la[t - 1][:, None] + log_trans) + log_obs[t]
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = _draw_categorical(la[T - 1], uniforms[T - 1])
    for t in range(T - 2, -1, -1):
        w = la[t] + log_trans[:, path[t + 1]]
        path[t] = _draw_categorical(w, uniforms[t])
    return path
