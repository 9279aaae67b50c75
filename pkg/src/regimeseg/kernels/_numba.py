"""Numba-compiled twins of the recursions in ``_numpy``."""

import numpy as np
from numba import njit


@njit(cache=True)
def _lse_vec(v):
    m = -np.inf
    for i in range(v.shape[0]):
        if v[i] > m:
            m = v[i]
    if not np.isfinite(m):
        m = 0.0
    s = 0.0
    for i in range(v.shape[0]):
        s += np.exp(v[i] - m)
    return np.log(s) + m


@njit(cache=True)
def forward_loglik(log_init, log_trans, log_obs):
    T, K = log_obs.shape
    alpha = np.empty(K)
    nxt = np.empty(K)
    work = np.empty(K)
    for k in range(K):
        alpha[k] = log_init[k] + log_obs[0, k]
    for t in range(1, T):
        for k in range(K):
            for j in range(K):
                work[j] = alpha[j] + log_trans[j, k]
            nxt[k] = _lse_vec(work) + log_obs[t, k]
        for k in range(K):
            alpha[k] = nxt[k]
    return _lse_vec(alpha)


@njit(cache=True)
def forward_backward(log_init, log_trans, log_obs):
    T, K = log_obs.shape
    la = np.empty((T, K))
    lb = np.empty((T, K))
    work = np.empty(K)
    for k in range(K):
        la[0, k] = log_init[k] + log_obs[0, k]
    for t in range(1, T):
        for k in range(K):
            for j in range(K):
                work[j] = la[t - 1, j] + log_trans[j, k]
            la[t, k] = _lse_vec(work) + log_obs[t, k]
    for k in range(K):
        lb[T - 1, k] = 0.0
    for t in range(T - 2, -1, -1):
        for j in range(K):
            for k in range(K):
                work[k] = log_trans[j, k] + log_obs[t + 1, k] + lb[t + 1, k]
            lb[t, j] = _lse_vec(work)
    ll = _lse_vec(la[T - 1])
    gamma = np.empty((T, K))
    for t in range(T):
        for k in range(K):
            gamma[t, k] = np.exp(la[t, k] + lb[t, k] - ll)
    xi_sum = np.zeros((K, K))
    for t in range(T - 1):
        for j in range(K):
            for k in range(K):
                xi_sum[j, k] += np.exp(
                    la[t, j] + log_trans[j, k] + log_obs[t + 1, k] + lb[t + 1, k] - ll
                )
    return gamma, xi_sum, ll


@njit(cache=True)
def viterbi_path(log_init, log_trans, log_obs):
    T, K = log_obs.shape
    delta = np.empty(K)
    nxt = np.empty(K)
    psi = np.zeros((T, K), dtype=np.int64)
    for k in range(K):
        delta[k] = log_init[k] + log_obs[0, k]
    for t in range(1, T):
        for k in range(K):
            best = -np.inf
            arg = 0
            for j in range(K):
                s = delta[j] + log_trans[j, k]
                if s > best:  # strict: ties keep the lower index
                    best = s
                    arg = j
            psi[t, k] = arg
            nxt[k] = best + log_obs[t, k]
        for k in range(K):
            delta[k] = nxt[k]
    best = -np.inf
    last = 0
    for k in range(K):
        if delta[k] > best:
            best = delta[k]
            last = k
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = last
    for t in range(T - 1, 0, -1):
        path[t - 1] = psi[t, path[t]]
    return path, delta[last]


@njit(cache=True)
def _draw_categorical(logw, u):
    K = logw.shape[0]
    m = -np.inf
    for k in range(K):
        if logw[k] > m:
            m = logw[k]
    if not np.isfinite(m):
        m = 0.0
    total = 0.0
    for k in range(K):
        total += np.exp(logw[k] - m)
    thresh = u * total
    c = 0.0
    for k in range(K):
        c += np.exp(logw[k] - m)
        if c >= thresh:
            return k
    return K - 1


@njit(cache=True)
def ffbs_path(log_init, log_trans, log_obs, uniforms):
    T, K = log_obs.shape
    la = np.empty((T, K))
    work = np.empty(K)
    for k in range(K):
        la[0, k] = log_init[k] + log_obs[0, k]
    for t in range(1, T):
        for k in range(K):
            for j in range(K):
                work[j] = la[t - 1, j] + log_trans[j, k]
            la[t, k] = _lse_vec(work) + log_obs[t, k]
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = _draw_categorical(la[T - 1], uniforms[T - 1])
    for t in range(T - 2, -1, -1):
        for k in range(K):
            work[k] = la[t, k] + log_trans[k, path[t + 1]]
        path[t] = _draw_categorical(work, uniforms[t])
    return path
