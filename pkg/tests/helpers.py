"""Shared test oracles: brute-force enumeration and independent densities.

These deliberately avoid the package's own recursion and density code so
the checks stay dual-route: enumeration over all K^T paths, and Gaussian
log-densities via scipy.
"""

import itertools

import numpy as np
from scipy.stats import multivariate_normal

from regimeseg.core import ConversationSeries, GaussianEmission, Modality
from regimeseg.gaussian_hmm import HmmModel

MODS = (Modality.TEXT, Modality.AUDIO, Modality.VIDEO)


def scipy_log_obs(values, means, covs):
    """Emission log-liks via scipy, shape (T, K)."""
    T, M, _ = values.shape
    K = means.shape[0]
    out = np.zeros((T, K))
    for k in range(K):
        for m in range(M):
            out[:, k] += multivariate_normal(mean=means[k, m], cov=covs[k, m]).logpdf(
                values[:, m, :]
            )
    return out


def enumerate_forward(log_init, log_trans, log_obs):
    """log-sum over every state path."""
    T, K = log_obs.shape
    total = -np.inf
    for path in itertools.product(range(K), repeat=T):
        lp = log_init[path[0]] + log_obs[0, path[0]]
        for t in range(1, T):
            lp += log_trans[path[t - 1], path[t]] + log_obs[t, path[t]]
        total = np.logaddexp(total, lp)
    return total


def enumerate_viterbi(log_init, log_trans, log_obs):
    """argmax path with lowest-lexicographic tie-break, plus its log-prob."""
    T, K = log_obs.shape
    best, best_lp = None, -np.inf
    for path in itertools.product(range(K), repeat=T):
        lp = log_init[path[0]] + log_obs[0, path[0]]
        for t in range(1, T):
            lp += log_trans[path[t - 1], path[t]] + log_obs[t, path[t]]
        if lp > best_lp:
            best, best_lp = path, lp
    return np.array(best), best_lp


def random_model_and_series(rng, K=None, T=None, n_mods=None, conv_id="t"):
    """A random HmmModel and a matching (already-flagged) series."""
    K = K or int(rng.integers(1, 4))
    T = T or int(rng.integers(2, 9))
    n_mods = n_mods or int(rng.integers(1, 4))
    mods = MODS[:n_mods]
    initial = rng.dirichlet(np.ones(K))
    transitions = rng.dirichlet(np.ones(K), size=K)
    means = rng.normal(scale=1.5, size=(K, n_mods, 2))
    covs = np.empty((K, n_mods, 2, 2))
    emissions = []
    for k in range(K):
        per = {}
        for j, m in enumerate(mods):
            a = rng.normal(scale=0.6, size=(2, 2))
            cov = a @ a.T + 0.3 * np.eye(2)
            covs[k, j] = cov
            per[m] = GaussianEmission(mean=means[k, j], cov=cov)
        emissions.append(per)
    model = HmmModel(
        initial=initial,
        transitions=transitions,
        emissions=tuple(emissions),
        tied_covariance=False,
    )
    values = rng.normal(scale=1.2, size=(T, n_mods, 2))
    series = ConversationSeries(id=conv_id, modalities=mods, values=values, standardized=True)
    return model, series, means, covs
