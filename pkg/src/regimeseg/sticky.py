"""Truncated sticky factorial HDP-HMM with blocked Gibbs inference.

The infinite state space is truncated at ``k_max`` states so every
conditional stays a finite Dirichlet (weak-limit approximation). One sweep
updates, in fixed order:

1. the state path z, by forward filtering / backward sampling;
2. auxiliary table counts m and self-transition override counts w, via
   sequential restaurant-style draws;
3. the global weights beta, from a Dirichlet over override-corrected
   column table totals;
4. the transition rows (plus the initial-state row), each a Dirichlet with
   concentration alpha*beta + kappa on the self-slot plus transition counts;
5. per-state per-modality Gaussian emissions from their conjugate
   normal-inverse-Wishart posteriors;
6. the concentrations (alpha+kappa) and gamma via the usual
   auxiliary-variable scheme, and the stickiness fraction
   rho = kappa/(alpha+kappa) from its Beta posterior over override counts.

All randomness flows through one generator owned by ``fit``, so identical
seeds give bit-identical posteriors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._cluster import kmeans
from .core import (
    ConversationSeries,
    GaussianEmission,
    LabelSequence,
    Modality,
    jittered,
    seeded_rng,
)
from .errors import EmptySeries, NumericalUnderflow

_CONC_FLOOR = 1e-12  # Dirichlet parameters must stay positive


@dataclass(frozen=True)
class HyperPriors:
    """Priors for the concentration hyperparameters.

    Gamma(shape, rate) on alpha+kappa and on gamma; Beta(a, b) on
    rho = kappa / (alpha + kappa).
    """

    trans_shape: float = 1.0
    trans_rate: float = 0.01
    top_shape: float = 1.0
    top_rate: float = 0.01
    sticky_a: float = 10.0
    sticky_b: float = 1.0

    def __post_init__(self):
        for name in ("trans_shape", "trans_rate", "top_shape", "top_rate", "sticky_a", "sticky_b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class StickyConfig:
    """Sampler configuration."""

    k_max: int = 8
    burn_in: int = 500
    n_samples: int = 500
    thin: int = 1
    seed: int = 0
    sample_hypers: bool = True
    fixed_hypers: tuple[float, float, float] | None = None
    hyper_priors: HyperPriors = field(default_factory=HyperPriors)

    def __post_init__(self):
        if self.k_max < 2:
            raise ValueError("k_max must be >= 2")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not self.sample_hypers and self.fixed_hypers is None:
            raise ValueError("fixed_hypers required when sample_hypers is False")
        if self.fixed_hypers is not None:
            a, k, g = self.fixed_hypers
            if a <= 0 or k < 0 or g <= 0:
                raise ValueError("fixed hypers need alpha > 0, kappa >= 0, gamma > 0")


@dataclass(frozen=True)
class NiwPrior:
    """Normal-inverse-Wishart prior for one 2-D Gaussian channel."""

    mu0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    lam0: float = 0.5
    psi0: np.ndarray = field(default_factory=lambda: 0.75 * np.eye(2))
    nu0: float = 4.0

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=np.float64)
        psi0 = np.asarray(self.psi0, dtype=np.float64)
        if mu0.shape != (2,) or psi0.shape != (2, 2):
            raise ValueError("prior must be 2-dimensional")
        if self.lam0 <= 0:
            raise ValueError("lam0 must be > 0")
        if self.nu0 <= 1.0:
            raise ValueError("nu0 must exceed d - 1 = 1")
        np.linalg.cholesky(psi0)
        mu0.setflags(write=False)
        psi0.setflags(write=False)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "psi0", psi0)


@dataclass
class SamplerState:
    """Mutable snapshot of one Gibbs chain.

    z over {0..K-1}; beta on the simplex; pi row-stochastic (K, K) with
    ``init`` the initial-state row; emissions as packed (K, M, 2) means and
    (K, M, 2, 2) covariances; m the table counts and w the per-state
    override counts.
    """

    z: np.ndarray
    beta: np.ndarray
    pi: np.ndarray
    init: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    alpha: float
    kappa: float
    gamma: float
    m: np.ndarray
    w: np.ndarray
    modalities: tuple[Modality, ...]

    @property
    def k_max(self) -> int:
        return self.beta.shape[0]

    @property
    def hypers(self) -> tuple[float, float, float]:
        return (self.alpha, self.kappa, self.gamma)

    @property
    def emissions(self) -> tuple[dict[Modality, GaussianEmission], ...]:
        out = []
        for k in range(self.k_max):
            out.append(
                {
                    m: GaussianEmission(mean=self.means[k, j].copy(), cov=self.covs[k, j].copy())
                    for j, m in enumerate(self.modalities)
                }
            )
        return tuple(out)


@dataclass(frozen=True)
class SampleSnapshot:
    """One retained posterior sample."""

    z: np.ndarray
    beta: np.ndarray
    pi: np.ndarray
    init: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    alpha: float
    kappa: float
    gamma: float


@dataclass(frozen=True)
class StickyPosterior:
    """Retained samples, posterior means, and the reported decode.

    Reported regime indices are renumbered in ascending order of the
    posterior-mean valence averaged across modalities; ``regime_order``
    maps reported index -> sampler state index.
    """

    samples: tuple[SampleSnapshot, ...]
    mean_beta: np.ndarray
    mean_pi: np.ndarray
    mean_init: np.ndarray
    mean_means: np.ndarray
    mean_covs: np.ndarray
    labels: LabelSequence
    effective_k: int
    regime_order: tuple[int, ...]
    loglik_trace: np.ndarray
    modalities: tuple[Modality, ...]
    k_max: int

    def regime_va(self, reported_index: int) -> tuple[float, float]:
        """Posterior-mean (valence, arousal) of a reported regime, averaged
        across modalities."""
        state = self.regime_order[reported_index]
        return (
            float(self.mean_means[state, :, 0].mean()),
            float(self.mean_means[state, :, 1].mean()),
        )


def transition_counts(z: np.ndarray, k: int) -> np.ndarray:
    """n[j, k] = number of j -> k steps in z."""
    n = np.zeros((k, k), dtype=np.int64)
    if z.shape[0] >= 2:
        np.add.at(n, (z[:-1], z[1:]), 1)
    return n


def _prior_mean_hypers(cfg: StickyConfig) -> tuple[float, float, float]:
    if cfg.fixed_hypers is not None:
        return cfg.fixed_hypers
    hp = cfg.hyper_priors
    conc = hp.trans_shape / hp.trans_rate
    rho = hp.sticky_a / (hp.sticky_a + hp.sticky_b)
    gamma = hp.top_shape / hp.top_rate
    return ((1.0 - rho) * conc, rho * conc, gamma)


def init_sampler(
    series: ConversationSeries,
    cfg: StickyConfig,
    prior: NiwPrior,
    rng: np.random.Generator | None = None,
) -> SamplerState:
    """Deterministic-in-seed initialisation: k-means path, uniform beta,
    prior-drawn rows, NIW-posterior emissions, prior-mean hypers."""
    if len(series) < 1:
        raise EmptySeries(f"series {series.id!r} is empty")
    if rng is None:
        rng = seeded_rng(cfg.seed)
    K = cfg.k_max
    T = len(series)
    n_init = min(K, -(-T // 4))  # ceil(T/4), capped at the truncation level
    z, _ = kmeans(series.stacked(), n_init, rng)
    alpha, kappa, gamma = _prior_mean_hypers(cfg)
    beta = np.full(K, 1.0 / K)
    state = SamplerState(
        z=z.astype(np.int64),
        beta=beta,
        pi=np.empty((K, K)),
        init=np.empty(K),
        means=np.zeros((K, len(series.modalities), 2)),
        covs=np.zeros((K, len(series.modalities), 2, 2)),
        alpha=float(alpha),
        kappa=float(kappa),
        gamma=float(gamma),
        m=np.zeros((K, K), dtype=np.int64),
        w=np.zeros(K, dtype=np.int64),
        modalities=series.modalities,
    )
    state.pi, state.init = _draw_rows(state, transition_counts(np.empty(0, np.int64), K), None, rng)
    state.means, state.covs = sample_emissions(state, series, prior, rng)
    return state


def sample_state_sequence(
    state: SamplerState, series: ConversationSeries, rng: np.random.Generator
) -> LabelSequence:
    """One exact blocked draw of z given the current parameters."""
    log_obs = kernels.log_obs_matrix(series.values, state.means, state.covs)
    return LabelSequence(_draw_path(state, log_obs, rng))


def _draw_path(state: SamplerState, log_obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.pi)
        log_init = np.log(state.init)
    path = kernels.ffbs_path(log_init, log_pi, log_obs, rng.random(log_obs.shape[0]))
    if path.min() < 0:
        raise NumericalUnderflow("state sequence draw underflowed")
    return path


def sample_tables(
    state: SamplerState, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Auxiliary table counts m and sticky override counts w.

    For each (j, k): n customers sit at tables opened with weight
    a = alpha*beta_k + kappa*[j==k]; customer i opens a new table with
    probability a / (a + i). Self-transition tables are then flagged as
    overrides with probability rho / (rho + beta_j (1 - rho)).
    """
    K = state.k_max
    n = transition_counts(state.z, K)
    conc = state.alpha * state.beta[None, :] + state.kappa * np.eye(K)
    m = np.zeros((K, K), dtype=np.int64)
    for j in range(K):
        for k in range(K):
            count = int(n[j, k])
            if count == 0:
                continue
            a = conc[j, k]
            opened = 1
            if count > 1:
                u = rng.random(count - 1)
                opened += int((u < a / (a + np.arange(1, count))).sum())
            m[j, k] = opened
    w = np.zeros(K, dtype=np.int64)
    total = state.alpha + state.kappa
    rho = state.kappa / total if total > 0 else 0.0
    if rho > 0:
        for j in range(K):
            if m[j, j] > 0:
                p = rho / (rho + state.beta[j] * (1.0 - rho))
                w[j] = rng.binomial(m[j, j], p)
    return m, w


def sample_beta(state: SamplerState, rng: np.random.Generator) -> np.ndarray:
    """Global weights from the override-corrected column table totals."""
    K = state.k_max
    mbar = state.m.astype(np.float64).copy()
    mbar[np.diag_indices(K)] -= state.w
    conc = state.gamma / K + mbar.sum(axis=0)
    return rng.dirichlet(np.maximum(conc, _CONC_FLOOR))


def sample_transition_rows(
    state: SamplerState, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Rows of the transition matrix plus the initial-state row.

    Row j ~ Dirichlet(alpha*beta + kappa*e_j + n_j.); the initial row has no
    sticky mass and sees the single initial-state count.
    """
    K = state.k_max
    n = transition_counts(state.z, K)
    return _draw_rows(state, n, int(state.z[0]) if state.z.shape[0] else None, rng)


def _draw_rows(state, n, first_state, rng):
    K = state.k_max
    base = state.alpha * state.beta
    pi = np.empty((K, K))
    for j in range(K):
        conc = base + n[j]
        conc[j] += state.kappa
        pi[j] = rng.dirichlet(np.maximum(conc, _CONC_FLOOR))
    init_conc = base.copy()
    if first_state is not None:
        init_conc[first_state] += 1.0
    init = rng.dirichlet(np.maximum(init_conc, _CONC_FLOOR))
    return pi, init


def niw_posterior(prior: NiwPrior, points: np.ndarray):
    """Conjugate update: returns (mu_n, lam_n, psi_n, nu_n).

    psi_n = psi0 + scatter + lam0*n/(lam0+n) * (xbar-mu0)(xbar-mu0)^T.
    With no points the prior is returned unchanged.
    """
    n = points.shape[0]
    if n == 0:
        return prior.mu0.copy(), prior.lam0, prior.psi0.copy(), prior.nu0
    xbar = points.mean(axis=0)
    centered = points - xbar
    scatter = centered.T @ centered
    lam_n = prior.lam0 + n
    nu_n = prior.nu0 + n
    mu_n = (prior.lam0 * prior.mu0 + n * xbar) / lam_n
    dm = xbar - prior.mu0
    psi_n = prior.psi0 + scatter + (prior.lam0 * n / lam_n) * np.outer(dm, dm)
    return mu_n, lam_n, psi_n, nu_n


def _sample_invwishart(rng: np.random.Generator, psi: np.ndarray, nu: float) -> np.ndarray:
    """Inverse-Wishart draw via the Bartlett decomposition (d = 2)."""
    L = np.linalg.cholesky(np.linalg.inv(psi))
    A = np.zeros((2, 2))
    A[0, 0] = math.sqrt(rng.chisquare(nu))
    A[1, 1] = math.sqrt(rng.chisquare(nu - 1.0))
    A[1, 0] = rng.standard_normal()
    B = L @ A
    W = B @ B.T
    det = W[0, 0] * W[1, 1] - W[0, 1] * W[1, 0]
    return np.array([[W[1, 1], -W[0, 1]], [-W[1, 0], W[0, 0]]]) / det


def sample_emissions(
    state: SamplerState,
    series: ConversationSeries,
    prior: NiwPrior,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-state, per-modality NIW posterior draws given the current z.

    States with no assigned observations draw from the prior.
    """
    K = state.k_max
    M = len(series.modalities)
    means = np.empty((K, M, 2))
    covs = np.empty((K, M, 2, 2))
    for k in range(K):
        assigned = series.values[state.z == k]
        for j in range(M):
            mu_n, lam_n, psi_n, nu_n = niw_posterior(prior, assigned[:, j, :])
            cov = jittered(_sample_invwishart(rng, psi_n, nu_n))
            chol = np.linalg.cholesky(cov)
            mean = mu_n + (chol @ rng.standard_normal(2)) / math.sqrt(lam_n)
            means[k, j] = mean
            covs[k, j] = cov
    return means, covs


def _resample_concentration(rng, value, group_sizes, total_tables, shape, rate, n_iter=5):
    """Auxiliary-variable Gibbs update for a DP concentration parameter."""
    group_sizes = np.asarray(group_sizes, dtype=np.float64)
    if group_sizes.size == 0 or total_tables == 0:
        return float(rng.gamma(shape) / rate)
    for _ in range(n_iter):
        x = rng.beta(value + 1.0, group_sizes)
        s = rng.random(group_sizes.size) * (value + group_sizes) < group_sizes
        new_shape = shape + total_tables - s.sum()
        new_rate = rate - np.log(x).sum()
        value = float(rng.gamma(new_shape) / new_rate)
    return value


def sample_hypers(
    state: SamplerState, cfg: StickyConfig, rng: np.random.Generator
) -> tuple[float, float, float]:
    """Resample (alpha, kappa, gamma); passthrough when disabled.

    alpha+kappa conditions on per-state transition customers and table
    counts; gamma on override-corrected table totals and occupied columns;
    rho on the override counts.
    """
    if not cfg.sample_hypers:
        return cfg.fixed_hypers
    hp = cfg.hyper_priors
    K = state.k_max
    n = transition_counts(state.z, K)
    customers = n.sum(axis=1)
    valid = customers > 0
    conc = _resample_concentration(
        rng,
        state.alpha + state.kappa,
        customers[valid],
        int(state.m.sum(axis=1)[valid].sum()),
        hp.trans_shape,
        hp.trans_rate,
    )
    mbar = state.m.astype(np.float64).copy()
    mbar[np.diag_indices(K)] -= state.w
    mbar_total = mbar.sum()
    occupied_dishes = int((mbar.sum(axis=0) > 0).sum())
    gamma = _resample_concentration(
        rng,
        state.gamma,
        np.array([mbar_total]) if mbar_total > 0 else np.empty(0),
        occupied_dishes,
        hp.top_shape,
        hp.top_rate,
    )
    W = float(state.w.sum())
    total_m = float(state.m.sum())
    rho = float(rng.beta(hp.sticky_a + W, hp.sticky_b + total_m - W))
    return ((1.0 - rho) * conc, rho * conc, gamma)


def _joint_loglik(state: SamplerState, log_obs: np.ndarray) -> float:
    """log p(x, z | current parameters)."""
    z = state.z
    with np.errstate(divide="ignore"):
        ll = float(np.log(state.init[z[0]]))
        if z.shape[0] >= 2:
            ll += float(np.log(state.pi[z[:-1], z[1:]]).sum())
    ll += float(log_obs[np.arange(z.shape[0]), z].sum())
    return ll


def fit(series: ConversationSeries, cfg: StickyConfig, prior: NiwPrior) -> StickyPosterior:
    """Run the blocked Gibbs sampler and report the posterior-mean decode.

    Executes burn_in + n_samples*thin sweeps in the fixed order
    z -> tables -> beta -> rows -> emissions -> hypers, retaining every
    ``thin``-th state after burn-in.
    """
    if len(series) < 1:
        raise EmptySeries(f"series {series.id!r} is empty")
    rng = seeded_rng(cfg.seed)
    state = init_sampler(series, cfg, prior, rng=rng)
    total_sweeps = cfg.burn_in + cfg.n_samples * cfg.thin
    samples: list[SampleSnapshot] = []
    trace = np.empty(total_sweeps)
    log_obs = kernels.log_obs_matrix(series.values, state.means, state.covs)
    for sweep in range(total_sweeps):
        state.z = _draw_path(state, log_obs, rng)
        state.m, state.w = sample_tables(state, rng)
        state.beta = sample_beta(state, rng)
        state.pi, state.init = sample_transition_rows(state, rng)
        state.means, state.covs = sample_emissions(state, series, prior, rng)
        state.alpha, state.kappa, state.gamma = sample_hypers(state, cfg, rng)
        log_obs = kernels.log_obs_matrix(series.values, state.means, state.covs)
        trace[sweep] = _joint_loglik(state, log_obs)
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0:
            samples.append(
                SampleSnapshot(
                    z=state.z.copy(),
                    beta=state.beta.copy(),
                    pi=state.pi.copy(),
                    init=state.init.copy(),
                    means=state.means.copy(),
                    covs=state.covs.copy(),
                    alpha=state.alpha,
                    kappa=state.kappa,
                    gamma=state.gamma,
                )
            )
    return _summarize(samples, trace, series, cfg)


def _summarize(samples, trace, series, cfg) -> StickyPosterior:
    mean_beta = np.mean([s.beta for s in samples], axis=0)
    mean_pi = np.mean([s.pi for s in samples], axis=0)
    mean_init = np.mean([s.init for s in samples], axis=0)
    mean_means = np.mean([s.means for s in samples], axis=0)
    mean_covs = np.mean([s.covs for s in samples], axis=0)
    labels, order = decode_posterior_mean(
        series, mean_init, mean_pi, mean_means, mean_covs
    )
    return StickyPosterior(
        samples=tuple(samples),
        mean_beta=mean_beta,
        mean_pi=mean_pi,
        mean_init=mean_init,
        mean_means=mean_means,
        mean_covs=mean_covs,
        labels=labels,
        effective_k=len(order),
        regime_order=order,
        loglik_trace=np.asarray(trace),
        modalities=series.modalities,
        k_max=cfg.k_max,
    )


def decode_posterior_mean(series, mean_init, mean_pi, mean_means, mean_covs):
    """Viterbi under the posterior means, renumbered by ascending valence.

    Returns (labels, regime_order) where regime_order[i] is the sampler
    state behind reported regime i.
    """
    log_obs = kernels.log_obs_matrix(series.values, mean_means, mean_covs)
    with np.errstate(divide="ignore"):
        path, _ = kernels.viterbi_path(np.log(mean_init), np.log(mean_pi), log_obs)
    occupied = np.unique(path)
    valence = mean_means[:, :, 0].mean(axis=1)
    order = tuple(int(k) for k in sorted(occupied, key=lambda k: (valence[k], k)))
    relabel = {state: i for i, state in enumerate(order)}
    reported = np.array([relabel[int(s)] for s in path], dtype=np.int64)
    return LabelSequence(reported), order
