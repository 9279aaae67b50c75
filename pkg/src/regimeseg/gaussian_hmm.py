"""Tied-covariance Gaussian HMM baseline: EM fitting, forward likelihood, Viterbi.

Emissions factorize across modality channels: each state holds one 2-D
Gaussian per modality, and within a modality all states share a single
covariance matrix (object-for-object when ``tied_covariance`` is set).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from ._cluster import kmeans_pp_centers
from .core import (
    ConversationSeries,
    GaussianEmission,
    LabelSequence,
    Modality,
    Observation,
    canonical_modalities,
    derive_rng,
    jittered,
)
from .errors import ChannelMismatch, DegenerateInput, EmptyStateCollapse, NumericalUnderflow

_SIMPLEX_TOL = 1e-9
_EMPTY_STATE_MASS = 1e-8
_MAX_RESEEDS = 2


@dataclass(frozen=True)
class HmmModel:
    """Initial distribution, transition matrix, and per-state emissions."""

    initial: np.ndarray
    transitions: np.ndarray
    emissions: tuple[dict[Modality, GaussianEmission], ...]
    tied_covariance: bool = True

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=np.float64)
        trans = np.asarray(self.transitions, dtype=np.float64)
        K = initial.shape[0]
        if trans.shape != (K, K) or len(self.emissions) != K:
            raise ValueError("inconsistent state counts across parameters")
        if np.any(initial < 0) or np.any(trans < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(initial.sum() - 1.0) > _SIMPLEX_TOL:
            raise ValueError("initial distribution must sum to 1")
        if np.any(np.abs(trans.sum(axis=1) - 1.0) > _SIMPLEX_TOL):
            raise ValueError("each transition row must sum to 1")
        mods = canonical_modalities(self.emissions[0])
        for e in self.emissions:
            if canonical_modalities(e) != mods:
                raise ChannelMismatch("all states must share one modality set")
        initial.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "emissions", tuple(self.emissions))

    @property
    def K(self) -> int:
        return self.initial.shape[0]

    @property
    def modalities(self) -> tuple[Modality, ...]:
        return canonical_modalities(self.emissions[0])

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """Emission parameters as (means[K,M,2], covs[K,M,2,2]) arrays."""
        mods = self.modalities
        K, M = self.K, len(mods)
        means = np.empty((K, M, 2))
        covs = np.empty((K, M, 2, 2))
        for k in range(K):
            for j, m in enumerate(mods):
                means[k, j] = self.emissions[k][m].mean
                covs[k, j] = self.emissions[k][m].cov
        return means, covs


@dataclass(frozen=True)
class EmConfig:
    """EM fitting knobs. K is fixed by the caller."""

    K: int
    max_iters: int = 200
    tol: float = 1e-6
    n_restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")


class EmFit(NamedTuple):
    """EM result: the fitted model, its final log-likelihood, and the
    per-iteration log-likelihood trace of the winning restart."""

    model: HmmModel
    loglik: float
    trace: list[float]


def _check_channels(model: HmmModel, modalities) -> None:
    if tuple(model.modalities) != tuple(modalities):
        raise ChannelMismatch(
            f"model modalities {model.modalities} != series modalities {tuple(modalities)}"
        )


def emission_loglik(model: HmmModel, obs: Observation, state: int) -> float:
    """Sum of per-modality Gaussian log-densities for one observation."""
    if not 0 <= state < model.K:
        raise ValueError(f"state {state} out of range for K={model.K}")
    _check_channels(model, obs.modalities)
    x = np.array([[obs.channels[m].as_array() for m in model.modalities]])
    means, covs = model.packed()
    return float(kernels.log_obs_matrix(x, means, covs)[0, state])


def _log_obs_for(model: HmmModel, series: ConversationSeries) -> np.ndarray:
    _check_channels(model, series.modalities)
    means, covs = model.packed()
    return kernels.log_obs_matrix(series.values, means, covs)


def _safe_log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


def forward_loglik(model: HmmModel, series: ConversationSeries) -> float:
    """Exact log p(X | model), marginalizing over all state paths."""
    log_obs = _log_obs_for(model, series)
    ll = kernels.forward_loglik(_safe_log(model.initial), _safe_log(model.transitions), log_obs)
    if not math.isfinite(ll):
        raise NumericalUnderflow("forward recursion produced a non-finite log-likelihood")
    return float(ll)


def viterbi(model: HmmModel, series: ConversationSeries) -> tuple[LabelSequence, float]:
    """Most probable state path and its joint log-probability."""
    log_obs = _log_obs_for(model, series)
    path, path_ll = kernels.viterbi_path(
        _safe_log(model.initial), _safe_log(model.transitions), log_obs
    )
    return LabelSequence(path), float(path_ll)


def _build_model(means, covs, initial, transitions, modalities, tied) -> HmmModel:
    K = means.shape[0]
    emissions = []
    shared = {j: covs[0, j].copy() for j in range(len(modalities))} if tied else None
    for k in range(K):
        per_mod = {}
        for j, m in enumerate(modalities):
            cov = shared[j] if tied else covs[k, j]
            per_mod[m] = GaussianEmission(mean=means[k, j].copy(), cov=cov)
        emissions.append(per_mod)
    return HmmModel(
        initial=initial, transitions=transitions, emissions=tuple(emissions), tied_covariance=tied
    )


def _init_params(values, K, rng):
    T, M, _ = values.shape
    centers = kmeans_pp_centers(values.reshape(T, -1), K, rng)
    means = centers.reshape(K, M, 2)
    covs = np.empty((K, M, 2, 2))
    for j in range(M):
        cov = jittered(np.cov(values[:, j, :].T, bias=True))
        covs[:, j] = cov
    if K == 1:
        transitions = np.ones((1, 1))
    else:
        self_mass = 0.8
        transitions = np.full((K, K), (1.0 - self_mass) / (K - 1))
        np.fill_diagonal(transitions, self_mass)
    initial = np.full(K, 1.0 / K)
    return means, covs, initial, transitions


def _em_single_run(values, K, cfg, rng):
    """One EM run. Returns (params tuple, final loglik, loglik trace)."""
    T, M, _ = values.shape
    means, covs, initial, transitions = _init_params(values, K, rng)
    trace: list[float] = []
    prev_ll = -np.inf
    reseeds = np.zeros(K, dtype=np.int64)
    iters = 0
    while iters < cfg.max_iters:
        log_obs = kernels.log_obs_matrix(values, means, covs)
        gamma, xi_sum, ll = kernels.forward_backward(
            _safe_log(initial), _safe_log(transitions), log_obs
        )
        if not math.isfinite(ll):
            raise NumericalUnderflow("EM E-step produced a non-finite log-likelihood")
        weights = gamma.sum(axis=0)
        collapsed = np.flatnonzero(weights < _EMPTY_STATE_MASS)
        if collapsed.size:
            # Re-seed each collapsed state's mean at the worst-fit utterance.
            for k in collapsed:
                reseeds[k] += 1
                if reseeds[k] > _MAX_RESEEDS:
                    raise EmptyStateCollapse(
                        f"state {k} stayed empty after {_MAX_RESEEDS} re-seeds"
                    )
                worst = int(np.argmin(log_obs.max(axis=1)))
                means[k] = values[worst]
            prev_ll = -np.inf
            continue
        trace.append(ll)
        iters += 1
        # M-step
        initial = gamma[0] / gamma[0].sum()
        if K == 1:
            transitions = np.ones((1, 1))
        else:
            rows = xi_sum.sum(axis=1, keepdims=True)
            transitions = np.where(rows > 0, xi_sum / np.where(rows > 0, rows, 1.0), 1.0 / K)
        means = np.einsum("tk,tmd->kmd", gamma, values) / weights[:, None, None]
        for j in range(M):
            acc = np.zeros((2, 2))
            for k in range(K):
                diff = values[:, j, :] - means[k, j]
                acc += np.einsum("t,ti,tj->ij", gamma[:, k], diff, diff)
            covs[:, j] = jittered(acc / T)
        if ll - prev_ll <= cfg.tol * abs(prev_ll) and iters > 1:
            break
        prev_ll = ll
    final_ll = trace[-1] if trace else -np.inf
    return (means, covs, initial, transitions), final_ll, trace


def fit_em(series: ConversationSeries, cfg: EmConfig) -> EmFit:
    """Baum-Welch with tied per-modality covariance; best of ``n_restarts``."""
    if len(series) < 2:
        raise DegenerateInput(f"EM needs T >= 2, got T={len(series)}")
    values = series.values
    best = None
    for r in range(cfg.n_restarts):
        rng = derive_rng(cfg.seed, r)
        params, ll, trace = _em_single_run(values, cfg.K, cfg, rng)
        if best is None or ll > best[1]:
            best = (params, ll, trace)
    (means, covs, initial, transitions), ll, trace = best
    model = _build_model(means, covs, initial, transitions, series.modalities, tied=True)
    return EmFit(model=model, loglik=float(ll), trace=trace)


def fit_em_pooled(series_list: list[ConversationSeries], cfg: EmConfig) -> EmFit:
    """Fit one model on several conversations, resetting the chain per series.

    Off by default in the CLI; the standard workflow fits each conversation
    independently.
    """
    if not series_list:
        raise DegenerateInput("no conversations to fit")
    mods = series_list[0].modalities
    for s in series_list:
        if s.modalities != mods:
            raise ChannelMismatch("pooled fit requires one shared channel set")
    if sum(len(s) for s in series_list) < 2:
        raise DegenerateInput("pooled EM needs at least 2 utterances")
    all_values = np.concatenate([s.values for s in series_list], axis=0)
    best = None
    for r in range(cfg.n_restarts):
        rng = derive_rng(cfg.seed, r)
        result = _em_pooled_run([s.values for s in series_list], all_values, cfg, rng)
        if best is None or result[1] > best[1]:
            best = result
    (means, covs, initial, transitions), ll, trace = best
    model = _build_model(means, covs, initial, transitions, mods, tied=True)
    return EmFit(model=model, loglik=float(ll), trace=trace)


def _em_pooled_run(values_list, all_values, cfg, rng):
    K = cfg.K
    M = all_values.shape[1]
    T_total = all_values.shape[0]
    means, covs, initial, transitions = _init_params(all_values, K, rng)
    trace: list[float] = []
    prev_ll = -np.inf
    for _ in range(cfg.max_iters):
        gamma_list = []
        xi_total = np.zeros((K, K))
        ll = 0.0
        for vals in values_list:
            log_obs = kernels.log_obs_matrix(vals, means, covs)
            gamma, xi_sum, part = kernels.forward_backward(
                _safe_log(initial), _safe_log(transitions), log_obs
            )
            gamma_list.append(gamma)
            xi_total += xi_sum
            ll += part
        if not math.isfinite(ll):
            raise NumericalUnderflow("pooled EM produced a non-finite log-likelihood")
        trace.append(ll)
        gamma_all = np.concatenate(gamma_list, axis=0)
        weights = gamma_all.sum(axis=0)
        if np.any(weights < _EMPTY_STATE_MASS):
            raise EmptyStateCollapse("a state lost all mass during pooled EM")
        first = np.sum([g[0] for g in gamma_list], axis=0)
        initial = first / first.sum()
        if K == 1:
            transitions = np.ones((1, 1))
        else:
            rows = xi_total.sum(axis=1, keepdims=True)
            transitions = np.where(rows > 0, xi_total / np.where(rows > 0, rows, 1.0), 1.0 / K)
        means = np.einsum("tk,tmd->kmd", gamma_all, all_values) / weights[:, None, None]
        for j in range(M):
            acc = np.zeros((2, 2))
            for k in range(K):
                diff = all_values[:, j, :] - means[k, j]
                acc += np.einsum("t,ti,tj->ij", gamma_all[:, k], diff, diff)
            covs[:, j] = jittered(acc / T_total)
        if ll - prev_ll <= cfg.tol * abs(prev_ll) and len(trace) > 1:
            break
        prev_ll = ll
    return (means, covs, initial, transitions), trace[-1], trace
