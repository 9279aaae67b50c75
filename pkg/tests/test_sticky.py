"""Distributional and structural checks for the sticky HDP-HMM sampler."""

import itertools
import math

import numpy as np
import pytest
from scipy.stats import chisquare, kstest

from regimeseg.core import ConversationSeries, Modality, seeded_rng, standardize
from regimeseg.kernels import log_obs_matrix
from regimeseg.metrics import temporal_stats
from regimeseg.sticky import (
    HyperPriors,
    NiwPrior,
    SamplerState,
    StickyConfig,
    fit,
    init_sampler,
    niw_posterior,
    sample_beta,
    sample_emissions,
    sample_hypers,
    sample_state_sequence,
    sample_tables,
    sample_transition_rows,
    transition_counts,
)
from regimeseg.synthetic import SynthConfig, generate


def make_state(z, K, beta=None, alpha=1.0, kappa=0.0, gamma=1.0, n_mods=1,
               means=None, covs=None, m=None, w=None):
    z = np.asarray(z, dtype=np.int64)
    return SamplerState(
        z=z,
        beta=np.full(K, 1.0 / K) if beta is None else np.asarray(beta, float),
        pi=np.full((K, K), 1.0 / K),
        init=np.full(K, 1.0 / K),
        means=np.zeros((K, n_mods, 2)) if means is None else means,
        covs=np.tile(np.eye(2), (K, n_mods, 1, 1)) if covs is None else covs,
        alpha=alpha,
        kappa=kappa,
        gamma=gamma,
        m=np.zeros((K, K), dtype=np.int64) if m is None else np.asarray(m, np.int64),
        w=np.zeros(K, dtype=np.int64) if w is None else np.asarray(w, np.int64),
        modalities=(Modality.TEXT, Modality.AUDIO, Modality.VIDEO)[:n_mods],
    )


def series_of(values, n_mods=1):
    mods = (Modality.TEXT, Modality.AUDIO, Modality.VIDEO)[:n_mods]
    return ConversationSeries("s", mods, values, standardized=True)


# ------------------------------------------------------------- init_sampler


def test_init_caps_initial_cluster_count():
    rng = seeded_rng(0)
    series = series_of(rng.normal(size=(20, 1, 2)))
    state = init_sampler(series, StickyConfig(k_max=8, seed=1), NiwPrior())
    assert np.unique(state.z).size <= 5  # ceil(20/4)


def test_init_beta_uniform_and_rows_simplex():
    rng = seeded_rng(1)
    series = series_of(rng.normal(size=(30, 1, 2)))
    state = init_sampler(series, StickyConfig(k_max=8, seed=2), NiwPrior())
    assert np.allclose(state.beta, 1.0 / 8)
    assert state.beta.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(state.pi.sum(axis=1), 1.0, atol=1e-12)
    assert state.init.sum() == pytest.approx(1.0, abs=1e-12)


def test_init_deterministic_in_seed():
    rng = seeded_rng(2)
    series = series_of(rng.normal(size=(25, 1, 2)))
    a = init_sampler(series, StickyConfig(k_max=6, seed=3), NiwPrior())
    b = init_sampler(series, StickyConfig(k_max=6, seed=3), NiwPrior())
    assert np.array_equal(a.z, b.z)
    assert np.array_equal(a.pi, b.pi)
    assert np.array_equal(a.means, b.means)


# --------------------------------------------------- sample_state_sequence


def test_ffbs_absorbing_chain_constant():
    rng = seeded_rng(3)
    state = make_state([0, 0, 0], K=2)
    state.pi = np.eye(2)
    state.init = np.array([1.0, 0.0])
    series = series_of(rng.normal(size=(10, 1, 2)))
    for _ in range(5):
        z = sample_state_sequence(state, series, rng)
        assert np.all(z.labels == 0)


def test_ffbs_emission_free_limit_follows_chain_law():
    # identical emissions in every state: the posterior is the prior chain
    rng = seeded_rng(4)
    K, T = 2, 4
    state = make_state([0] * T, K=K)
    state.pi = np.array([[0.8, 0.2], [0.3, 0.7]])
    state.init = np.array([0.6, 0.4])
    series = series_of(rng.normal(size=(T, 1, 2)))
    n_draws = 20000
    counts = np.zeros(2**T)
    for _ in range(n_draws):
        z = sample_state_sequence(state, series, rng).labels
        counts[int("".join(map(str, z)), 2)] += 1
    probs = np.empty(2**T)
    for i, path in enumerate(itertools.product(range(K), repeat=T)):
        p = state.init[path[0]]
        for t in range(1, T):
            p *= state.pi[path[t - 1], path[t]]
        probs[i] = p
    result = chisquare(counts, probs * n_draws)
    assert result.pvalue > 0.001


# ------------------------------------------------------------ sample_tables


def test_tables_zero_and_single_customers():
    rng = seeded_rng(5)
    state = make_state([0, 1], K=2, alpha=2.0)  # one 0->1 transition only
    m, w = sample_tables(state, rng)
    assert m[0, 1] == 1
    assert m[0, 0] == 0 and m[1, 0] == 0 and m[1, 1] == 0
    n = transition_counts(state.z, 2)
    assert np.all(m[n == 0] == 0)


def test_tables_match_stirling_law():
    # n=3 customers at weight a=1: P(m) = |s(3, m)| / 6 = (2, 3, 1)/6
    rng = seeded_rng(6)
    state = make_state([0, 1, 1, 1, 1], K=2, alpha=2.0, beta=[0.5, 0.5])
    n_draws = 30000
    counts = {1: 0, 2: 0, 3: 0}
    for _ in range(n_draws):
        m, _ = sample_tables(state, rng)
        counts[int(m[1, 1])] += 1
    want = np.array([2, 3, 1]) / 6
    got = np.array([counts[1], counts[2], counts[3]]) / n_draws
    se = np.sqrt(want * (1 - want) / n_draws)
    assert np.all(np.abs(got - want) <= 3 * se)


def test_override_counts_bounded_by_diagonal_tables():
    rng = seeded_rng(7)
    state = make_state([0, 0, 0, 0, 1, 1, 1], K=2, alpha=1.0, kappa=5.0)
    for _ in range(50):
        m, w = sample_tables(state, rng)
        assert np.all(w >= 0)
        assert np.all(w <= np.diag(m))


# -------------------------------------------------------------- sample_beta


def test_beta_symmetric_prior_mean():
    rng = seeded_rng(8)
    state = make_state([0], K=8, gamma=8.0)
    draws = np.array([sample_beta(state, rng) for _ in range(10000)])
    assert np.allclose(draws.sum(axis=1), 1.0, atol=1e-12)
    se = math.sqrt((1 / 8) * (7 / 8) / 9 / 10000)
    assert np.all(np.abs(draws.mean(axis=0) - 1.0 / 8) <= 4 * se)


def test_beta_concentrated_table_counts():
    rng = seeded_rng(9)
    m = np.zeros((8, 8), dtype=np.int64)
    m[:, 0] = [13, 13, 13, 13, 12, 12, 12, 12]  # column totals: 100 on state 0
    state = make_state([0], K=8, gamma=8.0, m=m)
    draws = np.array([sample_beta(state, rng) for _ in range(10000)])
    want = 101.0 / 108.0
    got = draws[:, 0].mean()
    se = math.sqrt(want * (1 - want) / 109 / 10000)
    assert abs(got - want) <= 4 * se


# -------------------------------------------------- sample_transition_rows


@pytest.mark.parametrize("alpha,kappa", [(1.0, 0.0), (1.0, 10.0), (1.0, 1000.0)])
def test_rows_prior_self_transition_mass(alpha, kappa):
    rng = seeded_rng(10)
    K = 4
    state = make_state([0], K=K, alpha=alpha, kappa=kappa)
    diag = []
    for _ in range(4000):
        pi, _ = sample_transition_rows(state, rng)
        diag.extend(np.diag(pi))
    diag = np.asarray(diag)
    want = (alpha / K + kappa) / (alpha + kappa)
    se = diag.std() / math.sqrt(diag.size)
    assert abs(diag.mean() - want) <= 3 * se + 1e-12
    assert np.allclose(pi.sum(axis=1), 1.0, atol=1e-12)


def test_rows_kappa_zero_matches_plain_dirichlet_law():
    # with kappa=0 each row is Dirichlet(alpha*beta + counts): check the
    # Beta marginal of coordinate 0 by KS test
    rng = seeded_rng(11)
    K = 2
    beta = np.array([0.3, 0.7])
    z = np.array([0, 0, 0, 1, 0, 0, 1], dtype=np.int64)
    state = make_state(z, K=K, beta=beta, alpha=2.0, kappa=0.0)
    n = transition_counts(z, K)
    draws = np.array([sample_transition_rows(state, rng)[0][0, 0] for _ in range(4000)])
    a = 2.0 * beta[0] + n[0, 0]
    b = 2.0 * beta[1] + n[0, 1]
    assert kstest(draws, "beta", args=(a, b)).pvalue > 0.001


# ---------------------------------------------------------- sample_emissions


def test_emissions_prior_draw_when_unassigned():
    rng = seeded_rng(12)
    prior = NiwPrior()
    state = make_state([0, 0, 0], K=2)
    series = series_of(np.zeros((3, 1, 2)))
    mus = []
    for _ in range(10000):
        means, covs = sample_emissions(state, series, prior, rng)
        mus.append(means[1, 0])  # state 1 never assigned
    mus = np.array(mus)
    # E[mu] = mu0; Var(mu_i) = E[Sigma_ii]/lam0 = (0.75/(4-3))/0.5 = 1.5
    se = math.sqrt(1.5 / 10000)
    assert np.all(np.abs(mus.mean(axis=0) - prior.mu0) <= 4 * se)


def test_emissions_posterior_mean_approaches_sample_mean():
    rng = seeded_rng(13)
    prior = NiwPrior(lam0=1e-9)
    pts = rng.normal(size=(40, 1, 2)) + np.array([2.0, -1.0])
    state = make_state([0] * 40, K=2)
    series = series_of(pts)
    draws = np.array(
        [sample_emissions(state, series, prior, rng)[0][0, 0] for _ in range(2000)]
    )
    assert np.allclose(draws.mean(axis=0), pts[:, 0, :].mean(axis=0), atol=0.05)


def test_niw_posterior_hand_computed_example():
    prior = NiwPrior(
        mu0=np.array([0.5, -0.5]), lam0=2.0, psi0=np.array([[1.0, 0.2], [0.2, 0.8]]), nu0=5.0
    )
    pts = np.array([[1.0, 0.0], [0.4, -0.2], [1.2, 0.6], [-0.3, 0.1], [0.7, -1.5]])
    mu_n, lam_n, psi_n, nu_n = niw_posterior(prior, pts)
    # independent recomputation with plain loops
    n = 5
    xbar = [sum(p[d] for p in pts) / n for d in range(2)]
    scatter = [[0.0, 0.0], [0.0, 0.0]]
    for p in pts:
        for i in range(2):
            for j in range(2):
                scatter[i][j] += (p[i] - xbar[i]) * (p[j] - xbar[j])
    lam_want = 2.0 + n
    nu_want = 5.0 + n
    mu_want = [(2.0 * prior.mu0[d] + n * xbar[d]) / lam_want for d in range(2)]
    shrink = 2.0 * n / lam_want
    dm = [xbar[0] - 0.5, xbar[1] + 0.5]
    psi_want = [
        [prior.psi0[i][j] + scatter[i][j] + shrink * dm[i] * dm[j] for j in range(2)]
        for i in range(2)
    ]
    assert lam_n == lam_want and nu_n == nu_want
    assert np.allclose(mu_n, mu_want, atol=1e-12)
    assert np.allclose(psi_n, psi_want, atol=1e-12)


def test_niw_posterior_no_data_returns_prior():
    prior = NiwPrior()
    mu_n, lam_n, psi_n, nu_n = niw_posterior(prior, np.zeros((0, 2)))
    assert np.array_equal(mu_n, prior.mu0)
    assert (lam_n, nu_n) == (prior.lam0, prior.nu0)
    assert np.array_equal(psi_n, prior.psi0)


# ------------------------------------------------------------- sample_hypers


def test_hypers_passthrough_when_disabled():
    rng = seeded_rng(14)
    cfg = StickyConfig(k_max=4, sample_hypers=False, fixed_hypers=(2.0, 3.0, 4.0))
    state = make_state([0, 1, 0], K=4)
    assert sample_hypers(state, cfg, rng) == (2.0, 3.0, 4.0)


def test_hypers_prior_only_mean():
    rng = seeded_rng(15)
    cfg = StickyConfig(k_max=4)
    state = make_state([0], K=4)  # no transitions, no tables
    draws = np.array([sum(sample_hypers(state, cfg, rng)[:2]) for _ in range(20000)])
    # alpha+kappa ~ Gamma(1, rate 0.01): mean 100, sd 100
    assert abs(draws.mean() - 100.0) <= 3 * 100.0 / math.sqrt(20000)


def test_hypers_rho_posterior_shifts_up_with_overrides():
    rng = seeded_rng(16)
    cfg = StickyConfig(k_max=2, hyper_priors=HyperPriors(sticky_a=2.0, sticky_b=2.0))
    m = np.array([[6, 0], [0, 6]])
    state = make_state([0, 0, 0, 0, 1, 1, 1, 1], K=2, m=m, w=np.array([6, 6]))
    rhos = []
    for _ in range(4000):
        alpha, kappa, _ = sample_hypers(state, cfg, rng)
        rhos.append(kappa / (alpha + kappa))
    prior_mean = 2.0 / 4.0
    assert np.mean(rhos) > prior_mean + 0.2  # Beta(2+12, 2+0) pushes toward 1


# ---------------------------------------------------------------------- fit


def _synthetic_series(seed, k_true=3, T=90, self_transition=0.9, scale=1.0, sep=3.0, n_mods=1):
    mods = (Modality.TEXT, Modality.AUDIO, Modality.VIDEO)[:n_mods]
    series, labels = generate(
        SynthConfig(
            k_true=k_true,
            length=T,
            self_transition=self_transition,
            covariance_scale=scale,
            min_separation=sep,
            modalities=mods,
            seed=seed,
        ),
        id=f"syn{seed}",
    )
    return standardize(series), labels


def test_fit_determinism_bit_for_bit():
    series, _ = _synthetic_series(17, T=40)
    cfg = StickyConfig(k_max=4, burn_in=30, n_samples=20, seed=9)
    a = fit(series, cfg, NiwPrior())
    b = fit(series, cfg, NiwPrior())
    assert np.array_equal(a.labels.labels, b.labels.labels)
    assert np.array_equal(a.mean_pi, b.mean_pi)
    assert np.array_equal(a.loglik_trace, b.loglik_trace)
    assert a.regime_order == b.regime_order


def test_fit_retained_samples_satisfy_invariants():
    series, _ = _synthetic_series(18, T=50)
    cfg = StickyConfig(k_max=5, burn_in=20, n_samples=30, thin=2, seed=4)
    post = fit(series, cfg, NiwPrior())
    assert len(post.samples) == 30
    assert post.loglik_trace.shape == (20 + 30 * 2,)
    for s in post.samples:
        assert s.beta.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.allclose(s.pi.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(s.z >= 0) and np.all(s.z < 5)
        n = transition_counts(s.z, 5)
        # covariances stay positive definite
        for k in range(5):
            np.linalg.cholesky(s.covs[k, 0])
    assert post.effective_k <= 5
    assert post.effective_k == np.unique(post.labels.labels).size


def test_fit_loglik_trace_moves_uphill():
    series, _ = _synthetic_series(19, T=100, self_transition=0.93, sep=2.0)
    cfg = StickyConfig(k_max=8, burn_in=200, n_samples=100, seed=3)
    post = fit(series, cfg, NiwPrior())
    head = post.loglik_trace[:20].mean()  # first 10% of burn-in
    retained = post.loglik_trace[200:].mean()
    assert retained > head


def test_fit_reported_labels_ascend_in_valence():
    series, _ = _synthetic_series(20, T=90, sep=3.0)
    post = fit(series, StickyConfig(k_max=6, burn_in=80, n_samples=60, seed=5), NiwPrior())
    vas = [post.regime_va(i)[0] for i in range(post.effective_k)]
    assert vas == sorted(vas)


def test_fit_sticky_prior_lengthens_regimes():
    # ambiguous data; compare a near-zero stickiness prior with a strong one
    lazy = HyperPriors(sticky_a=0.05, sticky_b=50.0)
    sticky = HyperPriors(sticky_a=50.0, sticky_b=0.5)
    durations = {"lazy": [], "sticky": []}
    shifts = {"lazy": [], "sticky": []}
    for seed in range(10):
        series, _ = _synthetic_series(100 + seed, k_true=3, T=80, self_transition=0.9, sep=1.5)
        for name, hp in (("lazy", lazy), ("sticky", sticky)):
            cfg = StickyConfig(
                k_max=6, burn_in=120, n_samples=80, seed=seed, hyper_priors=hp
            )
            post = fit(series, cfg, NiwPrior())
            stats = temporal_stats(post.labels)
            durations[name].append(stats[0])
            shifts[name].append(stats[2])
    assert np.median(durations["sticky"]) > np.median(durations["lazy"])
    assert np.median(shifts["sticky"]) < np.median(shifts["lazy"])


def test_fit_single_state_data_collapses_to_one_regime():
    hits = 0
    for seed in range(10):
        series, _ = _synthetic_series(200 + seed, k_true=1, T=60, self_transition=0.9)
        post = fit(
            series, StickyConfig(k_max=8, burn_in=120, n_samples=80, seed=seed), NiwPrior()
        )
        hits += post.effective_k == 1
    assert hits >= 8


def test_factorial_additivity_of_emission_loglik():
    rng = seeded_rng(21)
    values = rng.normal(size=(12, 2, 2))
    means = rng.normal(size=(3, 2, 2))
    covs = np.tile(np.eye(2), (3, 2, 1, 1)) * rng.uniform(0.5, 1.5, size=(3, 2, 1, 1))
    both = log_obs_matrix(values, means, covs)
    first = log_obs_matrix(values[:, :1, :], means[:, :1, :], covs[:, :1])
    second = log_obs_matrix(values[:, 1:, :], means[:, 1:, :], covs[:, 1:])
    assert np.allclose(both, first + second, atol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        StickyConfig(k_max=1)
    with pytest.raises(ValueError):
        StickyConfig(sample_hypers=False)
    with pytest.raises(ValueError):
        NiwPrior(nu0=0.5)
    with pytest.raises(ValueError):
        NiwPrior(lam0=0.0)
