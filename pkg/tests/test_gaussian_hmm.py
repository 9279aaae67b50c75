import math

import numpy as np
import pytest

from helpers import enumerate_forward, enumerate_viterbi, random_model_and_series, scipy_log_obs

from regimeseg.core import (
    ConversationSeries,
    GaussianEmission,
    Modality,
    Observation,
    VAPoint,
    seeded_rng,
    standardize,
)
from regimeseg.errors import ChannelMismatch, DegenerateInput
from regimeseg.gaussian_hmm import (
    EmConfig,
    HmmModel,
    emission_loglik,
    fit_em,
    fit_em_pooled,
    forward_loglik,
    viterbi,
)
from regimeseg.alignment import align
from regimeseg.synthetic import SynthConfig, generate


def simple_model(K=1, mods=(Modality.TEXT,)):
    emissions = tuple(
        {m: GaussianEmission(mean=np.zeros(2), cov=np.eye(2)) for m in mods} for _ in range(K)
    )
    initial = np.full(K, 1.0 / K)
    transitions = np.full((K, K), 1.0 / K)
    return HmmModel(initial=initial, transitions=transitions, emissions=emissions)


def test_emission_loglik_at_mean_unit_cov():
    model = simple_model()
    obs = Observation({Modality.TEXT: VAPoint(0.0, 0.0)})
    assert emission_loglik(model, obs, 0) == pytest.approx(-math.log(2 * math.pi), abs=1e-12)
    assert emission_loglik(model, obs, 0) == pytest.approx(-1.8379, abs=1e-4)


def test_emission_loglik_adds_across_modalities():
    model = simple_model(mods=(Modality.TEXT, Modality.AUDIO))
    obs = Observation({m: VAPoint(0.0, 0.0) for m in (Modality.TEXT, Modality.AUDIO)})
    assert emission_loglik(model, obs, 0) == pytest.approx(2 * -math.log(2 * math.pi), abs=1e-12)


def test_emission_loglik_matches_direct_quadratic_form():
    mean = np.array([0.4, -0.7])
    cov = np.array([[0.9, 0.3], [0.3, 0.6]])
    model = HmmModel(
        initial=np.array([1.0]),
        transitions=np.array([[1.0]]),
        emissions=({Modality.TEXT: GaussianEmission(mean=mean, cov=cov)},),
    )
    x = np.array([1.1, 0.2])
    diff = x - mean
    quad = diff @ np.linalg.solve(cov, diff)
    want = -0.5 * (quad + np.linalg.slogdet(cov)[1]) - math.log(2 * math.pi)
    obs = Observation({Modality.TEXT: VAPoint(*x)})
    assert emission_loglik(model, obs, 0) == pytest.approx(want, abs=1e-12)


def test_emission_loglik_channel_mismatch():
    model = simple_model()
    obs = Observation({Modality.AUDIO: VAPoint(0.0, 0.0)})
    with pytest.raises(ChannelMismatch):
        emission_loglik(model, obs, 0)


def test_forward_k1_equals_summed_emissions():
    rng = seeded_rng(0)
    model, series, _, _ = random_model_and_series(rng, K=1, T=7, n_mods=2)
    total = sum(emission_loglik(model, ob, 0) for ob in series.observations)
    assert forward_loglik(model, series) == pytest.approx(total, abs=1e-9)


def test_forward_matches_brute_force_k2_t6():
    rng = seeded_rng(1)
    model, series, means, covs = random_model_and_series(rng, K=2, T=6, n_mods=1)
    log_obs = scipy_log_obs(series.values, means, covs)
    want = enumerate_forward(np.log(model.initial), np.log(model.transitions), log_obs)
    assert forward_loglik(model, series) == pytest.approx(want, abs=1e-9)


def test_forward_deterministic_chain_single_path():
    rng = seeded_rng(2)
    model, series, means, covs = random_model_and_series(rng, K=2, T=5, n_mods=1)
    det = HmmModel(
        initial=np.array([1.0, 0.0]),
        transitions=np.eye(2),
        emissions=model.emissions,
        tied_covariance=False,
    )
    want = scipy_log_obs(series.values, means, covs)[:, 0].sum()
    assert forward_loglik(det, series) == pytest.approx(want, abs=1e-9)
    labels, _ = viterbi(det, series)
    assert np.all(labels.labels == 0)


def test_viterbi_matches_brute_force():
    rng = seeded_rng(3)
    model, series, means, covs = random_model_and_series(rng, K=2, T=6, n_mods=1)
    log_obs = scipy_log_obs(series.values, means, covs)
    want_path, want_lp = enumerate_viterbi(np.log(model.initial), np.log(model.transitions), log_obs)
    labels, lp = viterbi(model, series)
    assert np.array_equal(labels.labels, want_path)
    assert lp == pytest.approx(want_lp, abs=1e-9)


def test_viterbi_absorbing_state_one():
    rng = seeded_rng(4)
    model, series, _, _ = random_model_and_series(rng, K=2, T=6, n_mods=1)
    det = HmmModel(
        initial=np.array([0.0, 1.0]),
        transitions=np.eye(2),
        emissions=model.emissions,
        tied_covariance=False,
    )
    labels, _ = viterbi(det, series)
    assert np.all(labels.labels == 1)


def test_viterbi_never_beats_forward():
    rng = seeded_rng(5)
    for _ in range(20):
        model, series, _, _ = random_model_and_series(rng)
        assert viterbi(model, series)[1] <= forward_loglik(model, series) + 1e-10


def test_state_permutation_symmetry():
    rng = seeded_rng(6)
    model, series, _, _ = random_model_and_series(rng, K=3, T=8, n_mods=2)
    perm = np.array([2, 0, 1])
    permuted = HmmModel(
        initial=model.initial[perm],
        transitions=model.transitions[np.ix_(perm, perm)],
        emissions=tuple(model.emissions[k] for k in perm),
        tied_covariance=False,
    )
    assert forward_loglik(permuted, series) == pytest.approx(
        forward_loglik(model, series), abs=1e-12
    )
    base, _ = viterbi(model, series)
    new, _ = viterbi(permuted, series)
    inverse = np.argsort(perm)
    assert np.array_equal(inverse[base.labels], new.labels)


def test_fit_em_k1_closed_form():
    rng = seeded_rng(7)
    vals = rng.normal(size=(40, 1, 2))
    series = ConversationSeries("s", (Modality.TEXT,), vals, standardized=True)
    fit = fit_em(series, EmConfig(K=1, n_restarts=1, seed=0))
    e = fit.model.emissions[0][Modality.TEXT]
    assert np.allclose(e.mean, vals[:, 0, :].mean(axis=0), atol=1e-12)
    want_cov = np.cov(vals[:, 0, :].T, bias=True) + 1e-6 * np.eye(2)
    assert np.allclose(e.cov, want_cov, atol=1e-12)


def test_fit_em_monotone_loglik():
    rng = seeded_rng(8)
    for trial in range(5):
        T = int(rng.integers(20, 50))
        vals = rng.normal(size=(T, 1, 2)) + rng.choice([-1.5, 1.5], size=(T, 1, 1))
        series = ConversationSeries(f"s{trial}", (Modality.TEXT,), vals, standardized=True)
        fit = fit_em(series, EmConfig(K=2, n_restarts=1, max_iters=60, seed=trial))
        diffs = np.diff(fit.trace)
        assert diffs.min() >= -1e-8 if diffs.size else True


def test_fit_em_recovers_separated_means():
    errors = []
    for seed in range(10):
        series, truth = generate(
            SynthConfig(
                k_true=2,
                length=500,
                self_transition=0.9,
                covariance_scale=1.0,
                min_separation=4.0,
                seed=seed,
            ),
            id=f"r{seed}",
        )
        std = standardize(series)
        # transform the configured means with the same empirical moments
        cfg_means = SynthConfig(
            k_true=2, length=500, self_transition=0.9, min_separation=4.0, seed=seed
        ).resolved_means()
        mean = series.values.mean(axis=0)
        stdev = series.values.std(axis=0)
        true_std_means = (cfg_means - mean) / stdev
        fit = fit_em(std, EmConfig(K=2, seed=seed, n_restarts=3))
        labels, _ = viterbi(fit.model, std)
        aligned, assignment = align(labels, truth)
        err = 0.0
        for pred_label, true_label in assignment.mapping.items():
            got = fit.model.emissions[pred_label][Modality.TEXT].mean
            err = max(err, float(np.abs(got - true_std_means[true_label, 0]).max()))
        errors.append(err)
    assert np.median(errors) <= 0.2


def test_fit_em_tied_covariance_shared_object():
    rng = seeded_rng(9)
    vals = rng.normal(size=(60, 2, 2))
    series = ConversationSeries("s", (Modality.TEXT, Modality.AUDIO), vals, standardized=True)
    fit = fit_em(series, EmConfig(K=3, n_restarts=1, seed=0))
    for m in series.modalities:
        assert fit.model.emissions[0][m].cov is fit.model.emissions[1][m].cov
        assert fit.model.emissions[0][m].cov is fit.model.emissions[2][m].cov


def test_fit_em_rejects_single_utterance():
    series = ConversationSeries(
        "s", (Modality.TEXT,), np.zeros((1, 1, 2)), standardized=True
    )
    with pytest.raises(DegenerateInput):
        fit_em(series, EmConfig(K=1))


def test_fit_em_determinism():
    rng = seeded_rng(10)
    vals = rng.normal(size=(50, 1, 2))
    series = ConversationSeries("s", (Modality.TEXT,), vals, standardized=True)
    a = fit_em(series, EmConfig(K=2, seed=5, n_restarts=2))
    b = fit_em(series, EmConfig(K=2, seed=5, n_restarts=2))
    assert np.array_equal(a.model.transitions, b.model.transitions)
    assert a.loglik == b.loglik


def test_fit_em_pooled_smoke():
    rng = seeded_rng(11)
    series_list = [
        ConversationSeries(f"s{i}", (Modality.TEXT,), rng.normal(size=(30, 1, 2)), standardized=True)
        for i in range(3)
    ]
    fit = fit_em_pooled(series_list, EmConfig(K=2, n_restarts=2, seed=0))
    assert fit.model.K == 2
    for s in series_list:
        labels, _ = viterbi(fit.model, s)
        assert len(labels) == 30
