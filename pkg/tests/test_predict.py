import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import expit
from scipy.stats import norm

from btpredict.laplace import WeightedSamples, gaussian_approx, importance_weights, sample
from btpredict.predict import (
    DegenerateWeightsWarning,
    OutcomeFunction,
    constant,
    mc_average,
    pairwise_theta_distribution,
    predict_gaussian_mc,
    predict_importance,
    predict_map,
    predict_pairwise_quadrature,
    series,
    series_prob,
    single_game,
)
from btpredict.ratings import LogStrengths, Prior

from conftest import random_league, win_matrix

CRQN = math.log(415.3 / 93.30)


def enumerate_series(theta, best_of):
    """Play all best_of games and count majorities (same as stopping early)."""
    total = 0.0
    for seq in itertools.product([1, 0], repeat=best_of):
        if sum(seq) > best_of // 2:
            k = sum(seq)
            total += theta**k * (1 - theta) ** (best_of - k)
    return total


@pytest.fixture
def two_team():
    """Two teams, 8-2 head to head: a visibly skewed posterior."""
    wm = win_matrix({(0, 1): 8, (1, 0): 2})
    return wm, gaussian_approx(wm, Prior.haldane())


def marginal_gaussian_expectation(approx, f):
    """Oracle: integrate f(logistic(x)) against the Gaussian marginal of lambda_0 - lambda_1."""
    mu = approx.mean.lam[0] - approx.mean.lam[1]
    e = np.array([1.0, -1.0])
    sd = math.sqrt(e @ approx.covariance @ e)
    return quad(lambda x: f(expit(x)) * norm.pdf(x, mu, sd), mu - 12 * sd, mu + 12 * sd,
                epsabs=1e-13)[0]


def test_predict_map_cornell_quinnipiac():
    ls = LogStrengths([CRQN, 0.0])
    assert round(predict_map(single_game(0, 1), ls), 3) == 0.817
    assert round(predict_map(series(0, 1, 3), ls), 3) == 0.911
    assert predict_map(constant(1.0), ls) == 1.0


def test_series_prob_examples():
    theta = 415.3 / (415.3 + 93.30)
    assert series_prob(theta, 3) == pytest.approx(theta**2 + 2 * (1 - theta) * theta**2, abs=1e-15)
    assert round(series_prob(theta, 3), 4) == 0.9114
    for n in (1, 3, 5, 7, 9):
        assert series_prob(0.5, n) == pytest.approx(0.5, abs=1e-15)
    assert series_prob(0.37, 1) == 0.37


@pytest.mark.parametrize("best_of", [0, 2, -3, 4])
def test_series_prob_rejects_even(best_of):
    with pytest.raises(ValueError):
        series_prob(0.6, best_of)


@given(st.floats(0, 1), st.sampled_from([1, 3, 5, 7]))
def test_series_prob_matches_enumeration(theta, best_of):
    assert series_prob(theta, best_of) == pytest.approx(enumerate_series(theta, best_of), abs=1e-12)


@given(st.floats(0, 1), st.sampled_from([1, 3, 5, 7]))
def test_series_prob_complement(theta, best_of):
    assert series_prob(1 - theta, best_of) == pytest.approx(1 - series_prob(theta, best_of), abs=1e-12)


@pytest.mark.parametrize("best_of", [1, 3, 5, 7])
def test_series_prob_increasing(best_of):
    grid = np.linspace(0.001, 0.999, 999)
    assert np.all(np.diff(series_prob(grid, best_of)) > 0)


def test_single_game_complements(rng):
    lam = rng.normal(size=(20, 4))
    assert single_game(1, 3)(lam) + single_game(3, 1)(lam) == pytest.approx(np.ones(20))


def test_unvectorized_outcome():
    f = OutcomeFunction("first", lambda lam: float(lam[0] > 0), vectorized=False)
    assert f(np.array([1.0, 0.0])) == 1.0
    assert list(f(np.array([[1.0, 0.0], [-1.0, 0.0]]))) == [1.0, 0.0]


def test_gaussian_mc_constant(two_team):
    _, ap = two_team
    est = predict_gaussian_mc(constant(1.0), ap, n=100, seed=1)
    assert est.estimate == 1.0 and est.stderr == 0.0 and est.n == 100


def test_gaussian_mc_matches_quadrature(two_team):
    _, ap = two_team
    est = predict_gaussian_mc(single_game(0, 1), ap, n=20000, seed=8)
    oracle = marginal_gaussian_expectation(ap, lambda th: th)
    assert abs(est.estimate - oracle) <= 3 * est.stderr
    ser = predict_gaussian_mc(series(0, 1, 3), ap, n=20000, seed=8)
    oracle = marginal_gaussian_expectation(ap, lambda th: series_prob(th, 3))
    assert abs(ser.estimate - oracle) <= 3 * ser.stderr


def test_hermite_quadrature_matches_adaptive(two_team, rng):
    _, ap = two_team
    for f in (lambda th: th, lambda th: series_prob(th, 3)):
        assert predict_pairwise_quadrature(ap, 0, 1, f) == pytest.approx(
            marginal_gaussian_expectation(ap, f), abs=1e-10
        )
    wm = random_league(rng, 6)
    big = gaussian_approx(wm, Prior.haldane())
    got = predict_pairwise_quadrature(big, 2, 4, lambda th: th)
    mu = big.mean.lam[2] - big.mean.lam[4]
    e = np.zeros(6)
    e[2], e[4] = 1, -1
    sd = math.sqrt(e @ big.covariance @ e)
    ref = quad(lambda x: expit(x) * norm.pdf(x, mu, sd), -40, 40, epsabs=1e-13)[0]
    assert got == pytest.approx(ref, abs=1e-10)


def test_point_mass_limit(rng):
    wm = random_league(rng, 5)
    ap = gaussian_approx(wm, Prior.logistic(1.0))
    tiny = ap.scaled(1e-16)  # standard deviations scaled by 1e-8
    for f in (single_game(0, 3), series(2, 1, 5)):
        est = predict_gaussian_mc(f, tiny, n=2000, seed=3)
        assert est.estimate == pytest.approx(predict_map(f, ap.mean), abs=1e-6)


def test_importance_uniform_equals_gaussian_mc(two_team):
    _, ap = two_team
    draws = sample(ap, 5000, seed=2)
    for f in (single_game(0, 1), series(0, 1, 3)):
        a = mc_average(f, draws)
        b = predict_importance(f, WeightedSamples.uniform(draws))
        assert a.estimate == b.estimate
        assert predict_gaussian_mc(f, ap, 5000, seed=2).estimate == a.estimate


def test_importance_single_sample():
    lam = np.array([[0.4, -0.1]])
    est = predict_importance(single_game(0, 1), WeightedSamples(lam, np.zeros(1), np.ones(1)),
                             min_n_eff=1)
    assert est.estimate == pytest.approx(expit(0.5))


def test_importance_rejects_unnormalized():
    with pytest.raises(ValueError):
        predict_importance(constant(1), WeightedSamples(np.zeros((2, 2)), np.zeros(2), np.ones(2)))


def test_importance_warns_on_low_n_eff():
    lam = np.zeros((10, 2))
    w = np.array([0.91] + [0.01] * 9)
    with pytest.warns(DegenerateWeightsWarning):
        est = predict_importance(constant(0.5), WeightedSamples(lam, np.log(w), w), min_n_eff=5)
    assert est.warning and est.n_eff < 5


def test_importance_corrects_skew(two_team):
    wm, ap = two_team
    draws = sample(ap, 20000, seed=4)
    ws = importance_weights(draws, wm, Prior.haldane(), ap)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        est = predict_importance(single_game(0, 1), ws)
    # Haldane posterior of theta after 8-2 is Beta(8, 2), mean 0.8
    assert abs(est.estimate - 0.8) <= 3 * est.stderr
    gauss = mc_average(single_game(0, 1), draws)
    assert est.estimate - gauss.estimate > 5 * gauss.stderr


def test_correlation_lowers_series_probability(two_team):
    _, ap = two_team
    draws = sample(ap, 20000, seed=6)
    game = mc_average(single_game(0, 1), draws)
    assert game.estimate > 0.5
    per_draw = series(0, 1, 3)(draws) - series_prob(game.estimate, 3)
    # one-sided: the averaged series probability is below the independent-games value
    stderr = per_draw.std(ddof=1) / math.sqrt(per_draw.size)
    assert per_draw.mean() < -3 * stderr


def test_theta_histogram_identical_samples():
    lam = np.tile([0.3, -0.2], (50, 1))
    hist = pairwise_theta_distribution(0, 1, lam, bins=20)
    assert np.count_nonzero(hist.mass) == 1
    assert hist.mass.sum() == pytest.approx(1.0, abs=1e-12)


def test_theta_histogram_mean_matches_importance(two_team):
    wm, ap = two_team
    ws = importance_weights(sample(ap, 3000, seed=5), wm, Prior.haldane(), ap)
    hist = pairwise_theta_distribution(0, 1, ws, bins=25)
    assert hist.mass.sum() == pytest.approx(1.0, abs=1e-12)
    est = predict_importance(single_game(0, 1), ws)
    assert hist.mean == pytest.approx(est.estimate, abs=1e-12)
    assert len(hist.rows()) == 25


def test_theta_histogram_bad_team():
    with pytest.raises(IndexError):
        pairwise_theta_distribution(0, 5, np.zeros((3, 2)))


def test_integration_agrees_with_simulation(two_team):
    """Averaging series probabilities and counting simulated series give the same answer."""
    from btpredict.simulate import GaussianStrengths, ScheduleEvent, Team, simulate, wins_event

    _, ap = two_team
    integ = predict_gaussian_mc(series(0, 1, 3), ap, n=20000, seed=12)
    (sim,) = simulate([ScheduleEvent("s", Team(0), Team(1), 3)], [wins_event("w", "s", 0)],
                      GaussianStrengths(ap), n=20000, seed=12)
    assert abs(integ.estimate - sim.estimate) <= 3 * math.hypot(integ.stderr, sim.stderr)
    assert sim.stderr > integ.stderr
