import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from btpredict.evaluate import (
    EvaluationGame,
    PredictionModel,
    SaturatedProbabilityWarning,
    bayes_factor,
    bayes_factor_vs_tossup,
    evaluate_seasons,
    evaluation_games,
    model_bt_map_mc,
    model_bt_mle,
    model_tossup,
    model_win_ratio,
)
from btpredict.league_data import DataError, GameRecord, Outcome, WinMatrix
from btpredict.ratings import Prior, game_prob

from conftest import random_league, win_matrix


def fixed(p, name="fixed"):
    return PredictionModel(name, lambda train: (lambda i, j: p))


def games(k, winner=0, loser=1):
    return [EvaluationGame(winner, loser, f"g{n}") for n in range(k)]


EMPTY = WinMatrix.empty(2)


def test_tossup_factor_is_one():
    r = bayes_factor_vs_tossup(model_tossup(), EMPTY, games(7))
    assert r.factor == 1.0 and r.log2_factor == 0.0 and not r.impossible
    assert [s.cumulative_bayes_factor for s in r.trajectory] == [1.0] * 7


def test_certain_model_doubles_each_game():
    r = bayes_factor_vs_tossup(fixed(1.0), EMPTY, games(15))
    assert r.factor == 32768.0
    assert r.log2_factor == 15.0
    assert all(s.saturated for s in r.trajectory)
    assert [s.cumulative_bayes_factor for s in r.trajectory] == [2.0**k for k in range(1, 16)]


def test_single_game_factor():
    r = bayes_factor_vs_tossup(fixed(0.75), EMPTY, games(1))
    assert r.factor == pytest.approx(1.5)
    assert r.log2_factor == pytest.approx(math.log2(1.5))


def test_zero_probability_marks_impossible():
    model = PredictionModel("wrong", lambda train: (lambda i, j: 0.0 if i == 1 else 0.9))
    r = bayes_factor_vs_tossup(model, EMPTY, games(2) + games(1, 1, 0) + games(2))
    assert r.factor == 0.0 and r.impossible and r.log2_factor == -math.inf
    assert r.trajectory[1].cumulative_bayes_factor > 0
    assert r.trajectory[2].cumulative_bayes_factor == 0.0


def test_invalid_probability_rejected():
    with pytest.raises(ValueError):
        bayes_factor_vs_tossup(fixed(1.2), EMPTY, games(1))


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=30), st.integers(0, 30))
def test_factor_multiplicative(probs, cut):
    cut = min(cut, len(probs))
    gs = [EvaluationGame(0, 1, str(k)) for k in range(len(probs))]
    it = iter(probs)
    seq = PredictionModel("seq", lambda train: (lambda i, j: next(it)))
    whole = bayes_factor_vs_tossup(seq, EMPTY, gs)
    it = iter(probs)
    a = bayes_factor_vs_tossup(seq, EMPTY, gs[:cut])
    b = bayes_factor_vs_tossup(seq, EMPTY, gs[cut:])
    assert (a * b).factor == pytest.approx(whole.factor, rel=1e-12)
    assert (a * b).log2_factor == pytest.approx(whole.log2_factor, abs=1e-9)
    assert math.prod(2 * p for p in probs) == pytest.approx(whole.factor, rel=1e-12)
    assert [s.cumulative_bayes_factor for s in (a * b).trajectory] == pytest.approx(
        [s.cumulative_bayes_factor for s in whole.trajectory], rel=1e-12
    )


@given(st.permutations(list(range(8))))
def test_model_comparison_order_invariant(perm):
    wm = win_matrix({(0, 1): 3, (1, 0): 1, (1, 2): 2, (2, 1): 2, (2, 0): 1, (0, 2): 2})
    gs = [EvaluationGame(w, l) for w, l in
          [(0, 1), (1, 2), (2, 0), (0, 2), (1, 0), (2, 1), (0, 1), (0, 2)]]
    shuffled = [gs[k] for k in perm]
    m1, m2 = model_bt_mle(), model_win_ratio()
    ref = bayes_factor(bayes_factor_vs_tossup(m1, wm, gs), bayes_factor_vs_tossup(m2, wm, gs))
    got = bayes_factor(bayes_factor_vs_tossup(m1, wm, shuffled),
                       bayes_factor_vs_tossup(m2, wm, shuffled))
    assert got == pytest.approx(ref, rel=1e-12)


def test_bayes_factor_ratio():
    a = bayes_factor_vs_tossup(fixed(0.75), EMPTY, games(2))
    b = bayes_factor_vs_tossup(fixed(0.6), EMPTY, games(2))
    assert bayes_factor(a, b) == pytest.approx(1.5**2 / 1.2**2)
    z = bayes_factor_vs_tossup(fixed(0.0), EMPTY, games(1))
    assert bayes_factor(a, z) == math.inf


def test_per_game_factor_range(rng):
    wm = random_league(rng, 6)
    gs = [EvaluationGame(int(i), int(j)) for i, j in rng.integers(0, 6, (40, 2)) if i != j]
    r = bayes_factor_vs_tossup(model_bt_mle(), wm, gs)
    prev = 1.0
    for s in r.trajectory:
        step = s.cumulative_bayes_factor / prev
        assert 0 < step < 2
        assert step == pytest.approx(2 * s.p_win)
        prev = s.cumulative_bayes_factor


def test_win_ratio_examples():
    even = win_matrix({(0, 2): 1, (2, 0): 1, (1, 2): 1, (2, 1): 1})
    assert model_win_ratio().predict(even, 0, 1) == 0.5
    # records 3-1 and 1-3: odds sqrt(3 * 3 / (1 * 1)) = 3
    wm = win_matrix({(0, 1): 3, (1, 0): 1})
    assert model_win_ratio().predict(wm, 0, 1) == pytest.approx(0.75)
    assert model_win_ratio().predict(wm, 1, 0) == pytest.approx(0.25)


def test_win_ratio_saturates_for_undefeated():
    wm = win_matrix({(0, 1): 2, (1, 2): 1, (2, 1): 1})
    with pytest.warns(SaturatedProbabilityWarning):
        assert model_win_ratio().predict(wm, 0, 1) == 1.0
    r = model_win_ratio(regularization=0.5).predict(wm, 0, 1)
    assert 0.5 < r < 1


def test_win_ratio_counts_ties_as_half():
    wm = win_matrix({(0, 1): 2.5, (1, 0): 1.5})
    assert model_win_ratio().predict(wm, 0, 1) == pytest.approx(2.5 / 4)


def test_bt_mle_model():
    wm = win_matrix({(0, 1): 3, (1, 0): 1})
    assert model_bt_mle().predict(wm, 0, 1) == pytest.approx(0.75, abs=1e-10)


def test_bt_map_mc_point_mass_matches_mle(rng):
    wm = random_league(rng, 5, density=1.0)
    mle = model_bt_mle().fit(wm)
    near = model_bt_map_mc(Prior.gaussian(1e3), n=500, seed=0, cov_scale=1e-12).fit(wm)
    for i in range(5):
        for j in range(5):
            if i != j:
                assert near(i, j) == pytest.approx(mle(i, j), abs=1e-3)


def test_bt_map_mc_shrinks_towards_half():
    wm = win_matrix({(0, 1): 3, (1, 0): 1})
    p = model_bt_map_mc(Prior.logistic(1.0), n=4000, seed=3).predict(wm, 0, 1)
    assert 0.5 < p < 0.75


def test_evaluation_games_from_records():
    recs = [GameRecord(None, 0, 1, Outcome.HOME_WIN), GameRecord(None, 0, 1, Outcome.AWAY_WIN)]
    gs = evaluation_games(recs, ["A", "B"])
    assert [(g.winner, g.loser) for g in gs] == [(0, 1), (1, 0)]
    assert gs[1].label == "B over A"


def test_evaluation_games_reject_ties():
    with pytest.raises(DataError, match="tie"):
        evaluation_games([GameRecord(None, 0, 1, Outcome.TIE)])


def test_evaluate_seasons_cumulative():
    wm = win_matrix({(0, 1): 3, (1, 0): 1})
    one = bayes_factor_vs_tossup(model_bt_mle(), wm, games(3))
    both = evaluate_seasons(model_bt_mle(), [(wm, games(3)), (wm, games(3))])
    assert both.factor == pytest.approx(one.factor**2)
    assert len(both.trajectory) == 6
    assert both.trajectory[-1].cumulative_bayes_factor == pytest.approx(both.factor)


def test_mle_model_beats_tossup_on_consistent_data():
    lam = np.array([1.0, 0.0, -1.0])
    wm = win_matrix({(0, 1): 8, (1, 0): 3, (1, 2): 8, (2, 1): 3, (0, 2): 9, (2, 0): 1})
    gs = games(5, 0, 2) + games(3, 1, 2) + games(2, 0, 1)
    r = bayes_factor_vs_tossup(model_bt_mle(), wm, gs)
    assert r.factor > 1
    assert game_prob(lam[0], lam[2]) > 0.5


def test_symmetric_training_gives_half():
    wm = win_matrix({(0, 1): 2, (1, 0): 2})
    assert model_bt_mle().predict(wm, 0, 1) == pytest.approx(0.5, abs=1e-12)
    p = model_bt_map_mc(Prior.logistic(1.0), n=2000, seed=0).predict(wm, 0, 1)
    assert p == pytest.approx(0.5, abs=0.01)
    tossup = model_tossup().fit(wm)
    assert tossup(0, 1) + tossup(1, 0) == 1.0


def test_mle_per_game_direction(rng):
    wm = random_league(rng, 6, density=1.0)
    fit = model_bt_mle().fit(wm)
    gs = [EvaluationGame(i, j) for i in range(6) for j in range(6) if i != j]
    r = bayes_factor_vs_tossup(model_bt_mle(), wm, gs)
    prev = 1.0
    for g, s in zip(gs, r.trajectory):
        step = s.cumulative_bayes_factor / prev
        if fit(g.winner, g.loser) > 0.5:
            assert 1 < step <= 2
        else:
            assert 0 <= step < 1
        prev = s.cumulative_bayes_factor
