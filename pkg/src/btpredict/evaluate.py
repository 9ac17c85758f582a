"""Scoring prediction models on held-out games with Bayes factors.

Every model is compared with the tossup model, which gives each game
probability 1/2. The factor for a list of games is the product of
``2 p_g`` where ``p_g`` is the probability the model gave the actual
winner; factors between two models are ratios of their tossup factors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from .laplace import gaussian_approx, sample
from .league_data import DataError, GameRecord, Outcome, WinMatrix
from .predict import DEFAULT_N
from .ratings import Prior, fit_mle

Predictor = Callable[[int, int], float]


class SaturatedProbabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PredictionModel:
    """A named recipe turning training results into game probabilities.

    ``fit(train)`` returns ``predictor(i, j)``, the probability that ``i``
    beats ``j``.
    """

    name: str
    fit: Callable[[WinMatrix], Predictor]

    def predict(self, train: WinMatrix, i: int, j: int) -> float:
        return self.fit(train)(i, j)


@dataclass(frozen=True)
class EvaluationGame:
    winner: int
    loser: int
    label: str = ""

    def __post_init__(self):
        if self.winner == self.loser:
            raise DataError("winner and loser must differ")


def evaluation_games(records: Iterable[GameRecord], teams=None) -> list[EvaluationGame]:
    """Convert decided game records; ties cannot be scored and are rejected."""
    out = []
    for k, g in enumerate(records):
        if g.outcome is Outcome.TIE:
            raise DataError(f"evaluation game {k + 1} is a tie; only decided games can be scored")
        if g.outcome is Outcome.HOME_WIN:
            w, l = g.home, g.away
        else:
            w, l = g.away, g.home
        name = (lambda i: teams[i]) if teams is not None else str
        label = f"{g.date.isoformat() + ' ' if g.date else ''}{name(w)} over {name(l)}"
        out.append(EvaluationGame(w, l, label))
    return out


@dataclass(frozen=True)
class GameScore:
    label: str
    winner: int
    loser: int
    p_win: float
    cumulative_bayes_factor: float
    cumulative_log2: float
    saturated: bool


@dataclass(frozen=True)
class BayesFactorResult:
    model: str
    factor: float
    log2_factor: float
    trajectory: list[GameScore]
    impossible: bool

    def __mul__(self, other: "BayesFactorResult") -> "BayesFactorResult":
        """Concatenate two evaluations (e.g. consecutive seasons)."""
        shifted = [
            GameScore(
                s.label, s.winner, s.loser, s.p_win,
                self.factor * s.cumulative_bayes_factor,
                self.log2_factor + s.cumulative_log2,
                s.saturated,
            )
            for s in other.trajectory
        ]
        return BayesFactorResult(
            self.model,
            self.factor * other.factor,
            self.log2_factor + other.log2_factor,
            self.trajectory + shifted,
            self.impossible or other.impossible,
        )


def _score(name: str, probs: Sequence[float], games: Sequence[EvaluationGame]):
    factor, log2 = 1.0, 0.0
    rows = []
    for g, p in zip(games, probs):
        p = float(p)
        if not 0.0 <= p <= 1.0 or math.isnan(p):
            raise ValueError(f"model {name!r} gave invalid probability {p} for {g.label}")
        factor *= 2.0 * p
        log2 = log2 + math.log2(2.0 * p) if p > 0 else -math.inf
        rows.append(
            GameScore(g.label, g.winner, g.loser, p, factor, log2, p in (0.0, 1.0))
        )
    return BayesFactorResult(name, factor, log2, rows, factor == 0.0)


def bayes_factor_vs_tossup(
    model: PredictionModel, train: WinMatrix, games: Sequence[EvaluationGame]
) -> BayesFactorResult:
    """Bayes factor of ``model`` over the tossup model, with running trajectory.

    A result the model deemed impossible (``p_g = 0``) gives factor 0 and
    sets ``impossible``.
    """
    predictor = model.fit(train)
    return _score(model.name, [predictor(g.winner, g.loser) for g in games], games)


def bayes_factor(r1: BayesFactorResult, r2: BayesFactorResult) -> float:
    """Factor of model 1 over model 2 from their tossup factors."""
    if r2.factor == 0.0:
        return math.inf if r1.factor > 0 else math.nan
    return r1.factor / r2.factor


def evaluate_seasons(
    model: PredictionModel, seasons: Iterable[tuple[WinMatrix, Sequence[EvaluationGame]]]
) -> BayesFactorResult:
    """Cumulative factor over ``(train, games)`` pairs, trained per season."""
    total = _score(model.name, [], [])
    for train, games in seasons:
        total = total * bayes_factor_vs_tossup(model, train, games)
    return total


def model_tossup() -> PredictionModel:
    return PredictionModel("tossup", lambda train: (lambda i, j: 0.5))


def model_win_ratio(regularization: float = 0.0) -> PredictionModel:
    """Odds equal to the square root of the ratio of the two win ratios.

    ``regularization`` adds pseudo-wins and pseudo-losses to each team. With
    the default of zero, an undefeated or winless team gives probabilities
    of exactly 0 or 1 and a SaturatedProbabilityWarning.
    """
    r = float(regularization)
    if r < 0:
        raise ValueError("regularization must be non-negative")

    def fit(train: WinMatrix) -> Predictor:
        wins = train.v + r
        losses = train.games_played - train.v + r

        def predictor(i: int, j: int) -> float:
            num = math.sqrt(wins[i] * losses[j])
            den = math.sqrt(losses[i] * wins[j])
            if num + den == 0:
                warnings.warn(
                    f"win ratio undefined for teams {i}, {j}; using 0.5",
                    SaturatedProbabilityWarning,
                    stacklevel=2,
                )
                return 0.5
            p = num / (num + den)
            if p in (0.0, 1.0):
                warnings.warn(
                    f"win-ratio probability saturated at {p} for teams {i}, {j}",
                    SaturatedProbabilityWarning,
                    stacklevel=2,
                )
            return p

        return predictor

    name = "win_ratio" if r == 0 else f"win_ratio(r={r:g})"
    return PredictionModel(name, fit)


def model_bt_mle(tol: float = 1e-10) -> PredictionModel:
    def fit(train: WinMatrix) -> Predictor:
        lam = fit_mle(train, tol).lam
        return lambda i, j: float(expit(lam[i] - lam[j]))

    return PredictionModel("bt_mle", fit)


def model_bt_map_mc(
    prior: Prior, n: int = DEFAULT_N, seed: int = 0, cov_scale: float = 1.0
) -> PredictionModel:
    """Posterior-averaged game probabilities from the Gaussian approximation.

    One set of ``n`` draws is made per training set and shared by all games.
    ``cov_scale`` multiplies the covariance (1 for the real approximation).
    """

    def fit(train: WinMatrix) -> Predictor:
        approx = gaussian_approx(train, prior)
        if cov_scale != 1.0:
            approx = approx.scaled(cov_scale)
        draws = sample(approx, n, seed)

        def predictor(i: int, j: int) -> float:
            return float(np.mean(expit(draws[:, i] - draws[:, j])))

        return predictor

    return PredictionModel(f"bt_map_mc({prior})", fit)
