"""Posterior predictive probabilities of future outcomes.

An outcome is any function of the log-strength vector returning a
probability. It can be evaluated at the MAP point, averaged over draws from
the Gaussian approximation, or averaged with importance weights.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import comb, expit

from .laplace import GaussianApprox, WeightedSamples, sample
from .ratings import LogStrengths

DEFAULT_N = 20000
DEFAULT_MIN_N_EFF = 100.0


class DegenerateWeightsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class OutcomeFunction:
    """Probability of an outcome as a function of log-strengths.

    ``evaluate`` maps an ``(N, t)`` array to ``N`` probabilities. Set
    ``vectorized=False`` to supply a function of a single length-``t``
    vector instead.
    """

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    vectorized: bool = True

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        batch = np.atleast_2d(lam)
        if self.vectorized:
            out = np.asarray(self.evaluate(batch), dtype=float).reshape(batch.shape[0])
        else:
            out = np.array([float(self.evaluate(row)) for row in batch])
        return float(out[0]) if lam.ndim == 1 else out


def series_prob(theta, best_of: int):
    """Probability of winning a best-of-``best_of`` series of independent games.

    With ``m = (best_of + 1) / 2`` wins needed, this sums over the number of
    games ``k`` lost before the deciding win.
    """
    if best_of < 1 or best_of % 2 == 0:
        raise ValueError(f"best_of must be a positive odd integer, got {best_of}")
    theta = np.asarray(theta, dtype=float)
    m = (best_of + 1) // 2
    total = sum(comb(m - 1 + k, k, exact=True) * (1 - theta) ** k for k in range(m))
    out = theta**m * total
    return float(out) if out.ndim == 0 else out


def single_game(i: int, j: int) -> OutcomeFunction:
    return OutcomeFunction(
        f"game:{i}>{j}", lambda lam: expit(lam[:, i] - lam[:, j])
    )


def series(i: int, j: int, best_of: int) -> OutcomeFunction:
    series_prob(0.5, best_of)  # validates best_of
    return OutcomeFunction(
        f"series{best_of}:{i}>{j}",
        lambda lam: series_prob(expit(lam[:, i] - lam[:, j]), best_of),
    )


def constant(p: float) -> OutcomeFunction:
    return OutcomeFunction(f"const:{p:g}", lambda lam: np.full(lam.shape[0], p))


@dataclass(frozen=True)
class Estimate:
    estimate: float
    stderr: float
    n: int
    method: str
    n_eff: float | None = None
    warning: str | None = None


def predict_map(outcome: OutcomeFunction, ls: LogStrengths) -> float:
    """Plug-in probability at a single point (delta-function posterior)."""
    lam = ls.lam if isinstance(ls, LogStrengths) else np.asarray(ls, dtype=float)
    return outcome(lam)


def _weighted(values: np.ndarray, weights: np.ndarray) -> float:
    return float(np.dot(weights, values))


def mc_average(outcome: OutcomeFunction, draws: np.ndarray) -> Estimate:
    """Plain Monte Carlo average of ``outcome`` over ``draws``."""
    values = outcome(np.atleast_2d(draws))
    n = values.size
    est = _weighted(values, np.full(n, 1.0 / n))
    err = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return Estimate(est, err, n, "gaussian")


def predict_gaussian_mc(
    outcome: OutcomeFunction,
    approx: GaussianApprox,
    n: int = DEFAULT_N,
    seed: int = 0,
) -> Estimate:
    if n < 2:
        raise ValueError("need at least two draws")
    return mc_average(outcome, sample(approx, n, seed))


def predict_importance(
    outcome: OutcomeFunction,
    weighted: WeightedSamples,
    min_n_eff: float = DEFAULT_MIN_N_EFF,
) -> Estimate:
    """Importance-weighted average ``sum_s w_s P(O | lambda_s)``.

    The standard error is the usual delta-method estimate for a
    self-normalized estimator. A warning is attached (and emitted) when the
    effective sample size falls below ``min_n_eff``.
    """
    w = weighted.weights
    if not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-9):
        raise ValueError("importance weights must be normalized")
    values = outcome(weighted.lam)
    est = _weighted(values, w)
    err = float(math.sqrt(np.sum(w**2 * (values - est) ** 2)))
    n_eff = weighted.n_eff
    warning = None
    if n_eff < min_n_eff:
        warning = f"effective sample size {n_eff:.1f} below {min_n_eff:g}"
        warnings.warn(warning, DegenerateWeightsWarning, stacklevel=2)
    return Estimate(est, err, len(weighted), "importance", n_eff, warning)


def predict_pairwise_quadrature(
    approx: GaussianApprox,
    i: int,
    j: int,
    f: Callable[[np.ndarray], np.ndarray],
    nodes: int = 200,
) -> float:
    """``E[f(theta_ij)]`` under the Gaussian marginal of ``lambda_i - lambda_j``.

    Gauss-Hermite quadrature; for outcomes that only involve one pair this
    is the noiseless counterpart of :func:`predict_gaussian_mc`.
    """
    e = np.zeros(approx.t)
    e[i], e[j] = 1.0, -1.0
    mu = float(e @ approx.mean.lam)
    sd = math.sqrt(max(float(e @ approx.covariance @ e), 0.0))
    x, wts = np.polynomial.hermite_e.hermegauss(nodes)
    return float(np.dot(wts, f(expit(mu + sd * x))) / math.sqrt(2 * math.pi))


@dataclass(frozen=True)
class ThetaHistogram:
    edges: np.ndarray
    mass: np.ndarray
    theta_sum: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.theta_sum.sum())

    def rows(self):
        return [
            (float(self.edges[k]), float(self.edges[k + 1]), float(m), float(s))
            for k, (m, s) in enumerate(zip(self.mass, self.theta_sum))
        ]


def pairwise_theta_distribution(
    i: int, j: int, samples, bins: int = 50
) -> ThetaHistogram:
    """Weighted histogram of ``theta_ij`` over posterior draws.

    ``theta_sum`` holds the weighted sum of ``theta_ij`` in each bin, so the
    table reproduces the weighted mean exactly.
    """
    if not isinstance(samples, WeightedSamples):
        samples = WeightedSamples.uniform(np.asarray(samples, dtype=float))
    lam = samples.lam
    if not (0 <= i < lam.shape[1] and 0 <= j < lam.shape[1]):
        raise IndexError("team id out of range")
    theta = expit(lam[:, i] - lam[:, j])
    w = samples.weights
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.clip(np.searchsorted(edges, theta, side="right") - 1, 0, bins - 1)
    mass = np.bincount(idx, weights=w, minlength=bins)
    theta_sum = np.zeros(bins)
    # accumulate in sample order so the total matches the weighted mean
    np.add.at(theta_sum, idx, w * theta)
    return ThetaHistogram(edges, mass, theta_sum)
