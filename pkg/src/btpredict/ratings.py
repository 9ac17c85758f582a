"""Bradley-Terry log-strengths: likelihood, priors, ML and MAP fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from .league_data import WinMatrix, check_mle_exists

SUM_ZERO = "sum-zero"
FREE = "free"

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10000


class ConvergenceError(RuntimeError):
    pass


class NoMLEError(ValueError):
    """Maximum-likelihood estimates are infinite for this schedule."""


@dataclass(frozen=True)
class Prior:
    kind: str = "haldane"
    eta: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.kind == "haldane":
            return
        if self.kind == "logistic":
            if self.eta is None or not self.eta > 0 or not math.isfinite(self.eta):
                raise ValueError(f"generalized logistic prior needs eta > 0, got {self.eta}")
        elif self.kind == "gaussian":
            if self.sigma is None or not self.sigma > 0 or not math.isfinite(self.sigma):
                raise ValueError(f"Gaussian prior needs sigma > 0, got {self.sigma}")
        else:
            raise ValueError(f"unknown prior kind {self.kind!r}")

    @classmethod
    def haldane(cls) -> "Prior":
        return cls("haldane")

    @classmethod
    def logistic(cls, eta: float) -> "Prior":
        return cls("logistic", eta=float(eta))

    @classmethod
    def gaussian(cls, sigma: float) -> "Prior":
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def parse(cls, text: str) -> "Prior":
        """Parse ``haldane``, ``logistic:<eta>`` or ``gaussian:<sigma>``."""
        kind, _, arg = text.strip().lower().partition(":")
        if kind == "haldane" and not arg:
            return cls.haldane()
        try:
            value = float(arg)
        except ValueError:
            raise ValueError(f"unrecognized prior {text!r}") from None
        if kind == "logistic":
            return cls.logistic(value)
        if kind == "gaussian":
            return cls.gaussian(value)
        raise ValueError(f"unrecognized prior {text!r}")

    @property
    def proper(self) -> bool:
        return self.kind != "haldane"

    def __str__(self):
        if self.kind == "logistic":
            return f"logistic:{self.eta:g}"
        if self.kind == "gaussian":
            return f"gaussian:{self.sigma:g}"
        return "haldane"


@dataclass(frozen=True)
class LogStrengths:
    lam: np.ndarray
    gauge: str = FREE

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        if lam.ndim != 1:
            raise ValueError("log-strengths must be a vector")
        if self.gauge not in (SUM_ZERO, FREE):
            raise ValueError(f"unknown gauge {self.gauge!r}")
        if self.gauge == SUM_ZERO and abs(lam.sum()) >= 1e-9:
            raise ValueError("sum-zero gauge violated")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def t(self) -> int:
        return self.lam.size

    def krach(self) -> np.ndarray:
        """Display ratings ``100 e^lambda`` in the sum-zero gauge."""
        return 100.0 * np.exp(gauge_fix(self).lam)


def game_prob(lambda_i, lambda_j):
    """Probability that the first team beats the second."""
    return expit(np.subtract(lambda_i, lambda_j))


def _lam(ls) -> np.ndarray:
    return ls.lam if isinstance(ls, LogStrengths) else np.asarray(ls, dtype=float)


def gauge_fix(ls: LogStrengths) -> LogStrengths:
    lam = _lam(ls)
    return LogStrengths(lam - lam.mean(), SUM_ZERO)


def log_likelihood(wm: WinMatrix, ls) -> float:
    lam = _lam(ls)
    if lam.shape != (wm.t,):
        raise ValueError(f"expected {wm.t} log-strengths, got {lam.shape}")
    pair = np.logaddexp(lam[:, None], lam[None, :])
    return float(wm.v @ lam - 0.5 * np.sum(wm.n * pair))


def log_prior(ls, prior: Prior) -> float:
    lam = _lam(ls)
    if prior.kind == "haldane":
        return 0.0
    if prior.kind == "logistic":
        eta = prior.eta
        norm = gammaln(2 * eta) - 2 * gammaln(eta)
        return float(
            lam.size * norm
            - eta * np.sum(np.logaddexp(0.0, lam) + np.logaddexp(0.0, -lam))
        )
    sigma = prior.sigma
    return float(
        -lam.size * (math.log(sigma) + 0.5 * math.log(2 * math.pi))
        - np.sum(lam**2) / (2 * sigma**2)
    )


def log_posterior(wm: WinMatrix, ls, prior: Prior) -> float:
    """Unnormalized log posterior density."""
    return log_likelihood(wm, ls) + log_prior(ls, prior)


def expected_wins(wm: WinMatrix, lam: np.ndarray) -> np.ndarray:
    return np.sum(wm.n * expit(lam[:, None] - lam[None, :]), axis=1)


def score(wm: WinMatrix, ls, prior: Prior) -> np.ndarray:
    """Gradient of the log posterior."""
    lam = _lam(ls)
    g = wm.v - expected_wins(wm, lam)
    if prior.kind == "logistic":
        g = g + prior.eta * (1 - 2 * expit(lam))
    elif prior.kind == "gaussian":
        g = g - lam / prior.sigma**2
    return g


def _ford(wm: WinMatrix, extra_wins: float, tol: float, max_iter: int) -> np.ndarray:
    # Ford's fixed point lambda_i <- ln(v_i / sum_j n_ij / (e^li + e^lj)), written
    # multiplicatively. extra_wins > 0 adds 2*eta half-won games per team
    # against a phantom opponent pinned at lambda = 0.
    target = wm.v + extra_wins
    log_target = np.log(target)
    lam = np.zeros(wm.t)
    for _ in range(max_iter):
        expected = expected_wins(wm, lam)
        if extra_wins:
            expected = expected + 2 * extra_wins * expit(lam)
        if np.max(np.abs(target - expected)) <= tol:
            return lam
        lam = lam + log_target - np.log(expected)
        if not extra_wins:
            lam -= lam.mean()
    raise ConvergenceError(
        f"Ford iteration did not reach residual {tol:g} in {max_iter} iterations"
    )


def fit_mle(
    wm: WinMatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> LogStrengths:
    """Maximum-likelihood log-strengths by Ford's iteration, sum-zero gauge.

    Raises NoMLEError when some group of teams has no wins (or no losses)
    against the rest; use a proper prior with ``fit_map`` in that case.
    """
    check = check_mle_exists(wm)
    if not check:
        raise NoMLEError(check.message + "; fit with a proper prior instead")
    lam = _ford(wm, 0.0, tol, max_iter)
    return gauge_fix(lam)


def _fit_gaussian(wm: WinMatrix, prior: Prior, tol: float, max_iter: int) -> np.ndarray:
    lam = np.zeros(wm.t)
    precision = 1.0 / prior.sigma**2
    current = log_posterior(wm, lam, prior)
    for _ in range(max_iter):
        g = score(wm, lam, prior)
        if np.max(np.abs(g)) <= tol:
            return lam
        p = expit(lam[:, None] - lam[None, :])
        curv = wm.n * p * p.T
        h = np.diag(curv.sum(axis=1) + precision) - curv
        step = np.linalg.solve(h, g)
        for _ in range(60):
            trial = lam + step
            value = log_posterior(wm, trial, prior)
            if value >= current:
                break
            step = step / 2
        else:
            # cannot improve in floating point; accept if the gradient is tiny
            if np.max(np.abs(g)) <= max(tol, 1e3 * np.finfo(float).eps * wm.n.sum()):
                return lam
            raise ConvergenceError("damped Newton line search failed")
        lam, current = trial, value
    raise ConvergenceError(
        f"Newton iteration did not reach residual {tol:g} in {max_iter} iterations"
    )


def fit_map(
    wm: WinMatrix,
    prior: Prior,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> LogStrengths:
    """Maximum a posteriori log-strengths.

    The Haldane prior reduces to :func:`fit_mle`. The generalized logistic
    prior is solved by Ford's iteration extended with fictitious games
    against a zero-strength opponent, the Gaussian prior by damped Newton.
    Proper priors pin the overall level, so those results have free gauge.
    """
    if prior.kind == "haldane":
        return fit_mle(wm, tol, max_iter)
    if prior.kind == "logistic":
        return LogStrengths(_ford(wm, prior.eta, tol, max_iter), FREE)
    return LogStrengths(_fit_gaussian(wm, prior, tol, max_iter), FREE)


def log_posterior_batch(
    wm: WinMatrix, lam: np.ndarray, prior: Prior, chunk: int = 2048
) -> np.ndarray:
    """:func:`log_posterior` for each row of an ``(N, t)`` array."""
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    i, j = np.nonzero(np.triu(wm.n, 1))
    counts = wm.n[i, j]
    v = wm.v
    out = np.empty(lam.shape[0])
    for start in range(0, lam.shape[0], chunk):
        block = lam[start : start + chunk]
        pair = np.logaddexp(block[:, i], block[:, j])
        out[start : start + chunk] = block @ v - pair @ counts
    if prior.kind == "logistic":
        eta = prior.eta
        out += wm.t * (gammaln(2 * eta) - 2 * gammaln(eta)) - eta * np.sum(
            np.logaddexp(0.0, lam) + np.logaddexp(0.0, -lam), axis=1
        )
    elif prior.kind == "gaussian":
        sigma = prior.sigma
        out += -wm.t * (math.log(sigma) + 0.5 * math.log(2 * math.pi)) - np.sum(
            lam**2, axis=1
        ) / (2 * sigma**2)
    return out
