"""Gaussian (Laplace) approximation to the log-strength posterior.

The Hessian of the negative log posterior at the MAP point is
eigendecomposed; null modes (the overall level under the Haldane prior)
are dropped, and the covariance is the Moore-Penrose pseudo-inverse.
Draws from the approximation can be reweighted towards the exact
posterior by self-normalized importance sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import expit

from .league_data import WinMatrix
from .ratings import LogStrengths, Prior, fit_map, log_posterior_batch

DEFAULT_ZERO_TOL = 1e-9
BLOCK_SIZE = 1024

LogDensity = Callable[[np.ndarray], np.ndarray]


class ApproximationError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianApprox:
    mean: LogStrengths
    hessian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    covariance: np.ndarray
    null_dim: int

    @property
    def t(self) -> int:
        return self.mean.t

    @property
    def null_vectors(self) -> np.ndarray:
        return self.eigenvectors[:, : self.null_dim]

    def scaled(self, factor: float) -> "GaussianApprox":
        """Same approximation with covariance multiplied by ``factor``."""
        return replace(
            self,
            hessian=self.hessian / factor,
            eigenvalues=self.eigenvalues / factor,
            covariance=self.covariance * factor,
        )


@dataclass(frozen=True)
class WeightedSamples:
    """Posterior draws with self-normalized importance weights."""

    lam: np.ndarray
    log_weights: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.weights.size

    @property
    def n_eff(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    @classmethod
    def uniform(cls, lam: np.ndarray) -> "WeightedSamples":
        lam = np.atleast_2d(lam)
        n = lam.shape[0]
        return cls(lam, np.zeros(n), np.full(n, 1.0 / n))


def hessian(wm: WinMatrix, ls: LogStrengths, prior: Prior) -> np.ndarray:
    """Hessian of ``-log_posterior`` at ``ls``.

    Off-diagonal ``-n_ij theta_ij theta_ji``; diagonal
    ``sum_k n_ik theta_ik theta_ki`` plus the prior curvature
    (``2 eta theta_i0 (1 - theta_i0)`` or ``1 / sigma^2``).
    """
    lam = ls.lam
    p = expit(lam[:, None] - lam[None, :])
    c = wm.n * (p * p.T)
    c = 0.5 * (c + c.T)
    h = np.diag(c.sum(axis=1)) - c
    if prior.kind == "logistic":
        q = expit(lam)
        h[np.diag_indices_from(h)] += 2 * prior.eta * q * (1 - q)
    elif prior.kind == "gaussian":
        h[np.diag_indices_from(h)] += 1.0 / prior.sigma**2
    return h


def decompose(
    h: np.ndarray,
    mean: LogStrengths,
    prior: Prior | None = None,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> GaussianApprox:
    """Eigendecompose ``h`` and build the pseudo-inverse covariance.

    Eigenvalues below ``zero_tol`` times the largest are null modes. If
    ``prior`` is given the null count is checked: one mode for Haldane
    (the overall level), none for a proper prior.
    """
    h = np.asarray(h, dtype=float)
    if not np.allclose(h, h.T, rtol=0, atol=1e-12 * max(1.0, np.abs(h).max())):
        raise ApproximationError("Hessian is not symmetric")
    h = 0.5 * (h + h.T)
    vals, vecs = np.linalg.eigh(h)
    cutoff = zero_tol * max(vals[-1], 0.0)
    if vals[0] < -cutoff:
        raise ApproximationError(
            f"Hessian has negative eigenvalue {vals[0]:.3g}; not at a posterior maximum"
        )
    null = vals <= cutoff
    null_dim = int(null.sum())
    if prior is not None:
        if prior.proper and null_dim:
            raise ApproximationError(f"{null_dim} null mode(s) under a proper prior")
        if not prior.proper and null_dim > 1:
            raise ApproximationError(
                f"{null_dim} null modes under the Haldane prior; "
                "the schedule splits into disconnected groups"
            )
    vals = np.where(null, 0.0, vals)
    # orient eigenvectors deterministically (largest component positive)
    signs = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    vecs = vecs * signs
    pos = vecs[:, null_dim:]
    cov = (pos / vals[null_dim:]) @ pos.T
    return GaussianApprox(mean, h, vals, vecs, cov, null_dim)


def gaussian_approx(
    wm: WinMatrix,
    prior: Prior,
    tol: float = 1e-10,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> GaussianApprox:
    """Fit the MAP point and build its Gaussian approximation."""
    ls = fit_map(wm, prior, tol)
    return decompose(hessian(wm, ls, prior), ls, prior, zero_tol)


def _standard_normals(seed: int, start: int, stop: int, dim: int) -> np.ndarray:
    # one independent stream per fixed-size block, so any split of the index
    # range reproduces the same draws
    out = np.empty((stop - start, dim))
    first, last = start // BLOCK_SIZE, (stop - 1) // BLOCK_SIZE
    for b in range(first, last + 1):
        ss = np.random.SeedSequence(seed, spawn_key=(b,))
        z = np.random.Generator(np.random.PCG64(ss)).standard_normal((BLOCK_SIZE, dim))
        lo, hi = max(start, b * BLOCK_SIZE), min(stop, (b + 1) * BLOCK_SIZE)
        out[lo - start : hi - start] = z[lo - b * BLOCK_SIZE : hi - b * BLOCK_SIZE]
    return out


def sample(
    approx: GaussianApprox,
    count: int,
    seed: int | None = 0,
    start: int = 0,
    rng=None,
) -> np.ndarray:
    """Draw ``count`` log-strength vectors from the approximation.

    Draw ``s`` is ``mean + sum_k z_k l_k / sqrt(h_k)`` over non-null modes,
    so the null-mode coordinate of the mean is preserved exactly. With a
    seed, draws ``start .. start+count`` are the same slice of one long run
    regardless of how a run is split. ``rng`` overrides the seeded streams
    with any object providing ``standard_normal(shape)``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    dim = approx.t - approx.null_dim
    if rng is not None:
        z = np.asarray(rng.standard_normal((count, dim)), dtype=float)
    else:
        if seed is None:
            raise ValueError("seed is required for reproducible sampling")
        z = _standard_normals(seed, start, start + count, dim)
    modes = approx.eigenvectors[:, approx.null_dim :]
    scale = 1.0 / np.sqrt(approx.eigenvalues[approx.null_dim :])
    return approx.mean.lam + (z * scale) @ modes.T


def log_gaussian(lam: np.ndarray, approx: GaussianApprox) -> np.ndarray:
    """Log density of the approximation up to a constant, on the non-null subspace."""
    d = np.atleast_2d(lam) - approx.mean.lam
    proj = d @ approx.eigenvectors[:, approx.null_dim :]
    return -0.5 * np.sum(approx.eigenvalues[approx.null_dim :] * proj**2, axis=1)


def normalized_distance(lam: np.ndarray, approx: GaussianApprox):
    """Mahalanobis distance from the mean in the Hessian metric."""
    lam = np.asarray(lam, dtype=float)
    d = np.sqrt(np.maximum(-2.0 * log_gaussian(lam, approx), 0.0))
    return float(d[0]) if lam.ndim == 1 else d


def importance_weights(
    samples: np.ndarray,
    wm: WinMatrix,
    prior: Prior,
    approx: GaussianApprox,
    log_target: LogDensity | None = None,
) -> WeightedSamples:
    """Self-normalized weights ``f / g`` for draws from ``approx``.

    ``log_target`` replaces the Bradley-Terry log posterior, taking an
    ``(N, t)`` array and returning ``N`` log densities.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if log_target is None:
        log_f = log_posterior_batch(wm, samples, prior)
    else:
        log_f = np.asarray(log_target(samples), dtype=float)
    logw = log_f - log_gaussian(samples, approx)
    finite = np.isfinite(logw)
    if not finite.any():
        raise ApproximationError("all importance weights are zero or non-finite")
    shifted = np.where(finite, logw - logw[finite].max(), -np.inf)
    w = np.exp(shifted)
    total = w.sum()
    if not total > 0:
        raise ApproximationError("importance weights sum to zero")
    return WeightedSamples(samples, logw, w / total)


def weight_histogram(weights: np.ndarray, bins: int = 50) -> list[tuple[float, float, int]]:
    """Linear-bin histogram of normalized weights as ``(lo, hi, count)`` rows."""
    counts, edges = np.histogram(weights, bins=bins, range=(0.0, float(np.max(weights))))
    return [(float(edges[k]), float(edges[k + 1]), int(c)) for k, c in enumerate(counts)]


@dataclass(frozen=True)
class CrossSection:
    projection: np.ndarray
    distance: np.ndarray
    log_posterior: np.ndarray
    log_gaussian: np.ndarray

    COLUMNS = ("projection", "normalized_distance", "log_posterior", "log_gaussian")

    def rows(self):
        return list(
            zip(
                self.projection.tolist(),
                self.distance.tolist(),
                self.log_posterior.tolist(),
                self.log_gaussian.tolist(),
            )
        )


def cross_section(
    approx: GaussianApprox,
    wm: WinMatrix,
    prior: Prior,
    through: np.ndarray,
    grid: int = 101,
    span: float = 1.5,
    log_target: LogDensity | None = None,
) -> CrossSection:
    """Both log densities along the line from the mean towards ``through``.

    Projections run over ``[-span r, span r]`` where ``r`` is the Euclidean
    distance to ``through``. The Gaussian column is anchored to equal the
    log posterior at the mean, so the two agree at projection 0.
    """
    mean = approx.mean.lam
    offset = np.asarray(through, dtype=float) - mean
    r = float(np.linalg.norm(offset))
    if r == 0:
        raise ValueError("cross-section needs a point different from the mean")
    u = offset / r
    x = np.linspace(-span * r, span * r, grid)
    if grid % 2:
        x[grid // 2] = 0.0
    pts = mean + x[:, None] * u
    if log_target is None:
        log_f = log_posterior_batch(wm, pts, prior)
        peak = log_posterior_batch(wm, mean[None, :], prior)[0]
    else:
        log_f = np.asarray(log_target(pts), dtype=float)
        peak = float(np.asarray(log_target(mean[None, :]))[0])
    log_g = peak + log_gaussian(pts, approx)
    dist = np.sqrt(np.maximum(-2.0 * log_gaussian(pts, approx), 0.0))
    return CrossSection(x, dist, log_f, log_g)
