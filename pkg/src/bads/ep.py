"""Expectation-propagation inference for GP probit regression.

Each binary observation contributes one Gaussian site factor; damped
sequential moment matching drives the sites to a fixed point.  The state
carries the approximate posterior, the approximate log marginal likelihood
and the solves needed for O(n) predictive moments per query point.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import log_ndtr, ndtr

from . import _ep_numpy
from .backend import ep_sweep
from .errors import ConvergenceError, NumericalDegeneracyError, ParameterError
from .kernels import gram
from .stimuli import StimulusCoords, ToneStimulus, as_coords

#: damped-update schedule defaults; see package docs for rationale.
EP_DAMPING = 0.8
EP_TOL = 1e-6
EP_MAX_SWEEPS = 200
EP_ORDER_SEED = 0xEB
#: full posterior recomputation cadence (sweeps); corrects rank-1 roundoff
#: drift without paying O(n^3) on every sweep.
EP_REFRESH_EVERY = 4


@dataclass(frozen=True)
class LatentPredictive:
    """Gaussian approximation to the latent function value at one stimulus."""

    mean: float
    variance: float


@dataclass(frozen=True)
class EPState:
    """Converged EP approximation for one GP probit model."""

    train_inputs: tuple
    train_coords: StimulusCoords
    train_targets: np.ndarray  # responses in {0, 1}
    mean: object  # constant or callable(coords) -> vector
    mean_vector: np.ndarray
    K: np.ndarray  # jittered prior covariance over train_inputs
    site_precisions: np.ndarray
    site_means: np.ndarray  # natural-parameter products nu = tau * mu_site
    posterior_mean: np.ndarray
    posterior_cov: np.ndarray
    log_evidence: float
    sweeps: int
    kernel: object
    # prediction caches: mu* = m* + k.T @ alpha, var* = k** - ||proj @ k||^2
    alpha: np.ndarray
    proj: np.ndarray

    @property
    def n(self) -> int:
        return len(self.train_inputs)

    def with_model(self, mean, kernel) -> "EPState":
        """Same fit viewed through a mean/kernel pair that agrees on the
        training set.

        Used to share the reference-only fit across mixture components whose
        models only differ on points the training set does not contain.
        """
        return replace(self, mean=mean, kernel=kernel)


def _mean_vector(mean, coords: StimulusCoords) -> np.ndarray:
    if callable(mean):
        return np.asarray(mean(coords), dtype=float)
    return np.full(len(coords), float(mean))


def _refresh_posterior(K, m, tau, nu):
    """Recompute (mu, Sigma, chol B) from the site parameters.

    B = I + S^1/2 K S^1/2 with S = diag(tau); done after every sweep so
    rank-1 roundoff cannot accumulate.
    """
    srt = np.sqrt(tau)
    B = np.eye(len(tau)) + srt[:, None] * K * srt[None, :]
    L = cholesky(B, lower=True, check_finite=False)
    V = solve_triangular(L, srt[:, None] * K, lower=True, check_finite=False)
    Sigma = K - V.T @ V
    w = solve_triangular(L, srt * m, lower=True, check_finite=False)
    mu = Sigma @ nu + m - V.T @ w
    return mu, Sigma, L


#: EP log evidence of binary data cannot meaningfully exceed zero; allow a
#: little approximation slack before declaring the fit degenerate.
_MAX_CREDIBLE_LOG_EVIDENCE = 1.0


def _log_evidence(m, z, tau, nu, mu, Sigma, L) -> float:
    """EP approximation to log p(y | X, theta) at the converged sites."""
    sigma2 = np.diag(Sigma)
    if np.any(sigma2 <= 0.0):
        raise NumericalDegeneracyError("non-positive posterior variance at convergence")
    tau_cav = 1.0 / sigma2 - tau
    if np.any(tau_cav <= 0.0):
        raise NumericalDegeneracyError("non-positive cavity precision at convergence")
    var_cav = 1.0 / tau_cav
    mean_cav = (mu / sigma2 - nu) * var_cav

    u = z * mean_cav / np.sqrt(1.0 + var_cav)
    term_fit = float(np.sum(log_ndtr(u)))
    term_cav = 0.5 * float(np.sum(np.log1p(tau * var_cav)))
    term_det = -float(np.sum(np.log(np.diag(L))))

    active = tau > _ep_numpy.MIN_ACTIVE_SITE_PRECISION
    quad = np.zeros_like(tau)
    quad[active] = (tau[active] * mean_cav[active] - nu[active]) ** 2 / (
        tau[active] * (1.0 + tau[active] * var_cav[active])
    )
    term_site = 0.5 * float(np.sum(quad))

    w = np.zeros_like(tau)
    w[active] = (nu[active] - tau[active] * m[active]) / np.sqrt(tau[active])
    v = solve_triangular(L, w, lower=True, check_finite=False)
    term_prior = -0.5 * float(v @ v)

    total = term_fit + term_cav + term_det + term_site + term_prior
    if not np.isfinite(total) or total > _MAX_CREDIBLE_LOG_EVIDENCE:
        raise NumericalDegeneracyError(
            f"EP evidence computation degenerated (log Z = {total!r})"
        )
    return total


def ep_fit(
    observations,
    mean,
    kernel,
    *,
    damping: float = EP_DAMPING,
    tol: float = EP_TOL,
    max_sweeps: int = EP_MAX_SWEEPS,
    order_seed: int = EP_ORDER_SEED,
    warm_start: tuple[np.ndarray, np.ndarray] | None = None,
) -> EPState:
    """Fit the EP approximation for binary observations under a GP prior.

    ``mean`` is either a constant or a callable mapping stimuli to a mean
    vector.  ``warm_start`` takes (site_precisions, site_means) from an
    earlier fit over a prefix of the same observations.
    """
    if len(observations) == 0:
        raise ParameterError("ep_fit requires at least one observation")
    stimuli = tuple(o.stimulus for o in observations)
    coords = as_coords(stimuli)
    y = np.array([o.response for o in observations], dtype=np.int64)
    z = np.where(y == 1, 1.0, -1.0)

    m = _mean_vector(mean, coords)
    K = gram(coords, kernel) if hasattr(kernel, "matrix") else gram(stimuli, kernel)
    n = len(stimuli)

    tau = np.zeros(n)
    nu = np.zeros(n)
    if warm_start is not None:
        w_tau, w_nu = warm_start
        k = min(len(w_tau), n)
        tau[:k] = np.clip(w_tau[:k], 0.0, _ep_numpy.MAX_SITE_PRECISION)
        nu[:k] = w_nu[:k]
        nu[:k][tau[:k] == 0.0] = 0.0

    mu, Sigma, L = _refresh_posterior(K, m, tau, nu)
    rng = np.random.default_rng(order_seed)
    sweeps = 0
    converged = False
    max_delta = np.inf
    while sweeps < max_sweeps:
        order = rng.permutation(n).astype(np.int64)
        max_delta = float(ep_sweep(K, mu, Sigma, tau, nu, z, order, damping))
        sweeps += 1
        converged = max_delta < tol
        if converged or sweeps % EP_REFRESH_EVERY == 0 or sweeps == max_sweeps:
            mu, Sigma, L = _refresh_posterior(K, m, tau, nu)
        if converged:
            break
    if not converged:
        raise ConvergenceError(
            f"EP did not converge in {max_sweeps} sweeps "
            f"(last max site change {max_delta:.3e})",
            residual=max_delta,
        )

    log_z = _log_evidence(m, z, tau, nu, mu, Sigma, L)

    srt = np.sqrt(tau)
    proj = solve_triangular(L, np.diag(srt), lower=True, check_finite=False)
    q = srt * (K @ nu + m)
    alpha = nu - srt * cho_solve((L, True), q, check_finite=False)
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(proj))):
        raise NumericalDegeneracyError("non-finite EP prediction caches")

    return EPState(
        train_inputs=stimuli,
        train_coords=coords,
        train_targets=y,
        mean=mean,
        mean_vector=m,
        K=K,
        site_precisions=tau,
        site_means=nu,
        posterior_mean=mu,
        posterior_cov=Sigma,
        log_evidence=log_z,
        sweeps=sweeps,
        kernel=kernel,
        alpha=alpha,
        proj=proj,
    )


def latent_predict_batch(state: EPState, stimuli) -> tuple[np.ndarray, np.ndarray]:
    """Latent predictive means and variances at many stimuli at once."""
    kernel = state.kernel
    coords = as_coords(stimuli)
    K_star = kernel.matrix(state.train_coords, coords)
    prior_var = kernel.diag(coords)
    m_star = _mean_vector(state.mean, coords)
    mu = m_star + K_star.T @ state.alpha
    V = state.proj @ K_star
    var = prior_var - np.sum(V * V, axis=0)
    return mu, np.maximum(var, 0.0)


def latent_predict(state: EPState, x_star: ToneStimulus) -> LatentPredictive:
    """Latent predictive moments at a single stimulus."""
    mu, var = latent_predict_batch(state, (x_star,))
    return LatentPredictive(float(mu[0]), float(var[0]))


def predictive_probability(state: EPState, stimuli) -> np.ndarray:
    """p(heard) under the probit link, integrating the latent uncertainty."""
    mu, var = latent_predict_batch(state, stimuli)
    return ndtr(mu / np.sqrt(1.0 + var))
