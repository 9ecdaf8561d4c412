"""Shared fixtures and brute-force oracles.

The quadrature oracles integrate the exact probit-GP posterior on dense
Gauss-Hermite tensor grids; they are independent of the EP code paths they
check.
"""

from __future__ import annotations

import numpy as np
import pytest
from numpy.polynomial.hermite import hermgauss
from scipy.special import ndtr

from bads.kernels import HyperParams, SameFunctionKernel, gram
from bads.stimuli import Observation, ToneStimulus


def _gh_grid(n: int, nodes: int):
    x, w = hermgauss(nodes)
    xg = np.meshgrid(*([x] * n), indexing="ij")
    wg = np.meshgrid(*([w] * n), indexing="ij")
    U = np.stack([g.reshape(-1) for g in xg], axis=1)  # (nodes^n, n)
    W = np.ones(len(U))
    for g in wg:
        W *= g.reshape(-1)
    return U, W


def oracle_log_evidence(K, m, z, nodes: int = 64) -> float:
    """log p(y) by tensor-product Gauss-Hermite over the latent vector."""
    n = len(m)
    L = np.linalg.cholesky(K)
    U, W = _gh_grid(n, nodes)
    F = m[None, :] + np.sqrt(2.0) * (U @ L.T)
    like = np.prod(ndtr(z[None, :] * F), axis=1)
    return float(np.log(np.sum(W * like) / np.pi ** (n / 2)))


def oracle_predictive(K, m, z, k_star, k_ss, m_star, nodes: int = 64) -> float:
    """p(y* = 1 | y) by quadrature, collapsing f* analytically."""
    n = len(m)
    L = np.linalg.cholesky(K)
    U, W = _gh_grid(n, nodes)
    F = m[None, :] + np.sqrt(2.0) * (U @ L.T)
    like = np.prod(ndtr(z[None, :] * F), axis=1)
    solve = np.linalg.solve(K, (F - m[None, :]).T).T  # K^{-1} (f - m) rows
    cond_mean = m_star + solve @ k_star
    cond_var = k_ss - float(k_star @ np.linalg.solve(K, k_star))
    p_star = ndtr(cond_mean / np.sqrt(1.0 + max(cond_var, 0.0)))
    num = float(np.sum(W * like * p_star))
    den = float(np.sum(W * like))
    return num / den


def random_probit_dataset(rng: np.random.Generator, max_n: int = 3):
    """A random tiny dataset plus its model, for oracle comparisons."""
    n = int(rng.integers(1, max_n + 1))
    theta = HyperParams(
        c=float(rng.normal(scale=1.5)),
        alpha=float(np.exp(rng.normal(scale=1.0))),
        beta=float(np.exp(rng.normal(scale=1.0))),
        ell=float(np.exp(rng.normal(scale=0.5))),
    )
    obs = []
    for _ in range(n):
        tone = ToneStimulus(
            float(125.0 * 2 ** rng.uniform(0, 6)),
            float(rng.uniform(-10.0, 110.0)),
            1,
        )
        obs.append(Observation(tone, int(rng.integers(0, 2))))
    return obs, theta


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260810)


def small_reference(seed: int = 3, n: int = 12):
    """A small, cheap synthetic reference exam (no MAP run)."""
    rng = np.random.default_rng(seed)
    theta = HyperParams(c=-2.0, alpha=500.0, beta=6.0, ell=1.5)
    obs = []
    for _ in range(n):
        tone = ToneStimulus(
            float(250.0 * 2 ** rng.uniform(0, 5)), float(rng.uniform(-10, 110)), 1
        )
        lvl = tone.level
        latent = -2.0 + 22.0 * lvl - 2.0
        p = ndtr(latent / 2.0)
        obs.append(Observation(tone, int(rng.random() < p)))
    return obs, theta
