"""Covariance functions over tone stimuli.

The single-exam kernel adds a linear term in (mapped) intensity to a
squared-exponential term in log-frequency.  The two-exam kernel multiplies
that by a task-correlation factor; per-task hyperparameters are combined
across tasks with geometric amplitude blending and the Gibbs normalization
for unequal length scales, which keeps the full Gram matrix positive
semidefinite for any task correlation in [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, LinAlgError

from .errors import NumericalDegeneracyError, ParameterError
from .stimuli import ToneStimulus, as_coords

#: relative jitter ladder used when a Gram matrix fails Cholesky.
JITTER_START = 1e-8
JITTER_MAX = 1e-2
JITTER_GROWTH = 10.0


@dataclass(frozen=True)
class HyperParams:
    """Mean and covariance hyperparameters of one latent audiometric function.

    ``c`` is the constant mean (latent probit units), ``alpha`` weights the
    linear intensity term, ``beta`` the squared-exponential amplitude and
    ``ell`` its length scale in octaves.
    """

    c: float
    alpha: float
    beta: float
    ell: float

    def __post_init__(self):
        for name in ("alpha", "beta", "ell"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ParameterError(f"{name} must be finite and > 0, got {v}")
        if not math.isfinite(self.c):
            raise ParameterError(f"c must be finite, got {self.c}")

    def log_vector(self) -> np.ndarray:
        """(c, log alpha, log beta, log ell) as optimized by MAP search."""
        return np.array(
            [self.c, math.log(self.alpha), math.log(self.beta), math.log(self.ell)]
        )

    @classmethod
    def from_log_vector(cls, v) -> "HyperParams":
        return cls(float(v[0]), math.exp(v[1]), math.exp(v[2]), math.exp(v[3]))


#: starting point for hyperparameter searches, scaled for the mapped
#: coordinates (levels in [0,1], frequencies in octaves): a ~11 dB
#: psychometric transition with ~13 dB threshold wiggle over 1.5 octaves.
DEFAULT_HYPERPARAMS = HyperParams(c=0.0, alpha=576.0, beta=7.0, ell=1.5)


def linear_se_kernel(
    i: float, phi: float, i2: float, phi2: float, theta: HyperParams
) -> float:
    """Kernel value on mapped coordinates (level, octave)."""
    d = phi - phi2
    return theta.alpha * i * i2 + theta.beta * math.exp(-0.5 * (d / theta.ell) ** 2)


def kernel_f(x: ToneStimulus, x2: ToneStimulus, theta: HyperParams) -> float:
    """Single-exam covariance; the task coordinate is ignored."""
    return linear_se_kernel(x.level, x.octave, x2.level, x2.octave, theta)


def kernel_t(t: int, t2: int, rho: float) -> float:
    """Task-correlation factor: 1 within a task, rho across tasks."""
    if not -1.0 <= rho <= 1.0:
        raise ParameterError(f"task correlation must lie in [-1, 1], got {rho}")
    return 1.0 if t == t2 else rho


def _cross_se(phi: float, phi2: float, beta_a, ell_a, beta_b, ell_b) -> float:
    # Gibbs normalization: reduces to the plain SE term when ell_a == ell_b
    # and stays PSD when the per-task length scales differ.
    denom = ell_a * ell_a + ell_b * ell_b
    pref = math.sqrt(2.0 * ell_a * ell_b / denom)
    d = phi - phi2
    return math.sqrt(beta_a * beta_b) * pref * math.exp(-d * d / denom)


def kernel_g(
    x: ToneStimulus,
    x2: ToneStimulus,
    theta_by_task: tuple[HyperParams, HyperParams],
    rho: float,
) -> float:
    """Two-exam covariance: task factor times the blended stationary part.

    Within a task this is exactly ``kernel_f`` with that task's
    hyperparameters; across tasks the amplitudes blend geometrically.
    """
    tfac = kernel_t(x.task, x2.task, rho)
    ta = theta_by_task[x.task - 1]
    tb = theta_by_task[x2.task - 1]
    lin = math.sqrt(ta.alpha * tb.alpha) * x.level * x2.level
    se = _cross_se(x.octave, x2.octave, ta.beta, ta.ell, tb.beta, tb.ell)
    return tfac * (lin + se)


class SameFunctionKernel:
    """Vectorized single-exam kernel (shared latent function)."""

    def __init__(self, theta: HyperParams):
        self.theta = theta

    def __call__(self, x: ToneStimulus, x2: ToneStimulus) -> float:
        return kernel_f(x, x2, self.theta)

    def matrix(self, stimuli, stimuli2=None) -> np.ndarray:
        a = as_coords(stimuli)
        b = a if stimuli2 is None else as_coords(stimuli2)
        th = self.theta
        d = a.octave[:, None] - b.octave[None, :]
        return th.alpha * np.outer(a.level, b.level) + th.beta * np.exp(
            -0.5 * (d / th.ell) ** 2
        )

    def diag(self, stimuli) -> np.ndarray:
        lvl = as_coords(stimuli).level
        return self.theta.alpha * lvl**2 + self.theta.beta


class DifferentialKernel:
    """Vectorized two-exam kernel with a fixed task correlation."""

    def __init__(self, theta_ref: HyperParams, theta_new: HyperParams, rho: float):
        if not -1.0 <= rho <= 1.0:
            raise ParameterError(f"task correlation must lie in [-1, 1], got {rho}")
        self.theta_ref = theta_ref
        self.theta_new = theta_new
        self.rho = rho

    def __call__(self, x: ToneStimulus, x2: ToneStimulus) -> float:
        return kernel_g(x, x2, (self.theta_ref, self.theta_new), self.rho)

    def _per_point(self, coords):
        new = coords.task == 2
        alpha = np.where(new, self.theta_new.alpha, self.theta_ref.alpha)
        beta = np.where(new, self.theta_new.beta, self.theta_ref.beta)
        ell = np.where(new, self.theta_new.ell, self.theta_ref.ell)
        return alpha, beta, ell

    def matrix(self, stimuli, stimuli2=None) -> np.ndarray:
        a = as_coords(stimuli)
        b = a if stimuli2 is None else as_coords(stimuli2)
        alpha, beta, ell = self._per_point(a)
        alpha2, beta2, ell2 = (alpha, beta, ell) if b is a else self._per_point(b)
        tfac = np.where(a.task[:, None] == b.task[None, :], 1.0, self.rho)
        lin = np.outer(np.sqrt(alpha) * a.level, np.sqrt(alpha2) * b.level)
        denom = ell[:, None] ** 2 + ell2[None, :] ** 2
        pref = np.sqrt(2.0 * np.outer(ell, ell2) / denom)
        d = a.octave[:, None] - b.octave[None, :]
        se = np.outer(np.sqrt(beta), np.sqrt(beta2)) * pref * np.exp(-(d**2) / denom)
        return tfac * (lin + se)

    def diag(self, stimuli) -> np.ndarray:
        coords = as_coords(stimuli)
        alpha, beta, _ = self._per_point(coords)
        return alpha * coords.level**2 + beta


def gram(stimuli, kernel) -> np.ndarray:
    """Gram matrix of ``kernel`` over ``stimuli`` plus enough jitter to pass
    a Cholesky factorization.

    Jitter starts at 1e-8 times the mean diagonal and escalates by decades;
    duplicated stimuli (routine in audiometry) make this necessary.
    """
    n = len(stimuli)
    if n == 0:
        raise ParameterError("gram requires at least one stimulus")
    if hasattr(kernel, "matrix"):
        K = kernel.matrix(stimuli)
    else:
        K = np.empty((n, n))
        for a in range(n):
            for b in range(a, n):
                K[a, b] = K[b, a] = kernel(stimuli[a], stimuli[b])
    K = 0.5 * (K + K.T)
    scale = float(np.mean(np.diag(K)))
    if scale <= 0.0:
        scale = 1.0
    rel = JITTER_START
    while rel <= JITTER_MAX:
        jittered = K + rel * scale * np.eye(n)
        try:
            cholesky(jittered, lower=True, check_finite=False)
        except LinAlgError:
            rel *= JITTER_GROWTH
            continue
        return jittered
    raise NumericalDegeneracyError(
        f"Gram matrix not factorizable even with jitter {JITTER_MAX:g} * mean diag"
    )
