"""Tone-selection strategies over a candidate stimulus grid.

The headline strategy scores each candidate by the mutual information
between its (unseen) response and the model identity; baselines are BALD
on the current-exam data alone, predictive-entropy uncertainty sampling,
and uniform random selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import ndtr

from .bank import ModelBank, PredictiveBernoulliMixture
from .ep import EPState, latent_predict_batch
from .errors import ParameterError
from .kernels import DEFAULT_HYPERPARAMS, HyperParams, SameFunctionKernel
from .stimuli import CURRENT_TASK, StimulusCoords, ToneStimulus

LN2 = math.log(2.0)

STRATEGIES = ("bads", "bald", "us", "rnd")

#: node count for the Gauss-Hermite expectation inside the BALD score.
BALD_QUADRATURE_NODES = 64
_GH_NODES, _GH_WEIGHTS = hermgauss(BALD_QUADRATURE_NODES)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(math.pi)


@dataclass(frozen=True)
class CandidateGrid:
    """Log-frequency by intensity grid of candidate tones.

    Candidates are ordered by (intensity, frequency) ascending so that a
    first-maximum argmax realizes the softest-tone tie-break.
    """

    frequencies: np.ndarray
    intensities: np.ndarray
    task: int = CURRENT_TASK
    stimuli: tuple = field(init=False, repr=False)
    coords: StimulusCoords = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.frequencies) == 0 or len(self.intensities) == 0:
            raise ParameterError("candidate grid must be non-empty")
        tones = tuple(
            ToneStimulus(float(f), float(i), self.task)
            for i in np.sort(self.intensities)
            for f in np.sort(self.frequencies)
        )
        object.__setattr__(self, "stimuli", tones)
        object.__setattr__(self, "coords", StimulusCoords.from_stimuli(tones))

    @classmethod
    def default(
        cls,
        n_frequencies: int = 32,
        n_intensities: int = 25,
        freq_range: tuple[float, float] = (125.0, 8000.0),
        intensity_range: tuple[float, float] = (-10.0, 110.0),
        task: int = CURRENT_TASK,
    ) -> "CandidateGrid":
        return cls(
            np.geomspace(freq_range[0], freq_range[1], n_frequencies),
            np.linspace(intensity_range[0], intensity_range[1], n_intensities),
            task,
        )

    def __len__(self) -> int:
        return len(self.stimuli)


def bernoulli_entropy(p):
    """Vectorized Bernoulli entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    interior = (p > 0.0) & (p < 1.0)
    q = p[interior]
    out[interior] = -q * np.log(q) - (1.0 - q) * np.log1p(-q)
    return out


def entropy_bernoulli(p: float) -> float:
    """Bernoulli entropy of a success probability, validated to [0, 1]."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"probability must lie in [0, 1], got {p}")
    return float(bernoulli_entropy(p))


def entropy_mixture(mixture: PredictiveBernoulliMixture) -> float:
    """Entropy of a Bernoulli mixture: mixtures of Bernoullis are Bernoulli,
    so this is the entropy of the collapsed success probability."""
    return float(bernoulli_entropy(mixture.collapsed_p))


def bads_scores_from_predictives(
    posterior: tuple[float, float],
    p_f,
    weights_g: np.ndarray,
    probs_g: np.ndarray,
) -> np.ndarray:
    """Mutual information between the response and the model identity.

    Entropy of the model-marginal predictive minus the posterior-weighted
    entropies of the per-model predictives; non-negative by concavity,
    clamped against sub-1e-12 rounding.
    """
    p_f = np.atleast_1d(np.asarray(p_f, dtype=float))
    probs_g = np.atleast_2d(probs_g)
    w_f, w_g = posterior
    collapsed_g = weights_g @ probs_g
    marginal = w_f * p_f + w_g * collapsed_g
    score = (
        bernoulli_entropy(marginal)
        - w_f * bernoulli_entropy(p_f)
        - w_g * bernoulli_entropy(collapsed_g)
    )
    if np.any(score < -1e-12):
        raise ParameterError(f"information score below tolerance: {score.min()}")
    return np.maximum(score, 0.0)


def bads_score(bank: ModelBank, x_star: ToneStimulus) -> float:
    """Model-identity information carried by one candidate tone."""
    w_g, probs_g = bank.predictive_mg_batch((x_star,))
    p_f = bank.predictive_mf_batch((x_star,))
    return float(
        bads_scores_from_predictives(bank.posterior, p_f, w_g, probs_g)[0]
    )


def bald_scores_from_moments(mu, var) -> np.ndarray:
    """Latent-function information from the predictive moments.

    Entropy of the averaged response distribution minus the Gauss-Hermite
    average of the response entropy over the latent Gaussian.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    total = bernoulli_entropy(ndtr(mu / np.sqrt(1.0 + var)))
    nodes = mu[:, None] + np.sqrt(2.0 * var)[:, None] * _GH_NODES[None, :]
    expected = bernoulli_entropy(ndtr(nodes)) @ _GH_WEIGHTS
    return np.clip(total - expected, 0.0, LN2)


def bald_score(state: EPState, x_star: ToneStimulus) -> float:
    """BALD score of one candidate under a fitted GP probit model."""
    mu, var = latent_predict_batch(state, (x_star,))
    return float(bald_scores_from_moments(mu, var)[0])


def bald_prior_scores(grid: CandidateGrid, theta: HyperParams) -> np.ndarray:
    """BALD scores under the prior, for the no-data start of an exam."""
    kernel = SameFunctionKernel(theta)
    mu = np.full(len(grid), theta.c)
    var = kernel.diag(grid.coords)
    return bald_scores_from_moments(mu, var)


def us_score(bank: ModelBank, x_star: ToneStimulus) -> float:
    """Predictive entropy of the model-marginal distribution."""
    return entropy_mixture(bank.marginal_predictive(x_star))


def score_grid(
    bank: ModelBank,
    grid: CandidateGrid,
    strategy: str,
    *,
    bald_state: EPState | None = None,
) -> np.ndarray:
    """Scores for every grid candidate under the named strategy."""
    if strategy not in ("bads", "bald", "us"):
        raise ParameterError(f"unknown scorable strategy {strategy!r}")
    if strategy == "bald":
        if bald_state is None:
            if bank.new:
                from .ep import ep_fit

                theta = DEFAULT_HYPERPARAMS
                bald_state = ep_fit(bank.new, theta.c, SameFunctionKernel(theta))
            else:
                return bald_prior_scores(grid, DEFAULT_HYPERPARAMS)
        mu, var = latent_predict_batch(bald_state, grid.coords)
        return bald_scores_from_moments(mu, var)
    p_f = bank.predictive_mf_batch(grid.coords)
    w_g, probs_g = bank.predictive_mg_batch(grid.coords)
    if strategy == "bads":
        return bads_scores_from_predictives(bank.posterior, p_f, w_g, probs_g)
    w_mf, w_mg = bank.posterior
    marginal = w_mf * p_f + w_mg * (w_g @ probs_g)
    return bernoulli_entropy(marginal)


def select_next(
    bank: ModelBank,
    grid: CandidateGrid,
    strategy: str,
    rng_seed: int | None = None,
    *,
    bald_state: EPState | None = None,
) -> ToneStimulus:
    """Next tone under the named strategy.

    Grid ordering makes score ties resolve to the lowest intensity, then
    the lowest frequency.  Random selection draws uniformly with the seed.
    """
    if strategy not in STRATEGIES:
        raise ParameterError(f"unknown strategy {strategy!r}")
    if strategy == "rnd":
        rng = np.random.default_rng(rng_seed)
        return grid.stimuli[int(rng.integers(len(grid)))]
    scores = score_grid(bank, grid, strategy, bald_state=bald_state)
    return grid.stimuli[int(np.argmax(scores))]
