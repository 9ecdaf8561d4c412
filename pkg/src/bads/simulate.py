"""Ground-truth audiograms and simulated subjects.

Each hearing-loss class gets a canonical audiogram: anchor thresholds at
the seven audiometric frequencies, interpolated with a cubic spline over
log-frequency and turned into a response model by a probit sigmoid in
intensity.  Reference exams mix low-discrepancy seeding with
information-driven refinement, mimicking how a prior exam would have been
collected.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtr

from .acquisition import CandidateGrid, bald_scores_from_moments
from .ep import ep_fit, latent_predict_batch
from .errors import ParameterError
from .hyperopt import DEFAULT_HYPERPRIOR, map_optimize
from .kernels import DEFAULT_HYPERPARAMS, HyperParams, SameFunctionKernel
from .stimuli import (
    INTENSITY_MAX_DB,
    INTENSITY_MIN_DB,
    REFERENCE_TASK,
    Observation,
    ToneStimulus,
    octaves,
)

ANCHOR_FREQUENCIES_HZ = (500.0, 1000.0, 2000.0, 3000.0, 4000.0, 6000.0, 8000.0)

#: default psychometric sigmoid spread (dB); the latent slope of a simulated
#: subject's response curve around its threshold.
DEFAULT_SPREAD_DB = 5.0

HALTON_SEED_POINTS = 15
ACTIVE_EXAM_POINTS = 35
REFERENCE_EXAM_SIZE = HALTON_SEED_POINTS + ACTIVE_EXAM_POINTS


class HearingLossClass(enum.Enum):
    """Hearing-loss categories by pure-tone average."""

    NORMAL = "normal"
    SLIGHT = "slight"
    MILD = "mild"
    MODERATE = "moderate"
    MODERATELY_SEVERE = "moderately_severe"
    SEVERE = "severe"
    PROFOUND = "profound"

    @classmethod
    def parse(cls, name: str) -> "HearingLossClass":
        key = name.strip().lower().replace(" ", "_").replace("-", "_")
        aliases = {"m_severe": "moderately_severe", "mod_severe": "moderately_severe"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ParameterError(f"unknown hearing loss class {name!r}") from None

    @property
    def pta_range(self) -> tuple[float, float]:
        return _PTA_RANGES[self]


#: class boundaries in dB HL; upper bounds inclusive, lower bound open.
_PTA_UPPER = (15.0, 25.0, 40.0, 55.0, 70.0, 90.0)
_PTA_RANGES = {
    HearingLossClass.NORMAL: (-10.0, 15.0),
    HearingLossClass.SLIGHT: (16.0, 25.0),
    HearingLossClass.MILD: (26.0, 40.0),
    HearingLossClass.MODERATE: (41.0, 55.0),
    HearingLossClass.MODERATELY_SEVERE: (56.0, 70.0),
    HearingLossClass.SEVERE: (71.0, 90.0),
    HearingLossClass.PROFOUND: (91.0, math.inf),
}


def pta(threshold_500: float, threshold_1k: float, threshold_2k: float) -> float:
    """Pure-tone average: mean threshold at 500, 1000 and 2000 Hz."""
    return (threshold_500 + threshold_1k + threshold_2k) / 3.0


def classify(pta_value: float) -> HearingLossClass:
    """Hearing-loss class of a PTA value, with real-valued cutoffs."""
    members = list(HearingLossClass)
    for upper, member in zip(_PTA_UPPER, members):
        if pta_value <= upper:
            return member
    return HearingLossClass.PROFOUND


def _load_anchor_table() -> dict:
    with resources.files("bads.data").joinpath("canonical_audiograms.json").open() as fh:
        return json.load(fh)


@dataclass(frozen=True)
class GroundTruthAudiogram:
    """A simulated subject: threshold curve plus psychometric spread."""

    anchor_frequencies: tuple
    anchor_thresholds: tuple
    spread: float = DEFAULT_SPREAD_DB
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.spread <= 0.0:
            raise ParameterError("psychometric spread must be positive")
        phi = np.array([octaves(f) for f in self.anchor_frequencies])
        object.__setattr__(
            self,
            "_spline",
            CubicSpline(phi, np.asarray(self.anchor_thresholds, dtype=float)),
        )

    def threshold(self, frequency_hz) -> np.ndarray:
        """Threshold curve in dB HL; held constant outside the anchor span."""
        phi = np.log2(np.asarray(frequency_hz, dtype=float) / 125.0)
        lo = octaves(self.anchor_frequencies[0])
        hi = octaves(self.anchor_frequencies[-1])
        return self._spline(np.clip(phi, lo, hi))


def canonical_audiogram(
    hearing_class: HearingLossClass, spread: float = DEFAULT_SPREAD_DB
) -> GroundTruthAudiogram:
    """The synthetic canonical audiogram shipped for a hearing-loss class."""
    table = _load_anchor_table()
    thresholds = table["classes"][hearing_class.value]
    return GroundTruthAudiogram(
        tuple(float(f) for f in table["frequencies_hz"]),
        tuple(float(t) for t in thresholds),
        spread,
    )


def response_probability(gt: GroundTruthAudiogram, tone: ToneStimulus) -> float:
    """Probability the simulated subject reports hearing the tone."""
    thr = float(gt.threshold(tone.frequency_hz))
    return float(ndtr((tone.intensity_db - thr) / gt.spread))


def sample_response(
    gt: GroundTruthAudiogram, tone: ToneStimulus, rng: np.random.Generator
) -> Observation:
    """One Bernoulli response draw for a tone."""
    p = response_probability(gt, tone)
    return Observation(tone, int(rng.random() < p))


def halton(index: int, base: int) -> float:
    """Radical-inverse of a positive index in a prime base."""
    if index < 1 or base < 2:
        raise ParameterError("halton needs index >= 1 and base >= 2")
    value, scale = 0.0, 1.0
    while index > 0:
        index, digit = divmod(index, base)
        scale /= base
        value += digit * scale
    return value


@dataclass(frozen=True)
class ReferenceExam:
    """A 50-tone reference exam plus the seed that generated it."""

    observations: tuple
    generator_seed: int
    map_theta: HyperParams | None = None

    def __post_init__(self):
        if len(self.observations) != REFERENCE_EXAM_SIZE:
            raise ParameterError(
                f"reference exam must hold {REFERENCE_EXAM_SIZE} observations"
            )


def _halton_tones(count: int, freq_range, intensity_range) -> list[ToneStimulus]:
    lo_oct = octaves(freq_range[0])
    hi_oct = octaves(freq_range[1])
    tones = []
    for k in range(1, count + 1):
        f = 125.0 * 2.0 ** (lo_oct + (hi_oct - lo_oct) * halton(k, 2))
        i = intensity_range[0] + (intensity_range[1] - intensity_range[0]) * halton(k, 3)
        tones.append(ToneStimulus(f, i, REFERENCE_TASK))
    return tones


#: hyperparameters are re-estimated this often while the exam is collected;
#: placement quality tracks the running threshold estimate.
EXAM_REFIT_EVERY = 5


def generate_reference_exam(
    gt: GroundTruthAudiogram,
    seed: int,
    *,
    grid: CandidateGrid | None = None,
    init_theta: HyperParams = DEFAULT_HYPERPARAMS,
    map_restarts: int = 3,
    map_maxfev: int = 200,
) -> ReferenceExam:
    """Simulate a prior exam: low-discrepancy seeding, then latent-function
    information maximization, with a MAP hyperparameter fit at the end."""
    if grid is None:
        grid = CandidateGrid.default(task=REFERENCE_TASK)
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    observations = [
        sample_response(gt, tone, rng)
        for tone in _halton_tones(
            HALTON_SEED_POINTS,
            (float(grid.frequencies.min()), float(grid.frequencies.max())),
            (INTENSITY_MIN_DB, INTENSITY_MAX_DB),
        )
    ]

    theta = init_theta
    warm = None
    for k in range(ACTIVE_EXAM_POINTS):
        if k % EXAM_REFIT_EVERY == 0 and len(observations) >= 15:
            theta = map_optimize(
                observations, DEFAULT_HYPERPRIOR, theta, restarts=1, maxfev=60
            )
            warm = None
        state = ep_fit(observations, theta.c, SameFunctionKernel(theta), warm_start=warm)
        warm = (state.site_precisions, state.site_means)
        mu, var = latent_predict_batch(state, grid.coords)
        scores = bald_scores_from_moments(mu, var)
        tone = grid.stimuli[int(np.argmax(scores))]
        observations.append(sample_response(gt, tone, rng))

    theta_hat = map_optimize(
        observations,
        DEFAULT_HYPERPRIOR,
        theta,
        restarts=map_restarts,
        maxfev=map_maxfev,
    )
    return ReferenceExam(tuple(observations), seed, theta_hat)


EXAM_CSV_COLUMNS = ("freq_hz", "intensity_db", "task", "response")


def exam_to_csv(observations, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EXAM_CSV_COLUMNS)
        for o in observations:
            writer.writerow(
                [
                    repr(o.stimulus.frequency_hz),
                    repr(o.stimulus.intensity_db),
                    o.stimulus.task,
                    o.response,
                ]
            )


def exam_from_csv(path) -> list[Observation]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(EXAM_CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ParameterError(f"exam CSV missing columns: {sorted(missing)}")
        return [
            Observation(
                ToneStimulus(
                    float(row["freq_hz"]),
                    float(row["intensity_db"]),
                    int(row["task"]),
                ),
                int(row["response"]),
            )
            for row in reader
        ]
