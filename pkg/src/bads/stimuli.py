"""Tone stimuli and binary observations.

A tone lives in the augmented input space (frequency, intensity, task):
frequency in Hz, intensity in dB HL, and an integer task id distinguishing
the reference exam (task 1) from the current exam (task 2).  Kernels never
see raw Hz/dB; they operate on the mapped coordinates below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

FREQ_MIN_HZ = 125.0
FREQ_MAX_HZ = 16000.0
INTENSITY_MIN_DB = -10.0
INTENSITY_MAX_DB = 110.0

REFERENCE_TASK = 1
CURRENT_TASK = 2

#: base frequency of the octave scale. 125 Hz maps to octave 0.
OCTAVE_BASE_HZ = 125.0
#: span of the intensity range, used for the affine map onto [0, 1].
_INTENSITY_SPAN = INTENSITY_MAX_DB - INTENSITY_MIN_DB


def octaves(frequency_hz: float) -> float:
    """Frequency as octaves above 125 Hz (log2 scale)."""
    return math.log2(frequency_hz / OCTAVE_BASE_HZ)


def frequency_from_octaves(phi: float) -> float:
    return OCTAVE_BASE_HZ * 2.0**phi


def level(intensity_db: float) -> float:
    """Intensity affinely mapped from [-10, 110] dB HL onto [0, 1].

    Keeps the linear-kernel Gram entries O(1) so the weight hyperparameter
    is comparable in scale to the other amplitudes.
    """
    return (intensity_db - INTENSITY_MIN_DB) / _INTENSITY_SPAN


def intensity_from_level(i: float) -> float:
    return INTENSITY_MIN_DB + i * _INTENSITY_SPAN


@dataclass(frozen=True)
class ToneStimulus:
    """A pure-tone stimulus in the augmented input space."""

    frequency_hz: float
    intensity_db: float
    task: int = REFERENCE_TASK

    def __post_init__(self):
        if not FREQ_MIN_HZ <= self.frequency_hz <= FREQ_MAX_HZ:
            raise ParameterError(
                f"frequency {self.frequency_hz} Hz outside "
                f"[{FREQ_MIN_HZ}, {FREQ_MAX_HZ}]"
            )
        if not INTENSITY_MIN_DB <= self.intensity_db <= INTENSITY_MAX_DB:
            raise ParameterError(
                f"intensity {self.intensity_db} dB HL outside "
                f"[{INTENSITY_MIN_DB}, {INTENSITY_MAX_DB}]"
            )
        if self.task not in (REFERENCE_TASK, CURRENT_TASK):
            raise ParameterError(f"task must be 1 or 2, got {self.task}")

    @property
    def octave(self) -> float:
        return octaves(self.frequency_hz)

    @property
    def level(self) -> float:
        return level(self.intensity_db)

    def with_task(self, task: int) -> "ToneStimulus":
        return ToneStimulus(self.frequency_hz, self.intensity_db, task)


@dataclass(frozen=True)
class Observation:
    """A stimulus together with the subject's binary response (1 = heard)."""

    stimulus: ToneStimulus
    response: int

    def __post_init__(self):
        if self.response not in (0, 1):
            raise ParameterError(f"response must be 0 or 1, got {self.response}")


def stimulus_arrays(stimuli) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordinate arrays (level, octave, task) for a sequence of stimuli."""
    lvl = np.array([s.level for s in stimuli], dtype=float)
    phi = np.array([s.octave for s in stimuli], dtype=float)
    task = np.array([s.task for s in stimuli], dtype=np.int64)
    return lvl, phi, task


class StimulusCoords:
    """Precomputed coordinate arrays for a batch of stimuli.

    Kernel and mean evaluations are hot paths; carrying the arrays avoids
    re-walking the stimulus objects on every call.
    """

    __slots__ = ("level", "octave", "task")

    def __init__(self, level: np.ndarray, octave: np.ndarray, task: np.ndarray):
        self.level = level
        self.octave = octave
        self.task = task

    @classmethod
    def from_stimuli(cls, stimuli) -> "StimulusCoords":
        return cls(*stimulus_arrays(stimuli))

    def __len__(self) -> int:
        return len(self.level)


def as_coords(stimuli) -> StimulusCoords:
    if isinstance(stimuli, StimulusCoords):
        return stimuli
    return StimulusCoords.from_stimuli(stimuli)


def responses_array(observations) -> np.ndarray:
    return np.array([o.response for o in observations], dtype=np.int64)
