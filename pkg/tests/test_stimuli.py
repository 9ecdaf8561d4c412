import math

import pytest

from bads.errors import ParameterError
from bads.stimuli import (
    Observation,
    StimulusCoords,
    ToneStimulus,
    as_coords,
    frequency_from_octaves,
    intensity_from_level,
    level,
    octaves,
)


def test_octave_mapping_round_trip():
    assert octaves(125.0) == 0.0
    assert octaves(1000.0) == 3.0
    assert octaves(16000.0) == 7.0
    assert frequency_from_octaves(octaves(440.0)) == pytest.approx(440.0)


def test_level_mapping():
    assert level(-10.0) == 0.0
    assert level(110.0) == 1.0
    assert intensity_from_level(level(35.0)) == pytest.approx(35.0)


@pytest.mark.parametrize(
    "freq,intensity,task",
    [(100.0, 0.0, 1), (20000.0, 0.0, 1), (1000.0, -20.0, 1), (1000.0, 120.0, 2), (1000.0, 0.0, 3)],
)
def test_stimulus_invariants_rejected(freq, intensity, task):
    with pytest.raises(ParameterError):
        ToneStimulus(freq, intensity, task)


def test_observation_response_validated():
    tone = ToneStimulus(1000.0, 40.0, 1)
    assert Observation(tone, 1).response == 1
    with pytest.raises(ParameterError):
        Observation(tone, 2)


def test_with_task():
    tone = ToneStimulus(1000.0, 40.0, 1)
    assert tone.with_task(2).task == 2
    assert tone.with_task(2).frequency_hz == tone.frequency_hz


def test_coords_batch_matches_properties():
    tones = [ToneStimulus(500.0, 0.0, 1), ToneStimulus(2000.0, 55.0, 2)]
    coords = as_coords(tones)
    assert isinstance(coords, StimulusCoords)
    assert len(coords) == 2
    assert coords.octave[0] == pytest.approx(tones[0].octave)
    assert coords.level[1] == pytest.approx(tones[1].level)
    assert list(coords.task) == [1, 2]
    assert as_coords(coords) is coords
