"""Active differential audiometry toolkit.

Given a reference hearing exam, the package actively picks tone stimuli
that most quickly decide whether a subject's current psychometric function
matches the reference, using GP probit models, EP inference and
information-maximizing selection over a two-model bank.
"""

import os as _os

# EP works on small (n <= ~100) matrices where BLAS thread fan-out costs far
# more than it saves; trials parallelize across processes instead.  Set
# BADS_BLAS_THREADS=0 to leave the BLAS pools untouched.
_blas_threads = int(_os.environ.get("BADS_BLAS_THREADS", "1"))
if _blas_threads > 0:
    try:
        import threadpoolctl as _threadpoolctl

        _threadpoolctl.threadpool_limits(_blas_threads)
    except ImportError:  # pragma: no cover
        pass

from .backend import BACKEND
from .stimuli import Observation, ToneStimulus
from .kernels import DEFAULT_HYPERPARAMS, HyperParams
from .bank import ModelBank, ModelDecision, PredictiveBernoulliMixture, RhoGrid
from .acquisition import CandidateGrid, select_next
from .simulate import (
    GroundTruthAudiogram,
    HearingLossClass,
    ReferenceExam,
    canonical_audiogram,
    classify,
    generate_reference_exam,
    pta,
)
from .harness import TrialConfig, TrialResult, compare_strategies, run_grid, run_trial

__all__ = [
    "BACKEND",
    "CandidateGrid",
    "DEFAULT_HYPERPARAMS",
    "GroundTruthAudiogram",
    "HearingLossClass",
    "HyperParams",
    "ModelBank",
    "ModelDecision",
    "Observation",
    "PredictiveBernoulliMixture",
    "ReferenceExam",
    "RhoGrid",
    "ToneStimulus",
    "TrialConfig",
    "TrialResult",
    "canonical_audiogram",
    "classify",
    "compare_strategies",
    "generate_reference_exam",
    "pta",
    "run_grid",
    "run_trial",
    "select_next",
]

__version__ = "0.1.0"
