"""The two-model bank deciding "same hearing" versus "changed hearing".

One model explains reference and current observations with a single latent
function; the other gives the current exam its own function, correlated
with the reference through a task correlation that is marginalized over a
fixed 50-point grid.  The bank tracks both models' evidences for the
current-exam data, the model posterior, and the Bayes factor.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import BadsError, EvidenceError, NumericalDegeneracyError, ParameterError
from .ep import EPState, ep_fit, latent_predict_batch
from .hyperopt import DEFAULT_HYPERPRIOR, HyperPrior, map_optimize, simplex_maximize
from .kernels import (
    DEFAULT_HYPERPARAMS,
    DifferentialKernel,
    HyperParams,
    SameFunctionKernel,
)
from .stimuli import CURRENT_TASK, REFERENCE_TASK, Observation, ToneStimulus

logger = logging.getLogger(__name__)

RHO_GRID_SIZE = 50
#: |rho| = 1 makes duplicated cross-task inputs exactly singular; the grid
#: endpoints are pulled inside by this margin.
RHO_ENDPOINT_MARGIN = 1e-6

MIN_REFERENCE_OBSERVATIONS = 10

#: appending observations can only multiply a component's evidence by
#: probabilities <= 1, so log Z(joint) <= log Z(reference) up to EP
#: approximation slack; fits violating this are numerically corrupt.
EVIDENCE_SLACK = 0.5

SAME_MODEL = "same"
DIFFERENT_MODEL = "different"

SERIALIZATION_VERSION = 1


@dataclass(frozen=True)
class RhoGrid:
    """Uniform marginalization grid for the task correlation."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def uniform(cls, size: int = RHO_GRID_SIZE) -> "RhoGrid":
        pts = np.linspace(-1.0, 1.0, size)
        limit = 1.0 - RHO_ENDPOINT_MARGIN
        return cls(np.clip(pts, -limit, limit), np.full(size, 1.0 / size))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class PredictiveBernoulliMixture:
    """Weighted Bernoulli components; collapses to a single Bernoulli."""

    weights: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-9:
            raise ParameterError("mixture weights must sum to 1")
        if np.any(self.probs < -1e-12) or np.any(self.probs > 1.0 + 1e-12):
            raise ParameterError("mixture probabilities must lie in [0, 1]")

    @classmethod
    def single(cls, p: float) -> "PredictiveBernoulliMixture":
        return cls(np.array([1.0]), np.array([float(p)]))

    @property
    def collapsed_p(self) -> float:
        return float(np.clip(self.weights @ self.probs, 0.0, 1.0))


@dataclass(frozen=True)
class ModelDecision:
    """Outcome of a differential test: evidence ratio oriented at the winner."""

    bayes_factor: float
    winner: str
    posterior_trace: tuple = ()


@dataclass
class TaskMean:
    """Constant latent mean per task (reference vs current exam)."""

    c_ref: float
    c_new: float

    def __call__(self, coords) -> np.ndarray:
        return np.where(coords.task == CURRENT_TASK, self.c_new, self.c_ref)


def _theta_g_subgrid(size: int, grid_size: int) -> np.ndarray:
    idx = np.unique(np.round(np.linspace(0, grid_size - 1, size)).astype(int))
    return idx


class ModelBank:
    """Paired same/different models over one reference exam.

    Construct with :meth:`fit_reference` (runs the MAP fit) or
    :meth:`from_theta` (hyperparameters supplied).  ``update`` folds in one
    current-exam observation at a time; reference hyperparameters stay
    frozen for the life of the bank.
    """

    def __init__(
        self,
        reference,
        theta_f: HyperParams,
        *,
        theta_g: HyperParams | None = None,
        rho_grid: RhoGrid | None = None,
        model_prior: tuple[float, float] = (0.5, 0.5),
        evidence_mode: str = "predictive",
        hyperprior: HyperPrior = DEFAULT_HYPERPRIOR,
        theta_g_maxfev: int = 24,
        theta_g_subgrid: int = 7,
    ):
        reference = list(reference)
        if len(reference) < MIN_REFERENCE_OBSERVATIONS:
            raise ParameterError(
                f"need at least {MIN_REFERENCE_OBSERVATIONS} reference observations"
            )
        if any(o.stimulus.task != REFERENCE_TASK for o in reference):
            raise ParameterError("reference observations must all carry task 1")
        if evidence_mode not in ("predictive", "joint"):
            raise ParameterError(f"unknown evidence mode {evidence_mode!r}")
        if abs(sum(model_prior) - 1.0) > 1e-12 or min(model_prior) < 0.0:
            raise ParameterError("model prior must be a distribution over 2 models")

        self.reference = reference
        self.new: list[Observation] = []
        self._theta_f = theta_f
        self.theta_g = theta_g if theta_g is not None else theta_f
        # The changed-function search is anchored at the reference fit:
        # kernel scales describe the exam family and should not drift on a
        # handful of points, while the mean offset (threshold shift) gets
        # room to move.  An unanchored search lets the best-fitting low-rho
        # component drag the shared parameters, which breaks the high-rho
        # components that must keep tracking the shared-function model.
        self.theta_g_prior = HyperPrior(
            c_mean=theta_f.c,
            c_sd=3.0,
            log_alpha_mean=math.log(theta_f.alpha),
            log_alpha_sd=0.5,
            # threshold-curve shape may change between exams (loss onset
            # grows slopes), so the wiggle amplitude anchors at population
            # scale rather than at the reference fit
            log_beta_mean=hyperprior.log_beta_mean,
            log_beta_sd=0.75,
            log_ell_mean=math.log(theta_f.ell),
            log_ell_sd=0.5,
        )
        self.rho_grid = rho_grid if rho_grid is not None else RhoGrid.uniform()
        self.model_prior = (float(model_prior[0]), float(model_prior[1]))
        self.evidence_mode = evidence_mode
        self.hyperprior = hyperprior
        self.theta_g_maxfev = theta_g_maxfev
        self.theta_g_subgrid = _theta_g_subgrid(theta_g_subgrid, len(self.rho_grid))

        self.ep_ref = ep_fit(reference, theta_f.c, SameFunctionKernel(theta_f))
        self.ep_f = self.ep_ref
        self.ep_g: list[EPState | None] = [
            self.ep_ref.with_model(*self._component_model(j))
            for j in range(len(self.rho_grid))
        ]
        self.log_evidence_f = 0.0
        self.log_evidence_g = 0.0
        self.posterior = self.model_prior
        self._recompute_posterior()

    # ------------------------------------------------------------- setup

    @property
    def theta_f(self) -> HyperParams:
        """Reference-exam hyperparameters; frozen after the reference fit."""
        return self._theta_f

    @classmethod
    def fit_reference(
        cls,
        reference,
        *,
        hyperprior: HyperPrior = DEFAULT_HYPERPRIOR,
        init: HyperParams | None = None,
        map_restarts: int = 3,
        map_maxfev: int = 200,
        **kwargs,
    ) -> "ModelBank":
        """MAP-fit the reference exam and assemble the bank around it."""
        reference = list(reference)
        theta_f = map_optimize(
            reference,
            hyperprior,
            init if init is not None else DEFAULT_HYPERPARAMS,
            restarts=map_restarts,
            maxfev=map_maxfev,
        )
        return cls(reference, theta_f, hyperprior=hyperprior, **kwargs)

    @classmethod
    def from_theta(cls, reference, theta_f: HyperParams, **kwargs) -> "ModelBank":
        return cls(reference, theta_f, **kwargs)

    def _component_model(self, j: int):
        mean = TaskMean(self._theta_f.c, self.theta_g.c)
        kernel = DifferentialKernel(
            self._theta_f, self.theta_g, float(self.rho_grid.points[j])
        )
        return mean, kernel

    # ------------------------------------------------------------- update

    @property
    def joint(self) -> list[Observation]:
        return self.reference + self.new

    def update(self, obs: Observation) -> "ModelBank":
        """Fold in one current-exam observation.

        Refits the shared-function model, re-optimizes the current-exam
        hyperparameters (reference ones stay frozen), refits every task
        correlation component and recomputes evidences and posterior.
        """
        if obs.stimulus.task != CURRENT_TASK:
            raise ParameterError("bank updates take current-exam (task 2) data")
        self.new.append(obs)
        joint = self.joint

        self.ep_f = ep_fit(
            joint,
            self._theta_f.c,
            SameFunctionKernel(self._theta_f),
            warm_start=(self.ep_f.site_precisions, self.ep_f.site_means),
        )
        self._optimize_theta_g()
        self._refit_components()
        self._recompute_posterior()
        return self

    def _component_warm(self, j: int):
        state = self.ep_g[j]
        if state is None:
            return None
        return (state.site_precisions, state.site_means)

    def _theta_g_objective_factory(self):
        joint = self.joint
        sub = self.theta_g_subgrid
        rho = self.rho_grid.points
        theta_f = self._theta_f
        prior = self.theta_g_prior
        warm = {j: self._component_warm(j) for j in sub}

        ceiling = self.ep_ref.log_evidence + EVIDENCE_SLACK

        def objective(vec: np.ndarray) -> float:
            theta_g = HyperParams.from_log_vector(vec)
            logz = []
            for j in sub:
                mean = TaskMean(theta_f.c, theta_g.c)
                kernel = DifferentialKernel(theta_f, theta_g, float(rho[j]))
                try:
                    # looser tolerance and sweep cap: the search needs the
                    # evidence surface shape, not converged site parameters
                    state = ep_fit(
                        joint,
                        mean,
                        kernel,
                        warm_start=warm[j],
                        tol=1e-5,
                        max_sweeps=80,
                    )
                except BadsError:
                    continue
                if state.log_evidence > ceiling:
                    continue
                warm[j] = (state.site_precisions, state.site_means)
                logz.append(state.log_evidence)
            if not logz:
                raise EvidenceError("no task-correlation component converged")
            marginal = float(logsumexp(logz) - np.log(len(logz)))
            return marginal + prior.log_density(theta_g)

        return objective

    def _optimize_theta_g(self):
        if len(self.new) == 0:
            return
        objective = self._theta_g_objective_factory()
        try:
            best_x, _ = simplex_maximize(
                objective,
                self.theta_g.log_vector(),
                restarts=1,
                maxfev=self.theta_g_maxfev,
                seed=len(self.new),
            )
        except BadsError:
            logger.warning("current-exam hyperparameter search failed; keeping previous")
            return
        self.theta_g = HyperParams.from_log_vector(best_x)

    def _refit_components(self):
        joint = self.joint
        ceiling = self.ep_ref.log_evidence + EVIDENCE_SLACK
        failed = 0
        for j in range(len(self.rho_grid)):
            mean, kernel = self._component_model(j)
            try:
                state = ep_fit(joint, mean, kernel, warm_start=self._component_warm(j))
                if state.log_evidence > ceiling:
                    raise NumericalDegeneracyError(
                        f"component evidence {state.log_evidence:.2f} above the "
                        f"reference-data ceiling {ceiling:.2f}"
                    )
                self.ep_g[j] = state
            except BadsError as exc:
                failed += 1
                logger.warning(
                    "dropping task-correlation component %d (rho=%.3f): %s",
                    j,
                    self.rho_grid.points[j],
                    exc,
                )
                self.ep_g[j] = None
        if failed:
            logger.warning("%d/%d components dropped this update", failed, len(self.rho_grid))

    # ----------------------------------------------------------- evidence

    def _active_components(self) -> list[int]:
        return [j for j, s in enumerate(self.ep_g) if s is not None]

    def evidence_g_components(self) -> tuple[np.ndarray, np.ndarray]:
        """(log evidences, renormalized weights) over surviving components."""
        active = self._active_components()
        if not active:
            raise EvidenceError("every task-correlation component failed")
        logz = np.array([self.ep_g[j].log_evidence for j in active])
        w = self.rho_grid.weights[active]
        return logz, w / w.sum()

    def evidence_g(self) -> float:
        """Quadrature (log-sum-exp) evidence of the changed-function model."""
        logz, w = self.evidence_g_components()
        return float(logsumexp(logz + np.log(w)))

    def _recompute_posterior(self):
        base = self.ep_ref.log_evidence if self.evidence_mode == "predictive" else 0.0
        self.log_evidence_f = self.ep_f.log_evidence - base
        self.log_evidence_g = self.evidence_g() - base
        logits = np.array(
            [
                self.log_evidence_f + np.log(self.model_prior[0]),
                self.log_evidence_g + np.log(self.model_prior[1]),
            ]
        )
        logits -= logsumexp(logits)
        post = np.exp(logits)
        post /= post.sum()
        self.posterior = (float(post[0]), float(post[1]))

    def model_posterior(self) -> tuple[float, float]:
        return self.posterior

    @property
    def log_bayes_factor(self) -> float:
        """Signed log evidence ratio: positive favors the same-function model."""
        return self.log_evidence_f - self.log_evidence_g

    def decision(self, posterior_trace: tuple = ()) -> ModelDecision:
        gap = self.log_bayes_factor
        winner = SAME_MODEL if gap >= 0 else DIFFERENT_MODEL
        return ModelDecision(
            bayes_factor=float(np.exp(abs(gap))),
            winner=winner,
            posterior_trace=posterior_trace,
        )

    # --------------------------------------------------------- predictive

    def predictive_mf_batch(self, stimuli) -> np.ndarray:
        mu, var = latent_predict_batch(self.ep_f, stimuli)
        return ndtr(mu / np.sqrt(1.0 + var))

    def predictive_mf(self, x_star: ToneStimulus) -> float:
        """Heard-probability under the shared-function model."""
        return float(self.predictive_mf_batch((x_star,))[0])

    def predictive_mg_batch(self, stimuli) -> tuple[np.ndarray, np.ndarray]:
        """(weights (J,), probs (J, m)) over surviving components."""
        active = self._active_components()
        if not active:
            raise EvidenceError("every task-correlation component failed")
        probs = np.empty((len(active), len(stimuli)))
        for row, j in enumerate(active):
            mu, var = latent_predict_batch(self.ep_g[j], stimuli)
            probs[row] = ndtr(mu / np.sqrt(1.0 + var))
        w = self.rho_grid.weights[active]
        return w / w.sum(), probs

    def predictive_mg(self, x_star: ToneStimulus) -> PredictiveBernoulliMixture:
        """Heard-probability mixture under the changed-function model."""
        w, probs = self.predictive_mg_batch((x_star,))
        return PredictiveBernoulliMixture(w, probs[:, 0])

    def marginal_predictive_batch(self, stimuli) -> tuple[np.ndarray, np.ndarray]:
        p_f, p_g = self.posterior
        w_g, probs_g = self.predictive_mg_batch(stimuli)
        weights = np.concatenate(([p_f], p_g * w_g))
        probs = np.vstack([self.predictive_mf_batch(stimuli), probs_g])
        return weights, probs

    def marginal_predictive(self, x_star: ToneStimulus) -> PredictiveBernoulliMixture:
        """Model-marginal heard-probability mixture."""
        weights, probs = self.marginal_predictive_batch((x_star,))
        return PredictiveBernoulliMixture(weights, probs[:, 0])

    # -------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        def obs_list(lst):
            return [
                {
                    "freq_hz": o.stimulus.frequency_hz,
                    "intensity_db": o.stimulus.intensity_db,
                    "task": o.stimulus.task,
                    "response": o.response,
                }
                for o in lst
            ]

        def theta_dict(t: HyperParams):
            return {"c": t.c, "alpha": t.alpha, "beta": t.beta, "ell": t.ell}

        return {
            "version": SERIALIZATION_VERSION,
            "model_prior": list(self.model_prior),
            "evidence_mode": self.evidence_mode,
            "rho_grid_size": len(self.rho_grid),
            "theta_f": theta_dict(self._theta_f),
            "theta_g": theta_dict(self.theta_g),
            "reference": obs_list(self.reference),
            "new": obs_list(self.new),
            "log_evidence_f": self.log_evidence_f,
            "log_evidence_g": self.log_evidence_g,
            "posterior": list(self.posterior),
            "theta_g_maxfev": self.theta_g_maxfev,
            "theta_g_subgrid": len(self.theta_g_subgrid),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelBank":
        if doc.get("version") != SERIALIZATION_VERSION:
            raise ParameterError(f"unsupported bank document version {doc.get('version')!r}")

        def parse_obs(items):
            return [
                Observation(
                    ToneStimulus(d["freq_hz"], d["intensity_db"], d["task"]),
                    d["response"],
                )
                for d in items
            ]

        def parse_theta(d):
            return HyperParams(d["c"], d["alpha"], d["beta"], d["ell"])

        bank = cls(
            parse_obs(doc["reference"]),
            parse_theta(doc["theta_f"]),
            theta_g=parse_theta(doc["theta_g"]),
            rho_grid=RhoGrid.uniform(doc["rho_grid_size"]),
            model_prior=tuple(doc["model_prior"]),
            evidence_mode=doc["evidence_mode"],
            theta_g_maxfev=doc.get("theta_g_maxfev", 24),
            theta_g_subgrid=doc.get("theta_g_subgrid", 7),
        )
        new = parse_obs(doc["new"])
        if new:
            bank.new = new
            joint = bank.joint
            bank.ep_f = ep_fit(
                joint,
                bank._theta_f.c,
                SameFunctionKernel(bank._theta_f),
                warm_start=(bank.ep_f.site_precisions, bank.ep_f.site_means),
            )
            bank._refit_components()
            bank._recompute_posterior()
        return bank

    @classmethod
    def from_json(cls, text: str) -> "ModelBank":
        return cls.from_dict(json.loads(text))


def fit_reference(reference, **kwargs) -> ModelBank:
    """MAP-fit a reference exam and build the model bank (module-level alias)."""
    return ModelBank.fit_reference(reference, **kwargs)


def update(bank: ModelBank, obs: Observation) -> ModelBank:
    return bank.update(obs)
