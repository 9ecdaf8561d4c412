"""Experiment runner: single trials, the 7x7 class grid and strategy
comparisons, with CSV and SVG emission.

A trial simulates one differential test: build (or reuse) a reference exam
for the old condition, then actively query a subject drawn from the new
condition until the Bayes factor crosses its threshold or the iteration
budget runs out.  Everything is a pure function of the seeds.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .acquisition import CandidateGrid, STRATEGIES, select_next
from .bank import DIFFERENT_MODEL, SAME_MODEL, ModelBank
from .ep import EPState, ep_fit
from .errors import BadsError, ParameterError
from .hyperopt import map_optimize
from .kernels import DEFAULT_HYPERPARAMS, SameFunctionKernel
from .simulate import (
    DEFAULT_SPREAD_DB,
    HearingLossClass,
    ReferenceExam,
    canonical_audiogram,
    generate_reference_exam,
    sample_response,
)
from . import svgchart

#: BALD baseline refits its hyperparameters every this many new observations.
BALD_REFIT_EVERY = 10

CLASSES = tuple(HearingLossClass)


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministic child seed for a (cell, repetition, purpose) tuple."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class TrialConfig:
    old_class: HearingLossClass
    new_class: HearingLossClass
    strategy: str = "bads"
    seed: int = 0
    exam_seed: int | None = None
    max_iterations: int = 50
    bf_threshold: float = 100.0
    spread: float = DEFAULT_SPREAD_DB
    evidence_mode: str = "predictive"
    grid_frequencies: int = 32
    grid_intensities: int = 25

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")
        if self.bf_threshold <= 1.0:
            raise ParameterError("bf_threshold must exceed 1")
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    p_same: float
    p_different: float
    log_bf: float
    freq_hz: float | None = None
    intensity_db: float | None = None
    response: int | None = None


@dataclass(frozen=True)
class TrialResult:
    config: TrialConfig
    iterations_to_threshold: int | None
    winner: str
    correct_model: str
    posterior_trace: tuple
    failed_at: int | None = None

    @property
    def detected_correctly(self) -> bool:
        return self.iterations_to_threshold is not None and self.winner == self.correct_model


def correct_model_for(old: HearingLossClass, new: HearingLossClass) -> str:
    return SAME_MODEL if old == new else DIFFERENT_MODEL


class _BaldContext:
    """Current-exam-only GP for the BALD baseline, refit periodically."""

    def __init__(self):
        self.theta = DEFAULT_HYPERPARAMS
        self.state: EPState | None = None

    def refresh(self, observations):
        if not observations:
            self.state = None
            return
        if len(observations) % BALD_REFIT_EVERY == 0:
            try:
                self.theta = map_optimize(observations, init=self.theta)
            except BadsError:
                pass
        warm = None
        if self.state is not None:
            warm = (self.state.site_precisions, self.state.site_means)
        self.state = ep_fit(
            observations, self.theta.c, SameFunctionKernel(self.theta), warm_start=warm
        )


def run_trial(cfg: TrialConfig, exam: ReferenceExam | None = None) -> TrialResult:
    """Run one differential test; deterministic given the config seeds."""
    exam_seed = cfg.exam_seed if cfg.exam_seed is not None else derive_seed(cfg.seed, 0)
    gt_old = canonical_audiogram(cfg.old_class, cfg.spread)
    gt_new = canonical_audiogram(cfg.new_class, cfg.spread)
    if exam is None:
        exam = generate_reference_exam(gt_old, exam_seed)

    bank = ModelBank.from_theta(
        list(exam.observations),
        exam.map_theta if exam.map_theta is not None else DEFAULT_HYPERPARAMS,
        evidence_mode=cfg.evidence_mode,
    )
    grid = CandidateGrid.default(cfg.grid_frequencies, cfg.grid_intensities)
    response_rng = np.random.default_rng(derive_seed(cfg.seed, 1))
    select_rng_seed = derive_seed(cfg.seed, 2)
    bald = _BaldContext() if cfg.strategy == "bald" else None
    correct = correct_model_for(cfg.old_class, cfg.new_class)

    trace = [TraceRow(0, bank.posterior[0], bank.posterior[1], 0.0)]
    log_threshold = math.log(cfg.bf_threshold)
    crossed_at = None
    failed_at = None
    for it in range(1, cfg.max_iterations + 1):
        try:
            if bald is not None:
                bald.refresh(bank.new)
                tone = select_next(bank, grid, "bald", bald_state=bald.state)
            elif cfg.strategy == "rnd":
                tone = select_next(
                    bank, grid, "rnd", rng_seed=derive_seed(select_rng_seed, it)
                )
            else:
                tone = select_next(bank, grid, cfg.strategy)
            obs = sample_response(gt_new, tone.with_task(2), response_rng)
            bank.update(obs)
        except BadsError:
            failed_at = it
            break
        trace.append(
            TraceRow(
                it,
                bank.posterior[0],
                bank.posterior[1],
                abs(bank.log_bayes_factor),
                tone.frequency_hz,
                tone.intensity_db,
                obs.response,
            )
        )
        if abs(bank.log_bayes_factor) >= log_threshold:
            crossed_at = it
            break

    winner = SAME_MODEL if bank.posterior[0] >= bank.posterior[1] else DIFFERENT_MODEL
    return TrialResult(
        config=cfg,
        iterations_to_threshold=crossed_at,
        winner=winner,
        correct_model=correct,
        posterior_trace=tuple(trace),
        failed_at=failed_at,
    )


@dataclass(frozen=True)
class CellSummary:
    old_class: HearingLossClass
    new_class: HearingLossClass
    results: tuple
    degenerate: bool = False

    @property
    def crossing_iterations(self) -> list[int]:
        return [
            r.iterations_to_threshold for r in self.results if r.detected_correctly
        ]

    @property
    def mean_iterations(self) -> float | None:
        its = self.crossing_iterations
        return float(np.mean(its)) if its else None

    @property
    def std_iterations(self) -> float | None:
        its = self.crossing_iterations
        return float(np.std(its, ddof=1)) if len(its) > 1 else (0.0 if its else None)

    def posterior_of_correct(self, max_iterations: int) -> np.ndarray:
        """(reps, iterations+1) posterior-of-correct curves, padded with the
        final value for trials that concluded early."""
        correct = correct_model_for(self.old_class, self.new_class)
        rows = []
        for r in self.results:
            vals = [
                t.p_same if correct == SAME_MODEL else t.p_different
                for t in r.posterior_trace
            ]
            vals += [vals[-1]] * (max_iterations + 1 - len(vals))
            rows.append(vals)
        return np.array(rows)


@dataclass(frozen=True)
class GridSummary:
    cells: tuple
    master_seed: int
    reps: int
    strategy: str
    max_iterations: int

    def cell(self, old: HearingLossClass, new: HearingLossClass) -> CellSummary:
        for c in self.cells:
            if c.old_class == old and c.new_class == new:
                return c
        raise KeyError((old, new))


def _trial_task(args):
    cfg, exam = args
    return run_trial(cfg, exam=exam)


def _make_exam(args):
    old, spread, exam_seed = args
    return generate_reference_exam(canonical_audiogram(old, spread), exam_seed)


def run_grid(
    reps: int,
    strategy: str = "bads",
    master_seed: int = 0,
    *,
    old_classes=CLASSES,
    new_classes=CLASSES,
    max_iterations: int = 50,
    bf_threshold: float = 100.0,
    spread: float = DEFAULT_SPREAD_DB,
    workers: int = 1,
) -> GridSummary:
    """All (old, new) combinations, each repeated ``reps`` times.

    Reference exams are shared across cells in the same old-condition row
    (same exam seed), so a row costs one exam per repetition.
    """
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    all_classes = list(HearingLossClass)

    exam_specs = {}
    for old in old_classes:
        for rep in range(reps):
            key = (old, rep)
            exam_specs[key] = (
                old,
                spread,
                derive_seed(master_seed, 0, all_classes.index(old), rep),
            )
    exams = _parallel_map(_make_exam, list(exam_specs.values()), workers)
    exam_by_key = dict(zip(exam_specs.keys(), exams))

    tasks = []
    for old in old_classes:
        for new in new_classes:
            cell_idx = all_classes.index(old) * len(all_classes) + all_classes.index(new)
            for rep in range(reps):
                cfg = TrialConfig(
                    old_class=old,
                    new_class=new,
                    strategy=strategy,
                    seed=derive_seed(master_seed, 1, cell_idx, rep),
                    exam_seed=exam_by_key[(old, rep)].generator_seed,
                    max_iterations=max_iterations,
                    bf_threshold=bf_threshold,
                    spread=spread,
                )
                tasks.append((cfg, exam_by_key[(old, rep)]))
    results = _parallel_map(_trial_task, tasks, workers)

    by_cell: dict[tuple, list] = {}
    for res in results:
        key = (res.config.old_class, res.config.new_class)
        by_cell.setdefault(key, []).append(res)
    cells = []
    for old in old_classes:
        for new in new_classes:
            cell_results = sorted(
                by_cell[(old, new)], key=lambda r: r.config.seed
            )
            degenerate = old == HearingLossClass.PROFOUND and new == HearingLossClass.PROFOUND
            cells.append(
                CellSummary(old, new, tuple(cell_results), degenerate=degenerate)
            )
    return GridSummary(
        cells=tuple(cells),
        master_seed=master_seed,
        reps=reps,
        strategy=strategy,
        max_iterations=max_iterations,
    )


def _parallel_map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def compare_strategies(
    old_class: HearingLossClass,
    new_class: HearingLossClass,
    strategies=("bads", "bald", "us", "rnd"),
    reps: int = 10,
    master_seed: int = 0,
    *,
    max_iterations: int = 50,
    bf_threshold: float = 100.0,
    spread: float = DEFAULT_SPREAD_DB,
    workers: int = 1,
) -> dict:
    """Strategy comparison on one cell with paired seeds across strategies."""
    if len(strategies) < 2:
        raise ParameterError("compare_strategies needs at least two strategies")
    exam_specs = [
        (old_class, spread, derive_seed(master_seed, 0, 0, rep)) for rep in range(reps)
    ]
    exams = _parallel_map(_make_exam, exam_specs, workers)

    tasks = []
    for strategy in strategies:
        for rep in range(reps):
            cfg = TrialConfig(
                old_class=old_class,
                new_class=new_class,
                strategy=strategy,
                seed=derive_seed(master_seed, 1, 0, rep),
                exam_seed=exams[rep].generator_seed,
                max_iterations=max_iterations,
                bf_threshold=bf_threshold,
                spread=spread,
            )
            tasks.append((cfg, exams[rep]))
    results = _parallel_map(_trial_task, tasks, workers)

    by_strategy = {}
    for strategy in strategies:
        sres = tuple(r for r in results if r.config.strategy == strategy)
        by_strategy[strategy] = CellSummary(old_class, new_class, sres)
    return by_strategy


# --------------------------------------------------------------- emission


def _f(v) -> str:
    return "" if v is None else repr(float(v))


def write_trials_csv(summary: GridSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "cell",
                "rep",
                "iteration",
                "p_mf",
                "p_mg",
                "log_bf",
                "freq_hz",
                "intensity_db",
                "response",
            ]
        )
        for cell in summary.cells:
            name = f"{cell.old_class.value}:{cell.new_class.value}"
            for rep, res in enumerate(cell.results):
                for row in res.posterior_trace:
                    writer.writerow(
                        [
                            name,
                            rep,
                            row.iteration,
                            _f(row.p_same),
                            _f(row.p_different),
                            _f(row.log_bf),
                            _f(row.freq_hz),
                            _f(row.intensity_db),
                            "" if row.response is None else row.response,
                        ]
                    )


def write_summary_csv(summary: GridSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "mean_iters", "std_iters"])
        for cell in summary.cells:
            name = f"{cell.old_class.value}:{cell.new_class.value}"
            writer.writerow([name, _f(cell.mean_iterations), _f(cell.std_iterations)])


def write_grid_plots(summary: GridSummary, out_dir) -> list[str]:
    """Per-cell posterior-trajectory SVGs (median with quartile band)."""
    paths = []
    for cell in summary.cells:
        curves = cell.posterior_of_correct(summary.max_iterations)
        its = list(range(curves.shape[1]))
        series = [
            {
                "label": "median",
                "x": its,
                "y": np.median(curves, axis=0),
                "lo": np.quantile(curves, 0.25, axis=0),
                "hi": np.quantile(curves, 0.75, axis=0),
            }
        ]
        name = f"cell_{cell.old_class.value}_{cell.new_class.value}.svg"
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(
                svgchart.line_chart(
                    series,
                    title=f"{cell.old_class.value} to {cell.new_class.value} ({summary.strategy})",
                    x_label="iteration",
                    y_label="p(correct model)",
                    y_range=(0.0, 1.0),
                )
            )
        paths.append(path)
    return paths


def write_comparison_csv(by_strategy: dict, max_iterations: int, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "iteration", "median", "q25", "q75"])
        for strategy, cell in by_strategy.items():
            curves = cell.posterior_of_correct(max_iterations)
            med = np.median(curves, axis=0)
            q25 = np.quantile(curves, 0.25, axis=0)
            q75 = np.quantile(curves, 0.75, axis=0)
            for it in range(curves.shape[1]):
                writer.writerow(
                    [strategy, it, repr(float(med[it])), repr(float(q25[it])), repr(float(q75[it]))]
                )


def write_comparison_plot(by_strategy: dict, max_iterations: int, path, title: str) -> None:
    series = []
    for strategy, cell in by_strategy.items():
        curves = cell.posterior_of_correct(max_iterations)
        series.append(
            {
                "label": strategy,
                "x": list(range(curves.shape[1])),
                "y": np.median(curves, axis=0),
                "lo": np.quantile(curves, 0.25, axis=0),
                "hi": np.quantile(curves, 0.75, axis=0),
            }
        )
    with open(path, "w") as fh:
        fh.write(
            svgchart.line_chart(
                series,
                title=title,
                x_label="iteration",
                y_label="p(correct model)",
                y_range=(0.0, 1.0),
            )
        )
