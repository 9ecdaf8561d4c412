"""Command-line interface for trials, grids, comparisons and the service."""

from __future__ import annotations

import json
import os

import click

from .harness import (
    CellSummary,
    GridSummary,
    TrialConfig,
    compare_strategies,
    run_grid,
    run_trial,
    write_comparison_csv,
    write_comparison_plot,
    write_grid_plots,
    write_summary_csv,
    write_trials_csv,
)
from .simulate import (
    HearingLossClass,
    canonical_audiogram,
    exam_to_csv,
    generate_reference_exam,
)

CLASS_CHOICES = [c.value for c in HearingLossClass]


def _merged(ctx: click.Context, **values):
    """Apply config-file values for parameters the user left at defaults."""
    path = values.pop("config", None)
    if not path:
        return values
    with open(path) as fh:
        overrides = json.load(fh)
    for name, value in values.items():
        source = ctx.get_parameter_source(name)
        if source == click.core.ParameterSource.DEFAULT and name in overrides:
            values[name] = overrides[name]
    return values


def _common(fn):
    fn = click.option("--config", type=click.Path(exists=True), default=None,
                      help="JSON file mirroring the flags; flags override it.")(fn)
    fn = click.option("--out", type=click.Path(), default="out",
                      help="Output directory.")(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--max-iter", "max_iter", type=int, default=50, show_default=True)(fn)
    fn = click.option("--bf", type=float, default=100.0, show_default=True,
                      help="Bayes factor threshold.")(fn)
    fn = click.option("--spread", type=float, default=5.0, show_default=True,
                      help="Simulated psychometric spread (dB).")(fn)
    fn = click.option("--workers", type=int, default=1, show_default=True)(fn)
    return fn


@click.group()
def main():
    """Active differential audiometry: trials, grids and the live service."""


@main.command()
@click.option("--old", type=click.Choice(CLASS_CHOICES), required=True)
@click.option("--new", type=click.Choice(CLASS_CHOICES), required=True)
@click.option("--strategy", type=click.Choice(["bads", "bald", "us", "rnd"]),
              default="bads", show_default=True)
@_common
@click.pass_context
def run(ctx, **kwargs):
    """Run one differential-test trial and write its trace."""
    v = _merged(ctx, **kwargs)
    cfg = TrialConfig(
        old_class=HearingLossClass.parse(v["old"]),
        new_class=HearingLossClass.parse(v["new"]),
        strategy=v["strategy"],
        seed=v["seed"],
        max_iterations=v["max_iter"],
        bf_threshold=v["bf"],
        spread=v["spread"],
    )
    result = run_trial(cfg)
    os.makedirs(v["out"], exist_ok=True)
    summary = GridSummary(
        cells=(CellSummary(cfg.old_class, cfg.new_class, (result,)),),
        master_seed=v["seed"],
        reps=1,
        strategy=v["strategy"],
        max_iterations=v["max_iter"],
    )
    write_trials_csv(summary, os.path.join(v["out"], "trials.csv"))
    write_grid_plots(summary, v["out"])
    if result.iterations_to_threshold is not None:
        click.echo(
            f"threshold crossed at iteration {result.iterations_to_threshold}; "
            f"winner: {result.winner} (correct: {result.correct_model})"
        )
    else:
        click.echo(
            f"no crossing in {v['max_iter']} iterations; leader: {result.winner} "
            f"(correct: {result.correct_model})"
        )
    click.echo(f"wrote {v['out']}/trials.csv")


@main.command()
@click.option("--reps", type=int, default=10, show_default=True)
@click.option("--strategy", type=click.Choice(["bads", "bald", "us", "rnd"]),
              default="bads", show_default=True)
@_common
@click.pass_context
def grid(ctx, **kwargs):
    """Run every (old, new) class combination."""
    v = _merged(ctx, **kwargs)
    summary = run_grid(
        v["reps"],
        v["strategy"],
        v["seed"],
        max_iterations=v["max_iter"],
        bf_threshold=v["bf"],
        spread=v["spread"],
        workers=v["workers"],
    )
    os.makedirs(v["out"], exist_ok=True)
    write_trials_csv(summary, os.path.join(v["out"], "trials.csv"))
    write_summary_csv(summary, os.path.join(v["out"], "summary.csv"))
    write_grid_plots(summary, v["out"])
    click.echo(f"wrote {v['out']}/trials.csv, summary.csv and per-cell SVGs")


@main.command()
@click.option("--old", type=click.Choice(CLASS_CHOICES), required=True)
@click.option("--new", type=click.Choice(CLASS_CHOICES), required=True)
@click.option("--reps", type=int, default=10, show_default=True)
@click.option("--strategies", default="bads,bald,us,rnd", show_default=True,
              help="Comma-separated strategy list.")
@_common
@click.pass_context
def compare(ctx, **kwargs):
    """Compare selection strategies on one class pair (paired seeds)."""
    v = _merged(ctx, **kwargs)
    strategies = tuple(s.strip() for s in v["strategies"].split(",") if s.strip())
    old = HearingLossClass.parse(v["old"])
    new = HearingLossClass.parse(v["new"])
    by_strategy = compare_strategies(
        old,
        new,
        strategies,
        v["reps"],
        v["seed"],
        max_iterations=v["max_iter"],
        bf_threshold=v["bf"],
        spread=v["spread"],
        workers=v["workers"],
    )
    os.makedirs(v["out"], exist_ok=True)
    write_comparison_csv(by_strategy, v["max_iter"], os.path.join(v["out"], "comparison.csv"))
    write_comparison_plot(
        by_strategy,
        v["max_iter"],
        os.path.join(v["out"], "comparison.svg"),
        title=f"{old.value} to {new.value}",
    )
    for strategy, cell in by_strategy.items():
        its = cell.crossing_iterations
        med = f"{float(__import__('numpy').median(its)):.1f}" if its else "-"
        click.echo(f"{strategy:5s}: {len(its)}/{v['reps']} crossed, median iterations {med}")
    click.echo(f"wrote {v['out']}/comparison.csv and comparison.svg")


@main.command()
@click.option("--hearing-class", "hearing_class", type=click.Choice(CLASS_CHOICES),
              required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--spread", type=float, default=5.0, show_default=True)
@click.option("--out", type=click.Path(), required=True,
              help="CSV path for the generated exam.")
def exam(hearing_class, seed, spread, out):
    """Generate a simulated 50-tone reference exam as CSV."""
    gt = canonical_audiogram(HearingLossClass.parse(hearing_class), spread)
    reference = generate_reference_exam(gt, seed)
    exam_to_csv(reference.observations, out)
    click.echo(f"wrote {out} ({len(reference.observations)} observations)")


@main.command()
@click.option("--listen", default=None, help="host:port (env BADS_LISTEN).")
@click.option("--data-dir", default=None, type=click.Path(),
              help="Session log directory (env BADS_DATA_DIR).")
@click.option("--ui-dir", default=None, type=click.Path(),
              help="Static web UI directory to host at /.")
def serve(listen, data_dir, ui_dir):
    """Start the live differential-test HTTP service."""
    import uvicorn

    from .service import create_app

    listen = listen or os.environ.get("BADS_LISTEN", "127.0.0.1:8000")
    data_dir = data_dir or os.environ.get("BADS_DATA_DIR", "./bads-sessions")
    host, _, port = listen.rpartition(":")
    app = create_app(data_dir=data_dir, ui_dir=ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))


if __name__ == "__main__":
    main()
