from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional

import click

from ppf_lab.cli.shared import RunContext, load_run_config
from ppf_lab.services.experiment_service import checks_frame, ranking_frame, run_ranking_experiment
from ppf_lab.utils.io import write_frame

logger = logging.getLogger(__name__)


def parse_seeds(_: click.Context, __: click.Parameter, value: Optional[str]) -> Optional[List[int]]:
    """Click callback for ``--seeds 0,1,2``."""
    if value is None:
        return None
    try:
        seeds = [int(s) for s in value.split(",") if s.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}") from exc
    if not seeds or any(s < 0 for s in seeds) or len(set(seeds)) != len(seeds):
        raise click.BadParameter(f"expected distinct non-negative seeds, got {value!r}")
    return seeds


@click.command("rank")
@click.option("--config", "config_path", type=click.Path(path_type=Path), required=True,
              help="YAML run configuration.")
@click.option("--out", "out", type=click.Path(path_type=Path), default=None,
              help="Output directory (overrides output_dir).")
@click.option("--seeds", callback=parse_seeds, default=None,
              help="Comma-separated seeds (overrides ranking.seeds).")
@click.option("--epochs", type=click.IntRange(min=1), default=None,
              help="Epoch budget per network (overrides ranking.epochs).")
@click.option("--strict", is_flag=True, help="Exit with status 1 when a check fails.")
@click.pass_context
def rank(
    ctx: click.Context,
    config_path: Path,
    out: Optional[Path],
    seeds: Optional[List[int]],
    epochs: Optional[int],
    strict: bool,
) -> None:
    """Train and score M1-M4 on one fresh dataset per seed and check their ordering."""
    obj = ctx.find_object(dict) or {}
    run = RunContext(load_run_config(config_path, out=out), threads=obj.get("threads"))
    outcome = run_ranking_experiment(run.case, run.cfg, seeds, workers=run.threads, epochs=epochs)

    table = write_frame(ranking_frame(outcome), run.ranking_dir / "ranking.csv")
    run.write_meta(table, seeds=outcome.seeds)
    checks = write_frame(checks_frame(outcome), run.ranking_dir / "checks.csv")
    run.write_meta(checks, seeds=outcome.seeds)

    for check in outcome.checks:
        verdict = "pass" if check.passed else "FAIL"
        click.echo(f"{check.name}: {check.wins}/{check.seeds} seeds (need {check.required}) {verdict}"
                   f"  [{check.description}]")
    click.echo(f"ranking: {table}")
    if strict and not outcome.passed:
        ctx.exit(1)
