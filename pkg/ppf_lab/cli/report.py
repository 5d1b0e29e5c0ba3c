from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import click

from ppf_lab.cli.evaluation import enabled_metrics
from ppf_lab.cli.shared import RunContext, run_options
from ppf_lab.services.metrics_service import read_report_csv, render_report_table
from ppf_lab.utils.io import atomic_write_text

logger = logging.getLogger(__name__)


@click.command("report")
@run_options
@click.pass_context
def report(ctx: click.Context, config_path: Path, seed: Optional[int], out: Optional[Path]) -> None:
    """Re-render the text table from a stored ``eval/report.csv``."""
    run = RunContext.from_options(ctx, config_path, seed, out)
    loaded = read_report_csv(run.eval_dir / "report.csv")
    table = render_report_table(loaded, enabled_metrics(run))
    atomic_write_text(run.eval_dir / "report.txt", table)
    click.echo(table)
