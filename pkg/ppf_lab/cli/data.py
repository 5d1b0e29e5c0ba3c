from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import click

from ppf_lab.cli.shared import RunContext, run_options
from ppf_lab.services.dataset_service import save_dataset
from ppf_lab.services.scenario_service import build_dataset, magnitude_std_summary

logger = logging.getLogger(__name__)


@click.command("gen-data")
@run_options
@click.pass_context
def gen_data(ctx: click.Context, config_path: Path, seed: Optional[int], out: Optional[Path]) -> None:
    """Run the Monte Carlo simulation and store the ground-truth dataset."""
    run = RunContext.from_options(ctx, config_path, seed, out)
    case = run.case
    sampling = run.cfg.resolved_sampling()
    logger.info("Generating data for %s (%d buses, seed %d)", case.name, case.n_bus, sampling.seed)

    dataset = build_dataset(
        case,
        sampling,
        run.cfg.solver,
        workers=run.threads,
        metadata={"data_fingerprint": run.data_fingerprint, "case_sha256": run.case_sha256},
    )
    path = save_dataset(dataset, run.dataset_path)

    summary = magnitude_std_summary(dataset)
    click.echo(f"dataset: {path} ({dataset.n_rows} rows, split {dataset.split})")
    click.echo(f"rejected samples: {dataset.rejected_count}")
    click.echo(
        "load-bus magnitude std (train): min {min:.3e}, median {median:.3e}, max {max:.3e}".format(**summary)
    )
    for threshold, count in summary["at_or_below"].items():
        click.echo(f"  buses with std <= {threshold}: {count} of {len(summary['per_bus'])}")
