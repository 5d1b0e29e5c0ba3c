from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence

import click
import pandas as pd

from ppf_lab.cli.shared import RunContext, run_options
from ppf_lab.services.pipeline_service import SweepPoint, tune_alpha, tune_gamma
from ppf_lab.utils.io import write_frame

logger = logging.getLogger(__name__)


def sweep_frame(name: str, points: Sequence[SweepPoint], chosen: float) -> pd.DataFrame:
    detail_keys: List[str] = sorted(points[0].detail) if points else []
    rows = [
        {
            name: float(p.value),
            "score": float(p.score),
            **{k: p.detail[k] for k in detail_keys},
            "chosen": int(p.value == chosen),
        }
        for p in points
    ]
    return pd.DataFrame(rows, columns=[name, "score", *detail_keys, "chosen"])


@click.command("sweep")
@run_options
@click.option("--only", type=click.Choice(["gamma", "alpha"]), default=None,
              help="Run a single grid instead of both.")
@click.pass_context
def sweep(ctx: click.Context, config_path: Path, seed: Optional[int], out: Optional[Path], only: Optional[str]) -> None:
    """Validation sweeps over the gamma and alpha grids of the sweep section."""
    run = RunContext.from_options(ctx, config_path, seed, out)
    dataset = run.load_checked_dataset()
    section = run.cfg.sweep
    m4 = run.cfg.training.M4

    if only in (None, "gamma"):
        gamma, points = tune_gamma(section.gammas, dataset, m4, run.cfg.seed, epochs=section.epochs)
        path = write_frame(sweep_frame("gamma", points, gamma), run.sweep_dir / "gamma.csv")
        run.write_meta(path, chosen=gamma)
        click.echo(f"gamma: {gamma:g} (validation magnitude RMSE {min(p.score for p in points):.4e})")

    if only in (None, "alpha"):
        alpha, points = tune_alpha(section.alphas, run.case, dataset, m4, run.cfg.seed, epochs=section.epochs)
        path = write_frame(sweep_frame("alpha", points, alpha), run.sweep_dir / "alpha.csv")
        run.write_meta(path, chosen=alpha)
        click.echo(f"alpha: {alpha:g} (validation flow RMSE {min(p.score for p in points):.4e})")
