from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional

import click

from ppf_lab.cli.shared import RunContext, parse_methods, run_options
from ppf_lab.core.errors import BundleError
from ppf_lab.models.estimators import MethodBundle
from ppf_lab.models.reports import METRIC_NAMES, QUANTITIES
from ppf_lab.models.settings import METHOD_IDS
from ppf_lab.services.metrics_service import render_report_table, write_distance_profile, write_report_csv
from ppf_lab.services.pipeline_service import MANIFEST_NAME, evaluate_methods, load_bundle
from ppf_lab.utils.io import atomic_write_text

logger = logging.getLogger(__name__)


def enabled_metrics(run: RunContext) -> List[str]:
    section = run.cfg.evaluation
    wanted = {"rmse": section.rmse, "awd": section.awd, "e1": section.moments, "e2": section.moments}
    return [m for m in METRIC_NAMES if wanted[m]]


@click.command("eval")
@run_options
@click.option("--methods", callback=parse_methods, default=None,
              help="Bundles to evaluate (default: every trained one).")
@click.pass_context
def evaluate(
    ctx: click.Context,
    config_path: Path,
    seed: Optional[int],
    out: Optional[Path],
    methods: Optional[List[str]],
) -> None:
    """Score trained bundles on the test split and write the report files."""
    run = RunContext.from_options(ctx, config_path, seed, out)
    if methods is None:
        methods = [m for m in METHOD_IDS if (run.bundle_dir(m) / MANIFEST_NAME).exists()]
        if not methods:
            raise BundleError(f"no trained bundles under {run.out_dir / 'bundles'}; run train first")

    bundles: Dict[str, MethodBundle] = {m: load_bundle(run.bundle_dir(m)) for m in methods}
    dataset = run.load_checked_dataset()
    report = evaluate_methods(run.case, dataset, bundles)

    metrics = enabled_metrics(run)
    csv_path = write_report_csv(report, run.eval_dir / "report.csv", metrics)
    run.write_meta(csv_path, methods=methods, split="test")
    table = render_report_table(report, metrics)
    atomic_write_text(run.eval_dir / "report.txt", table)

    if run.cfg.evaluation.awd:
        for quantity in QUANTITIES:
            per_method = {m: report.results[m][quantity].per_response_wd for m in report.methods()}
            write_distance_profile(per_method, report.response_labels[quantity],
                                   run.eval_dir / f"wd_{quantity}.csv")
    click.echo(table)
    click.echo(f"report: {csv_path}")
