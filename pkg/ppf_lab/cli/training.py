from __future__ import annotations

import logging
import shutil
from pathlib import Path
from typing import List, Optional

import click
import pandas as pd

from ppf_lab.cli.shared import RunContext, parse_methods, run_options
from ppf_lab.core.errors import ConfigurationError
from ppf_lab.models.settings import METHOD_IDS
from ppf_lab.services.mlp_service import TrainingHistory
from ppf_lab.services.pipeline_service import MANIFEST_NAME, save_bundle, train_method
from ppf_lab.utils.io import write_frame

logger = logging.getLogger(__name__)


def history_frame(history: TrainingHistory) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.epoch, r.train_loss, r.validation_loss, int(r.best)) for r in history.records],
        columns=["epoch", "train_loss", "validation_loss", "best"],
    )


@click.command("train")
@run_options
@click.option("--methods", callback=parse_methods, default=None,
              help=f"Comma-separated subset of {','.join(METHOD_IDS)} (default: all).")
@click.option("--force", is_flag=True, help="Overwrite existing bundles.")
@click.pass_context
def train(
    ctx: click.Context,
    config_path: Path,
    seed: Optional[int],
    out: Optional[Path],
    methods: Optional[List[str]],
    force: bool,
) -> None:
    """Train the requested methods on the stored dataset."""
    run = RunContext.from_options(ctx, config_path, seed, out)
    methods = methods or list(METHOD_IDS)

    existing = [m for m in methods if (run.bundle_dir(m) / MANIFEST_NAME).exists()]
    if existing and not force:
        raise ConfigurationError(
            f"bundle already exists: {', '.join(str(run.bundle_dir(m)) for m in existing)}; "
            "pass --force to retrain"
        )

    dataset = run.load_checked_dataset()
    for method in methods:
        result = train_method(method, run.case, dataset, run.cfg.training, run.cfg.seed)
        bundle = result.bundle
        bundle.provenance.update(
            {"config_fingerprint": run.config_fingerprint, "data_fingerprint": run.data_fingerprint}
        )
        target = run.bundle_dir(method)
        if target.exists():
            shutil.rmtree(target)
        save_bundle(bundle, target)

        for component, history in sorted(result.histories.items()):
            path = run.history_path(method, component)
            write_frame(history_frame(history), path)
            run.write_meta(path, method=method, component=component, best_epoch=history.best_epoch)

        extra = ""
        if bundle.split is not None:
            extra = f", gamma {bundle.split.gamma:g}: {len(bundle.split.small_std)} linear / " \
                    f"{len(bundle.split.big_std)} network buses"
        click.echo(f"{method}: saved to {target} ({result.seconds:.2f} s{extra})")
