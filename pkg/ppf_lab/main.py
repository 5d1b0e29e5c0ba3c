from __future__ import annotations

import logging
import sys
from typing import Any, Optional

import click

from ppf_lab.cli import data, evaluation, ranking, report, sweep, training
from ppf_lab.core.config import LOG_LEVEL
from ppf_lab.core.errors import PpfLabError

logger = logging.getLogger(__name__)

_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


# --------------------------------------------------------------------------- #
# Error boundary
# --------------------------------------------------------------------------- #
class _Group(click.Group):
    """Maps library errors to exit codes: 2 for usage / config, 1 otherwise."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except PpfLabError as exc:
            logger.debug("command failed", exc_info=True)
            click.echo(f"error: {exc}", err=True)
            ctx.exit(exc.exit_code)
        except (click.exceptions.Exit, click.ClickException, click.Abort):
            raise
        except Exception as exc:  # noqa: BLE001
            # Log full traceback, print a terse message
            logger.error("Unhandled exception: %s", exc, exc_info=True)
            click.echo(f"internal error: {exc}", err=True)
            ctx.exit(1)


# --------------------------------------------------------------------------- #
# Application factory
# --------------------------------------------------------------------------- #
def create_cli() -> click.Group:
    @click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
    @click.option("--log-level", type=click.Choice(_LEVELS, case_sensitive=False), default=None,
                  help=f"Logging level (default from PPF_LAB_LOG_LEVEL, currently {LOG_LEVEL}).")
    @click.option("--threads", type=click.IntRange(min=1), default=None,
                  help="Worker threads for the sample farm (default: PPF_LAB_THREADS).")
    @click.version_option(package_name="ppf-lab", message="%(prog)s %(version)s")
    @click.pass_context
    def app(ctx: click.Context, log_level: Optional[str], threads: Optional[int]) -> None:
        """Probabilistic power flow lab: data generation, training, evaluation."""
        if log_level:
            logging.getLogger().setLevel(log_level.upper())
        ctx.ensure_object(dict)
        ctx.obj["threads"] = threads

    app.add_command(data.gen_data)
    app.add_command(training.train)
    app.add_command(evaluation.evaluate)
    app.add_command(sweep.sweep)
    app.add_command(report.report)
    app.add_command(ranking.rank)
    return app


cli = create_cli()


def main(argv: Optional[list] = None) -> None:
    """Console-script entry point."""
    cli.main(args=argv if argv is not None else sys.argv[1:], prog_name="ppf-lab")


if __name__ == "__main__":  # pragma: no cover
    main()
