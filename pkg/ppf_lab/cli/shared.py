"""
Pieces every subcommand needs: the common options, run-config loading with
flag overrides, artifact paths and fingerprints, and the staleness guard.

Precedence: command-line flag > config file value > model default.
Relative ``case_path`` values resolve against the config file's directory;
``output_dir`` resolves against the working directory.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click
from pydantic import ValidationError

from ppf_lab.core.errors import ConfigurationError, InputFileNotFound, StaleArtifactError
from ppf_lab.models.network import NetworkCase
from ppf_lab.models.settings import METHOD_IDS, RunConfig
from ppf_lab.models.states import Dataset
from ppf_lab.services.case_service import load_case
from ppf_lab.services.dataset_service import load_dataset
from ppf_lab.utils.io import file_sha256, fingerprint, read_yaml, sidecar_path, write_yaml

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------- #
# Options
# --------------------------------------------------------------------------- #
def run_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """``--config`` / ``--seed`` / ``--out`` shared by every subcommand."""
    func = click.option("--out", "out", type=click.Path(path_type=Path), default=None,
                        help="Output directory (overrides output_dir).")(func)
    func = click.option("--seed", type=click.IntRange(min=0), default=None,
                        help="Run seed (overrides seed).")(func)
    func = click.option("--config", "config_path", type=click.Path(path_type=Path), required=True,
                        help="YAML run configuration.")(func)
    return func


def parse_methods(_: click.Context, __: click.Parameter, value: Optional[str]) -> Optional[List[str]]:
    """Click callback for ``--methods M1,M3``."""
    if value is None:
        return None
    methods = [m.strip().upper() for m in value.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHOD_IDS]
    if bad or not methods:
        raise click.BadParameter(f"unknown method(s) {bad or value!r}; choose from {', '.join(METHOD_IDS)}")
    return sorted(set(methods), key=METHOD_IDS.index)


# --------------------------------------------------------------------------- #
# Run context
# --------------------------------------------------------------------------- #
def load_run_config(config_path: Path, seed: Optional[int] = None, out: Optional[Path] = None) -> RunConfig:
    if not config_path.is_file():
        raise InputFileNotFound(config_path, "config file")
    raw = read_yaml(config_path)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["output_dir"] = str(out)
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"{config_path}: invalid configuration\n{exc}") from exc
    if not cfg.case_path.is_absolute():
        cfg = cfg.model_copy(update={"case_path": (config_path.parent / cfg.case_path).resolve()})
    return cfg


@dataclass
class RunContext:
    cfg: RunConfig
    threads: Optional[int] = None

    @classmethod
    def from_options(cls, ctx: click.Context, config_path: Path, seed: Optional[int], out: Optional[Path]) -> "RunContext":
        obj = ctx.find_object(dict) or {}
        return cls(load_run_config(config_path, seed, out), threads=obj.get("threads"))

    @cached_property
    def case(self) -> NetworkCase:
        return load_case(self.cfg.case_path)

    @cached_property
    def case_sha256(self) -> str:
        return file_sha256(self.cfg.case_path)

    # Paths ----------------------------------------------------------------- #
    @property
    def out_dir(self) -> Path:
        return Path(self.cfg.output_dir)

    @property
    def dataset_path(self) -> Path:
        return self.out_dir / "data" / "dataset.csv"

    def bundle_dir(self, method: str) -> Path:
        return self.out_dir / "bundles" / method

    def history_path(self, method: str, component: str) -> Path:
        return self.out_dir / "train" / f"{method}_{component}_history.csv"

    @property
    def eval_dir(self) -> Path:
        return self.out_dir / "eval"

    @property
    def sweep_dir(self) -> Path:
        return self.out_dir / "sweep"

    @property
    def ranking_dir(self) -> Path:
        return self.out_dir / "ranking"

    # Fingerprints ---------------------------------------------------------- #
    @property
    def data_fingerprint(self) -> str:
        """Case text + sampling + solver settings: everything a dataset depends on."""
        return fingerprint(
            self.case_sha256,
            self.cfg.resolved_sampling().model_dump(mode="json"),
            self.cfg.solver.model_dump(mode="json"),
        )

    @property
    def config_fingerprint(self) -> str:
        return fingerprint(self.case_sha256, self.cfg.model_dump(mode="json", exclude={"case_path", "output_dir"}))

    # Artifacts ------------------------------------------------------------- #
    def write_meta(self, artifact: Path, **extra: Any) -> Path:
        meta: Dict[str, Any] = {
            "config_fingerprint": self.config_fingerprint,
            "data_fingerprint": self.data_fingerprint,
            "seed": self.cfg.seed,
        }
        meta.update(extra)
        return write_yaml(sidecar_path(artifact), meta)

    def load_checked_dataset(self) -> Dataset:
        """The stored dataset, refused when it was generated under other settings."""
        dataset = load_dataset(self.dataset_path, self.case)
        found = dataset.metadata.get("data_fingerprint")
        if found != self.data_fingerprint:
            raise StaleArtifactError(
                f"{self.dataset_path} was generated with a different case or sampling config "
                f"(fingerprint {str(found)[:12]} vs {self.data_fingerprint[:12]}); rerun gen-data"
            )
        return dataset


__all__ = ["run_options", "parse_methods", "load_run_config", "RunContext"]
