"""
Validated configuration models.

A single YAML run file maps onto :class:`RunConfig`; every section is also
usable on its own from library code. Unknown keys are rejected so typos in a
config file surface as usage errors instead of silently using a default.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ppf_lab.core import config

METHOD_IDS: Tuple[str, ...] = ("M1", "M2", "M3", "M4")

_MAX_SEED = 2**64 - 1


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# --------------------------------------------------------------------------- #
# Power flow
# --------------------------------------------------------------------------- #
class SolverOptions(_Section):
    tol: float = Field(1e-8, gt=0, description="mismatch infinity-norm tolerance, per-unit")
    max_iter: int = Field(20, ge=1)
    linear_solver: Literal["dense", "sparse"] = "dense"
    warm_start: bool = False
    warm_start_block: int = Field(64, ge=1, description="samples per warm-started block")


# --------------------------------------------------------------------------- #
# Scenario generation
# --------------------------------------------------------------------------- #
class ProfileConfig(_Section):
    source: Literal["synthetic", "csv"] = "synthetic"
    csv_path: Optional[Path] = None
    pv_capacity_fraction: float = Field(0.5, ge=0, description="PV capacity / base active demand")
    beta_a: float = Field(2.0, gt=0)
    beta_b: float = Field(2.0, gt=0)
    sunrise_hour: float = 6.0
    sunset_hour: float = 18.0

    @model_validator(mode="after")
    def _check(self) -> "ProfileConfig":
        if self.source == "csv" and self.csv_path is None:
            raise ValueError("profile.csv_path is required when profile.source == 'csv'")
        if not self.sunrise_hour < self.sunset_hour:
            raise ValueError("sunrise_hour must precede sunset_hour")
        return self


class SamplingConfig(_Section):
    pv_buses: Optional[List[int]] = Field(
        None, description="external ids of profile-driven buses; default: highest-demand PQ buses"
    )
    profile_bus_count: int = Field(20, ge=0)
    load_std_fraction: float = Field(0.01, ge=0)
    corr_p: float = 0.2
    corr_q: float = 0.8
    q_factor_dist: Literal["uniform"] = "uniform"
    seed: Optional[int] = Field(None, ge=0, le=_MAX_SEED)
    sample_count: int = Field(6000, ge=0)
    split: Tuple[int, int, int] = (4000, 1000, 1000)
    max_rejection_rate: float = Field(0.05, ge=0, le=1)
    profile: ProfileConfig = ProfileConfig()

    @field_validator("corr_p", "corr_q")
    @classmethod
    def _corr_range(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError(f"correlation must lie in [0, 1), got {value}")
        return value

    @field_validator("split")
    @classmethod
    def _split_non_negative(cls, value: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(v < 0 for v in value):
            raise ValueError(f"split sizes must be non-negative, got {value}")
        return value

    @model_validator(mode="after")
    def _enough_samples(self) -> "SamplingConfig":
        if self.sample_count < sum(self.split):
            raise ValueError(
                f"sample_count={self.sample_count} is smaller than the split total {sum(self.split)}"
            )
        return self

    @property
    def split_total(self) -> int:
        return sum(self.split)


# --------------------------------------------------------------------------- #
# Learners
# --------------------------------------------------------------------------- #
class TrainConfig(BaseModel):
    """Optimisation settings for one network; ``incidence`` is runtime data."""

    model_config = ConfigDict(extra="forbid", frozen=True, arbitrary_types_allowed=True)

    learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(200, ge=1)
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0)
    alpha: float = 0.0
    incidence: Optional[Any] = Field(None, exclude=True)
    shuffle_seed: int = Field(0, ge=0, le=_MAX_SEED)
    early_stop_patience: int = Field(20, ge=1)
    output_scaling: Literal["per_column", "pooled"] = "per_column"

    @field_validator("alpha")
    @classmethod
    def _alpha_non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError(f"alpha must be >= 0, got {value}")
        return value


class NetworkConfig(_Section):
    """Architecture + optimiser for one fully connected component."""

    hidden_layers: List[int] = Field(default_factory=lambda: [100, 100])
    learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(200, ge=1)
    early_stop_patience: int = Field(20, ge=1)
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0)

    @field_validator("hidden_layers")
    @classmethod
    def _positive_widths(cls, value: List[int]) -> List[int]:
        if any(w < 1 for w in value):
            raise ValueError(f"hidden layer widths must be >= 1, got {value}")
        return value

    def to_train_config(self, **overrides: Any) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            adam_betas=self.adam_betas,
            adam_eps=self.adam_eps,
            early_stop_patience=self.early_stop_patience,
            **overrides,
        )


class M2Config(_Section):
    joint: NetworkConfig = NetworkConfig(hidden_layers=[200, 200, 200], learning_rate=1e-4)


class M3Config(_Section):
    angle: NetworkConfig = NetworkConfig(hidden_layers=[300, 300], learning_rate=5e-5)
    magnitude: NetworkConfig = NetworkConfig(hidden_layers=[200, 200], learning_rate=1e-4)


class M4Config(M3Config):
    alpha: float = Field(1.0, ge=0)
    gamma: float = Field(1e-3, ge=0)


class TrainingSection(_Section):
    M2: M2Config = M2Config()
    M3: M3Config = M3Config()
    M4: M4Config = M4Config()


# --------------------------------------------------------------------------- #
# Evaluation / sweeps
# --------------------------------------------------------------------------- #
class EvaluationSection(_Section):
    rmse: bool = True
    awd: bool = True
    moments: bool = True


class SweepSection(_Section):
    gammas: List[float] = Field(default_factory=lambda: [1e-4, 1e-3, 1e-2])
    alphas: List[float] = Field(default_factory=lambda: [0.1, 1.0, 10.0])
    epochs: Optional[int] = Field(None, ge=1, description="epoch budget per candidate")


class RankingSection(_Section):
    """Seeds of the multi-seed ranking experiment; each seed regenerates the data."""

    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    epochs: Optional[int] = Field(None, ge=1, description="epoch budget per network")

    @field_validator("seeds")
    @classmethod
    def _distinct_seeds(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("at least one seed is required")
        if any(s < 0 or s > _MAX_SEED for s in value):
            raise ValueError(f"seeds must lie in [0, 2**64 - 1], got {value}")
        if len(set(value)) != len(value):
            raise ValueError(f"seeds must be distinct, got {value}")
        return value


class RunConfig(_Section):
    case_path: Path
    seed: int = Field(0, ge=0, le=_MAX_SEED)
    output_dir: Path = Field(default_factory=lambda: config.OUTPUT_DIR / "default")
    sampling: SamplingConfig = SamplingConfig()
    solver: SolverOptions = SolverOptions()
    training: TrainingSection = TrainingSection()
    evaluation: EvaluationSection = EvaluationSection()
    sweep: SweepSection = SweepSection()
    ranking: RankingSection = RankingSection()

    def resolved_sampling(self) -> SamplingConfig:
        """Sampling section with its seed defaulted to the run seed."""
        if self.sampling.seed is not None:
            return self.sampling
        return self.sampling.model_copy(update={"seed": self.seed})


__all__ = [
    "METHOD_IDS",
    "SolverOptions",
    "ProfileConfig",
    "SamplingConfig",
    "TrainConfig",
    "NetworkConfig",
    "M2Config",
    "M3Config",
    "M4Config",
    "TrainingSection",
    "EvaluationSection",
    "SweepSection",
    "RankingSection",
    "RunConfig",
]
