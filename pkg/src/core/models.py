import math
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from ..utils.helpers import stable_hash
from .errors import InvalidInputError


class FrequencyEmbedding(BaseModel):
    """Frequency scalings of a sine network: first layer and all later layers"""

    omega_first: float = Field(30.0, gt=0)
    omega_hidden: float = Field(30.0, gt=0)


class FieldConfig(BaseModel):
    hidden_layers: int = Field(3, ge=1)
    width: int = Field(256, ge=1)
    modes: List[int]
    embedding: FrequencyEmbedding = Field(default_factory=FrequencyEmbedding)

    @field_validator("modes")
    @classmethod
    def _positive_modes(cls, modes: List[int]) -> List[int]:
        if not modes or any(n < 1 for n in modes):
            raise ValueError(f"modes must be positive integers, got {modes}")
        return modes


class RegWeights(BaseModel):
    lambda_tv_x: float = Field(0.0, ge=0)
    lambda_tv_t: float = Field(0.0, ge=0)
    lambda_coil: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _finite(self) -> "RegWeights":
        for name in ("lambda_tv_x", "lambda_tv_t", "lambda_coil"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        return self

    def with_stage(self, stage: str, value: float) -> "RegWeights":
        return self.model_copy(update={STAGE_FIELDS[stage]: value})


STAGE_FIELDS = {"tv_t": "lambda_tv_t", "tv_x": "lambda_tv_x", "coil": "lambda_coil"}


class WeightSpec(BaseModel):
    """Tolerance below which k-space samples stay unweighted"""

    epsilon: float = Field(gt=0)


class BatchSpec(BaseModel):
    """Per-iteration batch sizes; (continuous, discrete) pairs per coordinate"""

    b_coils: Union[int, Literal["all"]] = "all"
    b_time: Tuple[int, int] = (8, 8)
    b_space: List[Tuple[int, int]] = Field(default_factory=lambda: [(64, 64), (64, 64)])

    @field_validator("b_coils")
    @classmethod
    def _positive_coils(cls, value: Union[int, str]) -> Union[int, str]:
        if isinstance(value, int) and value < 1:
            raise ValueError("b_coils must be at least 1")
        return value

    @field_validator("b_time")
    @classmethod
    def _time_counts(cls, pair: Tuple[int, int]) -> Tuple[int, int]:
        _check_pair(pair, "b_time")
        if pair[1] < 1:
            raise ValueError("b_time needs at least one discrete draw for the data term")
        return pair

    @field_validator("b_space")
    @classmethod
    def _space_counts(cls, pairs: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
        for pair in pairs:
            _check_pair(pair, "b_space")
        return pairs


def _check_pair(pair: Tuple[int, int], name: str) -> None:
    if pair[0] < 0 or pair[1] < 0:
        raise ValueError(f"{name} counts must be non-negative, got {pair}")
    if pair[0] + pair[1] < 1:
        raise ValueError(f"{name} needs at least one positive count, got {pair}")


class SchedulerConfig(BaseModel):
    patience: int = Field(200, ge=1)
    factor: float = Field(0.5, gt=0, lt=1)
    threshold: float = Field(1e-3, ge=0)
    ema_decay: float = Field(0.99, ge=0, lt=1)
    min_lr: float = Field(1e-8, gt=0)


class WarmupConfig(BaseModel):
    enabled: bool = False
    iterations: int = Field(500, ge=0)
    segment_iterations: int = Field(10, ge=1)
    max_rungs: int = Field(12, ge=1)
    lambda_min: float = Field(1e-5, gt=0)
    ladder_factor: float = Field(2.0, gt=1)
    stall_tolerance: float = Field(0.05, gt=0)
    selection_factor: float = Field(0.5, gt=0, le=1)
    ema_decay: float = Field(0.9, ge=0, lt=1)
    stages: Tuple[str, ...] = ("tv_t", "tv_x", "coil")

    @field_validator("stages")
    @classmethod
    def _fixed_order(cls, stages: Tuple[str, ...]) -> Tuple[str, ...]:
        if tuple(stages) != ("tv_t", "tv_x", "coil"):
            raise ValueError("warm-up stages run in the fixed order tv_t, tv_x, coil")
        return tuple(stages)


class RunConfig(BaseModel):
    magnetization: FieldConfig = Field(
        default_factory=lambda: FieldConfig(modes=[8, 32, 32])
    )
    coils: FieldConfig = Field(
        default_factory=lambda: FieldConfig(
            modes=[8, 8], embedding=FrequencyEmbedding(omega_first=5.0, omega_hidden=5.0)
        )
    )
    regularization: RegWeights = Field(default_factory=RegWeights)
    warmup: WarmupConfig = Field(default_factory=WarmupConfig)
    epsilon: Optional[float] = Field(None, gt=0)
    epsilon_relative: float = Field(1e-3, gt=0)
    batch: BatchSpec = Field(default_factory=BatchSpec)
    iterations: int = Field(1000, ge=0)
    learning_rate: float = Field(1e-4, gt=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    scheduler: SchedulerConfig = Field(default_factory=SchedulerConfig)
    seed: int = 0
    checkpoint_every: Optional[int] = Field(None, ge=1)
    evaluate_all_terms: bool = False

    def validate_against(self, geometry: "AcquisitionGeometry") -> None:
        n = len(geometry.grid_shape)
        if len(self.magnetization.modes) != n + 1:
            raise InvalidInputError(
                f"Magnetization needs {n + 1} mode counts (time + {n} spatial), "
                f"got {self.magnetization.modes}"
            )
        if len(self.coils.modes) != n:
            raise InvalidInputError(
                f"Coil field needs {n} spatial mode counts, got {self.coils.modes}"
            )
        if len(self.batch.b_space) != n:
            raise InvalidInputError(
                f"Batch needs {n} spatial (continuous, discrete) pairs, "
                f"got {len(self.batch.b_space)}"
            )

    def checkpoint_interval(self) -> int:
        return self.checkpoint_every or max(1, self.iterations // 20)

    def config_hash(self) -> str:
        return stable_hash(self.model_dump(mode="json"))


class AcquisitionGeometry(BaseModel):
    """Cartesian measurement grid, field of view (m) and recorded times (s)"""

    grid_shape: Tuple[int, ...]
    fov: Tuple[float, ...]
    tau: float = Field(gt=0)
    times: List[float]
    n_coils: int = Field(ge=1)

    @model_validator(mode="after")
    def _consistent(self) -> "AcquisitionGeometry":
        if len(self.grid_shape) not in (2, 3):
            raise ValueError(f"Spatial dimension must be 2 or 3, got {len(self.grid_shape)}")
        if len(self.fov) != len(self.grid_shape):
            raise ValueError("fov needs one extent per spatial axis")
        if any(n < 1 for n in self.grid_shape) or any(s <= 0 for s in self.fov):
            raise ValueError("grid sizes and fov extents must be positive")
        if not self.times:
            raise ValueError("at least one recorded time is required")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("recorded times must be strictly increasing")
        if self.times[0] < 0 or self.times[-1] > self.tau:
            raise ValueError("recorded times must lie in [0, tau]")
        return self

    @property
    def spatial_dims(self) -> int:
        return len(self.grid_shape)

    @property
    def spatial_domain(self) -> List[Tuple[float, float]]:
        return [(-s / 2.0, s / 2.0) for s in self.fov]

    @property
    def domain(self) -> List[Tuple[float, float]]:
        return [(0.0, self.tau)] + self.spatial_domain

    def grid_nodes(self, axis: int) -> List[float]:
        """Cartesian nodes spaced s / n with node n // 2 at x = 0, the DFT origin"""
        n, s = self.grid_shape[axis], self.fov[axis]
        return [s * (k - n // 2) / n for k in range(n)]


class LossRecord(BaseModel):
    iteration: int
    data: float
    tv_x: Optional[float] = None
    tv_t: Optional[float] = None
    coil: Optional[float] = None
    total: float
    lr: float
    skipped: bool = False


class FrameMetrics(BaseModel):
    frame: int
    ssim: float
    psnr: Optional[float] = None
    psnr_infinite: bool = False


class MetricReport(BaseModel):
    frames: List[FrameMetrics] = Field(default_factory=list)
    ssim_mean: float
    ssim_median: float
    ssim_min: float
    psnr_mean: Optional[float] = None
    psnr_median: Optional[float] = None
    psnr_min: Optional[float] = None
    dynamic_range: str = "max|ref| per frame, magnitude images"
    metadata: Dict[str, Any] = Field(default_factory=dict)
