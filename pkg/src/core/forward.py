"""
Parallel-imaging forward model

The magnetization m(t, x) and raw coil field S~(x) are neural field
expansions. Coil sensitivities are S~ normalized across coils, coil images
are m * S_c on the Cartesian measurement grid, and their centered unitary
DFT is compared with the recorded k-space samples under a magnitude-based
weighting.
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ..utils.logger import get_contextual_logger
from . import autodiff as ad
from .autodiff import Tape, Variable, to_pairs
from .errors import DimensionError, DomainError, InvalidInputError
from .fourier import centered_dft, centered_idft, check_transform_size
from .models import AcquisitionGeometry, RunConfig, WeightSpec
from .nfe import EvalGrid, NeuralFieldExpansion, init_nfe
from .tensor import DenseTensor

log = get_contextual_logger("forward")

NORM_FLOOR = 1e-12
DATA_SMOOTHING = 1e-12


class KSpaceDataset(BaseModel):
    """Recorded multi-coil k-space with per-frame sampling masks

    kspace has shape (n_coils, n_frames, *grid) and masks (n_frames, *grid);
    only entries where the mask is set are measurements.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    geometry: AcquisitionGeometry
    kspace: np.ndarray
    masks: np.ndarray
    ground_truth: Optional[np.ndarray] = None
    mask_description: Dict[str, Any] = {}

    @model_validator(mode="after")
    def _consistent(self) -> "KSpaceDataset":
        g = self.geometry
        self.kspace = np.asarray(self.kspace, dtype=np.complex128)
        self.masks = np.asarray(self.masks, dtype=bool)
        frames = len(g.times)
        expected = (g.n_coils, frames) + tuple(g.grid_shape)
        if self.kspace.shape != expected:
            raise ValueError(f"k-space has shape {self.kspace.shape}, expected {expected}")
        if self.masks.shape != expected[1:]:
            raise ValueError(f"masks have shape {self.masks.shape}, expected {expected[1:]}")
        if not np.all(np.isfinite(self.kspace)):
            raise ValueError("k-space contains non-finite values")
        for n in g.grid_shape:
            check_transform_size(n)
        if self.ground_truth is not None:
            self.ground_truth = np.asarray(self.ground_truth, dtype=np.complex128)
            if self.ground_truth.shape != expected[1:]:
                raise ValueError(
                    f"ground truth has shape {self.ground_truth.shape}, expected {expected[1:]}"
                )
        return self

    @property
    def n_coils(self) -> int:
        return self.geometry.n_coils

    @property
    def n_frames(self) -> int:
        return len(self.geometry.times)

    @property
    def sampling_fraction(self) -> float:
        return float(self.masks.mean())

    def max_magnitude(self) -> float:
        sampled = np.abs(self.kspace) * self.masks[None]
        return float(sampled.max()) if sampled.size else 0.0


class ReconstructionModel:
    """Magnetization field over [0, tau] x R_n and raw coil field over R_n"""

    def __init__(
        self,
        geometry: AcquisitionGeometry,
        magnetization: NeuralFieldExpansion,
        coils: NeuralFieldExpansion,
    ) -> None:
        n = geometry.spatial_dims
        if magnetization.dim != n + 1 or coils.dim != n:
            raise DimensionError(
                f"Fields of dimension {magnetization.dim} and {coils.dim} do not fit a "
                f"{n}-d acquisition"
            )
        if coils.channels != geometry.n_coils:
            raise DimensionError(
                f"Coil field has {coils.channels} channels, acquisition has {geometry.n_coils}"
            )
        self.geometry = geometry
        self.magnetization = magnetization
        self.coils = coils

    @classmethod
    def initialize(
        cls, config: RunConfig, geometry: AcquisitionGeometry, rng: np.random.Generator
    ) -> "ReconstructionModel":
        config.validate_against(geometry)
        m = init_nfe(rng, config.magnetization, geometry.domain, "m")
        s = init_nfe(rng, config.coils, geometry.spatial_domain, "s", channels=geometry.n_coils)
        model = cls(geometry, m, s)
        log.debug(
            f"Initialized fields: m modes {m.modes}, s modes {s.modes}, "
            f"{sum(p.size for p in model.parameters().values())} parameters"
        )
        return model

    @property
    def n_coils(self) -> int:
        return self.geometry.n_coils

    def parameters(self) -> Dict[str, np.ndarray]:
        params = dict(self.magnetization.parameters())
        params.update(self.coils.parameters())
        return params

    def load_parameters(self, params: Dict[str, np.ndarray]) -> None:
        self.magnetization.load_parameters(params)
        self.coils.load_parameters(params)

    @property
    def eval_count(self) -> int:
        return self.magnetization.eval_counter + self.coils.eval_counter

    def measurement_grid(self) -> EvalGrid:
        g = self.geometry
        return EvalGrid(axes=[g.grid_nodes(j) for j in range(g.spatial_dims)])

    def output_grid(self, shape: Optional[Sequence[int]] = None) -> EvalGrid:
        """Cartesian nodes at any resolution; None gives the measurement grid"""
        if shape is None:
            return self.measurement_grid()
        if len(shape) != self.geometry.spatial_dims:
            raise DimensionError(
                f"Output grid {tuple(shape)} needs {self.geometry.spatial_dims} axes"
            )
        axes = []
        for n, (a, b) in zip(shape, self.geometry.spatial_domain):
            if n < 1:
                raise InvalidInputError(f"Output grid sizes must be positive, got {tuple(shape)}")
            axes.append(a + (b - a) * np.arange(n) / n)
        return EvalGrid(axes=axes)

    def render(
        self, times: Sequence[float], shape: Optional[Sequence[int]] = None
    ) -> np.ndarray:
        """Magnetization frames (len(times), *grid) as a complex array"""
        grid = self.output_grid(shape)
        return self.magnetization.render(EvalGrid(axes=[np.asarray(times)] + grid.axes))

    def coil_maps(self, shape: Optional[Sequence[int]] = None) -> np.ndarray:
        """Normalized sensitivities (n_coils, *grid)"""
        grid = self.output_grid(shape)
        raw = self.coils.render(grid)
        return np.moveaxis(normalize_coils(raw), -1, 0)


def normalize_coils(raw: np.ndarray, floor: float = NORM_FLOOR) -> np.ndarray:
    """Scale coil vectors (last axis) to unit Euclidean norm"""
    raw = np.asarray(raw, dtype=np.complex128)
    power = np.sum(np.abs(raw) ** 2, axis=-1, keepdims=True)
    if np.any(power <= floor * floor):
        log.warning(f"{int(np.sum(power <= floor * floor))} coil vectors with vanishing norm")
    return raw / np.sqrt(power + floor * floor)


def _broadcast_norm(norm: Variable) -> Variable:
    return ad.reshape(norm, norm.shape + (1, 1))


def normalized_coil_field(
    coils: NeuralFieldExpansion,
    grid: EvalGrid,
    tape: Tape,
    axes: Sequence[int] = (),
) -> Tuple[Variable, Dict[int, Variable]]:
    """Normalized sensitivities on a grid, (*P, n_c, 2), with partials along `axes`

    For n = sqrt(sum_c |S~_c|^2 + floor^2) the partials are
    dS = dS~ / n - S~ dn / n^2 with dn = sum_c Re(conj(S~_c) dS~_c) / n.
    """
    raw, raw_partials = coils.grid_with_partials(grid, axes, tape)
    power = ad.sum(ad.cabs2(raw), axis=-1)
    if np.any(power.value <= NORM_FLOOR * NORM_FLOOR):
        log.warning("Coil field vanishes at some grid points; normalization is floored")
    norm = ad.sqrt(ad.add(power, NORM_FLOOR * NORM_FLOOR))
    normalized = ad.div(raw, _broadcast_norm(norm))

    partials: Dict[int, Variable] = {}
    for j, d_raw in raw_partials.items():
        d_norm = ad.div(ad.sum(ad.mul(raw, d_raw), axis=(-2, -1)), norm)
        correction = ad.mul(raw, _broadcast_norm(ad.div(d_norm, ad.mul(norm, norm))))
        partials[j] = ad.sub(ad.div(d_raw, _broadcast_norm(norm)), correction)
    return normalized, partials


def coil_image_grid(
    model: ReconstructionModel,
    times: Sequence[float],
    tape: Tape,
    coils: Optional[Sequence[int]] = None,
    grid: Optional[EvalGrid] = None,
) -> Variable:
    """m(t, x) S_c(x) for the selected coils and times, shape (b_c, b_t, *P, 2)"""
    times = np.asarray(times, dtype=np.float64).reshape(-1)
    tau = model.geometry.tau
    if times.size == 0 or times.min() < 0.0 or times.max() > tau:
        raise DomainError(f"Times must lie in [0, {tau}]")
    if grid is None:
        grid = model.measurement_grid()
    selected = list(range(model.n_coils)) if coils is None else list(coils)
    n = grid.ndim

    m = model.magnetization.eval_grid(EvalGrid(axes=[times] + grid.axes), tape)
    s, _ = normalized_coil_field(model.coils, grid, tape)
    s = ad.take(s, selected, axis=n)
    s = ad.transpose(s, (n,) + tuple(range(n)) + (n + 1,))
    s = ad.reshape(s, (len(selected), 1) + grid.shape + (2,))
    m = ad.reshape(m, (1,) + m.shape)
    return ad.cmul(m, s)


def spatial_dft(image: DenseTensor) -> DenseTensor:
    return DenseTensor(centered_dft(image.data, tuple(range(image.rank))))


def inverse_spatial_dft(kspace: DenseTensor) -> DenseTensor:
    return DenseTensor(centered_idft(kspace.data, tuple(range(kspace.rank))))


def dc_weight(mag: float, spec: WeightSpec) -> float:
    """1 for magnitudes up to epsilon, |d|^(-1/2) above"""
    if mag < 0:
        raise InvalidInputError(f"Magnitude must be non-negative, got {mag}")
    return 1.0 if mag <= spec.epsilon else float(mag) ** -0.5


def dc_weights(magnitudes: np.ndarray, epsilon: float) -> np.ndarray:
    mags = np.asarray(magnitudes, dtype=np.float64)
    out = np.ones_like(mags)
    above = mags > epsilon
    out[above] = mags[above] ** -0.5
    return out


def default_epsilon(dataset: KSpaceDataset, relative: float = 1e-3) -> float:
    peak = dataset.max_magnitude()
    if peak <= 0.0:
        log.warning("Recorded k-space is identically zero; using the relative tolerance as is")
        return relative
    return relative * peak


def resolve_epsilon(config: RunConfig, dataset: KSpaceDataset) -> float:
    if config.epsilon is not None:
        return config.epsilon
    return default_epsilon(dataset, config.epsilon_relative)


def data_consistency(
    model: ReconstructionModel,
    dataset: KSpaceDataset,
    coils: Sequence[int],
    frames: Sequence[int],
    epsilon: float,
    tape: Tape,
) -> Variable:
    """Mean over (coil, frame) of the weighted residual norm on the sampled set"""
    coils = list(coils)
    frames = list(frames)
    if not coils or not frames:
        raise InvalidInputError("Data term needs at least one coil and one frame")
    n = dataset.geometry.spatial_dims
    times = np.asarray(dataset.geometry.times)[frames]

    empty = [f for f in frames if not dataset.masks[f].any()]
    if empty:
        log.warning(f"Frames {empty} have no sampled frequencies; their terms are zero")

    images = coil_image_grid(model, times, tape, coils)
    predicted = ad.cdft(images, axes=tuple(range(2, 2 + n)))

    measured = dataset.kspace[np.ix_(coils, frames)]
    mask = np.broadcast_to(dataset.masks[frames][None], measured.shape)
    weights = mask * dc_weights(np.abs(measured), epsilon)

    residual = ad.sub(predicted, tape.constant(to_pairs(measured)))
    weighted = ad.mul(ad.cabs2(residual), tape.constant(weights))
    per_term = ad.sum(weighted, axis=tuple(range(2, 2 + n)))
    return ad.mean(ad.smooth_sqrt(per_term, DATA_SMOOTHING))


def zero_filled_reconstruction(dataset: KSpaceDataset) -> np.ndarray:
    """Root-sum-of-squares of per-coil inverse DFTs of the masked k-space"""
    n = dataset.geometry.spatial_dims
    masked = dataset.kspace * dataset.masks[None]
    images = centered_idft(masked, tuple(range(2, 2 + n)))
    return np.sqrt(np.sum(np.abs(images) ** 2, axis=0))


def coil_combine(kspace: np.ndarray, coil_maps: np.ndarray) -> np.ndarray:
    """Known-sensitivity combination sum_c conj(S_c) x_c / sum_c |S_c|^2

    kspace is (n_coils, n_frames, *grid) and coil_maps (n_coils, *grid).
    """
    kspace = np.asarray(kspace, dtype=np.complex128)
    maps = np.asarray(coil_maps, dtype=np.complex128)
    if kspace.ndim != maps.ndim + 1 or kspace.shape[0] != maps.shape[0]:
        raise DimensionError(f"k-space {kspace.shape} and coil maps {maps.shape} do not match")
    if kspace.shape[2:] != maps.shape[1:]:
        raise DimensionError(f"k-space grid {kspace.shape[2:]} differs from map grid {maps.shape[1:]}")
    n = maps.ndim - 1
    images = centered_idft(kspace, tuple(range(2, 2 + n)))
    numerator = np.sum(np.conj(maps)[:, None] * images, axis=0)
    denominator = np.sum(np.abs(maps) ** 2, axis=0)
    return numerator / np.maximum(denominator, NORM_FLOOR)


def frame_times(tau: float, count: int) -> List[float]:
    """Midpoints of `count` equal slices of [0, tau]"""
    return [(i + 0.5) * tau / count for i in range(count)]


__all__ = [
    "AcquisitionGeometry",
    "KSpaceDataset",
    "ReconstructionModel",
    "WeightSpec",
    "coil_combine",
    "coil_image_grid",
    "data_consistency",
    "dc_weight",
    "dc_weights",
    "default_epsilon",
    "frame_times",
    "inverse_spatial_dft",
    "normalize_coils",
    "normalized_coil_field",
    "resolve_epsilon",
    "spatial_dft",
    "zero_filled_reconstruction",
]
