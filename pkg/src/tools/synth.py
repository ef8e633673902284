"""
Synthetic dynamic acquisitions

A phantom of soft-edged ellipses whose inner ellipse pulses over the
acquisition window, Gaussian coil lobes on the field-of-view boundary,
Cartesian undersampling masks and the retrospective multi-coil acquisition
that ties them together. Coordinates are normalized to [-1, 1) per axis.
"""

import math
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..core.errors import DimensionError, InvalidInputError
from ..core.forward import KSpaceDataset, frame_times
from ..core.fourier import centered_dft
from ..core.models import AcquisitionGeometry
from ..core.tensor import DenseTensor
from ..optim.sampler import make_rng
from ..utils.logger import get_contextual_logger, log_execution_time

log = get_contextual_logger("synth")

COIL_LOBE_WIDTH = 0.8
CENTER_LINES = 4


class Ellipse(BaseModel):
    center: Tuple[float, ...]
    semi_axes: Tuple[float, ...]
    intensity: float = 1.0
    amplitude: float = Field(0.0, ge=0, lt=1)
    frequency: float = 1.0

    @model_validator(mode="after")
    def _shapes(self) -> "Ellipse":
        if len(self.center) != len(self.semi_axes):
            raise ValueError("center and semi_axes need the same dimension")
        if any(a <= 0 for a in self.semi_axes):
            raise ValueError("semi-axes must be positive")
        return self

    def scale_at(self, t: float, tau: float) -> float:
        return 1.0 + self.amplitude * math.sin(2.0 * math.pi * self.frequency * t / tau)


def default_ellipses(ndim: int) -> List[Ellipse]:
    """Body, a pulsing inner ellipse and a small static feature"""

    def pad(values: Sequence[float], fill: float) -> Tuple[float, ...]:
        return tuple(values) + (fill,) * (ndim - len(values))

    return [
        Ellipse(center=pad((0.0, 0.0), 0.0), semi_axes=pad((0.8, 0.7), 0.7), intensity=0.6),
        Ellipse(
            center=pad((0.15, -0.1), 0.0),
            semi_axes=pad((0.25, 0.3), 0.3),
            intensity=0.4,
            amplitude=0.15,
            frequency=1.0,
        ),
        Ellipse(center=pad((-0.35, 0.25), 0.0), semi_axes=pad((0.12, 0.1), 0.1), intensity=0.3),
    ]


class PhantomSpec(BaseModel):
    grid_shape: Tuple[int, ...]
    frames: int = Field(ge=1)
    fov: Tuple[float, ...]
    tau: float = Field(1.0, gt=0)
    seed: int = 0
    ellipses: List[Ellipse] = Field(default_factory=list)
    edge_pixels: float = Field(2.0, gt=0)
    phase_amplitude: float = Field(0.5, ge=0)

    @model_validator(mode="after")
    def _consistent(self) -> "PhantomSpec":
        n = len(self.grid_shape)
        if len(self.fov) != n or any(g < 1 for g in self.grid_shape):
            raise ValueError("grid_shape and fov must describe the same positive grid")
        if not self.ellipses:
            self.ellipses = default_ellipses(n)
        for e in self.ellipses:
            if len(e.center) != n:
                raise ValueError(f"ellipse of dimension {len(e.center)} in a {n}-d phantom")
            grown = [a * (1.0 + e.amplitude) for a in e.semi_axes]
            if any(abs(c) + a > 1.0 for c, a in zip(e.center, grown)):
                raise ValueError("ellipses must stay inside the field of view at full extent")
        return self

    @property
    def times(self) -> List[float]:
        return frame_times(self.tau, self.frames)


class MaskSpec(BaseModel):
    kind: Literal["rectilinear", "random_readout"] = "rectilinear"
    acceleration: float = Field(1.0, ge=1)
    center_lines: int = Field(CENTER_LINES, ge=0)
    seed: int = 0


class SynthPreset(BaseModel):
    grid_shape: Tuple[int, ...]
    frames: int
    n_coils: int
    fov: Tuple[float, ...]
    tau: float = 1.0


PRESETS: Dict[str, SynthPreset] = {
    "tiny": SynthPreset(grid_shape=(16, 16), frames=4, n_coils=2, fov=(0.25, 0.25)),
    "desk": SynthPreset(grid_shape=(64, 64), frames=16, n_coils=4, fov=(0.25, 0.25)),
    "cine": SynthPreset(grid_shape=(288, 112), frames=8, n_coils=4, fov=(0.36, 0.14)),
}


def normalized_axes(grid_shape: Sequence[int]) -> List[np.ndarray]:
    """Node coordinates 2(k - P // 2)/P per axis, matching the measurement nodes"""
    return [2.0 * (np.arange(p) - p // 2) / p for p in grid_shape]


def _mesh(grid_shape: Sequence[int]) -> List[np.ndarray]:
    return np.meshgrid(*normalized_axes(grid_shape), indexing="ij")


def raised_cosine_edge(rho: np.ndarray, half_width: float) -> np.ndarray:
    """1 inside, 0 outside, a cosine ramp across rho in [1 - h, 1 + h]; 0.5 at rho = 1"""
    ramp = 0.5 * (1.0 + np.cos(np.pi * (rho - (1.0 - half_width)) / (2.0 * half_width)))
    return np.where(rho <= 1.0 - half_width, 1.0, np.where(rho >= 1.0 + half_width, 0.0, ramp))


def _phase_map(spec: PhantomSpec, mesh: List[np.ndarray]) -> np.ndarray:
    rng = make_rng(spec.seed)
    phase = np.full(mesh[0].shape, rng.uniform(-1.0, 1.0) * spec.phase_amplitude)
    for u in mesh:
        linear, quadratic = rng.uniform(-1.0, 1.0, size=2) * spec.phase_amplitude
        phase = phase + linear * u + 0.5 * quadratic * u * u
    return phase


def make_phantom(spec: PhantomSpec) -> DenseTensor:
    """Frames (frames, *grid) of the ellipse phantom with a smooth phase"""
    mesh = _mesh(spec.grid_shape)
    pixel = 2.0 / min(spec.grid_shape)
    phase = np.exp(1j * _phase_map(spec, mesh))

    frames = []
    for t in spec.times:
        magnitude = np.zeros(tuple(spec.grid_shape))
        for e in spec.ellipses:
            axes = [a * e.scale_at(t, spec.tau) for a in e.semi_axes]
            rho = np.sqrt(sum(((u - c) / a) ** 2 for u, c, a in zip(mesh, e.center, axes)))
            magnitude += e.intensity * raised_cosine_edge(rho, spec.edge_pixels * pixel / min(axes))
        frames.append(magnitude * phase)
    return DenseTensor(np.stack(frames))


def make_coil_maps(n_coils: int, grid_shape: Sequence[int], seed: int = 0) -> np.ndarray:
    """Gaussian lobes at equiangular positions on the boundary, linear phase,
    normalized so that sum_c |S_c|^2 = 1 at every node"""
    if n_coils < 1:
        raise InvalidInputError(f"Need at least one coil, got {n_coils}")
    if len(grid_shape) < 2:
        raise DimensionError("Coil maps need at least two spatial axes")
    mesh = _mesh(grid_shape)
    rng = make_rng(seed)
    maps = []
    for c in range(n_coils):
        angle = 2.0 * np.pi * c / n_coils
        center = [math.cos(angle), math.sin(angle)] + [0.0] * (len(grid_shape) - 2)
        distance2 = sum((u - x0) ** 2 for u, x0 in zip(mesh, center))
        slopes = rng.uniform(-np.pi / 4, np.pi / 4, size=len(grid_shape))
        phase = sum(s * u for s, u in zip(slopes, mesh))
        maps.append(np.exp(-distance2 / (2.0 * COIL_LOBE_WIDTH**2)) * np.exp(1j * phase))
    stacked = np.stack(maps)
    return stacked / np.sqrt(np.sum(np.abs(stacked) ** 2, axis=0, keepdims=True))


def _center_band(pe_shape: Sequence[int], size: int) -> List[Tuple[int, ...]]:
    """Phase-encode positions of the always-sampled center band"""
    if size == 0:
        return []
    if len(pe_shape) == 1:
        c = pe_shape[0] // 2
        lo = c - size // 2
        return [(i,) for i in range(max(lo, 0), min(lo + size, pe_shape[0]))]
    side = max(1, int(round(math.sqrt(size))))
    ranges = []
    for n in pe_shape:
        lo = n // 2 - side // 2
        ranges.append(range(max(lo, 0), min(lo + side, n)))
    block = [
        tuple(r[i] for r, i in zip(ranges, idx))
        for idx in np.ndindex(*[len(r) for r in ranges])
    ]
    return block[:size]


def make_mask(spec: MaskSpec, grid_shape: Sequence[int], frames: int) -> np.ndarray:
    """Per-frame sampling masks (frames, *grid); the last axis is the readout"""
    grid_shape = tuple(grid_shape)
    if len(grid_shape) < 2:
        raise DimensionError("Masks need a phase-encode axis and a readout axis")
    pe_shape = grid_shape[:-1]
    lines = int(np.prod(pe_shape))
    if spec.acceleration > lines:
        raise InvalidInputError(
            f"Acceleration {spec.acceleration} exceeds the {lines} phase-encode lines"
        )
    if spec.acceleration == 1:
        return np.ones((frames,) + grid_shape, dtype=bool)

    rng = make_rng(spec.seed)
    budget = int(lines // spec.acceleration)
    band = _center_band(pe_shape, min(spec.center_lines, budget))
    band_flat = np.array([np.ravel_multi_index(b, pe_shape) for b in band], dtype=np.int64)
    others = np.setdiff1d(np.arange(lines), band_flat)

    line_masks = np.zeros((frames, lines), dtype=bool)
    for f in range(frames):
        line_masks[f, band_flat] = True
        if spec.kind == "rectilinear":
            chosen = rng.choice(others, size=budget - band_flat.size, replace=False)
            line_masks[f, chosen] = True
        else:
            line_masks[f, others] = rng.random(others.size) < 1.0 / spec.acceleration
    masks = line_masks.reshape((frames,) + pe_shape + (1,))
    return np.broadcast_to(masks, (frames,) + grid_shape).copy()


def describe_mask(spec: MaskSpec, masks: np.ndarray) -> Dict[str, Union[str, float, int]]:
    pe_shape = masks.shape[1:-1]
    per_frame = masks[..., 0].reshape(masks.shape[0], -1).sum(axis=1)
    return {
        "kind": spec.kind,
        "acceleration": spec.acceleration,
        "center_lines": spec.center_lines,
        "seed": spec.seed,
        "phase_encode_lines": int(np.prod(pe_shape)),
        "lines_per_frame": int(per_frame[0]) if np.all(per_frame == per_frame[0]) else -1,
        "sampling_fraction": float(masks.mean()),
    }


def simulate_acquisition(
    phantom: Union[DenseTensor, np.ndarray],
    coil_maps: np.ndarray,
    masks: np.ndarray,
    fov: Sequence[float],
    tau: float,
    times: Optional[Sequence[float]] = None,
    noise_snr_db: Optional[float] = None,
    seed: int = 0,
    mask_description: Optional[Dict] = None,
) -> KSpaceDataset:
    """Masked centered DFT of each coil image, with optional complex white noise"""
    frames = phantom.data if isinstance(phantom, DenseTensor) else np.asarray(phantom)
    maps = np.asarray(coil_maps, dtype=np.complex128)
    masks = np.asarray(masks, dtype=bool)
    grid = frames.shape[1:]
    if maps.shape[1:] != grid or masks.shape != frames.shape:
        raise DimensionError(
            f"Phantom {frames.shape}, coil maps {maps.shape} and masks {masks.shape} disagree"
        )
    n = len(grid)
    kspace = centered_dft(frames[None] * maps[:, None], tuple(range(2, 2 + n))) * masks[None]

    if noise_snr_db is not None:
        sampled = np.broadcast_to(masks[None], kspace.shape)
        signal_power = float(np.mean(np.abs(kspace[sampled]) ** 2))
        sigma = math.sqrt(signal_power / 10.0 ** (noise_snr_db / 10.0))
        rng = make_rng(seed + 1)
        noise = rng.standard_normal(kspace.shape) + 1j * rng.standard_normal(kspace.shape)
        kspace = kspace + (sigma / math.sqrt(2.0)) * noise * sampled

    geometry = AcquisitionGeometry(
        grid_shape=grid,
        fov=tuple(fov),
        tau=tau,
        times=list(times) if times is not None else frame_times(tau, frames.shape[0]),
        n_coils=maps.shape[0],
    )
    return KSpaceDataset(
        geometry=geometry,
        kspace=kspace,
        masks=masks,
        ground_truth=frames,
        mask_description=mask_description or {},
    )


@log_execution_time("synth")
def synthesize(
    preset: str = "desk",
    acceleration: float = 1.0,
    mask_kind: str = "rectilinear",
    seed: int = 0,
    noise_snr_db: Optional[float] = None,
) -> KSpaceDataset:
    if preset not in PRESETS:
        raise InvalidInputError(f"Unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[preset]
    phantom = make_phantom(
        PhantomSpec(grid_shape=p.grid_shape, frames=p.frames, fov=p.fov, tau=p.tau, seed=seed)
    )
    maps = make_coil_maps(p.n_coils, p.grid_shape, seed=seed)
    mask_spec = MaskSpec(kind=mask_kind, acceleration=acceleration, seed=seed)
    masks = make_mask(mask_spec, p.grid_shape, p.frames)
    log.info(
        f"Preset {preset}: grid {p.grid_shape}, {p.frames} frames, {p.n_coils} coils, "
        f"AF {acceleration} ({mask_kind}), sampled fraction {masks.mean():.3f}"
    )
    return simulate_acquisition(
        phantom,
        maps,
        masks,
        p.fov,
        p.tau,
        noise_snr_db=noise_snr_db,
        seed=seed,
        mask_description=describe_mask(mask_spec, masks),
    )
