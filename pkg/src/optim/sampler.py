"""
Stochastic batches for one optimization step

Each coordinate is sampled on its own: a number of continuous draws uniform
on the axis interval plus a number of draws from the axis partition (the
Cartesian measurement nodes in space, the recorded times in time). The data
term uses its own frame draw from the recorded times.
"""

from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..core.errors import InvalidInputError
from ..core.models import AcquisitionGeometry, BatchSpec
from ..core.nfe import EvalGrid
from ..utils.logger import get_contextual_logger

log = get_contextual_logger("sampler")


class AxisSample(BaseModel):
    """Continuous draws and partition draws (node values and their indices)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    continuous: np.ndarray
    discrete: np.ndarray
    discrete_index: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.continuous, self.discrete])

    def __len__(self) -> int:
        return self.continuous.size + self.discrete.size


class SampleSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coils: List[int]
    frames: List[int]
    time: AxisSample
    space: List[AxisSample]

    def regularizer_grid(self) -> EvalGrid:
        return EvalGrid(axes=[self.time.values] + [s.values for s in self.space])

    def spatial_grid(self) -> EvalGrid:
        return EvalGrid(axes=[s.values for s in self.space])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; a seed fixes the whole run"""
    return np.random.Generator(np.random.Philox(seed))


def _draw_axis(
    rng: np.random.Generator,
    counts: Sequence[int],
    interval: Sequence[float],
    nodes: np.ndarray,
) -> AxisSample:
    n_continuous, n_discrete = counts
    a, b = interval
    continuous = rng.uniform(a, b, size=n_continuous)
    index = rng.integers(0, nodes.size, size=n_discrete)
    return AxisSample(continuous=continuous, discrete=nodes[index], discrete_index=index)


def draw_batch(
    spec: BatchSpec, geometry: AcquisitionGeometry, rng: np.random.Generator
) -> SampleSet:
    n_coils = geometry.n_coils
    if spec.b_coils == "all":
        coils = list(range(n_coils))
    else:
        count = int(spec.b_coils)
        if count > n_coils:
            log.warning(f"Coil batch {count} exceeds {n_coils} coils; using all coils")
            count = n_coils
        coils = sorted(int(c) for c in rng.choice(n_coils, size=count, replace=False))

    if len(spec.b_space) != geometry.spatial_dims:
        raise InvalidInputError(
            f"Batch has {len(spec.b_space)} spatial pairs for a {geometry.spatial_dims}-d grid"
        )

    n_frames = len(geometry.times)
    n_data = spec.b_time[1]
    frames = [int(f) for f in rng.choice(n_frames, size=n_data, replace=n_data > n_frames)]

    times = np.asarray(geometry.times, dtype=np.float64)
    time = _draw_axis(rng, spec.b_time, (0.0, geometry.tau), times)
    space = [
        _draw_axis(rng, counts, interval, np.asarray(geometry.grid_nodes(j)))
        for j, (counts, interval) in enumerate(zip(spec.b_space, geometry.spatial_domain))
    ]
    return SampleSet(coils=coils, frames=frames, time=time, space=space)
