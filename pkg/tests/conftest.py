import logging
from typing import Callable, Iterator

import numpy as np
import pytest

from src.core.forward import KSpaceDataset, ReconstructionModel
from src.core.models import BatchSpec, FieldConfig, FrequencyEmbedding, RunConfig
from src.optim.sampler import make_rng
from src.tools.synth import synthesize


def finite_difference(
    fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6
) -> np.ndarray:
    """Central differences of a scalar function over every entry of x"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        plus, minus = x.copy(), x.copy()
        plus[idx] += h
        minus[idx] -= h
        grad[idx] = (fn(plus) - fn(minus)) / (2.0 * h)
    return grad


@pytest.fixture
def fd_grad() -> Callable[..., np.ndarray]:
    return finite_difference


@pytest.fixture
def log_capture(caplog: pytest.LogCaptureFixture) -> Iterator[pytest.LogCaptureFixture]:
    """The package logger does not propagate; hook caplog onto it directly"""
    logger = logging.getLogger("field-recon")
    logger.addHandler(caplog.handler)
    caplog.set_level(logging.DEBUG, logger="field-recon")
    try:
        yield caplog
    finally:
        logger.removeHandler(caplog.handler)


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(1234)


@pytest.fixture
def tiny_dataset() -> KSpaceDataset:
    """16x16 grid, 4 frames, 2 coils, every other phase-encode line"""
    return synthesize("tiny", acceleration=2.0, seed=0)


@pytest.fixture
def tiny_config() -> RunConfig:
    return RunConfig(
        magnetization=FieldConfig(hidden_layers=1, width=8, modes=[2, 3, 3]),
        coils=FieldConfig(
            hidden_layers=1,
            width=6,
            modes=[2, 2],
            embedding=FrequencyEmbedding(omega_first=5.0, omega_hidden=5.0),
        ),
        batch=BatchSpec(b_coils="all", b_time=(2, 2), b_space=[(3, 3), (3, 3)]),
        iterations=0,
        learning_rate=1e-3,
        seed=0,
    )


@pytest.fixture
def tiny_model(tiny_config: RunConfig, tiny_dataset: KSpaceDataset) -> ReconstructionModel:
    return ReconstructionModel.initialize(tiny_config, tiny_dataset.geometry, make_rng(0))
