import numpy as np
import pytest
from pydantic import ValidationError

from src.core.errors import InvalidInputError
from src.core.models import AcquisitionGeometry, BatchSpec
from src.optim.sampler import draw_batch, make_rng


@pytest.fixture
def geometry() -> AcquisitionGeometry:
    return AcquisitionGeometry(
        grid_shape=(16, 8),
        fov=(0.2, 0.1),
        tau=2.0,
        times=[0.25, 0.75, 1.25, 1.75],
        n_coils=4,
    )


def test_same_seed_same_draws() -> None:
    np.testing.assert_array_equal(make_rng(7).random(5), make_rng(7).random(5))
    assert not np.array_equal(make_rng(7).random(5), make_rng(8).random(5))


def test_batch_sizes(geometry: AcquisitionGeometry) -> None:
    spec = BatchSpec(b_coils=2, b_time=(3, 2), b_space=[(4, 5), (0, 6)])
    batch = draw_batch(spec, geometry, make_rng(0))
    assert len(batch.coils) == 2 and batch.coils == sorted(set(batch.coils))
    assert len(batch.frames) == 2 and len(set(batch.frames)) == 2
    assert len(batch.time) == 5
    assert [len(s) for s in batch.space] == [9, 6]
    assert batch.regularizer_grid().shape == (5, 9, 6)
    assert batch.spatial_grid().shape == (9, 6)


def test_draws_stay_on_their_axes(geometry: AcquisitionGeometry) -> None:
    spec = BatchSpec(b_time=(50, 50), b_space=[(50, 50), (50, 50)])
    batch = draw_batch(spec, geometry, make_rng(1))
    assert batch.time.continuous.min() >= 0.0 and batch.time.continuous.max() < 2.0
    assert set(batch.time.discrete) <= set(geometry.times)
    for j, sample in enumerate(batch.space):
        a, b = geometry.spatial_domain[j]
        assert sample.continuous.min() >= a and sample.continuous.max() < b
        nodes = np.asarray(geometry.grid_nodes(j))
        np.testing.assert_array_equal(sample.discrete, nodes[sample.discrete_index])


def test_data_frames_repeat_only_when_needed(geometry: AcquisitionGeometry) -> None:
    spec = BatchSpec(b_time=(0, 6), b_space=[(1, 0), (1, 0)])
    batch = draw_batch(spec, geometry, make_rng(2))
    assert len(batch.frames) == 6
    assert set(batch.frames) <= {0, 1, 2, 3}


def test_all_coils(geometry: AcquisitionGeometry) -> None:
    batch = draw_batch(BatchSpec(b_space=[(1, 1), (1, 1)]), geometry, make_rng(0))
    assert batch.coils == [0, 1, 2, 3]


def test_oversized_coil_batch_is_clamped(
    geometry: AcquisitionGeometry, log_capture: pytest.LogCaptureFixture
) -> None:
    spec = BatchSpec(b_coils=9, b_space=[(1, 1), (1, 1)])
    batch = draw_batch(spec, geometry, make_rng(0))
    assert batch.coils == [0, 1, 2, 3]
    assert "exceeds" in log_capture.text


def test_spatial_rank_must_match(geometry: AcquisitionGeometry) -> None:
    with pytest.raises(InvalidInputError):
        draw_batch(BatchSpec(b_space=[(1, 1)]), geometry, make_rng(0))


def test_draws_are_reproducible(geometry: AcquisitionGeometry) -> None:
    spec = BatchSpec(b_coils=2, b_space=[(3, 3), (3, 3)])
    first = draw_batch(spec, geometry, make_rng(11))
    second = draw_batch(spec, geometry, make_rng(11))
    assert first.coils == second.coils and first.frames == second.frames
    np.testing.assert_array_equal(first.regularizer_grid().axes[1], second.regularizer_grid().axes[1])


@pytest.mark.parametrize(
    "fields",
    [{"b_coils": 0}, {"b_time": (0, 0)}, {"b_time": (4, 0)}, {"b_space": [(-1, 2), (1, 1)]}],
)
def test_batch_spec_validation(fields: dict) -> None:
    with pytest.raises(ValidationError):
        BatchSpec(**fields)


def _chi_square(counts: np.ndarray) -> float:
    expected = counts.sum() / counts.size
    return float(np.sum((counts - expected) ** 2 / expected))


def test_continuous_draws_are_uniform_and_independent(geometry: AcquisitionGeometry) -> None:
    n = 10000
    spec = BatchSpec(b_time=(n, 1), b_space=[(n, 0), (n, 0)])
    batch = draw_batch(spec, geometry, make_rng(3))
    t, x = batch.time.continuous, batch.space[0].continuous
    a, b = geometry.spatial_domain[0]

    # 0.1% critical values: 19 degrees of freedom 43.82, 24 degrees of freedom 51.18
    time_counts, _ = np.histogram(t, bins=20, range=(0.0, geometry.tau))
    assert _chi_square(time_counts) < 43.82
    space_counts, _ = np.histogram(x, bins=20, range=(a, b))
    assert _chi_square(space_counts) < 43.82

    joint, _, _ = np.histogram2d(t, x, bins=5, range=[(0.0, geometry.tau), (a, b)])
    assert _chi_square(joint) < 51.18
    assert abs(np.corrcoef(t, x)[0, 1]) < 4.0 / np.sqrt(n)
