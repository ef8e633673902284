import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from src.core.errors import DimensionError, InvalidInputError
from src.tools.metrics import (
    best_matching_frame,
    evaluate_volumes,
    psnr,
    ssim,
    write_report_csv,
    write_report_json,
)


@pytest.fixture
def reference(rng: np.random.Generator) -> np.ndarray:
    image = rng.uniform(0.0, 0.8, size=(24, 24))
    image[3, 5] = 1.0
    return image


class TestPsnr:
    def test_constant_offset(self, reference: np.ndarray) -> None:
        assert psnr(reference + 0.1, reference) == pytest.approx(20.0)

    def test_identical_images(self, reference: np.ndarray) -> None:
        assert math.isinf(psnr(reference, reference))

    def test_uses_magnitudes(self, reference: np.ndarray) -> None:
        rotated = reference * np.exp(1j * 0.7)
        assert psnr(rotated, reference) > 200.0

    def test_shape_mismatch(self, reference: np.ndarray) -> None:
        with pytest.raises(DimensionError):
            psnr(reference[:-1], reference)

    def test_flat_reference(self) -> None:
        with pytest.raises(InvalidInputError):
            psnr(np.ones((8, 8)), np.zeros((8, 8)))


class TestSsim:
    def test_identical_images(self, reference: np.ndarray) -> None:
        assert ssim(reference, reference) == pytest.approx(1.0)

    def test_noise_lowers_ssim(self, reference: np.ndarray, rng: np.random.Generator) -> None:
        noisy = reference + rng.normal(0.0, 0.2, size=reference.shape)
        assert ssim(noisy, reference) < 0.9

    def test_window_must_fit(self) -> None:
        with pytest.raises(DimensionError):
            ssim(np.ones((6, 20)), np.ones((6, 20)))


class TestReports:
    def test_evaluate_identical_volumes(self, reference: np.ndarray) -> None:
        volume = np.stack([reference, reference[::-1]])
        report = evaluate_volumes(volume, volume)
        assert [f.frame for f in report.frames] == [0, 1]
        assert all(f.psnr_infinite and f.psnr is None for f in report.frames)
        assert report.psnr_mean is None
        assert report.ssim_min == pytest.approx(1.0)

    def test_aggregates(self, reference: np.ndarray) -> None:
        ref = np.stack([reference, reference])
        rec = ref.copy()
        rec[1] += 0.1
        report = evaluate_volumes(rec, ref)
        assert report.psnr_mean == pytest.approx(20.0)
        assert report.psnr_min == pytest.approx(20.0)
        assert report.frames[0].psnr_infinite

    def test_volumes_need_a_frame_axis(self, reference: np.ndarray) -> None:
        with pytest.raises(DimensionError):
            evaluate_volumes(reference, reference)

    def test_best_matching_frame(self, reference: np.ndarray, rng: np.random.Generator) -> None:
        frames = np.stack(
            [rng.uniform(0, 1, reference.shape), reference + 0.01, rng.uniform(0, 1, reference.shape)]
        )
        index, score = best_matching_frame(frames, reference)
        assert index == 1
        assert score > 0.9

    def test_report_files(self, reference: np.ndarray, tmp_path: Path) -> None:
        ref = np.stack([reference, reference])
        rec = ref.copy()
        rec[1] += 0.1
        report = evaluate_volumes(rec, ref)
        with write_report_csv(report, tmp_path / "metrics.csv").open() as handle:
            rows = list(csv.DictReader(handle))
        assert rows[0]["psnr"] == "inf"
        assert float(rows[1]["psnr"]) == pytest.approx(20.0)
        payload = json.loads(write_report_json(report, tmp_path / "metrics.json").read_text())
        assert payload["frames"][1]["frame"] == 1
