"""
Image quality metrics

SSIM and PSNR of reconstructed frames against a reference, computed on
magnitude images with the dynamic range taken as max|ref| of each frame.
"""

import csv
import json
import math
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from skimage.metrics import mean_squared_error, structural_similarity

from ..core.errors import DimensionError, InvalidInputError
from ..core.models import FrameMetrics, MetricReport
from ..utils.logger import get_contextual_logger, log_execution_time

log = get_contextual_logger("metrics")

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _magnitude(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    return np.abs(image) if np.iscomplexobj(image) else image.astype(np.float64)


def _check_pair(rec: np.ndarray, ref: np.ndarray) -> None:
    if rec.shape != ref.shape:
        raise DimensionError(f"Reconstruction {rec.shape} and reference {ref.shape} differ")


def _dynamic_range(ref: np.ndarray) -> float:
    peak = float(np.max(np.abs(ref)))
    if peak <= 0.0 or not math.isfinite(peak):
        raise InvalidInputError("Reference image has no dynamic range")
    return peak


def psnr(rec: np.ndarray, ref: np.ndarray) -> float:
    """20 log10(max|ref| / RMSE); math.inf when the images coincide"""
    rec, ref = _magnitude(rec), _magnitude(ref)
    _check_pair(rec, ref)
    peak = _dynamic_range(ref)
    mse = float(mean_squared_error(ref, rec))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(peak / math.sqrt(mse))


def ssim(rec: np.ndarray, ref: np.ndarray, data_range: Optional[float] = None) -> float:
    """Uniform 7-wide window SSIM, mean over the valid windows"""
    rec, ref = _magnitude(rec), _magnitude(ref)
    _check_pair(rec, ref)
    if min(ref.shape) < SSIM_WINDOW:
        raise DimensionError(f"SSIM window {SSIM_WINDOW} exceeds image shape {ref.shape}")
    value = structural_similarity(
        ref,
        rec,
        win_size=SSIM_WINDOW,
        data_range=data_range if data_range is not None else _dynamic_range(ref),
        gaussian_weights=False,
        K1=SSIM_K1,
        K2=SSIM_K2,
    )
    return float(value)


@log_execution_time("evaluate_volumes")
def evaluate_volumes(rec: np.ndarray, ref: np.ndarray) -> MetricReport:
    """Per-frame SSIM/PSNR of (frames, *grid) volumes and their aggregates"""
    rec, ref = np.asarray(rec), np.asarray(ref)
    _check_pair(rec, ref)
    if rec.ndim < 3:
        raise DimensionError(f"Expected (frames, *grid) volumes, got shape {rec.shape}")

    frames: List[FrameMetrics] = []
    for i in range(rec.shape[0]):
        p = psnr(rec[i], ref[i])
        frames.append(
            FrameMetrics(
                frame=i,
                ssim=ssim(rec[i], ref[i]),
                psnr=None if math.isinf(p) else p,
                psnr_infinite=math.isinf(p),
            )
        )

    ssims = np.array([f.ssim for f in frames])
    psnrs = np.array([f.psnr for f in frames if f.psnr is not None])
    report = MetricReport(
        frames=frames,
        ssim_mean=float(ssims.mean()),
        ssim_median=float(np.median(ssims)),
        ssim_min=float(ssims.min()),
        psnr_mean=float(psnrs.mean()) if psnrs.size else None,
        psnr_median=float(np.median(psnrs)) if psnrs.size else None,
        psnr_min=float(psnrs.min()) if psnrs.size else None,
        metadata={"frames": rec.shape[0], "grid": list(rec.shape[1:])},
    )
    log.info(
        f"SSIM mean {report.ssim_mean:.4f} (min {report.ssim_min:.4f}), "
        f"PSNR mean {report.psnr_mean if report.psnr_mean is not None else 'inf'}"
    )
    return report


def best_matching_frame(frames: np.ndarray, reference: np.ndarray) -> Tuple[int, float]:
    """Index and SSIM of the frame most similar to a static reference image"""
    frames = np.asarray(frames)
    if frames.shape[1:] != np.shape(reference):
        raise DimensionError(
            f"Frames of shape {frames.shape[1:]} cannot be compared to {np.shape(reference)}"
        )
    scores = [ssim(frame, reference) for frame in frames]
    best = int(np.argmax(scores))
    return best, float(scores[best])


def write_report_csv(report: MetricReport, path: Union[str, Path]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["frame", "ssim", "psnr"])
        for f in report.frames:
            writer.writerow([f.frame, repr(f.ssim), "inf" if f.psnr_infinite else repr(f.psnr)])
    return out


def write_report_json(report: MetricReport, path: Union[str, Path]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.model_dump(mode="json"), indent=2))
    return out
