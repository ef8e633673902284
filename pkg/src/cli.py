"""
Command-line interface

    field-recon synth --out DIR [--preset desk] [--af 8] [--mask rectilinear]
    field-recon recon --data DIR --out DIR [--config run.json] [--out-grid 128x128]
    field-recon eval  --rec DIR/reconstruction.c64 --ref DATASET_DIR [--out DIR]
    field-recon info  --data DIR

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from .config.logging import setup_logging
from .config.settings import settings
from .core.errors import InvalidInputError, NumericalError, ReconError
from .core.forward import frame_times
from .core.models import RunConfig
from .optim.reconstruct import reconstruct
from .tools.container import (
    read_dataset,
    read_manifest,
    read_volume,
    write_dataset,
    write_volume,
)
from .tools.metrics import evaluate_volumes, write_report_csv, write_report_json
from .tools.synth import PRESETS, synthesize
from .utils.helpers import flatten_dict, format_grid_shape, merge_dicts, parse_grid_shape
from .utils.logger import get_contextual_logger
from .utils.observer import RunObserver

log = get_contextual_logger("cli")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="field-recon",
        description="Dynamic MRI reconstruction with tensor-product neural fields",
    )
    parser.add_argument("--log-level", default=None, help="Override FIELD_RECON_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Write a synthetic dataset")
    synth.add_argument("--out", required=True, type=Path)
    synth.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    synth.add_argument("--af", type=float, default=1.0, help="Acceleration factor")
    synth.add_argument("--mask", default="rectilinear", choices=["rectilinear", "random_readout"])
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--noise-snr", type=float, default=None, help="Noise SNR in dB")

    recon = commands.add_parser("recon", help="Reconstruct a dataset")
    recon.add_argument("--data", required=True, type=Path)
    recon.add_argument("--out", required=True, type=Path)
    recon.add_argument("--config", type=Path, default=None, help="RunConfig JSON")
    recon.add_argument("--seed", type=int, default=None)
    recon.add_argument("--out-grid", default=None, help="Output grid, e.g. 128x128")
    recon.add_argument(
        "--out-frames", type=int, default=None, help="Evenly spaced output times over [0, tau]"
    )

    evaluate = commands.add_parser("eval", help="SSIM/PSNR of a reconstruction")
    evaluate.add_argument("--rec", required=True, type=Path)
    evaluate.add_argument("--ref", required=True, type=Path, help="Volume or dataset directory")
    evaluate.add_argument("--out", type=Path, default=None)

    info = commands.add_parser("info", help="Summarize a dataset")
    info.add_argument("--data", required=True, type=Path)
    return parser


def load_run_config(path: Optional[Path], seed: Optional[int]) -> RunConfig:
    data = json.loads(path.read_text()) if path is not None else {}
    if seed is not None:
        data = merge_dicts(data, {"seed": seed})
    elif "seed" not in data:
        data = merge_dicts(data, {"seed": settings.default_seed})
    return RunConfig.model_validate(data)


def cmd_synth(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else settings.default_seed
    dataset = synthesize(args.preset, args.af, args.mask, seed, args.noise_snr)
    write_dataset(dataset, args.out)
    print(
        f"Wrote {args.preset} dataset to {args.out}: "
        f"sampling fraction {dataset.sampling_fraction:.4f}"
    )
    return EXIT_OK


def cmd_recon(args: argparse.Namespace) -> int:
    dataset = read_dataset(args.data)
    config = load_run_config(args.config, args.seed)
    config.validate_against(dataset.geometry)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)

    observer = RunObserver(run_name=args.data.name or "reconstruction")
    result = reconstruct(
        dataset,
        config,
        checkpoint_dir=out / "checkpoint",
        observer=observer,
        diagnostics_dir=out,
    )
    observer.write_trace_csv(out / "loss_trace.csv")

    geometry = dataset.geometry
    times = (
        frame_times(geometry.tau, args.out_frames) if args.out_frames else list(geometry.times)
    )
    shape = parse_grid_shape(args.out_grid) if args.out_grid else tuple(geometry.grid_shape)
    volume = result.model.render(times, shape)
    write_volume(
        out,
        "reconstruction",
        volume,
        times=times,
        fov=list(geometry.fov),
        metadata={
            "config_hash": config.config_hash(),
            "grid": format_grid_shape(shape),
            "weights": result.weights.model_dump(),
        },
    )
    print(f"Reconstruction written to {out / 'reconstruction.c64'} ({len(times)} frames)")
    return EXIT_OK


def _reference_volume(path: Path) -> np.ndarray:
    if path.is_dir():
        dataset = read_dataset(path)
        if dataset.ground_truth is None:
            raise InvalidInputError(f"Dataset {path} has no ground truth")
        return dataset.ground_truth
    volume, _ = read_volume(path)
    return volume


def cmd_eval(args: argparse.Namespace) -> int:
    rec, _ = read_volume(args.rec)
    ref = _reference_volume(args.ref)
    report = evaluate_volumes(rec, ref)
    out: Path = args.out or Path(settings.output_dir)
    write_report_csv(report, out / "metrics.csv")
    write_report_json(report, out / "metrics.json")
    print(
        f"SSIM mean {report.ssim_mean:.4f} median {report.ssim_median:.4f} "
        f"min {report.ssim_min:.4f}"
    )
    if report.psnr_mean is None:
        print("PSNR infinite (identical volumes)")
    else:
        print(f"PSNR mean {report.psnr_mean:.2f} dB")
    return EXIT_OK


def cmd_info(args: argparse.Namespace) -> int:
    manifest = read_manifest(args.data)
    dataset = read_dataset(args.data)
    g = manifest.geometry
    fraction = dataset.sampling_fraction
    print(f"grid        {format_grid_shape(tuple(g.grid_shape))}")
    print(f"fov (m)     {list(g.fov)}")
    print(f"frames      {len(g.times)} over tau = {g.tau} s")
    print(f"coils       {g.n_coils}")
    print(f"sampled     {fraction:.4f}")
    print(f"effective AF {1.0 / fraction if fraction > 0 else float('inf'):.3f}")
    for key, value in flatten_dict({"mask": manifest.mask}).items():
        print(f"{key:<24} {value}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "recon": cmd_recon, "eval": cmd_eval, "info": cmd_info}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        setup_logging(level=args.log_level)
    try:
        return COMMANDS[args.command](args)
    except NumericalError as e:
        log.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except (ReconError, ValidationError, json.JSONDecodeError, FileNotFoundError) as e:
        log.error(f"{args.command}: {e}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
