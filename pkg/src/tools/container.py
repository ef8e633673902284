"""
On-disk formats

Datasets, checkpoints and volumes are directories or file pairs of a JSON
manifest plus raw little-endian row-major binaries: complex64 stored as
interleaved (re, im) float32 for k-space and volumes, float64 for parameters,
uint8 for masks. Manifests carry no timestamps so identical inputs give
identical bytes.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from ..core.errors import InvalidInputError
from ..core.forward import KSpaceDataset, ReconstructionModel
from ..core.models import AcquisitionGeometry, RunConfig
from ..optim.sampler import make_rng
from ..utils.logger import get_contextual_logger, log_execution_time

log = get_contextual_logger("container")

PathLike = Union[str, Path]

COMPLEX_DTYPE = np.dtype("<c8")
PARAM_DTYPE = np.dtype("<f8")
MASK_DTYPE = np.dtype("u1")
FORMAT_VERSION = 1

KSPACE_FILE = "kspace.c64"
MASK_FILE = "masks.u8"
GROUND_TRUTH_FILE = "ground_truth.c64"
MANIFEST_FILE = "manifest.json"
PARAMS_FILE = "params.f64"


class FileInfo(BaseModel):
    name: str
    path: str
    size: int
    exists: bool


class DatasetManifest(BaseModel):
    format_version: int = FORMAT_VERSION
    endianness: Literal["little"] = "little"
    geometry: AcquisitionGeometry
    kspace_file: str = KSPACE_FILE
    kspace_order: str = "coil, time, k-axes"
    mask_file: str = MASK_FILE
    ground_truth_file: Optional[str] = None
    mask: Dict[str, Any] = Field(default_factory=dict)


class ParameterEntry(BaseModel):
    name: str
    shape: List[int]
    offset: int
    count: int


class CheckpointManifest(BaseModel):
    format_version: int = FORMAT_VERSION
    endianness: Literal["little"] = "little"
    dtype: str = "float64"
    config: RunConfig
    config_hash: str
    geometry: AcquisitionGeometry
    iteration: int = 0
    lr: float
    parameters: List[ParameterEntry]


class VolumeInfo(BaseModel):
    format_version: int = FORMAT_VERSION
    endianness: Literal["little"] = "little"
    dtype: str = "complex64"
    shape: List[int]
    order: str = "time, spatial axes"
    times: Optional[List[float]] = None
    fov: Optional[List[float]] = None
    metadata: Dict[str, Any] = Field(default_factory=dict)


def get_file_info(file_path: PathLike) -> FileInfo:
    path = Path(file_path)
    return FileInfo(
        name=path.name,
        path=str(path.absolute()),
        size=path.stat().st_size if path.exists() else 0,
        exists=path.exists(),
    )


def _write_json(path: Path, model: BaseModel) -> None:
    path.write_text(json.dumps(model.model_dump(mode="json"), indent=2, sort_keys=True))


def _read_manifest(path: Path, model: type) -> Any:
    if not path.exists():
        raise InvalidInputError(f"Missing manifest {path}")
    return model.model_validate_json(path.read_text())


def _write_array(path: Path, array: np.ndarray, dtype: np.dtype) -> None:
    path.write_bytes(np.ascontiguousarray(array, dtype=dtype).tobytes())


def _read_array(path: Path, dtype: np.dtype, shape: Tuple[int, ...]) -> np.ndarray:
    if not path.exists():
        raise InvalidInputError(f"Missing data file {path}")
    raw = path.read_bytes()
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise InvalidInputError(
            f"{path.name} holds {len(raw)} bytes, manifest shape {shape} needs {expected}"
        )
    return np.frombuffer(raw, dtype=dtype).reshape(shape)


@log_execution_time("write_dataset")
def write_dataset(dataset: KSpaceDataset, directory: PathLike) -> Path:
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(
        geometry=dataset.geometry,
        ground_truth_file=GROUND_TRUTH_FILE if dataset.ground_truth is not None else None,
        mask=dataset.mask_description,
    )
    _write_array(target / KSPACE_FILE, dataset.kspace, COMPLEX_DTYPE)
    _write_array(target / MASK_FILE, dataset.masks, MASK_DTYPE)
    if dataset.ground_truth is not None:
        _write_array(target / GROUND_TRUTH_FILE, dataset.ground_truth, COMPLEX_DTYPE)
    _write_json(target / MANIFEST_FILE, manifest)
    log.info(f"Wrote dataset to {target} ({get_file_info(target / KSPACE_FILE).size} k-space bytes)")
    return target


@log_execution_time("read_dataset")
def read_dataset(directory: PathLike) -> KSpaceDataset:
    source = Path(directory)
    manifest: DatasetManifest = _read_manifest(source / MANIFEST_FILE, DatasetManifest)
    g = manifest.geometry
    frames = len(g.times)
    volume_shape = (frames,) + tuple(g.grid_shape)
    kspace = _read_array(source / manifest.kspace_file, COMPLEX_DTYPE, (g.n_coils,) + volume_shape)
    masks = _read_array(source / manifest.mask_file, MASK_DTYPE, volume_shape)
    ground_truth = None
    if manifest.ground_truth_file:
        ground_truth = _read_array(source / manifest.ground_truth_file, COMPLEX_DTYPE, volume_shape)
    return KSpaceDataset(
        geometry=g,
        kspace=kspace,
        masks=masks.astype(bool),
        ground_truth=ground_truth,
        mask_description=manifest.mask,
    )


def read_manifest(directory: PathLike) -> DatasetManifest:
    return _read_manifest(Path(directory) / MANIFEST_FILE, DatasetManifest)


@log_execution_time("write_checkpoint")
def write_checkpoint(
    directory: PathLike,
    model: ReconstructionModel,
    config: RunConfig,
    iteration: int = 0,
    lr: Optional[float] = None,
) -> Path:
    """Store every field parameter with the config and its hash"""
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    entries: List[ParameterEntry] = []
    chunks: List[np.ndarray] = []
    offset = 0
    for name in sorted(model.parameters()):
        array = model.parameters()[name]
        entries.append(
            ParameterEntry(name=name, shape=list(array.shape), offset=offset, count=array.size)
        )
        chunks.append(array.reshape(-1))
        offset += array.size
    _write_array(target / PARAMS_FILE, np.concatenate(chunks), PARAM_DTYPE)
    manifest = CheckpointManifest(
        config=config,
        config_hash=config.config_hash(),
        geometry=model.geometry,
        iteration=iteration,
        lr=lr if lr is not None else config.learning_rate,
        parameters=entries,
    )
    _write_json(target / MANIFEST_FILE, manifest)
    log.debug(f"Checkpoint at iteration {iteration}: {offset} values in {target}")
    return target


def read_checkpoint(directory: PathLike) -> Tuple[CheckpointManifest, Dict[str, np.ndarray]]:
    source = Path(directory)
    manifest: CheckpointManifest = _read_manifest(source / MANIFEST_FILE, CheckpointManifest)
    total = sum(e.count for e in manifest.parameters)
    flat = _read_array(source / PARAMS_FILE, PARAM_DTYPE, (total,))
    params = {
        e.name: flat[e.offset : e.offset + e.count].reshape(e.shape).astype(np.float64)
        for e in manifest.parameters
    }
    if manifest.config.config_hash() != manifest.config_hash:
        raise InvalidInputError("Checkpoint config does not match its stored hash")
    return manifest, params


def load_model(directory: PathLike) -> Tuple[ReconstructionModel, CheckpointManifest]:
    """Rebuild the fields described by a checkpoint and load its parameters"""
    manifest, params = read_checkpoint(directory)
    model = ReconstructionModel.initialize(manifest.config, manifest.geometry, make_rng(0))
    model.load_parameters(params)
    return model, manifest


def write_volume(
    directory: PathLike,
    name: str,
    volume: np.ndarray,
    times: Optional[List[float]] = None,
    fov: Optional[List[float]] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write `<name>.c64` and its `<name>.json` sidecar"""
    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    info = VolumeInfo(
        shape=list(np.shape(volume)),
        times=times,
        fov=fov,
        metadata=metadata or {},
    )
    path = target / f"{name}.c64"
    _write_array(path, volume, COMPLEX_DTYPE)
    _write_json(target / f"{name}.json", info)
    return path


def read_volume(path: PathLike) -> Tuple[np.ndarray, VolumeInfo]:
    """Read a volume from its .c64 file (the sidecar sits next to it)"""
    data_path = Path(path)
    if data_path.suffix != ".c64":
        data_path = data_path.with_suffix(".c64")
    info: VolumeInfo = _read_manifest(data_path.with_suffix(".json"), VolumeInfo)
    array = _read_array(data_path, COMPLEX_DTYPE, tuple(info.shape))
    return array.astype(np.complex128), info
