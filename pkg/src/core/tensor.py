"""
Dense complex tensors and multi-mode contraction

A neural field expansion on a product grid is a Tucker-style product: the
coefficient tensor contracted with one matrix per mode. Contracting one mode at
a time keeps the cost at sum-of-grid-sizes network evaluations plus the
contraction work.
"""

from typing import List, Sequence, Tuple

import numpy as np

from .errors import DimensionError, InvalidInputError


class DenseTensor:
    """Immutable row-major complex tensor"""

    __slots__ = ("_data",)

    def __init__(self, data: "np.ndarray | Sequence") -> None:
        array = np.array(data, dtype=np.complex128)
        if array.ndim == 0:
            array = array.reshape(1)
        if any(n <= 0 for n in array.shape):
            raise DimensionError(f"Tensor dimensions must be positive, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise InvalidInputError("Tensor entries must be finite")
        array.setflags(write=False)
        self._data = array

    @classmethod
    def from_flat(cls, shape: Sequence[int], flat: Sequence[complex]) -> "DenseTensor":
        flat_array = np.asarray(flat, dtype=np.complex128).ravel()
        expected = int(np.prod(shape))
        if flat_array.size != expected:
            raise DimensionError(
                f"Flat data of length {flat_array.size} does not fill shape {tuple(shape)}"
            )
        return cls(flat_array.reshape(tuple(shape)))

    @classmethod
    def from_pairs(cls, pairs: np.ndarray) -> "DenseTensor":
        """Build from a real array whose last axis holds (re, im)"""
        pairs = np.asarray(pairs, dtype=np.float64)
        if pairs.shape[-1] != 2:
            raise DimensionError(f"Expected trailing axis of length 2, got {pairs.shape}")
        return cls(pairs[..., 0] + 1j * pairs[..., 1])

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self._data.shape)

    @property
    def rank(self) -> int:
        return self._data.ndim

    @property
    def data(self) -> np.ndarray:
        return self._data

    def flat(self) -> np.ndarray:
        return self._data.ravel()

    def to_pairs(self) -> np.ndarray:
        return np.stack([self._data.real, self._data.imag], axis=-1)

    def __repr__(self) -> str:
        return f"DenseTensor(shape={self.shape})"


def contract_array(array: np.ndarray, mode: int, matrix: np.ndarray) -> np.ndarray:
    """Contract `array` along `mode` with a P x N_mode matrix"""
    if mode < 0 or mode >= array.ndim:
        raise DimensionError(f"Mode {mode} out of range for rank {array.ndim}")
    if matrix.ndim != 2 or matrix.shape[1] != array.shape[mode]:
        raise DimensionError(
            f"Matrix of shape {matrix.shape} cannot contract mode {mode} of size "
            f"{array.shape[mode]}"
        )
    out = np.tensordot(matrix, array, axes=([1], [mode]))
    return np.moveaxis(out, 0, mode)


def contraction_order(shape: Sequence[int], rows: Sequence[int]) -> List[int]:
    """Contract modes that shrink the tensor most first (descending N_j / P_j)"""
    return sorted(range(len(rows)), key=lambda j: (-shape[j] / rows[j], j))


def mode_contract(t: DenseTensor, mode: int, matrix: "np.ndarray | DenseTensor") -> DenseTensor:
    m = matrix.data if isinstance(matrix, DenseTensor) else np.asarray(matrix, dtype=np.complex128)
    return DenseTensor(contract_array(t.data, mode, m))


def tucker_apply(
    coeffs: DenseTensor, factors: Sequence["np.ndarray | DenseTensor"]
) -> DenseTensor:
    """Evaluate sum_k c_k prod_j factor_j[p_j, k_j] by successive mode contractions"""
    if len(factors) != coeffs.rank:
        raise DimensionError(
            f"Got {len(factors)} factors for a coefficient tensor of rank {coeffs.rank}"
        )
    matrices = [
        f.data if isinstance(f, DenseTensor) else np.asarray(f, dtype=np.complex128)
        for f in factors
    ]
    for j, m in enumerate(matrices):
        if m.ndim != 2 or m.shape[1] != coeffs.shape[j]:
            raise DimensionError(
                f"Factor {j} has shape {m.shape}, expected (P, {coeffs.shape[j]})"
            )

    result = coeffs.data
    for j in contraction_order(coeffs.shape, [m.shape[0] for m in matrices]):
        result = contract_array(result, j, matrices[j])
    return DenseTensor(result)
