"""
Centered unitary DFTs

Forward and inverse transforms over chosen axes with the origin at index
n // 2, limited to sizes that factor into 2, 3, 5 and 7.
"""

from typing import Sequence, Tuple

import numpy as np

from .errors import InvalidInputError

SUPPORTED_RADICES = (2, 3, 5, 7)


def check_transform_size(n: int) -> None:
    """Accept sizes whose prime factors are all at most 7"""
    if n < 1:
        raise InvalidInputError(f"Transform size must be positive, got {n}")
    remainder = n
    for radix in SUPPORTED_RADICES:
        while remainder % radix == 0:
            remainder //= radix
    if remainder != 1:
        raise InvalidInputError(
            f"Unsupported transform size {n}: prime factors must be in {SUPPORTED_RADICES}"
        )


def _checked_axes(array: np.ndarray, axes: Sequence[int]) -> Tuple[int, ...]:
    normalized = tuple(a % array.ndim for a in axes)
    for a in normalized:
        check_transform_size(array.shape[a])
    return normalized


def centered_dft(array: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Unitary DFT over `axes` with the zero frequency at index n // 2"""
    ax = _checked_axes(array, axes)
    shifted = np.fft.ifftshift(array, axes=ax)
    return np.fft.fftshift(np.fft.fftn(shifted, axes=ax, norm="ortho"), axes=ax)


def centered_idft(array: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Inverse (and adjoint) of `centered_dft`"""
    ax = _checked_axes(array, axes)
    shifted = np.fft.ifftshift(array, axes=ax)
    return np.fft.fftshift(np.fft.ifftn(shifted, axes=ax, norm="ortho"), axes=ax)
