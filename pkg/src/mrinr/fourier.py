"""Centered orthonormal 2-D FFT and the multicoil MRI forward operator."""

from dataclasses import dataclass

import numpy as np


def fft2c(x):
    """Centered orthonormal 2-D DFT (DC at [H//2, W//2])."""
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(x, axes=(-2, -1)), norm="ortho"),
        axes=(-2, -1),
    )


def ifft2c(x):
    """Inverse (= adjoint) of :func:`fft2c`."""
    return np.fft.ifftshift(
        np.fft.ifft2(np.fft.fftshift(x, axes=(-2, -1)), norm="ortho"),
        axes=(-2, -1),
    )


@dataclass(frozen=True)
class ForwardOp:
    """Multicoil sampling operator: per coil, mask * fft2c(map * image).

    maps: complex [L, H, W] coil sensitivities.
    sample_mask: {0,1} array [H, W].
    """

    maps: np.ndarray
    sample_mask: np.ndarray

    def __post_init__(self):
        if self.maps.ndim != 3:
            raise ValueError(f"maps must be [L, H, W], got shape {self.maps.shape}")
        if self.sample_mask.shape != self.maps.shape[1:]:
            raise ValueError(
                f"mask shape {self.sample_mask.shape} does not match maps {self.maps.shape}"
            )
        vals = np.unique(self.sample_mask)
        if not np.all(np.isin(vals, [0, 1])):
            raise ValueError("sample_mask values must be 0/1")

    @property
    def shape(self):
        return self.maps.shape


def apply(op: ForwardOp, image: np.ndarray) -> np.ndarray:
    """A x: image [H, W] -> masked k-space [L, H, W]."""
    if image.shape != op.maps.shape[1:]:
        raise ValueError(f"image shape {image.shape} does not match operator {op.maps.shape}")
    return fft2c(op.maps * image) * op.sample_mask


def adjoint(op: ForwardOp, kspace: np.ndarray) -> np.ndarray:
    """A^H y: k-space [L, H, W] -> coil-combined image [H, W]."""
    if kspace.shape != op.maps.shape:
        raise ValueError(f"kspace shape {kspace.shape} does not match operator {op.maps.shape}")
    return np.sum(np.conj(op.maps) * ifft2c(kspace * op.sample_mask), axis=0)
