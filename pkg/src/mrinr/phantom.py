"""Synthetic phantoms, analytic coil maps and noisy k-space simulation."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .dataio import Dataset, DatasetMeta
from .fourier import fft2c

# Standard Shepp-Logan ellipses: (intensity, a, b, x0, y0, angle_deg).
SHEPP_LOGAN_ELLIPSES = [
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
]

COIL_RING_RADIUS = 1.2
COIL_WIDTH_SQ = 0.64  # Gaussian profile variance parameter


def _pixel_grid(N: int):
    """Pixel-center coordinates on [-1, 1]^2; returns (u, v) = (col, row) axes."""
    c = (2.0 * np.arange(N) + 1.0) / N - 1.0
    v, u = np.meshgrid(c, c, indexing="ij")
    return u, v


def shepp_logan(N: int, phase: str = "none") -> np.ndarray:
    """Standard 10-ellipse Shepp-Logan phantom sampled at pixel centers.

    With phase="smooth" the image is multiplied by
    exp(i*(0.5*pi*u + 0.3*pi*(u^2+v^2))), making it genuinely complex
    without changing its magnitude.
    """
    if N < 8:
        raise ValueError(f"N must be >= 8, got {N}")
    if phase not in ("none", "smooth"):
        raise ValueError(f"unknown phase mode {phase!r}")
    u, v = _pixel_grid(N)
    img = np.zeros((N, N), dtype=float)
    for amp, a, b, x0, y0, ang in SHEPP_LOGAN_ELLIPSES:
        t = np.deg2rad(ang)
        x, y = u - x0, v - y0
        xr = x * np.cos(t) + y * np.sin(t)
        yr = -x * np.sin(t) + y * np.cos(t)
        img += amp * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    out = img.astype(complex)
    if phase == "smooth":
        out = out * np.exp(1j * (0.5 * np.pi * u + 0.3 * np.pi * (u**2 + v**2)))
    return out


def birdcage_maps(N: int, L_coils: int) -> np.ndarray:
    """Gaussian-profile coil sensitivities on a ring, SoS-normalized to 1.

    Coil l sits at angle 2*pi*l/L on a circle of radius 1.2 in [-1,1]
    units.  Raw sensitivity: exp(-rho^2/(2*0.64)) * exp(i*phi) with rho
    the distance to the coil center and phi the angle of the offset
    vector; maps are then scaled so sum_l |c_l|^2 = 1 at every pixel.
    """
    if N < 1 or L_coils < 1:
        raise ValueError("N and L_coils must be positive")
    u, v = _pixel_grid(N)
    maps = np.empty((L_coils, N, N), dtype=complex)
    for ell in range(L_coils):
        ang = 2.0 * np.pi * ell / L_coils
        du = u - COIL_RING_RADIUS * np.cos(ang)
        dv = v - COIL_RING_RADIUS * np.sin(ang)
        rho2 = du**2 + dv**2
        maps[ell] = np.exp(-rho2 / (2.0 * COIL_WIDTH_SQ)) * np.exp(1j * np.arctan2(dv, du))
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / sos


def simulate_kspace(
    image: np.ndarray,
    maps: np.ndarray,
    mask: np.ndarray,
    snr_db: Optional[float] = None,
    seed: int = 0,
    pattern: str = "full",
) -> Dataset:
    """Simulate y = P (I_L kron F) C x + eps on a Cartesian grid.

    Complex Gaussian noise is scaled so the expected full-grid SNR
    20*log10(||y_clean||_2 / E||eps||_2) equals snr_db, added before
    masking; masked-out entries are exactly zero.
    """
    image = np.asarray(image, dtype=complex)
    maps = np.asarray(maps, dtype=complex)
    H, W = image.shape
    if maps.ndim != 3 or maps.shape[1:] != (H, W):
        raise ValueError(f"maps shape {maps.shape} does not match image {image.shape}")
    if mask.shape != (H, W):
        raise ValueError(f"mask shape {mask.shape} does not match image {image.shape}")
    L = maps.shape[0]
    ksp = fft2c(maps * image)
    if snr_db is not None:
        rng = np.random.default_rng(seed)
        sigma = np.linalg.norm(ksp) / (10.0 ** (snr_db / 20.0) * np.sqrt(2.0 * ksp.size))
        noise = sigma * (rng.standard_normal(ksp.shape) + 1j * rng.standard_normal(ksp.shape))
        ksp = ksp + noise
    mask_u8 = np.asarray(mask, dtype=np.uint8)
    ksp = ksp * mask_u8
    nnz = int(np.count_nonzero(mask_u8))
    meta = DatasetMeta(
        H=H, W=W, L_coils=L,
        accel_factor=H * W / nnz,
        pattern=pattern,
        snr_db=snr_db,
        seed=seed,
    )
    ds = Dataset(kspace=ksp, maps=maps, mask=mask_u8, reference=image.copy(), meta=meta)
    ds.validate()
    return ds


def dynamic_phantom(N: int, frames: int) -> np.ndarray:
    """Multi-frame phantom: static smooth-phase Shepp-Logan plus a needle.

    A 2-pixel-wide unit-intensity needle enters from the left boundary at
    mid-height and advances linearly toward the image center; frame 0 has
    no needle.
    """
    if frames < 2:
        raise ValueError(f"frames must be >= 2, got {frames}")
    base = shepp_logan(N, phase="smooth")
    out = np.empty((frames, N, N), dtype=complex)
    rows = slice(N // 2 - 1, N // 2 + 1)
    for t in range(frames):
        frame = base.copy()
        tip = int(round(t * (N // 2) / (frames - 1)))
        frame[rows, 0:tip] = 1.0
        out[t] = frame
    return out
