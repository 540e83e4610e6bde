"""Image-quality metrics with ROI masking, plus reference reconstructions.

Metrics compare magnitude images after a global complex scale alignment
of the reconstruction (closed-form least squares), which removes the
arbitrary global phase/scale a self-supervised network can absorb.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from skimage.metrics import structural_similarity

from .dataio import Dataset
from .fourier import ForwardOp, adjoint, apply

SSIM_WIN = 7
PSNR_CAP_DB = 200.0
ROI_REL_THRESHOLD = 0.01


@dataclass
class MetricReport:
    nrmse: float
    ssim: float
    psnr_db: float
    roi_pixel_count: int

    def to_dict(self):
        return {"nrmse": self.nrmse, "ssim": self.ssim, "psnr_db": self.psnr_db,
                "roi_pixel_count": self.roi_pixel_count}


def roi_from_reference(reference: np.ndarray) -> np.ndarray:
    """Support mask: |reference| strictly above 1% of its maximum."""
    mag = np.abs(reference)
    peak = mag.max()
    if peak <= 0:
        raise ValueError("reference image is identically zero")
    return mag > ROI_REL_THRESHOLD * peak


def align_global(recon: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Scale recon by argmin_c ||c*recon - reference||_2 (complex c)."""
    denom = np.vdot(recon, recon).real
    if denom < 1e-300:
        return recon
    c = np.vdot(recon, reference) / denom
    return c * recon


def _prep(recon, reference, roi):
    if recon.shape != reference.shape:
        raise ValueError(f"shape mismatch: {recon.shape} vs {reference.shape}")
    roi = np.asarray(roi, dtype=bool)
    if roi.shape != reference.shape:
        raise ValueError("roi shape mismatch")
    if not roi.any():
        raise ValueError("empty ROI")
    rec = np.abs(align_global(recon, reference))
    ref = np.abs(reference)
    return rec, ref, roi


def nrmse(recon, reference, roi) -> float:
    """||rec - ref||_2 / ||ref||_2 over the ROI, on magnitude images."""
    rec, ref, roi = _prep(recon, reference, roi)
    num = np.linalg.norm((rec - ref)[roi])
    den = np.linalg.norm(ref[roi])
    if den == 0:
        raise ValueError("reference is zero on the ROI")
    return float(num / den)


def psnr(recon, reference, roi) -> float:
    """20*log10(max|ref|_roi / rmse_roi) in dB, capped at 200."""
    rec, ref, roi = _prep(recon, reference, roi)
    rmse = np.sqrt(np.mean((rec - ref)[roi] ** 2))
    peak = ref[roi].max()
    if rmse == 0:
        return PSNR_CAP_DB
    return float(min(20.0 * np.log10(peak / rmse), PSNR_CAP_DB))


def ssim(recon, reference, roi, data_range: float | None = None) -> float:
    """Mean local SSIM (7x7 uniform window, K1=0.01, K2=0.03) over ROI
    centers whose window lies fully inside the image.

    data_range defaults to max-min of |reference| over the ROI.
    """
    rec, ref, roi = _prep(recon, reference, roi)
    H, W = ref.shape
    if H < SSIM_WIN or W < SSIM_WIN:
        raise ValueError(f"image smaller than the {SSIM_WIN}x{SSIM_WIN} SSIM window")
    if data_range is None:
        vals = ref[roi]
        data_range = float(vals.max() - vals.min())
    data_range = max(data_range, 1e-12)
    _, smap = structural_similarity(
        ref, rec, win_size=SSIM_WIN, data_range=data_range,
        gaussian_weights=False, full=True, K1=0.01, K2=0.03,
    )
    pad = SSIM_WIN // 2
    inner = np.s_[pad:H - pad, pad:W - pad]
    sel = roi[inner]
    if not sel.any():
        raise ValueError("ROI has no interior SSIM windows")
    return float(np.mean(smap[inner][sel]))


def report(recon, reference, roi=None) -> MetricReport:
    if roi is None:
        roi = roi_from_reference(reference)
    roi = np.asarray(roi, dtype=bool)
    return MetricReport(
        nrmse=nrmse(recon, reference, roi),
        ssim=ssim(recon, reference, roi),
        psnr_db=psnr(recon, reference, roi),
        roi_pixel_count=int(roi.sum()),
    )


def zero_filled(dataset: Dataset) -> np.ndarray:
    """Adjoint of the sampled forward operator applied to the measurements."""
    op = ForwardOp(maps=dataset.maps, sample_mask=dataset.mask)
    return adjoint(op, dataset.kspace)


def cg_sense(dataset: Dataset, iters: int = 20, tikhonov: float = 0.0) -> np.ndarray:
    """Conjugate gradients on (A^H A + tikhonov I) x = A^H y, zero start.

    Runs the fixed iteration count with no restarts; on numerical
    breakdown (vanishing curvature) returns the current iterate with a
    warning.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    op = ForwardOp(maps=dataset.maps, sample_mask=dataset.mask)

    def normal(v):
        return adjoint(op, apply(op, v)) + tikhonov * v

    b = adjoint(op, dataset.kspace)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = np.vdot(r, r).real
    for _ in range(iters):
        if rs == 0:
            break
        Ap = normal(p)
        curv = np.vdot(p, Ap).real
        if curv <= 0 or not np.isfinite(curv):
            warnings.warn("cg_sense: curvature breakdown, returning current iterate")
            return x
        alpha = rs / curv
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = np.vdot(r, r).real
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x
