"""On-disk dataset / reconstruction formats.

A dataset directory holds ``meta.json`` plus raw little-endian binaries:

* complex arrays (``kspace.bin``, ``maps.bin``, optional ``reference.bin``):
  interleaved float32 (re, im) pairs, row-major [coil, row, col];
* ``mask.bin``: one unsigned byte per pixel, values 0/1, row-major.

``meta.json`` carries a ``version`` field (currently 1), the acquisition
metadata and one descriptor ``{"file", "shape", "dtype"}`` per array with
dtype ``"c64"`` (complex64 on disk) or ``"u8"``.  In-memory arrays are
64-bit; the float32 representation is a property of the files only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

FORMAT_VERSION = 1

VALID_PATTERNS = ("cartesian", "poisson", "full")


class DatasetValidationError(ValueError):
    pass


@dataclass
class DatasetMeta:
    H: int
    W: int
    L_coils: int
    accel_factor: float
    pattern: str
    snr_db: Optional[float] = None
    seed: int = 0

    def to_dict(self):
        return {
            "H": self.H,
            "W": self.W,
            "L_coils": self.L_coils,
            "accel_factor": self.accel_factor,
            "pattern": self.pattern,
            "snr_db": self.snr_db,
            "seed": self.seed,
        }


@dataclass
class Dataset:
    """Multicoil k-space samples with coil maps, sampling mask and metadata."""

    kspace: np.ndarray            # complex [L, H, W]
    maps: np.ndarray              # complex [L, H, W]
    mask: np.ndarray              # uint8 {0,1} [H, W]
    meta: DatasetMeta
    reference: Optional[np.ndarray] = None   # complex [H, W]

    def validate(self):
        L, H, W = self.meta.L_coils, self.meta.H, self.meta.W
        if self.kspace.shape != (L, H, W):
            raise DatasetValidationError(
                f"kspace shape {self.kspace.shape} != meta ({L}, {H}, {W})")
        if self.maps.shape != (L, H, W):
            raise DatasetValidationError(
                f"maps shape {self.maps.shape} != meta ({L}, {H}, {W})")
        if self.mask.shape != (H, W):
            raise DatasetValidationError(
                f"mask shape {self.mask.shape} != meta ({H}, {W})")
        if self.reference is not None and self.reference.shape != (H, W):
            raise DatasetValidationError(
                f"reference shape {self.reference.shape} != meta ({H}, {W})")
        if not np.all(np.isin(np.unique(self.mask), [0, 1])):
            raise DatasetValidationError("mask values must be 0/1")
        nnz = int(np.count_nonzero(self.mask))
        if nnz == 0:
            raise DatasetValidationError("mask is empty")
        accel = H * W / nnz
        if abs(accel - self.meta.accel_factor) > 1e-9:
            raise DatasetValidationError(
                f"meta.accel_factor {self.meta.accel_factor} != H*W/nnz {accel}")
        if self.meta.pattern not in VALID_PATTERNS:
            raise DatasetValidationError(f"unknown pattern {self.meta.pattern!r}")
        if self.meta.snr_db is not None and not np.isfinite(self.meta.snr_db):
            raise DatasetValidationError("snr_db must be finite when present")
        if np.any(self.kspace[:, self.mask == 0] != 0):
            raise DatasetValidationError("kspace nonzero at masked-out locations")


@dataclass
class ReconResult:
    """One reconstruction: image, the hyperparameters that produced it, losses."""

    image: np.ndarray                       # complex [H, W]
    beta: "object"                          # training.HyperParams
    train_loss_curve: list = field(default_factory=list)
    val_loss: float = float("nan")
    metrics: Optional[dict] = None          # {"nrmse", "ssim", "psnr_db"}
    wall_time_s: float = 0.0

    def validate(self):
        curve = np.asarray(self.train_loss_curve, dtype=float)
        if curve.size and (not np.all(np.isfinite(curve)) or np.any(curve < 0)):
            raise DatasetValidationError("train_loss_curve must be finite and nonnegative")


def _write_complex(path: Path, arr: np.ndarray):
    np.asarray(arr, dtype=np.complex128).astype("<c8").tofile(path)


def _read_complex(path: Path, shape) -> np.ndarray:
    expected = 8 * int(np.prod(shape))
    nbytes = path.stat().st_size
    if nbytes != expected:
        raise DatasetValidationError(
            f"{path.name}: expected {expected} bytes for shape {tuple(shape)}, found {nbytes}")
    raw = np.fromfile(path, dtype="<c8")
    return raw.astype(np.complex128).reshape(shape)


def save_dataset(ds: Dataset, out_dir) -> None:
    """Write a validated Dataset to ``out_dir`` (created if missing)."""
    ds.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    L, H, W = ds.meta.L_coils, ds.meta.H, ds.meta.W
    arrays = {
        "kspace": {"file": "kspace.bin", "shape": [L, H, W], "dtype": "c64"},
        "maps": {"file": "maps.bin", "shape": [L, H, W], "dtype": "c64"},
        "mask": {"file": "mask.bin", "shape": [H, W], "dtype": "u8"},
    }
    if ds.reference is not None:
        arrays["reference"] = {"file": "reference.bin", "shape": [H, W], "dtype": "c64"}
    meta = {"version": FORMAT_VERSION}
    meta.update(ds.meta.to_dict())
    meta["arrays"] = arrays
    try:
        _write_complex(out_dir / "kspace.bin", ds.kspace)
        _write_complex(out_dir / "maps.bin", ds.maps)
        np.asarray(ds.mask, dtype=np.uint8).tofile(out_dir / "mask.bin")
        if ds.reference is not None:
            _write_complex(out_dir / "reference.bin", ds.reference)
        (out_dir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    except OSError as e:
        raise OSError(f"failed writing dataset file in {out_dir}: {e}") from e


def load_dataset(in_dir) -> Dataset:
    """Read and re-validate a Dataset from a directory written by save_dataset."""
    in_dir = Path(in_dir)
    meta_path = in_dir / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no meta.json in {in_dir}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    version = meta.get("version")
    if version != FORMAT_VERSION:
        raise DatasetValidationError(f"unsupported dataset version: {version}")
    arrays = meta["arrays"]

    def arr_path(name):
        return in_dir / arrays[name]["file"]

    kspace = _read_complex(arr_path("kspace"), arrays["kspace"]["shape"])
    maps = _read_complex(arr_path("maps"), arrays["maps"]["shape"])
    mask_shape = tuple(arrays["mask"]["shape"])
    expected = int(np.prod(mask_shape))
    nbytes = arr_path("mask").stat().st_size
    if nbytes != expected:
        raise DatasetValidationError(
            f"mask.bin: expected {expected} bytes for shape {mask_shape}, found {nbytes}")
    mask = np.fromfile(arr_path("mask"), dtype=np.uint8).reshape(mask_shape)
    reference = None
    if "reference" in arrays:
        reference = _read_complex(arr_path("reference"), arrays["reference"]["shape"])
    ds = Dataset(
        kspace=kspace,
        maps=maps,
        mask=mask,
        reference=reference,
        meta=DatasetMeta(
            H=meta["H"], W=meta["W"], L_coils=meta["L_coils"],
            accel_factor=meta["accel_factor"], pattern=meta["pattern"],
            snr_db=meta["snr_db"], seed=meta["seed"],
        ),
    )
    ds.validate()
    return ds


def save_complex_image(path, image: np.ndarray) -> dict:
    """Write a complex [H, W] image as raw c64; returns its descriptor."""
    path = Path(path)
    _write_complex(path, image)
    return {"file": path.name, "shape": list(image.shape), "dtype": "c64"}


def load_complex_image(path, shape) -> np.ndarray:
    return _read_complex(Path(path), shape)


def export_png(image: np.ndarray, path, roi: Optional[np.ndarray] = None) -> None:
    """Write an 8-bit grayscale magnitude PNG.

    Pixels are round(255 * |image| / m) with m = max |image| over roi
    (full image when roi is None), rounding half away from zero and
    clipping to [0, 255]; an all-zero normalizer yields a black image.
    """
    mag = np.abs(np.asarray(image))
    if mag.ndim != 2 or mag.shape[0] < 1 or mag.shape[1] < 1:
        raise ValueError(f"expected a 2-D image, got shape {mag.shape}")
    m = np.max(mag[roi.astype(bool)]) if roi is not None else np.max(mag)
    if m > 0:
        pix = np.clip(np.floor(255.0 * mag / m + 0.5), 0, 255).astype(np.uint8)
    else:
        pix = np.zeros_like(mag, dtype=np.uint8)
    Image.fromarray(pix, mode="L").save(Path(path))
