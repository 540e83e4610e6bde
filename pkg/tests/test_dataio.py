import json

import numpy as np
import pytest
from PIL import Image

from mrinr.dataio import (Dataset, DatasetMeta, DatasetValidationError, export_png,
                          load_dataset, save_dataset)


def tiny_dataset(H=4, W=4, L=1, nnz_mask=None):
    mask = np.ones((H, W), dtype=np.uint8) if nnz_mask is None else nnz_mask
    rng = np.random.default_rng(0)
    ksp = (rng.standard_normal((L, H, W)) + 1j * rng.standard_normal((L, H, W)))
    ksp = ksp.astype(np.complex64).astype(np.complex128)   # f32-representable
    ksp *= mask
    maps = np.ones((L, H, W), dtype=np.complex128)
    meta = DatasetMeta(H=H, W=W, L_coils=L, accel_factor=H * W / mask.sum(),
                       pattern="cartesian", snr_db=None, seed=7)
    return Dataset(kspace=ksp, maps=maps, mask=mask, meta=meta)


def test_all_ones_kspace_bytes(tmp_path):
    ds = tiny_dataset(H=2, W=2, L=1)
    ds.kspace = np.ones((1, 2, 2), dtype=np.complex128)
    save_dataset(ds, tmp_path)
    raw = (tmp_path / "kspace.bin").read_bytes()
    assert len(raw) == 32
    vals = np.frombuffer(raw, dtype="<f4")
    assert np.array_equal(vals, np.tile([1.0, 0.0], 4).astype(np.float32))


def test_roundtrip_bit_identical(tmp_path):
    ds = tiny_dataset(H=6, W=4, L=3)
    ds.reference = (np.arange(24).reshape(6, 4) * (1 - 2j)).astype(np.complex64).astype(complex)
    save_dataset(ds, tmp_path / "a")
    back = load_dataset(tmp_path / "a")
    assert np.array_equal(back.kspace, ds.kspace)
    assert np.array_equal(back.maps, ds.maps)
    assert np.array_equal(back.mask, ds.mask)
    assert np.array_equal(back.reference, ds.reference)
    assert back.meta == ds.meta
    # second trip produces byte-identical files
    save_dataset(back, tmp_path / "b")
    for name in ("kspace.bin", "maps.bin", "mask.bin", "reference.bin", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_file_sizes_exact(tmp_path):
    H, W, L = 5, 7, 3
    ds = tiny_dataset(H=H, W=W, L=L)
    save_dataset(ds, tmp_path)
    assert (tmp_path / "kspace.bin").stat().st_size == 8 * L * H * W
    assert (tmp_path / "maps.bin").stat().st_size == 8 * L * H * W
    assert (tmp_path / "mask.bin").stat().st_size == H * W


def test_accel_factor_from_mask_count():
    mask = np.zeros((4, 4), dtype=np.uint8)
    mask[0, 0] = mask[1, 2] = mask[3, 3] = 1
    ds = tiny_dataset(H=4, W=4, L=1, nnz_mask=mask)
    assert abs(ds.meta.accel_factor - 16 / 3) < 1e-9
    ds.validate()


def test_truncated_kspace_errors(tmp_path):
    ds = tiny_dataset()
    save_dataset(ds, tmp_path)
    path = tmp_path / "kspace.bin"
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(DatasetValidationError, match="kspace"):
        load_dataset(tmp_path)


def test_wrong_mask_size_errors(tmp_path):
    ds = tiny_dataset(H=4, W=4)
    save_dataset(ds, tmp_path)
    (tmp_path / "mask.bin").write_bytes(b"\x01" * 17)
    with pytest.raises(DatasetValidationError, match="mask"):
        load_dataset(tmp_path)


def test_unsupported_version(tmp_path):
    ds = tiny_dataset()
    save_dataset(ds, tmp_path)
    meta = json.loads((tmp_path / "meta.json").read_text())
    meta["version"] = 2
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(DatasetValidationError, match="version"):
        load_dataset(tmp_path)


def test_invariant_checked_before_write(tmp_path):
    ds = tiny_dataset()
    ds.kspace = ds.kspace.copy()
    ds.mask = np.zeros_like(ds.mask)
    ds.mask[0, 0] = 1
    ds.meta.accel_factor = 16.0
    out = tmp_path / "bad"
    with pytest.raises(DatasetValidationError):
        save_dataset(ds, out)   # kspace nonzero at masked-out locations
    assert not (out / "kspace.bin").exists()


def test_masked_zero_consistency_revalidated(tmp_path):
    ds = tiny_dataset()
    save_dataset(ds, tmp_path)
    mask = np.fromfile(tmp_path / "mask.bin", dtype=np.uint8)
    mask[0] = 0
    mask.tofile(tmp_path / "mask.bin")
    meta = json.loads((tmp_path / "meta.json").read_text())
    meta["accel_factor"] = 16 / 15
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(DatasetValidationError, match="masked-out"):
        load_dataset(tmp_path)


def png_pixels(path):
    return np.asarray(Image.open(path))


def test_export_png_constant_is_white(tmp_path):
    img = np.full((8, 8), 0.3 + 0.4j)
    export_png(img, tmp_path / "x.png")
    assert np.all(png_pixels(tmp_path / "x.png") == 255)


def test_export_png_zero_is_black(tmp_path):
    export_png(np.zeros((5, 5), dtype=complex), tmp_path / "x.png")
    assert np.all(png_pixels(tmp_path / "x.png") == 0)


def test_export_png_rounds_half_away_from_zero(tmp_path):
    img = np.array([[0.0, 0.5, 1.0]], dtype=complex)
    export_png(img, tmp_path / "x.png")
    assert png_pixels(tmp_path / "x.png").tolist() == [[0, 128, 255]]


def test_export_png_roi_normalization(tmp_path):
    img = np.array([[1.0, 2.0], [0.5, 0.25]], dtype=complex)
    roi = np.array([[1, 0], [1, 1]], dtype=np.uint8)   # max over roi = 1.0
    export_png(img, tmp_path / "x.png", roi=roi)
    pix = png_pixels(tmp_path / "x.png")
    assert pix[0, 0] == 255
    assert pix[0, 1] == 255          # clipped above roi max
    assert pix[1, 0] == 128
