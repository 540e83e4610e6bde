import numpy as np
import pytest

from mrinr.fourier import ForwardOp, adjoint, apply, fft2c, ifft2c


def random_image(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_fft_roundtrip_identity():
    rng = np.random.default_rng(0)
    x = random_image(rng, (16, 16))
    assert np.max(np.abs(ifft2c(fft2c(x)) - x)) < 1e-12


def test_fft_parseval():
    rng = np.random.default_rng(1)
    x = random_image(rng, (12, 20))
    assert abs(np.linalg.norm(fft2c(x)) - np.linalg.norm(x)) < 1e-12


def test_fft_centered_delta_is_flat():
    H = W = 8
    x = np.zeros((H, W), dtype=complex)
    x[H // 2, W // 2] = 1.0
    k = fft2c(x)
    assert np.max(np.abs(k - 1.0 / np.sqrt(H * W))) < 1e-12


def test_apply_reduces_to_fft_for_trivial_coil():
    rng = np.random.default_rng(2)
    x = random_image(rng, (8, 8))
    op = ForwardOp(maps=np.ones((1, 8, 8), dtype=complex),
                   sample_mask=np.ones((8, 8), dtype=np.uint8))
    assert np.allclose(apply(op, x)[0], fft2c(x), atol=1e-13)


def test_apply_zero_image():
    op = ForwardOp(maps=np.ones((2, 8, 8), dtype=complex),
                   sample_mask=np.ones((8, 8), dtype=np.uint8))
    assert not np.any(apply(op, np.zeros((8, 8), dtype=complex)))


def test_apply_linearity():
    rng = np.random.default_rng(3)
    maps = random_image(rng, (3, 8, 8))
    mask = (rng.random((8, 8)) < 0.5).astype(np.uint8)
    op = ForwardOp(maps=maps, sample_mask=mask)
    x, z = random_image(rng, (8, 8)), random_image(rng, (8, 8))
    a, b = 1.7 - 0.3j, -0.4 + 2.2j
    lhs = apply(op, a * x + b * z)
    rhs = a * apply(op, x) + b * apply(op, z)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@pytest.mark.parametrize("coils,n", [(1, 8), (4, 16), (8, 12)])
def test_adjoint_dot_product(coils, n):
    rng = np.random.default_rng(coils * 100 + n)
    maps = random_image(rng, (coils, n, n))
    mask = (rng.random((n, n)) < 0.4).astype(np.uint8)
    op = ForwardOp(maps=maps, sample_mask=mask)
    x = random_image(rng, (n, n))
    y = random_image(rng, (coils, n, n))
    lhs = np.vdot(y, apply(op, x))
    rhs = np.vdot(adjoint(op, y), x)
    assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)


def test_adjoint_inverts_apply_under_sos_maps():
    rng = np.random.default_rng(5)
    raw = random_image(rng, (4, 8, 8)) + 2.0
    maps = raw / np.sqrt(np.sum(np.abs(raw) ** 2, axis=0))
    op = ForwardOp(maps=maps, sample_mask=np.ones((8, 8), dtype=np.uint8))
    x = random_image(rng, (8, 8))
    assert np.max(np.abs(adjoint(op, apply(op, x)) - x)) < 1e-10


def test_adjoint_zero_kspace():
    op = ForwardOp(maps=np.ones((2, 8, 8), dtype=complex),
                   sample_mask=np.ones((8, 8), dtype=np.uint8))
    assert not np.any(adjoint(op, np.zeros((2, 8, 8), dtype=complex)))


def test_apply_adjoint_positive_semidefinite():
    rng = np.random.default_rng(6)
    maps = random_image(rng, (3, 10, 10))
    mask = (rng.random((10, 10)) < 0.5).astype(np.uint8)
    op = ForwardOp(maps=maps, sample_mask=mask)
    for _ in range(5):
        y = random_image(rng, (3, 10, 10))
        assert np.vdot(y, apply(op, adjoint(op, y))).real >= -1e-12


def test_shape_validation():
    op = ForwardOp(maps=np.ones((2, 8, 8), dtype=complex),
                   sample_mask=np.ones((8, 8), dtype=np.uint8))
    with pytest.raises(ValueError):
        apply(op, np.zeros((4, 4), dtype=complex))
    with pytest.raises(ValueError):
        adjoint(op, np.zeros((2, 4, 4), dtype=complex))
    with pytest.raises(ValueError):
        ForwardOp(maps=np.ones((2, 8, 8), dtype=complex),
                  sample_mask=2 * np.ones((8, 8), dtype=np.uint8))
