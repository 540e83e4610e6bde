import numpy as np
import pytest

from mrinr.mlp import (MLPConfig, MLPParams, frequency_encode, init_mlp,
                       mlp_backward, mlp_forward)


def test_init_biases_zero_and_deterministic():
    cfg = MLPConfig(in_dim=8, hidden_layers=3, hidden_width=16)
    a = init_mlp(cfg, seed=4)
    b = init_mlp(cfg, seed=4)
    assert all(not bias.any() for bias in a.biases)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


def test_init_weight_mean_near_zero():
    cfg = MLPConfig(in_dim=64, hidden_layers=1, hidden_width=64)
    params = init_mlp(cfg, seed=0)
    w = params.weights[1]                       # 64x64 uniform(+-sqrt(6/64))
    bound = np.sqrt(6 / 64)
    se = bound / np.sqrt(3) / np.sqrt(w.size)   # std of uniform / sqrt(n)
    assert abs(w.mean()) < 3 * se


def test_zero_hidden_layers_is_affine():
    cfg = MLPConfig(in_dim=3, hidden_layers=0, hidden_width=1, out_dim=2)
    params = init_mlp(cfg, seed=1)
    params.biases[0][:] = [0.5, -1.0]
    x = np.random.default_rng(0).standard_normal((5, 3))
    out, _ = mlp_forward(cfg, params, x)
    assert np.allclose(out, x @ params.weights[0].T + params.biases[0], atol=1e-15)


def test_zero_params_zero_output():
    cfg = MLPConfig(in_dim=4, hidden_layers=2, hidden_width=8)
    params = init_mlp(cfg, seed=0)
    for w in params.weights:
        w[:] = 0
    out, _ = mlp_forward(cfg, params, np.ones((3, 4)))
    assert not out.any()


def test_first_layer_positive_homogeneity():
    cfg = MLPConfig(in_dim=4, hidden_layers=2, hidden_width=8)
    params = init_mlp(cfg, seed=2)
    x = np.random.default_rng(1).standard_normal((6, 4))
    _, cache1 = mlp_forward(cfg, params, x)
    act1 = cache1["ws"].acts[0].copy()
    scaled = MLPParams([w.copy() for w in params.weights],
                       [b.copy() for b in params.biases])
    scaled.weights[0] *= 2.5
    _, cache2 = mlp_forward(cfg, scaled, x)
    assert np.allclose(cache2["ws"].acts[0], 2.5 * act1, atol=1e-12)


@pytest.mark.parametrize("activation", ["relu", "sine"])
@pytest.mark.parametrize("hidden_layers", [0, 1, 2])
def test_backward_matches_finite_differences(activation, hidden_layers):
    cfg = MLPConfig(in_dim=5, hidden_layers=hidden_layers, hidden_width=8,
                    activation=activation)
    rng = np.random.default_rng(hidden_layers * 10 + (activation == "sine"))
    params = init_mlp(cfg, seed=0)
    for i in range(len(params.weights)):
        params.weights[i] = params.weights[i] + 0.3 * rng.standard_normal(params.weights[i].shape)
        params.biases[i] = 0.2 * rng.standard_normal(params.biases[i].shape)
    x = rng.standard_normal((9, 5))
    up = rng.standard_normal((9, 2))
    out, cache = mlp_forward(cfg, params, x)
    (wg, bg), gx = mlp_backward(cfg, params, cache, up)
    h = 1e-5

    def scalar(p):
        o, _ = mlp_forward(cfg, p, x)
        return np.sum(up * o)

    for li in range(len(params.weights)):
        for flat in rng.choice(params.weights[li].size, size=min(6, params.weights[li].size),
                               replace=False):
            p2 = params.copy()
            p2.weights[li].flat[flat] += h
            p3 = params.copy()
            p3.weights[li].flat[flat] -= h
            fd = (scalar(p2) - scalar(p3)) / (2 * h)
            an = wg[li].flat[flat]
            assert abs(fd - an) < 1e-6 * max(abs(fd), abs(an), 1e-9)
        for flat in rng.choice(params.biases[li].size, size=min(3, params.biases[li].size),
                               replace=False):
            p2 = params.copy()
            p2.biases[li].flat[flat] += h
            p3 = params.copy()
            p3.biases[li].flat[flat] -= h
            fd = (scalar(p2) - scalar(p3)) / (2 * h)
            an = bg[li].flat[flat]
            assert abs(fd - an) < 1e-6 * max(abs(fd), abs(an), 1e-9)
    # input gradient
    for (r, c) in [(0, 0), (3, 2), (8, 4)]:
        x2, x3 = x.copy(), x.copy()
        x2[r, c] += h
        x3[r, c] -= h
        o2, _ = mlp_forward(cfg, params, x2)
        o3, _ = mlp_forward(cfg, params, x3)
        fd = (np.sum(up * o2) - np.sum(up * o3)) / (2 * h)
        assert abs(fd - gx[r, c]) < 1e-6 * max(abs(fd), abs(gx[r, c]), 1e-9)


def test_zero_upstream_zero_grads():
    cfg = MLPConfig(in_dim=3, hidden_layers=1, hidden_width=4)
    params = init_mlp(cfg, seed=0)
    x = np.ones((4, 3))
    _, cache = mlp_forward(cfg, params, x)
    (wg, bg), gx = mlp_backward(cfg, params, cache, np.zeros((4, 2)))
    assert not gx.any()
    assert all(not g.any() for g in wg)
    assert all(not g.any() for g in bg)


def test_affine_grad_features_is_transpose():
    cfg = MLPConfig(in_dim=4, hidden_layers=0, hidden_width=1)
    params = init_mlp(cfg, seed=3)
    x = np.random.default_rng(2).standard_normal((5, 4))
    up = np.random.default_rng(3).standard_normal((5, 2))
    _, cache = mlp_forward(cfg, params, x)
    _, gx = mlp_backward(cfg, params, cache, up)
    assert np.allclose(gx, up @ params.weights[0], atol=1e-15)


def test_relu_network_local_linearity():
    cfg = MLPConfig(in_dim=4, hidden_layers=3, hidden_width=16)
    params = init_mlp(cfg, seed=5)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((1, 4))
    d = 1e-6 * rng.standard_normal((1, 4))
    a, _ = mlp_forward(cfg, params, x - d)
    b, _ = mlp_forward(cfg, params, x + d)
    mid, _ = mlp_forward(cfg, params, x)
    assert np.allclose(mid, 0.5 * (a + b), atol=1e-12)


def test_frequency_encode_zero():
    f = frequency_encode(np.zeros((3, 2)), 4)
    assert f.shape == (3, 16)
    assert np.allclose(f[:, 0::2], 0.0)
    assert np.allclose(f[:, 1::2], 1.0)


def test_frequency_encode_half():
    f = frequency_encode(np.array([[0.5, 0.5]]), 2)
    # k=1 terms: sin(pi) = 0, cos(pi) = -1
    k1 = f[0].reshape(2, 2, 2)[:, 1]     # [coord, k, (sin, cos)]
    assert abs(k1[0, 0]) < 1e-15
    assert abs(k1[0, 1] + 1.0) < 1e-15


def test_frequency_encode_dimension():
    for k in (1, 3, 8):
        assert frequency_encode(np.zeros((2, 2)), k).shape[1] == 4 * k
    with pytest.raises(ValueError):
        frequency_encode(np.zeros((2, 2)), 0)


def test_forward_shape_validation():
    cfg = MLPConfig(in_dim=4, hidden_layers=1, hidden_width=4)
    params = init_mlp(cfg, seed=0)
    with pytest.raises(ValueError):
        mlp_forward(cfg, params, np.zeros((3, 5)))
