"""Fully connected decoder with exact manual forward/backward passes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SINE_OMEGA = 30.0  # frequency scale inside the first sine activation


@dataclass(frozen=True)
class MLPConfig:
    in_dim: int
    hidden_layers: int = 6
    hidden_width: int = 64
    activation: str = "relu"
    out_dim: int = 2

    def __post_init__(self):
        if self.hidden_layers < 0 or self.hidden_width < 1 or self.in_dim < 1:
            raise ValueError("invalid MLP dimensions")
        if self.activation not in ("relu", "sine"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def layer_dims(self):
        """(fan_in, fan_out) of each affine layer, input to output."""
        dims = [self.in_dim] + [self.hidden_width] * self.hidden_layers + [self.out_dim]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class MLPParams:
    weights: list   # per layer [out, in]
    biases: list    # per layer [out]

    def copy(self):
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_mlp(cfg: MLPConfig, seed: int = 0) -> MLPParams:
    """He-style uniform init for relu; SIREN-style scaling for sine."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(cfg.layer_dims()):
        if cfg.activation == "sine" and i == 0:
            bound = 1.0 / fan_in
        elif cfg.activation == "sine":
            bound = np.sqrt(6.0 / fan_in) / SINE_OMEGA
        else:
            bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MLPParams(weights=weights, biases=biases)


class MLPWorkspace:
    """Preallocated per-layer buffers so the training loop avoids large
    allocations (fresh multi-MB arrays cost page faults every iteration)."""

    def __init__(self, cfg: MLPConfig, n_points: int):
        dims = cfg.layer_dims()
        self.acts = [np.empty((n_points, out)) for _, out in dims]
        self.grads = [np.empty((n_points, out)) for _, out in dims]
        self.grad_in = np.empty((n_points, cfg.in_dim))


def mlp_forward(cfg: MLPConfig, params: MLPParams, features: np.ndarray,
                workspace: MLPWorkspace | None = None):
    """Affine/activation stack; input and output layers have no activation.

    Returns (output [N, out_dim], cache of post-activation layer inputs).
    For relu the stored activations determine the backward mask (a > 0,
    so the subgradient at 0 is 0); for sine the pre-activations are kept.
    """
    n = features.shape[0]
    if features.shape[1] != cfg.in_dim:
        raise ValueError(f"features dim {features.shape[1]} != in_dim {cfg.in_dim}")
    ws = workspace or MLPWorkspace(cfg, n)
    relu = cfg.activation == "relu"
    x = features
    L = cfg.hidden_layers
    for i in range(L):
        z = ws.acts[i]
        np.dot(x, params.weights[i].T, out=z)
        z += params.biases[i]
        if relu:
            np.maximum(z, 0.0, out=z)           # stores post-activation
        # sine keeps pre-activations; the activated value is formed below
        if relu:
            x = z
        else:
            omega = SINE_OMEGA if i == 0 else 1.0
            x = np.sin(omega * z)
    out = ws.acts[L]
    np.dot(x, params.weights[L].T, out=out)
    out += params.biases[L]
    cache = {"features": features, "ws": ws, "last_input": x}
    return out, cache


def mlp_backward(cfg: MLPConfig, params: MLPParams, cache: dict, grad_out: np.ndarray):
    """Exact reverse-mode gradients.

    Returns ((weight_grads, bias_grads), grad_features [N, in_dim]).
    """
    ws: MLPWorkspace = cache["ws"]
    features = cache["features"]
    if grad_out.shape != (features.shape[0], cfg.out_dim):
        raise ValueError(f"grad_out shape {grad_out.shape} mismatches output")
    relu = cfg.activation == "relu"
    L = cfg.hidden_layers
    w_grads = [None] * (L + 1)
    b_grads = [None] * (L + 1)

    def layer_input(i):
        if i == 0:
            return features
        if relu:
            return ws.acts[i - 1]
        omega = SINE_OMEGA if i == 1 else 1.0
        return np.sin(omega * ws.acts[i - 1])

    x_last = cache["last_input"]
    w_grads[L] = grad_out.T @ x_last
    b_grads[L] = grad_out.sum(axis=0)
    if L == 0:
        np.dot(grad_out, params.weights[0], out=ws.grad_in)
        return (w_grads, b_grads), ws.grad_in
    np.dot(grad_out, params.weights[L], out=ws.grads[L - 1])
    for i in range(L - 1, -1, -1):
        g = ws.grads[i]                      # d loss / d activated(z_i)
        z = ws.acts[i]
        if relu:
            np.multiply(g, z > 0.0, out=g)   # z holds max(z,0); mask z>0
        else:
            omega = SINE_OMEGA if i == 0 else 1.0
            g *= omega * np.cos(omega * z)
        w_grads[i] = g.T @ layer_input(i)
        b_grads[i] = g.sum(axis=0)
        target = ws.grad_in if i == 0 else ws.grads[i - 1]
        np.dot(g, params.weights[i], out=target)
    return (w_grads, b_grads), ws.grad_in


def frequency_encode(coords: np.ndarray, k_freqs: int) -> np.ndarray:
    """NeRF-style fixed encoding: (sin, cos)(2^k pi c) per coordinate.

    Output dimension 4*k_freqs, coordinate-major layout.
    """
    if k_freqs < 1:
        raise ValueError("k_freqs must be >= 1")
    coords = np.asarray(coords, dtype=float)
    cols = []
    for d in range(2):
        for k in range(k_freqs):
            arg = (2.0**k) * np.pi * coords[:, d]
            cols.append(np.sin(arg))
            cols.append(np.cos(arg))
    return np.stack(cols, axis=1)
