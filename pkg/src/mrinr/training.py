"""Self-supervised INR training against masked k-space (the lower-level
problem of the bilevel tuner).

The hot loop avoids fftshift round-trips by working in a permuted layout:
coil maps, measured k-space and masks are ifftshift-ed once up front and
the coordinate list is permuted to match, so the network output is already
the ifftshift-ed image and the centered FFT reduces to a plain fft2.  The
public centered operators in :mod:`mrinr.fourier` are untouched; results
agree up to float summation order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import hashgrid, mlp
from .dataio import Dataset, ReconResult

WEIGHT_MODES = ("self", "identity", "acquired")
ENCODER_KINDS = ("hash", "dense", "frequency", "none")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    def __init__(self, iteration: int, value: float):
        super().__init__(f"training loss became non-finite ({value}) at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class HyperParams:
    """The four tuned scalars: l2 strengths, learning rate, loss-weight delta."""

    lambda_enc: float
    lambda_mlp: float
    lr: float
    delta: float

    def validate(self):
        vals = (self.lambda_enc, self.lambda_mlp, self.lr, self.delta)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"hyperparameters must be finite: {self}")
        if self.lambda_enc < 0 or self.lambda_mlp < 0:
            raise ValueError("l2 strengths must be >= 0")
        if self.lr <= 0 or self.delta <= 0:
            raise ValueError("lr and delta must be > 0")

    def to_dict(self):
        return {"lambda_enc": self.lambda_enc, "lambda_mlp": self.lambda_mlp,
                "lr": self.lr, "delta": self.delta}


@dataclass(frozen=True)
class ModelConfig:
    """Network architecture knobs (encoder variant + decoder shape)."""

    encoder: str = "hash"          # hash | dense | frequency | none
    levels: int = 16
    features_per_level: int = 2
    table_size: int = 2**17
    base_resolution: int = 16
    hidden_layers: int = 6
    hidden_width: int = 64
    activation: str = "relu"
    k_freqs: int = 8               # frequency encoder only

    def __post_init__(self):
        if self.encoder not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder {self.encoder!r}")

    def encoder_config(self, image_size: int) -> Optional[hashgrid.EncoderConfig]:
        if self.encoder == "hash":
            return hashgrid.EncoderConfig(
                levels=self.levels, features_per_level=self.features_per_level,
                table_size=self.table_size, base_resolution=self.base_resolution,
                growth=hashgrid.default_growth(image_size, self.levels, self.base_resolution),
            )
        if self.encoder == "dense":
            return hashgrid.make_dense_config(
                image_size, self.levels, self.features_per_level, self.base_resolution)
        return None

    def feature_dim(self, image_size: int) -> int:
        if self.encoder in ("hash", "dense"):
            return self.levels * self.features_per_level
        if self.encoder == "frequency":
            return 4 * self.k_freqs
        return 2

    def mlp_config(self, image_size: int) -> mlp.MLPConfig:
        return mlp.MLPConfig(
            in_dim=self.feature_dim(image_size),
            hidden_layers=self.hidden_layers,
            hidden_width=self.hidden_width,
            activation=self.activation,
        )


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 2000
    weight_mode: str = "self"
    seed: int = 0
    record_every: int = 10
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


class AdamState:
    """First/second moment buffers over a flat list of parameter arrays."""

    def __init__(self, params: list):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list, grads: list, lr: float):
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1**self.t
        bc2 = 1.0 - ADAM_BETA2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * np.square(g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


def weighted_residual_loss(pred_ksp, meas_ksp, residual_mask, mode="self",
                           delta: Optional[float] = None):
    """Masked weighted l2 loss in k-space and its gradient wrt pred.

    Weights: mode "self" -> 1/(|pred|+delta) (recomputed each call,
    constant under differentiation), "acquired" -> 1/(|meas|+delta),
    "identity" -> 1.  Loss = sum_masked |w (meas - pred)|^2 / count with
    count the number of masked samples; grad = -2 w^2 (meas - pred)/count
    at masked locations, 0 elsewhere.
    """
    if mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {mode!r}")
    if pred_ksp.shape != meas_ksp.shape:
        raise ValueError(f"shape mismatch: {pred_ksp.shape} vs {meas_ksp.shape}")
    if np.isnan(pred_ksp).any() or np.isnan(meas_ksp).any():
        raise ValueError("NaN in k-space inputs")
    m = np.asarray(residual_mask) != 0
    count = np.count_nonzero(m) * int(np.prod(pred_ksp.shape[:-2]))
    if count == 0:
        raise ValueError("residual mask is empty")
    if mode == "identity":
        w2 = 1.0
    else:
        if delta is None or delta <= 0:
            raise ValueError("delta must be > 0 for weighted modes")
        ref = pred_ksp if mode == "self" else meas_ksp
        w = 1.0 / (np.abs(ref) + delta)
        w2 = w * w
    r = (meas_ksp - pred_ksp) * m
    wr2 = w2 * (r.real**2 + r.imag**2)
    loss = float(np.sum(wr2)) / count
    grad = (-2.0 / count) * (w2 * r)
    return loss, grad


def _shifted_coords(H: int, W: int) -> np.ndarray:
    """Pixel-center coordinates permuted into ifftshift order."""
    pr = np.fft.ifftshift(np.arange(H))
    pc = np.fft.ifftshift(np.arange(W))
    ci = (pr + 0.5) / H
    cj = (pc + 0.5) / W
    ii, jj = np.meshgrid(ci, cj, indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


class _Problem:
    """Preprocessed tensors + preallocated buffers for one training run."""

    def __init__(self, dataset: Dataset, model: ModelConfig):
        H, W, L = dataset.meta.H, dataset.meta.W, dataset.meta.L_coils
        self.H, self.W, self.L = H, W, L
        scale = float(np.max(np.abs(dataset.kspace)))
        if scale <= 0:
            raise ValueError("dataset k-space is identically zero")
        self.norm_scale = scale
        self.maps_s = np.fft.ifftshift(dataset.maps, axes=(-2, -1))
        self.y_s = np.fft.ifftshift(dataset.kspace / scale, axes=(-2, -1))
        self.model = model
        self.coords = _shifted_coords(H, W)
        size = max(H, W)
        self.enc_cfg = model.encoder_config(size)
        self.mlp_cfg = model.mlp_config(size)
        self.enc_cache = None
        self.fixed_feats = None
        if self.enc_cfg is not None:
            self.enc_cache = hashgrid.build_cache(self.enc_cfg, self.coords)
            self.feats = np.empty((H * W, self.enc_cfg.out_dim))
        elif model.encoder == "frequency":
            self.fixed_feats = mlp.frequency_encode(self.coords, model.k_freqs)
        else:
            self.fixed_feats = self.coords.copy()
        self.ws = mlp.MLPWorkspace(self.mlp_cfg, H * W)
        self.cbuf = np.empty((L, H, W), dtype=complex)

    def shift_mask(self, mask):
        return np.fft.ifftshift(np.asarray(mask) != 0, axes=(-2, -1))

    def features(self, enc_params):
        if self.enc_cfg is None:
            return self.fixed_feats
        return hashgrid.encode_from_cache(enc_params, self.enc_cache, out=self.feats)

    def net_forward(self, enc_params, mlp_params):
        feats = self.features(enc_params)
        out, cache = mlp.mlp_forward(self.mlp_cfg, mlp_params, feats, workspace=self.ws)
        img_s = out.view(complex).reshape(self.H, self.W)
        return img_s, cache

    def predict(self, img_s, mask_s):
        np.multiply(self.maps_s, img_s, out=self.cbuf)
        ksp = np.fft.fft2(self.cbuf, norm="ortho")
        ksp *= mask_s
        return ksp

    def grad_image(self, grad_ksp, mask_s):
        np.multiply(grad_ksp, mask_s, out=self.cbuf)
        tmp = np.fft.ifft2(self.cbuf, norm="ortho")
        tmp *= np.conj(self.maps_s)
        return tmp.sum(axis=0)


def _init_params(problem: _Problem, seed: int):
    enc_params = None
    if problem.enc_cfg is not None:
        enc_params = hashgrid.init_encoder(problem.enc_cfg, seed=seed)
    mlp_params = mlp.init_mlp(problem.mlp_cfg, seed=seed + 1)
    return enc_params, mlp_params


def _param_views(problem: _Problem, enc_params, mlp_params):
    """Flat list of trainable arrays; encoder tables restricted to the
    reachable prefix per level (unreachable direct-mode entries are inert)."""
    views = []
    if enc_params is not None:
        for lvl in range(problem.enc_cfg.levels):
            n_act = hashgrid.active_entries(problem.enc_cfg, lvl)
            views.append(enc_params.tables[lvl, :n_act])
    views.extend(mlp_params.weights)
    views.extend(mlp_params.biases)
    return views


def _gradients(problem: _Problem, enc_params, mlp_params, hp: HyperParams,
               mask_s, weight_mode: str):
    """One forward/backward pass; returns (data_loss, grads aligned with
    _param_views), with coupled l2 penalty gradients already added."""
    img_s, cache = problem.net_forward(enc_params, mlp_params)
    pred = problem.predict(img_s, mask_s)
    loss, gksp = weighted_residual_loss(pred, problem.y_s, mask_s,
                                        mode=weight_mode, delta=hp.delta)
    gimg = problem.grad_image(gksp, mask_s)
    gout = np.ascontiguousarray(gimg.reshape(-1)).view(float).reshape(-1, 2)
    (w_grads, b_grads), gfeat = mlp.mlp_backward(problem.mlp_cfg, mlp_params, cache, gout)
    grads = []
    if enc_params is not None:
        enc_grads = hashgrid.encode_backward_active(problem.enc_cache, gfeat)
        for lvl, g in enumerate(enc_grads):
            if hp.lambda_enc:
                g += 2.0 * hp.lambda_enc * enc_params.tables[lvl, :g.shape[0]]
            grads.append(g)
    for w, g in zip(mlp_params.weights, w_grads):
        if hp.lambda_mlp:
            g += 2.0 * hp.lambda_mlp * w
        grads.append(g)
    for b, g in zip(mlp_params.biases, b_grads):
        if hp.lambda_mlp:
            g += 2.0 * hp.lambda_mlp * b
        grads.append(g)
    return loss, grads


@dataclass
class TrainState:
    """Trained network parameters plus everything needed to re-evaluate."""

    model: ModelConfig
    H: int
    W: int
    enc_params: Optional[hashgrid.EncoderParams]
    mlp_params: mlp.MLPParams
    norm_scale: float
    hp: HyperParams
    iteration: int = 0

    def copy_params(self):
        enc = None
        if self.enc_params is not None:
            enc = hashgrid.EncoderParams(self.enc_params.tables.copy())
        return enc, self.mlp_params.copy()


def _run(problem: _Problem, train_mask, hp: HyperParams, cfg: TrainConfig,
         enc_params, mlp_params) -> tuple:
    mask_s = problem.shift_mask(train_mask)
    adam = AdamState(_param_views(problem, enc_params, mlp_params))
    curve = []
    t0 = time.perf_counter()
    for it in range(cfg.iters):
        loss, grads = _gradients(problem, enc_params, mlp_params, hp,
                                 mask_s, cfg.weight_mode)
        if not np.isfinite(loss):
            raise TrainingDivergedError(it, loss)
        if it % cfg.record_every == 0 or it == cfg.iters - 1:
            curve.append(loss)
        adam.step(_param_views(problem, enc_params, mlp_params), grads, hp.lr)
    wall = time.perf_counter() - t0
    state = TrainState(model=cfg.model, H=problem.H, W=problem.W,
                       enc_params=enc_params, mlp_params=mlp_params,
                       norm_scale=problem.norm_scale, hp=hp, iteration=cfg.iters)
    image = _reconstruct_from_problem(problem, state)
    result = ReconResult(image=image, beta=hp, train_loss_curve=curve,
                         val_loss=float("nan"), metrics=None, wall_time_s=wall)
    return state, result


def train(dataset: Dataset, train_mask, hp: HyperParams, cfg: TrainConfig):
    """Train the INR from scratch on the given k-space subset.

    Returns (TrainState, ReconResult); deterministic for a fixed cfg.seed.
    """
    hp.validate()
    _check_submask(dataset, train_mask)
    problem = _Problem(dataset, cfg.model)
    enc_params, mlp_params = _init_params(problem, cfg.seed)
    return _run(problem, train_mask, hp, cfg, enc_params, mlp_params)


def finetune(warm: TrainState, dataset: Dataset, train_mask, hp: HyperParams,
             iters: int = 500, weight_mode: str = "self", record_every: int = 10):
    """Continue from warm parameters with fresh optimizer moments."""
    hp.validate()
    _check_submask(dataset, train_mask)
    if (warm.H, warm.W) != (dataset.meta.H, dataset.meta.W):
        raise ValueError("warm state grid does not match dataset")
    cfg = TrainConfig(iters=iters, weight_mode=weight_mode, record_every=record_every,
                      model=warm.model)
    problem = _Problem(dataset, warm.model)
    enc_params, mlp_params = warm.copy_params()
    return _run(problem, train_mask, hp, cfg, enc_params, mlp_params)


def _check_submask(dataset, train_mask):
    if train_mask.shape != dataset.mask.shape:
        raise ValueError("train mask shape mismatch")
    if np.any((np.asarray(train_mask) != 0) & (dataset.mask == 0)):
        raise ValueError("train mask must be a subset of the acquisition mask")


def _reconstruct_from_problem(problem: _Problem, state: TrainState) -> np.ndarray:
    img_s, _ = problem.net_forward(state.enc_params, state.mlp_params)
    return np.fft.fftshift(img_s, axes=(-2, -1)) * state.norm_scale


def reconstruct(state: TrainState, dataset: Dataset) -> np.ndarray:
    """Evaluate the INR at every pixel center and undo k-space normalization."""
    problem = _Problem(dataset, state.model)
    return _reconstruct_from_problem(problem, state)


def validate(state: TrainState, dataset: Dataset, val_mask, weighting: str = "identity") -> float:
    """Mean squared k-space residual over the validation locations.

    Default is unweighted; weighting="eq7" applies the self-weighting of
    the training loss (with the state's delta) to the validation residual.
    """
    if np.count_nonzero(val_mask) == 0:
        raise ValueError("validation mask is empty")
    _check_submask(dataset, val_mask)
    problem = _Problem(dataset, state.model)
    if abs(problem.norm_scale - state.norm_scale) > 1e-12 * state.norm_scale:
        # normalization must match training for comparable magnitudes
        problem.norm_scale = state.norm_scale
        problem.y_s = np.fft.ifftshift(dataset.kspace / state.norm_scale, axes=(-2, -1))
    img_s, _ = problem.net_forward(state.enc_params, state.mlp_params)
    mask_s = problem.shift_mask(val_mask)
    pred = problem.predict(img_s, mask_s)
    mode = "identity" if weighting == "identity" else "self"
    delta = None if mode == "identity" else state.hp.delta
    loss, _ = weighted_residual_loss(pred, problem.y_s, mask_s, mode=mode, delta=delta)
    if not np.isfinite(loss):
        raise ValueError("validation loss is not finite")
    return loss


def objective_gradients(dataset: Dataset, train_mask, hp: HyperParams, cfg: TrainConfig,
                        enc_params, mlp_params):
    """Single-point loss/gradient evaluation (for gradient checking)."""
    problem = _Problem(dataset, cfg.model)
    mask_s = problem.shift_mask(train_mask)
    return _gradients(problem, enc_params, mlp_params, hp, mask_s, cfg.weight_mode)


def init_params_for(dataset: Dataset, cfg: TrainConfig):
    """Fresh parameters exactly as `train` would initialize them."""
    problem = _Problem(dataset, cfg.model)
    return _init_params(problem, cfg.seed)
