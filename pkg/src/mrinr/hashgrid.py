"""Multiresolution hash-grid positional encoder with exact gradients.

Each level l tiles the unit square into n_l x n_l blocks, n_l = floor(a*b^l),
and stores trainable F-vectors for grid vertices in a table of T entries.
Coarse levels whose (n_l+1)^2 vertices fit in the table are indexed
directly (injective); finer levels fall back to XOR spatial hashing.
Features are bilinearly interpolated from the 4 block corners, so the
encoding is piecewise-bilinear and continuous, and only the table entries
around queried coordinates receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

HASH_PRIMES = (73856093, 19349663)


@dataclass(frozen=True)
class EncoderConfig:
    levels: int = 16
    features_per_level: int = 2
    table_size: int = 2**17
    base_resolution: int = 16
    growth: float = 1.5
    primes: tuple = HASH_PRIMES

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.table_size < 1 or (self.table_size & (self.table_size - 1)) != 0:
            raise ValueError("table_size must be a power of two")
        if not (1.0 < self.growth <= 2.0):
            raise ValueError(f"growth must be in (1, 2], got {self.growth}")

    @property
    def out_dim(self):
        return self.levels * self.features_per_level


def default_growth(image_size: int, levels: int = 16, base_resolution: int = 16) -> float:
    """Growth factor making the finest grid half the image resolution.

    Clamped into (1, 2] so tiny images still yield a valid config.
    """
    if levels < 2:
        return 2.0
    b = np.exp((np.log(max(image_size, 2) / 2.0) - np.log(base_resolution)) / (levels - 1))
    return float(min(2.0, max(b, 1.0 + 1e-9)))


def make_encoder_config(image_size: int, levels: int = 16, features_per_level: int = 2,
                        table_size: int = 2**17, base_resolution: int = 16) -> EncoderConfig:
    return EncoderConfig(
        levels=levels,
        features_per_level=features_per_level,
        table_size=table_size,
        base_resolution=base_resolution,
        growth=default_growth(image_size, levels, base_resolution),
    )


def make_dense_config(image_size: int, levels: int = 16, features_per_level: int = 2,
                      base_resolution: int = 16) -> EncoderConfig:
    """Dense-grid variant: table large enough that every level is direct."""
    growth = default_growth(image_size, levels, base_resolution)
    n_max = int(base_resolution * growth ** (levels - 1) + 1e-9)
    table_size = 1 << int(np.ceil(np.log2((n_max + 1) ** 2)))
    return EncoderConfig(
        levels=levels,
        features_per_level=features_per_level,
        table_size=table_size,
        base_resolution=base_resolution,
        growth=growth,
    )


@dataclass
class EncoderParams:
    tables: np.ndarray    # [levels, T, F]


def init_encoder(cfg: EncoderConfig, seed: int = 0) -> EncoderParams:
    """Tables uniform in [-1e-4, 1e-4]: near-zero start, symmetry broken."""
    rng = np.random.default_rng(seed)
    tables = rng.uniform(-1e-4, 1e-4, (cfg.levels, cfg.table_size, cfg.features_per_level))
    return EncoderParams(tables=tables)


def level_resolution(cfg: EncoderConfig, level: int) -> int:
    """Blocks per side at `level`: floor(a * b^level)."""
    if not (0 <= level < cfg.levels):
        raise ValueError(f"level must be in [0, {cfg.levels}), got {level}")
    return int(cfg.base_resolution * cfg.growth**level + 1e-9)


def level_is_direct(cfg: EncoderConfig, level: int) -> bool:
    n = level_resolution(cfg, level)
    return (n + 1) ** 2 <= cfg.table_size


def active_entries(cfg: EncoderConfig, level: int) -> int:
    """Number of table entries reachable at `level`."""
    n = level_resolution(cfg, level)
    return (n + 1) ** 2 if level_is_direct(cfg, level) else cfg.table_size


def vertex_index(cfg: EncoderConfig, level: int, v) -> np.ndarray:
    """Table index of grid vertex v = (v1, v2) at `level`.

    Direct (injective) indexing when the level's vertices fit the table;
    otherwise XOR spatial hash with 64-bit wrapping products.
    """
    v = np.asarray(v, dtype=np.int64)
    v1, v2 = v[..., 0], v[..., 1]
    n = level_resolution(cfg, level)
    if level_is_direct(cfg, level):
        return v1 * (n + 1) + v2
    p1, p2 = (np.uint64(p) for p in cfg.primes)
    h = (v1.astype(np.uint64) * p1) ^ (v2.astype(np.uint64) * p2)
    return (h % np.uint64(cfg.table_size)).astype(np.int64)


@dataclass
class EncodeCache:
    """Interpolation geometry for a fixed coordinate batch.

    Per level: resolved corner table indices [4, N] (order 00, 01, 10, 11)
    and matching bilinear weights [4, N].  Also used to build sparse
    interpolation operators for the training hot path.
    """

    cfg: EncoderConfig
    n_points: int
    indices: list          # levels * [4, N] int64
    weights: list          # levels * [4, N] float64
    _ops: list = field(default_factory=list, repr=False)

    def sparse_ops(self):
        """Per-level CSR interpolation matrices and their transposes."""
        if not self._ops:
            n = self.n_points
            rows = np.repeat(np.arange(n), 4)
            for lvl in range(self.cfg.levels):
                sz = active_entries(self.cfg, lvl)
                S = sp.csr_matrix(
                    (self.weights[lvl].T.ravel(), (rows, self.indices[lvl].T.ravel())),
                    shape=(n, sz),
                )
                self._ops.append((S, S.T.tocsr()))
        return self._ops


def build_cache(cfg: EncoderConfig, coords: np.ndarray) -> EncodeCache:
    """Resolve corner indices and bilinear weights for coords in (0,1)^2."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError(f"coords must be [N, 2], got {coords.shape}")
    if np.any(coords <= 0.0) or np.any(coords >= 1.0):
        raise ValueError("coordinates must lie strictly inside (0, 1)")
    indices, weights = [], []
    for lvl in range(cfg.levels):
        n = level_resolution(cfg, lvl)
        p = coords * n
        v0 = np.minimum(p.astype(np.int64), n - 1)
        w = p - v0
        w1, w2 = w[:, 0], w[:, 1]
        corners = np.stack([
            vertex_index(cfg, lvl, np.stack([v0[:, 0], v0[:, 1]], axis=-1)),
            vertex_index(cfg, lvl, np.stack([v0[:, 0], v0[:, 1] + 1], axis=-1)),
            vertex_index(cfg, lvl, np.stack([v0[:, 0] + 1, v0[:, 1]], axis=-1)),
            vertex_index(cfg, lvl, np.stack([v0[:, 0] + 1, v0[:, 1] + 1], axis=-1)),
        ])
        wts = np.stack([
            (1 - w1) * (1 - w2),
            (1 - w1) * w2,
            w1 * (1 - w2),
            w1 * w2,
        ])
        indices.append(corners)
        weights.append(wts)
    return EncodeCache(cfg=cfg, n_points=coords.shape[0], indices=indices, weights=weights)


def encode_from_cache(params: EncoderParams, cache: EncodeCache,
                      out: np.ndarray | None = None) -> np.ndarray:
    cfg = cache.cfg
    F = cfg.features_per_level
    if out is None:
        out = np.empty((cache.n_points, cfg.out_dim))
    for lvl, (S, _) in enumerate(cache.sparse_ops()):
        sz = S.shape[1]
        out[:, lvl * F:(lvl + 1) * F] = S @ params.tables[lvl, :sz]
    return out


def encode_forward(cfg: EncoderConfig, params: EncoderParams, coords: np.ndarray):
    """Encode coords in (0,1)^2 to concatenated per-level features.

    Returns (features [N, levels*F], cache for the backward pass).
    """
    if not np.all(np.isfinite(params.tables)):
        raise ValueError("encoder tables contain non-finite entries")
    cache = build_cache(cfg, coords)
    return encode_from_cache(params, cache), cache


def encode_backward_active(cache: EncodeCache, grad_features: np.ndarray) -> list:
    """Per-level gradients over the reachable table prefix (hot path)."""
    cfg = cache.cfg
    F = cfg.features_per_level
    grads = []
    for lvl, (_, ST) in enumerate(cache.sparse_ops()):
        grads.append(ST @ grad_features[:, lvl * F:(lvl + 1) * F])
    return grads


def encode_backward(cfg: EncoderConfig, cache: EncodeCache,
                    grad_features: np.ndarray) -> np.ndarray:
    """Scatter-add upstream feature gradients into full-size table grads.

    Colliding vertices accumulate; untouched entries stay exactly zero.
    """
    if grad_features.shape != (cache.n_points, cfg.out_dim):
        raise ValueError(
            f"grad_features shape {grad_features.shape} != ({cache.n_points}, {cfg.out_dim})")
    out = np.zeros((cfg.levels, cfg.table_size, cfg.features_per_level))
    for lvl, g in enumerate(encode_backward_active(cache, grad_features)):
        out[lvl, :g.shape[0]] = g
    return out
