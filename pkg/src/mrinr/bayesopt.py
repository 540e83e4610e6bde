"""Gaussian-process surrogate + UCB driver for hyperparameter tuning.

The objective (validation loss, or NRMSE in oracle mode) is minimized
over a normalized log10 hyperparameter box.  The GP uses a Matern-5/2
kernel with a shared lengthscale picked from a small grid by exact
marginal likelihood; the acquisition is UCB applied to the negated
standardized objective, maximized over a seeded quasi-random candidate
set plus all previous incumbents.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.stats import qmc

from . import metrics as qmetrics
from .dataio import Dataset, ReconResult
from .sampling import MaskPair
from .training import (HyperParams, TrainConfig, TrainingDivergedError, train, validate)

LENGTHSCALE_GRID = (0.1, 0.2, 0.3, 0.5, 1.0)
BASE_JITTER = 1e-6
MAX_JITTER = 1e-2
DEFAULT_CANDIDATES = 4096

HP_NAMES = ("lambda_enc", "lambda_mlp", "lr", "delta")


@dataclass(frozen=True)
class SearchSpace:
    """Per-hyperparameter log10 bounds, in HP_NAMES order."""

    log10_lo: tuple = (-7.0, -12.0, -5.0, -6.0)
    log10_hi: tuple = (-1.0, -3.0, -1.0, -2.0)

    def __post_init__(self):
        if len(self.log10_lo) != 4 or len(self.log10_hi) != 4:
            raise ValueError("search space must have 4 dimensions")
        if any(lo >= hi for lo, hi in zip(self.log10_lo, self.log10_hi)):
            raise ValueError("each dimension needs lo < hi")

    @property
    def dim(self):
        return 4


def to_unit(space: SearchSpace, beta: HyperParams) -> np.ndarray:
    """Componentwise (log10(beta) - lo) / (hi - lo)."""
    vals = np.array([getattr(beta, n) for n in HP_NAMES], dtype=float)
    if np.any(vals <= 0):
        raise ValueError("hyperparameters must be positive to map into log space")
    lo = np.asarray(space.log10_lo)
    hi = np.asarray(space.log10_hi)
    x = (np.log10(vals) - lo) / (hi - lo)
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError(f"beta {beta} outside the search space")
    return np.clip(x, 0.0, 1.0)


def from_unit(space: SearchSpace, x_unit) -> HyperParams:
    x = np.asarray(x_unit, dtype=float)
    if x.shape != (4,) or np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError(f"x_unit must lie in [0,1]^4, got {x_unit}")
    lo = np.asarray(space.log10_lo)
    hi = np.asarray(space.log10_hi)
    vals = 10.0 ** (lo + np.clip(x, 0, 1) * (hi - lo))
    return HyperParams(**dict(zip(HP_NAMES, vals)))


@dataclass
class Observation:
    x_unit: np.ndarray
    y: float
    meta: dict = field(default_factory=dict)


@dataclass
class GPModel:
    X: np.ndarray           # [n, d] training inputs
    alpha: np.ndarray       # (K + jitter I)^-1 z
    chol: tuple             # cho_factor of K + jitter I
    lengthscale: float
    jitter: float
    y_mean: float
    y_std: float
    log_marginal: float


def _matern52(X1, X2, lengthscale):
    d = np.sqrt(np.maximum(
        np.sum(X1**2, 1)[:, None] + np.sum(X2**2, 1)[None, :] - 2.0 * X1 @ X2.T, 0.0))
    s = np.sqrt(5.0) * d / lengthscale
    return (1.0 + s + s**2 / 3.0) * np.exp(-s)


def _fit_single(X, z, lengthscale):
    n = len(z)
    K = _matern52(X, X, lengthscale)
    jitter = BASE_JITTER
    while True:
        try:
            c = cho_factor(K + jitter * np.eye(n), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > MAX_JITTER:
                raise RuntimeError("GP Cholesky failed even at maximum jitter")
    alpha = cho_solve(c, z)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    lml = -0.5 * float(z @ alpha) - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi)
    return c, alpha, jitter, lml


def gp_fit(observations, lengthscale_grid=LENGTHSCALE_GRID) -> GPModel:
    """Fit the surrogate on finite-objective observations.

    Targets are standardized to zero mean / unit variance (degenerate
    std is treated as 1); the shared lengthscale maximizes the exact log
    marginal likelihood over the grid.
    """
    obs = [o for o in observations if np.isfinite(o.y)]
    if len(obs) < 2:
        raise ValueError(f"need >= 2 finite observations, got {len(obs)}")
    X = np.array([o.x_unit for o in obs], dtype=float)
    y = np.array([o.y for o in obs], dtype=float)
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std < 1e-12:
        y_std = 1.0
    z = (y - y_mean) / y_std
    best = None
    for ell in lengthscale_grid:
        c, alpha, jitter, lml = _fit_single(X, z, ell)
        if best is None or lml > best[0]:
            best = (lml, ell, c, alpha, jitter)
    lml, ell, c, alpha, jitter = best
    return GPModel(X=X, alpha=alpha, chol=c, lengthscale=ell, jitter=jitter,
                   y_mean=y_mean, y_std=y_std, log_marginal=lml)


def _predict_standardized(model: GPModel, x: np.ndarray):
    """Posterior mean/std on the standardized target scale; x is [m, d]."""
    ks = _matern52(model.X, np.atleast_2d(x), model.lengthscale)     # [n, m]
    mu = ks.T @ model.alpha
    v = solve_triangular(model.chol[0], ks, lower=True)
    var = np.clip(1.0 - np.sum(v**2, axis=0), 0.0, None)
    return mu, np.sqrt(var)


def gp_predict(model: GPModel, x_unit):
    """De-standardized posterior (mu, sigma) at a single point."""
    mu, sd = _predict_standardized(model, np.asarray(x_unit, dtype=float))
    return float(model.y_mean + model.y_std * mu[0]), float(model.y_std * sd[0])


def _sobol_candidates(n, dim, seed):
    sampler = qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sampler.random(n)


def propose_next(model: GPModel, kappa: float, n_candidates: int, seed,
                 extra_points=None) -> np.ndarray:
    """Argmax of -mu + kappa*sigma (standardized) over Sobol candidates
    plus any supplied previous best points; first index wins ties."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    cands = _sobol_candidates(n_candidates, model.X.shape[1], seed)
    if extra_points is not None and len(extra_points):
        cands = np.vstack([cands, np.atleast_2d(np.asarray(extra_points, dtype=float))])
    mu, sd = _predict_standardized(model, cands)
    score = -mu + kappa * sd
    return cands[int(np.argmax(score))].copy()


def latin_hypercube(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """One stratified uniform sample per axis bin, axes permuted independently."""
    out = np.empty((n, dim))
    for d in range(dim):
        out[:, d] = (rng.permutation(n) + rng.uniform(size=n)) / n
    return out


def minimize(objective: Callable, n_init: int = 20, n_gp: int = 40, kappa: float = 2.0,
             seed: int = 0, dim: int = 4, n_candidates: int = DEFAULT_CANDIDATES,
             n_workers: int = 1):
    """Generic driver: LHS initialization, then GP/UCB refinement.

    objective(x_unit) -> (y, meta); failures are reported as y = inf and
    excluded from GP fitting but kept in the history.  All randomness
    derives from `seed`; phase-2 candidate streams are keyed by round
    index so enlarging n_gp extends (never changes) a shorter run.
    """
    init_rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    x_init = latin_hypercube(n_init, dim, init_rng)
    history: list[Observation] = []

    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(objective, [x_init[i] for i in range(n_init)]))
    else:
        results = [objective(x_init[i]) for i in range(n_init)]
    for i, (y, meta) in enumerate(results):
        history.append(Observation(x_unit=x_init[i].copy(), y=y, meta=meta))

    incumbents = []

    def best_obs():
        finite = [o for o in history if np.isfinite(o.y)]
        return min(finite, key=lambda o: o.y) if finite else None

    for r in range(n_gp):
        cand_seed = np.random.SeedSequence((seed, 2, r))
        finite = [o for o in history if np.isfinite(o.y)]
        if len(finite) >= 2:
            model = gp_fit(history)
            b = best_obs()
            if b is not None:
                incumbents.append(b.x_unit)
            x_next = propose_next(model, kappa, n_candidates, cand_seed,
                                  extra_points=np.unique(np.array(incumbents), axis=0)
                                  if incumbents else None)
        else:
            x_next = _sobol_candidates(1, dim, cand_seed)[0]
        y, meta = objective(x_next)
        history.append(Observation(x_unit=np.asarray(x_next, dtype=float), y=y, meta=meta))
    if best_obs() is None:
        raise RuntimeError("all objective evaluations failed")
    return best_obs(), history


def _evaluate_candidate(dataset: Dataset, mask_pair: MaskPair, space: SearchSpace,
                        lower_cfg: TrainConfig, objective: str, eq7_val: bool, x_unit):
    """Train one candidate and score it; diverged runs return y = inf."""
    beta = from_unit(space, x_unit)
    t0 = time.perf_counter()
    try:
        state, result = train(dataset, mask_pair.train, beta, lower_cfg)
        weighting = "eq7" if eq7_val else "identity"
        val_loss = validate(state, dataset, mask_pair.val, weighting=weighting)
    except TrainingDivergedError as e:
        meta = {"beta": beta.to_dict(), "val_loss": None, "metrics": None,
                "wall_time_s": time.perf_counter() - t0,
                "failed": f"diverged at iteration {e.iteration}"}
        return float("inf"), meta, None
    result.val_loss = val_loss
    mreport = None
    if dataset.reference is not None:
        mreport = qmetrics.report(result.image, dataset.reference)
        result.metrics = mreport.to_dict()
    if objective == "oracle_nrmse":
        y = mreport.nrmse
    else:
        y = val_loss
    result.wall_time_s = time.perf_counter() - t0
    meta = {"beta": beta.to_dict(), "val_loss": val_loss,
            "metrics": result.metrics, "wall_time_s": result.wall_time_s}
    return float(y), meta, result


class _TuneObjective:
    """Picklable evaluation callable for process-parallel phase 1."""

    def __init__(self, dataset, mask_pair, space, lower_cfg, objective, eq7_val):
        self.args = (dataset, mask_pair, space, lower_cfg, objective, eq7_val)

    def __call__(self, x_unit):
        y, meta, result = _evaluate_candidate(*self.args, x_unit)
        return y, meta, result


def tune(dataset: Dataset, mask_pair: MaskPair, space: SearchSpace = SearchSpace(),
         n_init: int = 20, n_gp: int = 40, kappa: float = 2.0,
         lower_cfg: TrainConfig = TrainConfig(), objective: str = "val_loss",
         seed: int = 0, n_workers: int = 1, eq7_val: bool = False):
    """Bilevel driver: returns (best ReconResult, observation history).

    objective "val_loss" scores candidates by held-out k-space residual;
    "oracle_nrmse" scores by NRMSE against the stored reference (requires
    one).  Evaluation count is n_init + n_gp.
    """
    if objective not in ("val_loss", "oracle_nrmse"):
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "oracle_nrmse" and dataset.reference is None:
        raise ValueError("oracle objective requires a dataset reference image")
    mask_pair.validate(dataset.mask)
    evaluate = _TuneObjective(dataset, mask_pair, space, lower_cfg, objective, eq7_val)

    results: dict[int, ReconResult] = {}
    call_idx = [0]

    def wrapped(x_unit):
        y, meta, result = evaluate(x_unit)
        idx = call_idx[0]
        call_idx[0] += 1
        if result is not None:
            results[idx] = result
        return y, meta

    if n_workers > 1:
        # run phase 1 in processes; keep results by index, then replay into
        # the sequential driver via a cache so history order is identical
        init_rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
        x_init = latin_hypercube(n_init, 4, init_rng)
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            phase1 = list(pool.map(evaluate, [x_init[i] for i in range(n_init)]))
        cache = {i: phase1[i] for i in range(n_init)}

        def cached(x_unit):
            idx = call_idx[0]
            if idx in cache:
                y, meta, result = cache[idx]
                call_idx[0] += 1
                if result is not None:
                    results[idx] = result
                return y, meta
            return wrapped(x_unit)

        best, history = minimize(cached, n_init=n_init, n_gp=n_gp, kappa=kappa,
                                 seed=seed, dim=4)
    else:
        best, history = minimize(wrapped, n_init=n_init, n_gp=n_gp, kappa=kappa,
                                 seed=seed, dim=4)
    best_idx = min((i for i, o in enumerate(history) if np.isfinite(o.y)),
                   key=lambda i: history[i].y)
    best_result = results[best_idx]
    return best_result, history
