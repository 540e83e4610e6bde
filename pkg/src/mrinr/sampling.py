"""Undersampling mask generation and the train/validation k-space split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MaskPair:
    """Disjoint training/validation partition of an acquisition mask."""

    train: np.ndarray   # uint8 [H, W]
    val: np.ndarray     # uint8 [H, W]

    def validate(self, acquisition_mask=None):
        if self.train.shape != self.val.shape:
            raise ValueError("train and val mask shapes differ")
        if np.any((self.train != 0) & (self.val != 0)):
            raise ValueError("train and val masks overlap")
        if acquisition_mask is not None:
            union = (self.train != 0) | (self.val != 0)
            if not np.array_equal(union, acquisition_mask != 0):
                raise ValueError("train | val does not reproduce the acquisition mask")


def cartesian_mask(H: int, W: int, R: int, acs_lines: int = 0) -> np.ndarray:
    """Uniform row-undersampling with a centered ACS block.

    Every R-th phase-encode row is kept, shifted so one sampled row passes
    through H//2; a contiguous block of acs_lines centered rows is added.
    """
    if not (1 <= R <= H):
        raise ValueError(f"R must be in [1, {H}], got {R}")
    if not (0 <= acs_lines <= H):
        raise ValueError(f"acs_lines must be in [0, {H}], got {acs_lines}")
    mask = np.zeros((H, W), dtype=np.uint8)
    shift = (H // 2) % R
    mask[shift::R, :] = 1
    if acs_lines > 0:
        start = (H - acs_lines) // 2
        mask[start:start + acs_lines, :] = 1
    return mask


def _radius_profile(H: int, W: int, r0: float):
    """Local Poisson-disc radius r0 * (1 + 2*rho) on the pixel grid.

    rho is the distance from the k-space center normalized by the largest
    center-to-corner distance, so rho spans [0, 1] over the grid.
    """
    ci, cj = H // 2, W // 2
    ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    dist = np.hypot(ii - ci, jj - cj)
    rho = dist / dist.max()
    return r0 * (1.0 + 2.0 * rho)


def _bridson(H: int, W: int, r0: float, k: int, rng: np.random.Generator):
    """Variable-density Bridson sampling; points are snapped to pixels.

    A candidate is accepted iff its distance to every kept point p is at
    least min(r(candidate), r(p)), evaluated at pixel positions.
    """
    radius = _radius_profile(H, W, r0)
    cell = r0 / np.sqrt(2.0)
    gw, gh = int(np.ceil(H / cell)), int(np.ceil(W / cell))
    grid = -np.ones((gw, gh), dtype=np.int64)
    pts = []

    def try_accept(y, x):
        i, j = min(int(y), H - 1), min(int(x), W - 1)
        r_c = radius[i, j]
        gi, gj = int(i / cell), int(j / cell)
        reach = int(np.ceil(3.0 * r0 / cell)) + 1  # max radius is 3*r0
        for a in range(max(0, gi - reach), min(gw, gi + reach + 1)):
            for b in range(max(0, gj - reach), min(gh, gj + reach + 1)):
                q = grid[a, b]
                if q < 0:
                    continue
                qi, qj = pts[q]
                if np.hypot(i - qi, j - qj) < min(r_c, radius[qi, qj]):
                    return -1
        idx = len(pts)
        pts.append((i, j))
        grid[gi, gj] = idx
        return idx

    active = []
    first = try_accept(rng.uniform(0, H), rng.uniform(0, W))
    active.append(first)
    while active:
        pos = rng.integers(len(active))
        pi, pj = pts[active[pos]]
        r_p = radius[pi, pj]
        placed = False
        for _ in range(k):
            ang = rng.uniform(0, 2 * np.pi)
            rad = rng.uniform(r_p, 2 * r_p)
            y, x = pi + rad * np.sin(ang), pj + rad * np.cos(ang)
            if not (0 <= y < H and 0 <= x < W):
                continue
            idx = try_accept(y, x)
            if idx >= 0:
                active.append(idx)
                placed = True
        if not placed:
            active[pos] = active[-1]
            active.pop()
    mask = np.zeros((H, W), dtype=np.uint8)
    for i, j in pts:
        mask[i, j] = 1
    return mask


def poisson_mask_with_radius(H: int, W: int, target_R: float, acs: int = 0, seed: int = 0,
                             k: int = 30, max_bisect: int = 40):
    """As :func:`poisson_mask` but also returns the base radius used."""
    if target_R <= 1:
        raise ValueError(f"target_R must be > 1, got {target_R}")
    if acs < 0 or acs > min(H, W):
        raise ValueError(f"acs must be in [0, {min(H, W)}], got {acs}")

    def build(r0):
        mask = _bridson(H, W, r0, k, np.random.default_rng(seed))
        if acs > 0:
            i0, j0 = (H - acs) // 2, (W - acs) // 2
            mask[i0:i0 + acs, j0:j0 + acs] = 1
        return mask

    lo, hi = 0.5, max(H, W) / 2.0
    for _ in range(max_bisect):
        r0 = 0.5 * (lo + hi)
        mask = build(r0)
        achieved = H * W / np.count_nonzero(mask)
        if abs(achieved - target_R) <= 0.05 * target_R:
            return mask, r0
        if achieved < target_R:   # too many samples: widen spacing
            lo = r0
        else:
            hi = r0
    raise RuntimeError(
        f"poisson_mask: could not reach acceleration {target_R} within 5% "
        f"(last achieved {achieved:.3f})")


def poisson_mask(H: int, W: int, target_R: float, acs: int = 0, seed: int = 0,
                 k: int = 30, max_bisect: int = 40) -> np.ndarray:
    """Variable-density Poisson-disc mask with a forced central ACS block.

    The base radius r0 is bisected until the achieved acceleration
    H*W/nnz lands within 5% of target_R; deterministic for a fixed seed.
    """
    return poisson_mask_with_radius(H, W, target_R, acs, seed, k, max_bisect)[0]


def split_ssdu(mask: np.ndarray, val_fraction: float, acs_protect: np.ndarray,
               seed: int = 0) -> MaskPair:
    """Split sampled locations into disjoint train/val sets.

    Locations under acs_protect always train; of the remaining sampled
    locations, exactly round(val_fraction * count) go to validation via a
    seeded shuffle.
    """
    if not (0.0 < val_fraction < 1.0):
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    mask_b = mask != 0
    protect_b = acs_protect != 0
    if np.any(protect_b & ~mask_b):
        raise ValueError("acs_protect must be a subset of the acquisition mask")
    eligible = np.flatnonzero(mask_b & ~protect_b)
    if eligible.size == 0:
        raise ValueError("no eligible locations to split (all protected or unsampled)")
    n_val = int(round(val_fraction * eligible.size))
    rng = np.random.default_rng(seed)
    order = rng.permutation(eligible.size)
    val_idx = eligible[order[:n_val]]
    val = np.zeros(mask.shape, dtype=np.uint8)
    val.flat[val_idx] = 1
    train = (mask_b & (val == 0)).astype(np.uint8)
    pair = MaskPair(train=train, val=val)
    pair.validate(mask)
    return pair
