"""Command-line entry point: reproducible simulation / reconstruction runs.

Every command resolves its flags into a config dict, runs, and writes
``results.json`` into --out containing the full resolved configuration,
seeds, package/library versions, metrics and timings.  Exit codes:
0 success, 2 flag validation, 3 runtime/numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bayesopt, dataio, metrics, phantom, sampling, training


class SystemExit2(Exception):
    """Flag validation failure outside argparse (exit code 2)."""


def _versions():
    import scipy
    return {"mrinr": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _write_results(out_dir: Path, payload: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.json").write_text(json.dumps(payload, indent=2, sort_keys=True),
                                          encoding="utf-8")


def _save_recon(out_dir: Path, image, reference=None):
    desc = dataio.save_complex_image(out_dir / "recon.bin", image)
    roi = metrics.roi_from_reference(reference) if reference is not None else None
    dataio.export_png(image, out_dir / "recon.png", roi=roi)
    return desc


def _model_config(args) -> training.ModelConfig:
    return training.ModelConfig(
        encoder=args.encoder,
        levels=args.levels,
        features_per_level=args.features_per_level,
        table_size=args.table_size,
        base_resolution=args.base_resolution,
        hidden_layers=args.hidden_layers,
        hidden_width=args.hidden_width,
        activation=args.activation,
        k_freqs=args.k_freqs,
    )


def _model_flags(p: argparse.ArgumentParser):
    p.add_argument("--encoder", choices=training.ENCODER_KINDS, default="hash")
    p.add_argument("--activation", choices=("relu", "sine"), default="relu")
    p.add_argument("--levels", type=int, default=16)
    p.add_argument("--features-per-level", type=int, default=2)
    p.add_argument("--table-size", type=int, default=2**17)
    p.add_argument("--base-resolution", type=int, default=16)
    p.add_argument("--hidden-layers", type=int, default=6)
    p.add_argument("--hidden-width", type=int, default=64)
    p.add_argument("--k-freqs", type=int, default=8)


def _model_dict(model: training.ModelConfig):
    return {
        "encoder": model.encoder, "levels": model.levels,
        "features_per_level": model.features_per_level, "table_size": model.table_size,
        "base_resolution": model.base_resolution, "hidden_layers": model.hidden_layers,
        "hidden_width": model.hidden_width, "activation": model.activation,
        "k_freqs": model.k_freqs,
    }


def detect_acs_protect(mask: np.ndarray) -> np.ndarray:
    """Centered fully-sampled region to keep out of the validation split.

    Greedily grows a centered row band and a centered square while fully
    sampled; returns nothing if the protected area would exceed half the
    sampled locations (e.g. fully sampled acquisitions).
    """
    H, W = mask.shape
    m = mask != 0
    protect = np.zeros_like(m)
    ci = H // 2
    lo = hi = ci
    if m[ci].all():
        while lo - 1 >= 0 and m[lo - 1].all():
            lo -= 1
        while hi + 1 < H and m[hi + 1].all():
            hi += 1
        protect[lo:hi + 1, :] = True
    cj = W // 2
    half = 0
    while True:
        i0, i1 = ci - half - 1, ci + half + 1
        j0, j1 = cj - half - 1, cj + half + 1
        if i0 < 0 or i1 > H or j0 < 0 or j1 > W or not m[i0:i1, j0:j1].all():
            break
        half += 1
    if half > 0:
        protect[ci - half:ci + half, cj - half:cj + half] = True
    if protect.sum() > 0.5 * m.sum():
        return np.zeros_like(m)
    return protect & m


def cmd_simulate(args):
    if args.pattern == "full" and args.accel is not None:
        raise SystemExit2("--accel is not valid with --pattern full")
    if args.pattern != "full" and args.accel is None:
        raise SystemExit2(f"--accel is required for pattern {args.pattern}")
    N = args.size
    image = phantom.shepp_logan(N, phase=args.phase)
    maps = phantom.birdcage_maps(N, args.coils)
    if args.pattern == "full":
        mask = np.ones((N, N), dtype=np.uint8)
    elif args.pattern == "cartesian":
        mask = sampling.cartesian_mask(N, N, int(args.accel), args.acs)
    else:
        mask = sampling.poisson_mask(N, N, args.accel, args.acs, seed=args.seed)
    ds = phantom.simulate_kspace(image, maps, mask, snr_db=args.snr_db,
                                 seed=args.seed, pattern=args.pattern)
    out = Path(args.out)
    dataio.save_dataset(ds, out)
    _write_results(out, {
        "command": "simulate", "versions": _versions(),
        "config": {"size": N, "coils": args.coils, "pattern": args.pattern,
                   "accel": args.accel, "acs": args.acs, "snr_db": args.snr_db,
                   "phase": args.phase, "seed": args.seed},
        "accel_factor": ds.meta.accel_factor,
        "sampled_locations": int(ds.mask.sum()),
    })
    return 0


def cmd_split(args):
    ds = dataio.load_dataset(args.data)
    protect = detect_acs_protect(ds.mask)
    pair = sampling.split_ssdu(ds.mask, args.val_frac, protect, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pair.train.astype(np.uint8).tofile(out / "train_mask.bin")
    pair.val.astype(np.uint8).tofile(out / "val_mask.bin")
    _write_results(out, {
        "command": "split", "versions": _versions(),
        "config": {"data": str(args.data), "val_frac": args.val_frac, "seed": args.seed},
        "train_count": int(pair.train.sum()), "val_count": int(pair.val.sum()),
        "protected_count": int(protect.sum()),
        "arrays": {"train_mask": {"file": "train_mask.bin", "shape": list(pair.train.shape), "dtype": "u8"},
                   "val_mask": {"file": "val_mask.bin", "shape": list(pair.val.shape), "dtype": "u8"}},
    })
    return 0


def cmd_train(args):
    ds = dataio.load_dataset(args.data)
    hp = training.HyperParams(lambda_enc=args.lambda_enc, lambda_mlp=args.lambda_mlp,
                              lr=args.lr, delta=args.delta)
    cfg = training.TrainConfig(iters=args.iters, weight_mode=args.weight_mode,
                               seed=args.seed, record_every=args.record_every,
                               model=_model_config(args))
    t0 = time.perf_counter()
    state, result = training.train(ds, ds.mask, hp, cfg)
    wall = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    desc = _save_recon(out, result.image, ds.reference)
    mdict = None
    if ds.reference is not None:
        mdict = metrics.report(result.image, ds.reference).to_dict()
    _write_results(out, {
        "command": "train", "versions": _versions(),
        "config": {"data": str(args.data), "beta": hp.to_dict(), "iters": args.iters,
                   "weight_mode": args.weight_mode, "seed": args.seed,
                   "record_every": args.record_every, "model": _model_dict(cfg.model)},
        "recon": desc,
        "train_loss_curve": result.train_loss_curve,
        "final_train_loss": result.train_loss_curve[-1],
        "metrics": mdict,
        "timing": {"wall_time_s": wall},
    })
    return 0


def cmd_tune(args):
    ds = dataio.load_dataset(args.data)
    protect = detect_acs_protect(ds.mask)
    pair = sampling.split_ssdu(ds.mask, args.val_frac, protect, seed=args.seed)
    lower_cfg = training.TrainConfig(iters=args.lower_iters, weight_mode=args.weight_mode,
                                     seed=args.seed, record_every=args.record_every,
                                     model=_model_config(args))
    objective = "oracle_nrmse" if args.objective == "oracle" else "val_loss"
    n_workers = args.threads or int(os.environ.get("MRINR_THREADS", "1"))
    t0 = time.perf_counter()
    best, history = bayesopt.tune(
        ds, pair, space=bayesopt.SearchSpace(), n_init=args.n_init, n_gp=args.n_gp,
        kappa=args.kappa, lower_cfg=lower_cfg, objective=objective, seed=args.seed,
        n_workers=n_workers, eq7_val=args.eq7_val)
    wall = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hist_payload = [
        {"x_unit": [float(v) for v in o.x_unit],
         "objective": (None if not np.isfinite(o.y) else float(o.y)), **o.meta}
        for o in history
    ]
    (out / "tune_history.json").write_text(json.dumps(hist_payload, indent=2),
                                           encoding="utf-8")
    desc = _save_recon(out, best.image, ds.reference)
    _write_results(out, {
        "command": "tune", "versions": _versions(),
        "config": {"data": str(args.data), "n_init": args.n_init, "n_gp": args.n_gp,
                   "lower_iters": args.lower_iters, "val_frac": args.val_frac,
                   "kappa": args.kappa, "objective": args.objective, "seed": args.seed,
                   "weight_mode": args.weight_mode, "eq7_val": args.eq7_val,
                   "threads": n_workers, "model": _model_dict(lower_cfg.model)},
        "best_beta": best.beta.to_dict(),
        "best_val_loss": best.val_loss,
        "best_metrics": best.metrics,
        "n_evaluations": len(history),
        "n_failed": sum(1 for o in history if not np.isfinite(o.y)),
        "recon": desc,
        "timing": {"wall_time_s": wall},
    })
    return 0


def cmd_baseline(args):
    ds = dataio.load_dataset(args.data)
    t0 = time.perf_counter()
    if args.method == "zero-filled":
        image = metrics.zero_filled(ds)
    else:
        image = metrics.cg_sense(ds, iters=args.cg_iters, tikhonov=args.tikhonov)
    wall = time.perf_counter() - t0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    desc = _save_recon(out, image, ds.reference)
    mdict = None
    if ds.reference is not None:
        mdict = metrics.report(image, ds.reference).to_dict()
    _write_results(out, {
        "command": "baseline", "versions": _versions(),
        "config": {"data": str(args.data), "method": args.method,
                   "cg_iters": args.cg_iters, "tikhonov": args.tikhonov},
        "recon": desc, "metrics": mdict,
        "timing": {"wall_time_s": wall},
    })
    return 0


def cmd_metrics(args):
    ds = dataio.load_dataset(args.data)
    if ds.reference is None:
        raise RuntimeError("dataset has no reference image to compare against")
    recon = dataio.load_complex_image(args.recon, (ds.meta.H, ds.meta.W))
    rep = metrics.report(recon, ds.reference)
    payload = {
        "command": "metrics", "versions": _versions(),
        "config": {"recon": str(args.recon), "data": str(args.data)},
        "metrics": rep.to_dict(),
    }
    print(json.dumps(rep.to_dict(), indent=2))
    if args.out:
        _write_results(Path(args.out), payload)
    return 0


def cmd_export_png(args):
    in_path = Path(args.infile)
    if in_path.suffix == ".json":
        payload = json.loads(in_path.read_text(encoding="utf-8"))
        desc = payload["recon"]
        image = dataio.load_complex_image(in_path.parent / desc["file"], desc["shape"])
    else:
        if args.shape is None:
            raise SystemExit2("--shape H W is required for raw .bin input")
        image = dataio.load_complex_image(in_path, tuple(args.shape))
    dataio.export_png(image, args.out)
    return 0


def _load_beta_file(path) -> training.HyperParams:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return training.HyperParams(
        lambda_enc=payload["lambda_enc"], lambda_mlp=payload["lambda_mlp"],
        lr=payload["lr"], delta=payload["delta"])


def cmd_imri(args):
    if args.frames < 2:
        raise SystemExit2("--frames must be >= 2")
    N = args.size
    frames = phantom.dynamic_phantom(N, args.frames)
    maps = phantom.birdcage_maps(N, args.coils)
    full_mask = np.ones((N, N), dtype=np.uint8)
    acs_lines = max(1, int(round(args.acs_frac * N)))
    frame_mask = sampling.cartesian_mask(N, N, int(args.accel), acs_lines)
    ds0 = phantom.simulate_kspace(frames[0], maps, full_mask, snr_db=args.snr_db,
                                  seed=args.seed, pattern="full")
    model = _model_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.beta_file:
        beta = _load_beta_file(args.beta_file)
        objective_desc = "transferred"
        tune_wall = 0.0
    else:
        protect = detect_acs_protect(ds0.mask)
        pair = sampling.split_ssdu(ds0.mask, args.val_frac, protect, seed=args.seed)
        lower_cfg = training.TrainConfig(iters=args.lower_iters, seed=args.seed, model=model)
        t0 = time.perf_counter()
        best, _ = bayesopt.tune(ds0, pair, n_init=args.n_init, n_gp=args.n_gp,
                                lower_cfg=lower_cfg, seed=args.seed)
        tune_wall = time.perf_counter() - t0
        beta = best.beta
        objective_desc = "val_loss"

    pre_cfg = training.TrainConfig(iters=args.pretrain_iters, seed=args.seed, model=model)
    t0 = time.perf_counter()
    state, result0 = training.train(ds0, ds0.mask, beta, pre_cfg)
    pretrain_wall = time.perf_counter() - t0
    rep0 = metrics.report(result0.image, ds0.reference)

    frame_rows = [{
        "frame": 0, "fully_sampled": True, "metrics": rep0.to_dict(),
        "wall_time_s": pretrain_wall, "baselines": None,
    }]
    cold_wall = None
    for t in range(1, args.frames):
        ds_t = phantom.simulate_kspace(frames[t], maps, frame_mask, snr_db=args.snr_db,
                                       seed=args.seed + t, pattern="cartesian")
        t0 = time.perf_counter()
        state, result_t = training.finetune(state, ds_t, ds_t.mask, beta,
                                            iters=args.finetune_iters)
        wall_t = time.perf_counter() - t0
        rep_t = metrics.report(result_t.image, ds_t.reference)
        zf = metrics.zero_filled(ds_t)
        cg = metrics.cg_sense(ds_t, iters=20, tikhonov=args.tikhonov)
        baselines = {
            "zero_filled": metrics.report(zf, ds_t.reference).to_dict(),
            "cg_sense": metrics.report(cg, ds_t.reference).to_dict(),
        }
        if t == 1:
            t0 = time.perf_counter()
            training.train(ds_t, ds_t.mask, beta,
                           training.TrainConfig(iters=args.cold_iters, seed=args.seed,
                                                model=model))
            cold_wall = time.perf_counter() - t0
            dataio.export_png(result_t.image, out / f"frame{t:03d}.png")
        frame_rows.append({
            "frame": t, "fully_sampled": False, "metrics": rep_t.to_dict(),
            "wall_time_s": wall_t, "baselines": baselines,
        })

    under = frame_rows[1:]
    mean = lambda key: float(np.mean([r["metrics"][key] for r in under]))
    mean_base = lambda which, key: float(np.mean([r["baselines"][which][key] for r in under]))
    _write_results(out, {
        "command": "imri", "versions": _versions(),
        "config": {"frames": args.frames, "size": N, "coils": args.coils,
                   "accel": args.accel, "acs_frac": args.acs_frac, "acs_lines": acs_lines,
                   "finetune_iters": args.finetune_iters, "pretrain_iters": args.pretrain_iters,
                   "cold_iters": args.cold_iters, "snr_db": args.snr_db,
                   "seed": args.seed, "beta": beta.to_dict(), "objective": objective_desc,
                   "tikhonov": args.tikhonov, "model": _model_dict(model)},
        "frames": frame_rows,
        "summary": {
            "mean_psnr_db": mean("psnr_db"), "mean_nrmse": mean("nrmse"),
            "mean_ssim": mean("ssim"),
            "mean_zero_filled_psnr_db": mean_base("zero_filled", "psnr_db"),
            "mean_cg_sense_psnr_db": mean_base("cg_sense", "psnr_db"),
            "mean_finetune_wall_s": float(np.mean([r["wall_time_s"] for r in under])),
        },
        "timing": {"tune_wall_s": tune_wall, "pretrain_wall_s": pretrain_wall,
                   "cold_train_wall_s": cold_wall},
    })
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="mrinr",
                                description="Self-tuned INR reconstruction of "
                                            "undersampled multicoil MRI (simulated)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic phantom dataset")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--coils", type=int, default=8)
    s.add_argument("--pattern", choices=("cartesian", "poisson", "full"), default="cartesian")
    s.add_argument("--accel", type=float, default=None)
    s.add_argument("--acs", type=int, default=0,
                   help="ACS lines (cartesian) or central block size (poisson)")
    s.add_argument("--snr-db", type=float, default=None)
    s.add_argument("--phase", choices=("none", "smooth"), default="smooth")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("split", help="train/val split of the sampled k-space")
    s.add_argument("--data", required=True)
    s.add_argument("--val-frac", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train the INR with fixed hyperparameters")
    s.add_argument("--data", required=True)
    s.add_argument("--lambda-enc", type=float, default=1e-5)
    s.add_argument("--lambda-mlp", type=float, default=1e-10)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--delta", type=float, default=1e-4)
    s.add_argument("--iters", type=int, default=2000)
    s.add_argument("--weight-mode", choices=training.WEIGHT_MODES, default="self")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--record-every", type=int, default=10)
    _model_flags(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("tune", help="bilevel hyperparameter optimization")
    s.add_argument("--data", required=True)
    s.add_argument("--n-init", type=int, default=20)
    s.add_argument("--n-gp", type=int, default=40)
    s.add_argument("--lower-iters", type=int, default=2000)
    s.add_argument("--val-frac", type=float, default=0.2)
    s.add_argument("--kappa", type=float, default=2.0)
    s.add_argument("--objective", choices=("val", "oracle"), default="val")
    s.add_argument("--weight-mode", choices=training.WEIGHT_MODES, default="self")
    s.add_argument("--eq7-val", action="store_true",
                   help="apply the self-weighting to the validation residual")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--record-every", type=int, default=100)
    s.add_argument("--threads", type=int, default=None,
                   help="phase-1 worker processes (MRINR_THREADS as fallback)")
    _model_flags(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("baseline", help="zero-filled / CG-SENSE reconstruction")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=("zero-filled", "cg-sense"), required=True)
    s.add_argument("--cg-iters", type=int, default=20)
    s.add_argument("--tikhonov", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("metrics", help="score a reconstruction against the reference")
    s.add_argument("--recon", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("export-png", help="magnitude PNG from a recon binary")
    s.add_argument("--in", dest="infile", required=True,
                   help="results.json (with recon descriptor) or raw .bin")
    s.add_argument("--shape", type=int, nargs=2, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_png)

    s = sub.add_parser("imri", help="dynamic-phantom residual-learning experiment")
    s.add_argument("--frames", type=int, default=10)
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--coils", type=int, default=8)
    s.add_argument("--accel", type=float, default=6)
    s.add_argument("--acs-frac", type=float, default=0.04)
    s.add_argument("--finetune-iters", type=int, default=500)
    s.add_argument("--pretrain-iters", type=int, default=2000)
    s.add_argument("--cold-iters", type=int, default=2000)
    s.add_argument("--snr-db", type=float, default=30.0)
    s.add_argument("--tikhonov", type=float, default=0.0)
    s.add_argument("--beta-file", default=None,
                   help="JSON with lambda_enc/lambda_mlp/lr/delta; skips tuning")
    s.add_argument("--n-init", type=int, default=10)
    s.add_argument("--n-gp", type=int, default=15)
    s.add_argument("--lower-iters", type=int, default=1000)
    s.add_argument("--val-frac", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    _model_flags(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_imri)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
