import numpy as np, time, json
import mrinr
from mrinr import metrics, training

N = 128
img = mrinr.shepp_logan(N, phase="smooth")
maps = mrinr.birdcage_maps(N, 8)
mask = mrinr.cartesian_mask(N, N, 4, acs_lines=8)
ds = mrinr.simulate_kspace(img, maps, mask, snr_db=30.0, seed=0, pattern="cartesian")
from mrinr.cli import detect_acs_protect
protect = detect_acs_protect(ds.mask)
pair = mrinr.split_ssdu(ds.mask, 0.2, protect, seed=0)
roi = metrics.roi_from_reference(ds.reference)

rows = []
betas = [
    ("table2R6", 2.6e-4, 1.0e-7, 9.3e-3, 2e-4),
    ("emp",      1.0e-5, 1.0e-10, 1.0e-3, 1e-4),
    ("mid",      1.0e-4, 1.0e-8, 3.0e-3, 1e-4),
    ("lowlr",    1.0e-5, 1.0e-10, 3.0e-4, 1e-4),
    ("hireg",    1.0e-3, 1.0e-6, 1.0e-3, 1e-3),
    ("lodelta",  1.0e-5, 1.0e-10, 1.0e-3, 1e-5),
]
for name, le, lm, lr, de in betas:
    hp = mrinr.HyperParams(lambda_enc=le, lambda_mlp=lm, lr=lr, delta=de)
    cfg = mrinr.TrainConfig(iters=2000, weight_mode="self", seed=0, record_every=100)
    t0 = time.perf_counter()
    try:
        state, res = mrinr.train(ds, pair.train, hp, cfg)
        vl = mrinr.validate(state, ds, pair.val)
        rep = metrics.report(res.image, ds.reference)
        row = dict(name=name, psnr=rep.psnr_db, nrmse=rep.nrmse, ssim=rep.ssim,
                   val=vl, t=time.perf_counter()-t0,
                   loss_head=res.train_loss_curve[:3], loss_tail=res.train_loss_curve[-3:])
    except Exception as e:
        row = dict(name=name, error=str(e), t=time.perf_counter()-t0)
    rows.append(row)
    print(json.dumps(row), flush=True)
json.dump(rows, open('.calib/sweep1.json','w'), indent=1)
