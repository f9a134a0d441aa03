"""Short versus realistic paths on the Swiss roll.

Trains the small vanilla GAN, picks an endpoint pair whose straight latent
line leaves the roll, and compares the linear path with the two optimized
ones. The discriminator penalty pulls the path back onto the data.

    python3 demos/swiss_roll_paths.py [--steps 20000] [--out demo_out]
"""
import argparse
from pathlib import Path

import numpy as np

from latentgeo import datasets, evaluation, gan, geodesic, plotting

p = argparse.ArgumentParser()
p.add_argument("--steps", type=int, default=20000)
p.add_argument("--out", default="demo_out")
args = p.parse_args()
out = Path(args.out)
out.mkdir(exist_ok=True)

spec = datasets.SwissRollSpec()
data = datasets.gen_swiss_roll(spec).samples
model = gan.train_vanilla_gan(data, gan.GanArch(), gan.TrainConfig(steps=args.steps))

# The first seeded pair whose linear path falls off the roll.
for k in range(200):
    zs = datasets.sample_latent(model.latent_prior, 1, 2, 1 + 1000 * k)[0]
    ze = datasets.sample_latent(model.latent_prior, 1, 2, 2 + 1000 * k)[0]
    lin = evaluation.evaluate_path(geodesic.linear_path(zs, ze), model, None)
    if evaluation.manifold_coverage(lin, spec) < 0.9:
        break
print(f"pair {k}: z_start={np.round(zs, 3)}, z_end={np.round(ze, 3)}")

reports = [lin]
for kind in ("SqDiff", "SqDiffD"):
    method = geodesic.MethodSpec(kind, geodesic.SWISS_ROLL_LAMBDA, use_geometric_averaging=True,
                                 ensemble_size=4)
    curve = geodesic.ensemble_optimize(zs, ze, model, method, geodesic.SWISS_ROLL)
    reports.append(evaluation.evaluate_path(curve, model, method))

for r in reports:
    print(f"{r.method:8s} coverage {evaluation.manifold_coverage(r, spec):.2f}  "
          f"mean D {r.critic_norm.mean():.3f}  length {np.sqrt(r.sq_step).sum():.3f}")

# Discriminator over the latent box as a backdrop, as in a latent D map.
zs_all = np.stack([r.z for r in reports])
lo, hi = zs_all.min(axis=(0, 1)) - 0.5, zs_all.max(axis=(0, 1)) + 0.5
g0, g1 = np.meshgrid(np.linspace(lo[0], hi[0], 150), np.linspace(lo[1], hi[1], 150))
dmap = model.critic(model.generate(np.stack([g0.ravel(), g1.ravel()], axis=1))).reshape(g0.shape)
plotting.path_comparison(reports, out / "swiss_roll_paths.svg", data,
                         ((lo[0], hi[0], lo[1], hi[1]), dmap))
print("wrote", out / "swiss_roll_paths.svg")
