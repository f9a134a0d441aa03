"""Calibrating a Wasserstein critic before using it as a realism score.

A WGAN-GP critic has a linear head, so its values are not probabilities.
The observed range over generated samples is mapped affinely into (0, 1].
The histogram shows how real and generated samples spread over the raw
scale, and the perturbation study how sensitive the score is near one
latent point.

    python3 demos/critic_calibration.py [--steps 2000] [--out demo_out]
"""
import argparse
from pathlib import Path

import numpy as np

from latentgeo import datasets, evaluation, gan, plotting

p = argparse.ArgumentParser()
p.add_argument("--steps", type=int, default=2000)
p.add_argument("--out", default="demo_out")
args = p.parse_args()
out = Path(args.out)
out.mkdir(exist_ok=True)

data = datasets.gen_swiss_roll(datasets.SwissRollSpec()).samples
cfg = gan.TrainConfig(batch_size=128, steps=args.steps, lr_generator=1e-4, lr_discriminator=1e-4,
                      beta1=0.5, beta2=0.9)
model = gan.train_wgan_gp(data, gan.GanArch(), cfg)
model = gan.fine_tune(model, data, steps=200, cfg=cfg)

calib = gan.calibrate_critic(model, 5000, seed=0)
print(f"raw critic range on generated samples: [{calib.observed_min:.3f}, {calib.observed_max:.3f}]")

hist = evaluation.critic_histogram(model, calib, data[:5000], 5000, bins=50)
plotting.histogram(hist, out / "critic_histogram.svg", "raw critic value")

z0 = np.zeros(2)
for radius in (1e-3, 1e-2, 1e-1, 0.5):
    rec = evaluation.perturbation_study(model, calib, z0, radius, 64, seed=1)
    print(f"radius {radius:6.3f}: normalized critic spread {evaluation.spread(rec):.3f}")
print("wrote", out / "critic_histogram.svg")
