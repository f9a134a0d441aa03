"""The polynomial optimum next to a graph shortest path.

A 64 x 64 grid over the latent box becomes an 8-neighbour graph whose edge
costs are the terms of the discrete energy. Dijkstra returns the cheapest
grid walk, a reference that does not depend on the polynomial form.

    python3 demos/grid_oracle.py [--steps 20000]
"""
import argparse

import numpy as np

from latentgeo import datasets, gan, geodesic, oracle

p = argparse.ArgumentParser()
p.add_argument("--steps", type=int, default=20000)
args = p.parse_args()

data = datasets.gen_swiss_roll(datasets.SwissRollSpec()).samples
model = gan.train_vanilla_gan(data, gan.GanArch(), gan.TrainConfig(steps=args.steps))
zs = datasets.sample_latent(model.latent_prior, 1, 2, 1)[0]
ze = datasets.sample_latent(model.latent_prior, 1, 2, 2)[0]

method = geodesic.MethodSpec("SqDiffD", geodesic.SWISS_ROLL_LAMBDA, use_geometric_averaging=True)
curve = geodesic.optimize_path(zs, ze, model, method, geodesic.SWISS_ROLL)
gp = oracle.grid_shortest_path(zs, ze, model, method, n=64)

print(f"grid walk: {gp.n_segments} segments, energy {gp.energy:.4g}")
print(f"polynomial at the grid's segment count: {oracle.curve_energy_at(curve, model, method, gp.n_segments):.4g}")
print(f"polynomial at the grid's spacing:       "
      f"{oracle.curve_energy_at_spacing(curve, model, method, gp.spacing, gp.n_segments):.4g}")
print(f"linear path at the grid's segment count: "
      f"{oracle.curve_energy_at(geodesic.linear_path(zs, ze), model, method, gp.n_segments):.4g}")
# The penalty term grows like 1/D; compare how much of each path sits in low-D regions.
for name, z in (("grid", gp.nodes), ("polynomial", geodesic.discretize(curve, 200))):
    d = model.critic(model.generate(z))
    print(f"{name:10s} min D {d.min():.3f}, mean D {d.mean():.3f}")
