"""End-to-end acceptance suite on the Swiss roll.

Trains the default vanilla GAN once per session (about a minute), then runs
the seeded endpoint-pair suite shared by the realism, critic-ordering,
graph-oracle and energy-sanity checks. Each criterion appends one PASS/FAIL
line to the terminal summary.
"""
import time

import numpy as np
import pytest

from latentgeo import cli, datasets, evaluation, gan, geodesic, oracle
from latentgeo.datasets import SwissRollSpec
from conftest import ACCEPTANCE_LINES, fd_energy_grad, random_energy_instance

pytestmark = pytest.mark.acceptance

N_PAIRS = 20
START_SEED, END_SEED = 1, 2            # pair k uses seeds START + 1000 k and END + 1000 k
N_EVAL = 100
LAMBDA = geodesic.SWISS_ROLL_LAMBDA
GEO_CFG = geodesic.SWISS_ROLL
ENSEMBLE = 4
TIMINGS = {}


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pair_endpoints(prior, k):
    zs = datasets.sample_latent(prior, 1, 2, START_SEED + 1000 * k)[0]
    ze = datasets.sample_latent(prior, 1, 2, END_SEED + 1000 * k)[0]
    return zs, ze


@pytest.fixture(scope="session")
def roll_model():
    spec = SwissRollSpec()
    data = datasets.gen_swiss_roll(spec).samples
    t0 = time.time()
    model = gan.train_vanilla_gan(data, gan.GanArch(), gan.TrainConfig(steps=20000, seed=0))
    TIMINGS["train"] = time.time() - t0
    print(f"trained default Swiss-roll GAN in {TIMINGS['train']:.0f} s")
    return model, spec


def _coverage_and_critic(model, spec, curve):
    rep = evaluation.evaluate_path(curve, model, None, N_EVAL)
    return evaluation.manifold_coverage(rep, spec), float(np.mean(rep.critic_norm))


@pytest.fixture(scope="session")
def pair_suite(roll_model):
    """The 20 fixed pairs: first candidates whose Linear path covers < 90% of the roll."""
    model, spec = roll_model
    rows, traces = [], []
    k = 0
    t0 = time.time()
    while len(rows) < N_PAIRS:
        zs, ze = pair_endpoints(model.latent_prior, k)
        k += 1
        lin_cov, lin_d = _coverage_and_critic(model, spec, geodesic.linear_path(zs, ze))
        if lin_cov >= 0.9:
            continue
        row = {"k": k - 1, "zs": zs, "ze": ze, "Linear": (lin_cov, lin_d)}
        for kind in ("SqDiff", "SqDiffD"):
            method = geodesic.MethodSpec(kind, LAMBDA, 1e-3, use_geometric_averaging=True,
                                         ensemble_size=ENSEMBLE)
            tr = []
            curve, energies = geodesic.ensemble_optimize(zs, ze, model, method, GEO_CFG,
                                                         return_energies=True, traces=tr)
            chosen = int(np.argmin(energies))
            traces += [(k - 1, kind, t, j == chosen) for j, t in enumerate(tr)]
            row[kind] = _coverage_and_critic(model, spec, curve)
            row[kind + "_curve"] = curve
            row[kind + "_method"] = method
        rows.append(row)
    TIMINGS["suite"] = time.time() - t0
    print(f"pair suite: {N_PAIRS} pairs from {k} candidates in {time.time() - t0:.0f} s; "
          f"pair indices {[r['k'] for r in rows]}")
    return rows, traces


def test_1_endpoint_exactness():
    rng = np.random.default_rng(1)
    t0 = time.time()
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 9))
        degree = int(rng.integers(1, 7))
        c = geodesic.PolyCurve(rng.normal(scale=3, size=dim), rng.normal(scale=3, size=dim),
                               rng.normal(scale=3, size=(degree - 1, dim)))
        p = geodesic.curve_eval(c, np.array([1.0, 2.0]))
        worst = max(worst, np.linalg.norm(p[0] - c.z_start), np.linalg.norm(p[1] - c.z_end))
    dt = time.time() - t0
    assert report(1, worst <= 1e-9 and dt < 1.0, f"max endpoint error {worst:.1e}, {dt:.2f} s")


def test_2_gradient_correctness():
    rng = np.random.default_rng(2)
    t0 = time.time()
    worst = 0.0
    for _ in range(50):
        curve, model, method, cfg = random_energy_instance(rng)
        g = geodesic.energy_grad(curve, model, method, cfg)
        fd = fd_energy_grad(curve, model, method, cfg, h=1e-5)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    dt = time.time() - t0
    assert report(2, worst <= 1e-5 and dt < 30, f"max relative error {worst:.1e} over 50 instances, {dt:.1f} s")


def test_3_method_coincidence(roll_model):
    model, _ = roll_model
    zs, ze = pair_endpoints(model.latent_prior, 0)
    cfg = geodesic.GeodesicConfig(256, 6, 100, 1e-3, 0.1, seed=11)
    ta, tb = geodesic.OptimizationTrace(), geodesic.OptimizationTrace()
    a = geodesic.optimize_path(zs, ze, model, geodesic.MethodSpec("SqDiffD", 0.0), cfg, trace=ta)
    b = geodesic.optimize_path(zs, ze, model, geodesic.MethodSpec("SqDiff"), cfg, trace=tb)
    same = np.array_equal(a.free_coeffs, b.free_coeffs) and ta.energies == tb.energies
    try:
        geodesic.optimize_path(zs, ze, model, geodesic.MethodSpec("SqDiff"),
                               geodesic.GeodesicConfig(poly_degree=1))
        rejected = False
    except ValueError:
        rejected = True
    t = geodesic.grid(1024)
    lin = geodesic.discretize(geodesic.linear_path(zs, ze), 1024)
    convex = np.array_equal(lin, zs + (t[:, None] - 1.0) * (ze - zs))
    assert report(3, same and rejected and convex,
                  f"identical trajectories={same}, degree 1 rejected={rejected}, convex combination={convex}")


def test_4_swiss_roll_realism(pair_suite):
    rows, _ = pair_suite
    cov = {m: np.mean([r[m][0] for r in rows]) for m in ("Linear", "SqDiff", "SqDiffD")}
    minutes = (TIMINGS["train"] + TIMINGS["suite"]) / 60
    ok = (cov["SqDiffD"] >= cov["Linear"] and cov["SqDiffD"] >= cov["SqDiff"] + 0.05
          and TIMINGS["train"] < 600 and minutes < 20)
    assert report(4, ok, "mean coverage " + ", ".join(f"{m} {v:.3f}" for m, v in cov.items())
                  + f"; training {TIMINGS['train']:.0f} s, total {minutes:.1f} min")


def test_5_critic_ordering(pair_suite):
    rows, _ = pair_suite
    wins = sum(r["SqDiffD"][1] > r["SqDiff"][1] for r in rows)
    assert report(5, wins >= 0.8 * len(rows), f"SqDiffD mean critic above SqDiff on {wins}/{len(rows)} pairs")


def test_6_graph_oracle(pair_suite, roll_model):
    model, _ = roll_model
    rows, _ = pair_suite
    t0 = time.time()
    ratios = []
    for r in rows:
        method = r["SqDiffD_method"]
        gp = oracle.grid_shortest_path(r["zs"], r["ze"], model, method, n=64)
        e = oracle.curve_energy_at_spacing(r["SqDiffD_curve"], model, method, gp.spacing, gp.n_segments)
        ratios.append(e / gp.energy)
    ratios = np.array(ratios)
    within = int(np.sum(np.abs(ratios - 1.0) <= 0.15))
    dt = time.time() - t0
    assert report(6, within >= 16 and dt < 300,
                  f"{within}/20 within 15% of the grid optimum; polynomial/grid energy ratios "
                  f"min {ratios.min():.3g}, median {np.median(ratios):.3g}, max {ratios.max():.3g}")


def test_7_calibration_contract():
    data = datasets.gen_swiss_roll(SwissRollSpec(n_points=2048)).samples
    cfg = gan.TrainConfig(batch_size=64, steps=300, beta1=0.5, beta2=0.9, seed=0)
    model = gan.train_wgan_gp(data, gan.GanArch(2, 2, (32, 32), (32, 32)), cfg)
    calib = gan.calibrate_critic(model, 5000, seed=7)
    x = model.generate(datasets.sample_latent(model.latent_prior, 5000, 2, 7))
    v = gan.critic_normalized(model, calib, x)
    ok = v.min() >= gan.NORMALIZATION_FLOOR and v.max() == 1.0 and np.all((v > 0) & (v <= 1))
    assert report(7, ok, f"normalized range [{v.min():.4g}, {v.max():.17g}] over 5000 samples")


def test_8_energy_sanity(pair_suite):
    _, traces = pair_suite
    bad = [(k, kind, sel) for k, kind, t, sel in traces if not t.final <= t.initial]
    n_sel_bad = sum(sel for _, _, sel in bad)
    assert report(8, not bad, f"{len(traces)} optimization runs, {len(bad)} ended above their start "
                  f"(pairs {sorted({k for k, _, _ in bad})}; {n_sel_bad} of them selected by the ensemble)")


CLI_CONFIG = """
[run]
output_dir = {out}
[dataset]
n_points = 1024
[gan]
kind = wasserstein
steps = 30
batch_size = 64
g_hidden = 16,16
d_hidden = 16,16
[finetune]
steps = 10
[geodesic]
n_pairs = 2
n_interp_pts = 64
n_train_steps = 30
ensemble_size = 2
methods = Linear,SqDiff,SqDiffD,LinearSample
[eval]
n_hist = 500
"""


def test_9_cli_determinism(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(CLI_CONFIG.format(out=tmp_path / "run"))
    out = tmp_path / "run"

    def run_all():
        for cmd in ("gen-data", "train", "finetune", "calibrate", "interpolate"):
            assert cli.main([cmd, str(cfg)]) == 0
        assert cli.main(["evaluate", str(out)]) == 0
        return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*.csv"))}

    first = run_all()
    second = run_all()
    differing = [str(p) for p in first if first[p] != second.get(p)]
    ok = len(first) >= 15 and not differing and first.keys() == second.keys()
    assert report(9, ok, f"{len(first)} CSV artifacts, {len(differing)} differ between runs")


def test_10_distance_oracle():
    spec = SwissRollSpec()
    rng = np.random.default_rng(10)
    theta = rng.uniform(*spec.angle_range, size=10_000)
    on = datasets.distance_to_manifold(datasets.spiral_points(theta, spec), spec)
    x = rng.uniform(-1.1, 1.1, size=(100, 2))
    got = datasets.distance_to_manifold(x, spec)
    grid = datasets.spiral_points(np.linspace(*spec.angle_range, 1_000_000), spec)
    brute = np.array([np.sqrt(np.min(np.sum((grid - p) ** 2, axis=1))) for p in x])
    off_ok = np.all(got > 1e-3)
    gap = np.max(np.abs(got - brute))
    assert report(10, on.max() <= 1e-6 and gap <= 1e-4 and off_ok,
                  f"on-manifold max {on.max():.1e}, max gap to brute force {gap:.1e}")
