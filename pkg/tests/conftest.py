import numpy as np
import pytest

from latentgeo import datasets, gan, nnet


def linear_net(A, b=None):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.zeros(A.shape[0]) if b is None else b
    return nnet.Mlp([nnet.Layer(A, b, "linear")])


def smooth_net(sizes, out="linear", seed=0):
    """tanh hidden layers: smooth everywhere, so finite differences behave."""
    return nnet.build_mlp(sizes, "tanh", out, rng=np.random.default_rng(seed))


def smooth_model(latent_dim=2, sample_dim=2, kind="vanilla", seed=0, hidden=8):
    head = "sigmoid" if kind == "vanilla" else "linear"
    g = smooth_net([latent_dim, hidden, hidden, sample_dim], seed=seed)
    d = smooth_net([sample_dim, hidden, 1], head, seed=seed + 1)
    model = gan.GanModel(g, d, kind)
    if kind == "wasserstein":
        model.calibration = gan.calibrate_critic(model, 500, seed)
    return model


def linear_model(A, kind="vanilla", seed=0):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    head = "sigmoid" if kind == "vanilla" else "linear"
    d = smooth_net([A.shape[0], 8, 1], head, seed=seed)
    return gan.GanModel(linear_net(A), d, kind)


@pytest.fixture(scope="session")
def small_roll():
    return datasets.gen_swiss_roll(datasets.SwissRollSpec(n_points=1024, seed=3))


@pytest.fixture(scope="session")
def briefly_trained(small_roll):
    """A vanilla GAN after a few hundred steps: not good, but not random either."""
    arch = gan.GanArch(2, 2, (32, 32), (32, 32))
    cfg = gan.TrainConfig(batch_size=64, steps=300, seed=5)
    return gan.train_vanilla_gan(small_roll.samples, arch, cfg)


def random_energy_instance(rng):
    """Small random (curve, model, method, cfg) for derivative checks.

    Latent dim <= 4, degree <= 4, with lambda zero or positive, optional
    geometric averaging and an optional feature map; both GAN kinds.
    """
    from latentgeo import geodesic

    latent_dim = int(rng.integers(1, 5))
    sample_dim = int(rng.integers(2, 5))
    degree = int(rng.integers(2, 5))
    kind = ["vanilla", "wasserstein"][int(rng.integers(0, 2))]
    seed = int(rng.integers(0, 2**31))
    model = smooth_model(latent_dim, sample_dim, kind, seed, hidden=6)
    lam = [0.0, float(rng.uniform(0.1, 5.0))][int(rng.integers(0, 2))]
    use_feat = bool(rng.integers(0, 2))
    fmap = None
    if use_feat:
        fnet = smooth_net([sample_dim, 5, 3], seed=seed + 2)
        fmap = geodesic.FeatureMap(fnet, (0, 1))
    kind_m = ("FeatD" if lam > 0 else "Feat") if use_feat else ("SqDiffD" if lam > 0 else "SqDiff")
    method = geodesic.MethodSpec(kind_m, lam, 1e-3, fmap, bool(rng.integers(0, 2)))
    curve = geodesic.PolyCurve(rng.normal(size=latent_dim), rng.normal(size=latent_dim),
                               rng.normal(scale=0.3, size=(degree - 1, latent_dim)))
    cfg = geodesic.GeodesicConfig(n_interp_pts=int(rng.integers(5, 20)), poly_degree=degree)
    return curve, model, method, cfg


def fd_energy_grad(curve, model, method, cfg, h=1e-5):
    from latentgeo import geodesic

    g = np.zeros_like(curve.free_coeffs)
    for idx in np.ndindex(g.shape):
        c = curve.copy()
        c.free_coeffs[idx] += h
        fp = geodesic.energy(c, model, method, cfg)
        c.free_coeffs[idx] -= 2 * h
        fm = geodesic.energy(c, model, method, cfg)
        g[idx] = (fp - fm) / (2 * h)
    return g


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
