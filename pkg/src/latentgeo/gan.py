"""Training and calibration of the generator/discriminator pairs.

Two kinds of model are supported: a vanilla GAN whose discriminator ends in a
sigmoid, and a WGAN-GP whose critic has a linear head. Critic values of the
latter are mapped into ``(0, 1]`` through a :class:`CriticCalibration` before
they are used in the path penalty.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nnet
from .datasets import LatentPrior, sample_latent

NORMALIZATION_FLOOR = 1e-3


class TrainingDiverged(FloatingPointError):
    """A loss or gradient became non-finite; ``step`` says where."""

    def __init__(self, step, what="loss"):
        super().__init__(f"non-finite {what} at training step {step}")
        self.step = step


class DegenerateCritic(ValueError):
    pass


@dataclass(frozen=True)
class GanArch:
    latent_dim: int = 2
    sample_dim: int = 2
    g_hidden: tuple = (64, 64)
    d_hidden: tuple = (64, 64)
    slope: float = 0.2


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    steps: int = 10000
    lr_generator: float = 1e-3
    lr_discriminator: float = 1e-3
    critic_iters_per_gen: int = 5
    gp_weight: float = 10.0
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.batch_size <= 0 or self.steps < 0 or self.critic_iters_per_gen <= 0:
            raise ValueError("batch_size and critic_iters_per_gen must be positive, steps non-negative")
        if self.lr_generator < 0 or self.lr_discriminator < 0 or self.gp_weight < 0:
            raise ValueError("learning rates and gp_weight must be non-negative")


@dataclass(frozen=True)
class CriticCalibration:
    observed_min: float
    observed_max: float
    n_samples: int

    def __post_init__(self):
        if not self.observed_min < self.observed_max:
            raise DegenerateCritic(
                f"degenerate critic range [{self.observed_min}, {self.observed_max}]")


@dataclass
class GanModel:
    generator: nnet.Mlp
    discriminator: nnet.Mlp
    kind: str = "vanilla"
    latent_prior: LatentPrior = field(default_factory=LatentPrior)
    calibration: CriticCalibration | None = None

    def __post_init__(self):
        if self.kind not in ("vanilla", "wasserstein"):
            raise ValueError(f"unknown GAN kind {self.kind!r}")
        head = self.discriminator.layers[-1].activation
        if self.kind == "vanilla" and head != "sigmoid":
            raise ValueError("a vanilla discriminator must end in a sigmoid")
        if self.kind == "wasserstein" and head != "linear":
            raise ValueError("a Wasserstein critic must have a linear head")
        if self.discriminator.output_dim != 1:
            raise ValueError("the discriminator must be scalar-valued")
        if self.generator.output_dim != self.discriminator.input_dim:
            raise ValueError("generator output and discriminator input dimensions differ")

    @property
    def latent_dim(self):
        return self.generator.input_dim

    @property
    def sample_dim(self):
        return self.generator.output_dim

    def copy(self):
        return GanModel(self.generator.copy(), self.discriminator.copy(), self.kind,
                        self.latent_prior, self.calibration)

    def generate(self, z):
        return nnet.forward(self.generator, z)

    def critic(self, x):
        """Raw discriminator/critic values, shape ``(n,)``."""
        return nnet.forward(self.discriminator, x)[:, 0]


def init_model(arch, kind="vanilla", prior=LatentPrior(), seed=0):
    rng = np.random.default_rng(seed)
    g = nnet.build_mlp([arch.latent_dim, *arch.g_hidden, arch.sample_dim],
                       "leaky_relu", "linear", arch.slope, rng)
    head = "sigmoid" if kind == "vanilla" else "linear"
    d = nnet.build_mlp([arch.sample_dim, *arch.d_hidden, 1], "leaky_relu", head, arch.slope, rng)
    return GanModel(g, d, kind, prior)


def _softplus(a):
    return np.logaddexp(0.0, a)


def _sigmoid(a):
    return nnet.activate("sigmoid", a)


def _check(step, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise TrainingDiverged(step)


def _batch(rng, data, n):
    return data[rng.integers(0, len(data), size=n)]


def _vanilla_steps(model, data, cfg, steps, lr_d, lr_g, rng, log, step0=0):
    G, D = model.generator, model.discriminator
    opt_d = nnet.AdamState.like(D.params(), lr_d, cfg.beta1, cfg.beta2)
    opt_g = nnet.AdamState.like(G.params(), lr_g, cfg.beta1, cfg.beta2)
    B = cfg.batch_size
    for step in range(step0, step0 + steps):
        x_real = _batch(rng, data, B)
        x_fake = nnet.forward(G, sample_latent(model.latent_prior, B, model.latent_dim, rng))
        c_real = nnet.forward_cache(D, x_real)
        c_fake = nnet.forward_cache(D, x_fake)
        l_real, l_fake = c_real.pre[-1], c_fake.pre[-1]
        d_loss = np.mean(_softplus(-l_real)) + np.mean(_softplus(l_fake))
        g_real, _ = nnet.backward(D, c_real, (_sigmoid(l_real) - 1.0) / B, at_preactivation=True)
        g_fake, _ = nnet.backward(D, c_fake, _sigmoid(l_fake) / B, at_preactivation=True)
        grads = [a + b for a, b in zip(g_real, g_fake)]
        _check(step, d_loss, *grads)
        if lr_d > 0:
            nnet.adam_step(opt_d, D.params(), grads)

        z = sample_latent(model.latent_prior, B, model.latent_dim, rng)
        c_gen = nnet.forward_cache(G, z)
        c_dis = nnet.forward_cache(D, c_gen.output)
        l_gen = c_dis.pre[-1]
        g_loss = np.mean(_softplus(-l_gen))
        _, dx = nnet.backward(D, c_dis, (_sigmoid(l_gen) - 1.0) / B, at_preactivation=True)
        g_grads, _ = nnet.backward(G, c_gen, dx)
        _check(step, g_loss, *g_grads)
        if lr_g > 0:
            nnet.adam_step(opt_g, G.params(), g_grads)
        if log is not None:
            log(step, float(d_loss), float(g_loss))


def gradient_penalty(critic, x_real, x_fake, mix, gp_weight):
    """WGAN-GP penalty ``gp_weight * mean((|grad_x D(x_hat)| - 1)^2)`` and its parameter gradient.

    ``x_hat = mix * x_real + (1 - mix) * x_fake`` with one mixing weight per row.
    """
    mix = np.asarray(mix, dtype=np.float64).reshape(-1, 1)
    x_hat = mix * x_real + (1.0 - mix) * x_fake
    u = nnet.grad_input(critic, x_hat, np.ones((len(x_hat), 1)))
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    value = gp_weight * np.mean((norm - 1.0) ** 2)
    safe = np.where(norm > 0, norm, 1.0)
    u_bar = gp_weight * 2.0 * (norm - 1.0) * u / safe / len(x_hat)
    grads, _ = nnet.input_grad_param_vjp(critic, x_hat, u_bar)
    return value, grads


def _wgan_steps(model, data, cfg, steps, lr_d, lr_g, rng, log, step0=0):
    G, D = model.generator, model.discriminator
    opt_d = nnet.AdamState.like(D.params(), lr_d, cfg.beta1, cfg.beta2)
    opt_g = nnet.AdamState.like(G.params(), lr_g, cfg.beta1, cfg.beta2)
    B = cfg.batch_size
    ones = np.ones((B, 1))
    for step in range(step0, step0 + steps):
        for _ in range(cfg.critic_iters_per_gen):
            x_real = _batch(rng, data, B)
            x_fake = nnet.forward(G, sample_latent(model.latent_prior, B, model.latent_dim, rng))
            mix = rng.uniform(0.0, 1.0, size=B)
            c_real = nnet.forward_cache(D, x_real)
            c_fake = nnet.forward_cache(D, x_fake)
            gp, gp_grads = gradient_penalty(D, x_real, x_fake, mix, cfg.gp_weight)
            d_loss = np.mean(c_fake.output) - np.mean(c_real.output) + gp
            g_real, _ = nnet.backward(D, c_real, -ones / B)
            g_fake, _ = nnet.backward(D, c_fake, ones / B)
            grads = [a + b + c for a, b, c in zip(g_real, g_fake, gp_grads)]
            _check(step, d_loss, *grads)
            if lr_d > 0:
                nnet.adam_step(opt_d, D.params(), grads)

        z = sample_latent(model.latent_prior, B, model.latent_dim, rng)
        c_gen = nnet.forward_cache(G, z)
        c_dis = nnet.forward_cache(D, c_gen.output)
        g_loss = -np.mean(c_dis.output)
        _, dx = nnet.backward(D, c_dis, -ones / B)
        g_grads, _ = nnet.backward(G, c_gen, dx)
        _check(step, g_loss, *g_grads)
        if lr_g > 0:
            nnet.adam_step(opt_g, G.params(), g_grads)
        if log is not None:
            log(step, float(d_loss), float(g_loss))


def _check_data(data, arch):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or len(data) == 0 or data.shape[1] != arch.sample_dim:
        raise ValueError(f"data must be a non-empty (n, {arch.sample_dim}) matrix, got {data.shape}")
    return data


def train_vanilla_gan(data, arch=GanArch(), cfg=TrainConfig(), prior=LatentPrior(), log=None):
    """Train a GAN with a sigmoid discriminator.

    Discriminator: binary cross-entropy. Generator: the non-saturating loss
    ``-log D(G(z))``. One discriminator step per generator step.
    ``log(step, d_loss, g_loss)`` is called after every step if given.
    """
    data = _check_data(data, arch)
    model = init_model(arch, "vanilla", prior, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    _vanilla_steps(model, data, cfg, cfg.steps, cfg.lr_discriminator, cfg.lr_generator, rng, log)
    return model


def train_wgan_gp(data, arch=GanArch(), cfg=TrainConfig(), prior=LatentPrior(), log=None):
    """Train a Wasserstein GAN with gradient penalty (critic has a linear head)."""
    if cfg.gp_weight <= 0:
        raise ValueError("train_wgan_gp needs gp_weight > 0")
    data = _check_data(data, arch)
    model = init_model(arch, "wasserstein", prior, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    _wgan_steps(model, data, cfg, cfg.steps, cfg.lr_discriminator, cfg.lr_generator, rng, log)
    return model


def fine_tune(model, data, steps, lr_critic=5e-4, lr_gen=1e-4, cfg=TrainConfig(), log=None):
    """Continue training with a faster critic than generator.

    Returns a new model; the input is left untouched. ``lr_gen = 0`` freezes
    the generator exactly.
    """
    if not lr_critic > lr_gen >= 0:
        raise ValueError("fine-tuning needs lr_critic > lr_gen >= 0")
    out = model.copy()
    out.calibration = None
    if steps == 0:
        return out
    data = np.asarray(data, dtype=np.float64)
    rng = np.random.default_rng([cfg.seed, 2])
    run = _vanilla_steps if model.kind == "vanilla" else _wgan_steps
    run(out, data, cfg, steps, lr_critic, lr_gen, rng, log)
    return out


def calibrate_critic(model, n_samples=5000, seed=0):
    """Record the range of critic values on ``n_samples`` generated samples."""
    if n_samples < 2:
        raise ValueError("calibration needs at least 2 samples")
    z = sample_latent(model.latent_prior, n_samples, model.latent_dim, seed)
    return calibration_from_values(model.critic(model.generate(z)))


def calibration_from_values(values):
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("calibration values must be finite and non-empty")
    return CriticCalibration(float(v.min()), float(v.max()), int(v.size))


def normalize_values(raw, calib, floor=NORMALIZATION_FLOOR):
    """``floor + (1 - floor) * clip((raw - min) / (max - min), 0, 1)`` and its derivative."""
    raw = np.asarray(raw, dtype=np.float64)
    span = calib.observed_max - calib.observed_min
    s = (raw - calib.observed_min) / span
    inside = (s >= 0.0) & (s <= 1.0)
    value = floor + (1.0 - floor) * np.clip(s, 0.0, 1.0)
    deriv = np.where(inside, (1.0 - floor) / span, 0.0)
    return value, deriv


def critic_values(model, x, calib=None):
    """Raw values, normalized values in ``(0, 1]`` and d(normalized)/d(raw).

    Vanilla discriminators already live in ``(0, 1)`` and pass through.
    """
    raw = model.critic(x)
    if model.kind == "vanilla":
        return raw, raw, np.ones_like(raw)
    calib = calib or model.calibration
    if calib is None:
        raise ValueError("a Wasserstein critic needs a CriticCalibration")
    norm, deriv = normalize_values(raw, calib)
    return raw, norm, deriv


def critic_normalized(model, calib, x):
    return critic_values(model, x, calib)[1]


# --- persistence ----------------------------------------------------------

def model_meta(model):
    return {"kind": model.kind,
            "latent_dim": model.latent_dim,
            "sample_dim": model.sample_dim,
            "latent_prior": model.latent_prior.to_dict(),
            "calibration": asdict(model.calibration) if model.calibration else None}


def save_model(model, path):
    """Checkpoint container plus a ``<path>.json`` sidecar with the metadata."""
    path = Path(path)
    meta = model_meta(model)
    nnet.save_networks(path, {"generator": model.generator, "discriminator": model.discriminator}, meta)
    side = path.with_name(path.name + ".json")
    tmp = side.with_name(side.name + ".tmp")
    tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    tmp.replace(side)


def load_model(path):
    nets, meta = nnet.load_networks(path)
    side = Path(str(path) + ".json")
    if side.exists():
        meta = json.loads(side.read_text())
    calib = meta.get("calibration")
    return GanModel(nets["generator"], nets["discriminator"], meta["kind"],
                    LatentPrior(**meta["latent_prior"]),
                    CriticCalibration(**calib) if calib else None)
