"""Discriminator-penalized interpolation paths in latent space.

Curves are polynomials ``p(t) = a0 + a1 t + ... + an t^n`` on ``t in [1, 2]``
with ``p(1) = z_start`` and ``p(2) = z_end``. Only ``a2..an`` are free; ``a0``
and ``a1`` follow from the endpoints. Equivalently

    p(t) = z_start + (t - 1)(z_end - z_start) + sum_j a_j b_j(t),
    b_j(t) = t^j - 1 - (t - 1)(2^j - 1),

and every ``b_j`` vanishes at both endpoints, which is how curves are
evaluated here: the endpoints come out exact regardless of the coefficients.

The discrete objective for ``T + 1`` equispaced points is

    E = sum_{i=1..T} (1/T) * (|H(G(z_i)) - H(G(z_{i-1}))| + phi_i)^2,
    phi_i = (lambda / dim H) / (D_i + eps),

with ``D_i`` the (normalized) discriminator value at ``z_i``, or the geometric
mean of the values at ``z_{i-1}`` and ``z_i`` when geometric averaging is on.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nnet
from .gan import critic_values

METHODS = ("Linear", "SqDiff", "SqDiffD", "Feat", "FeatD", "LinearSample")
OPTIMIZED = ("SqDiff", "SqDiffD", "Feat", "FeatD")
PENALIZED = ("SqDiffD", "FeatD")
_ALIASES = {m.lower(): m for m in METHODS}
_ALIASES.update({"sqdiff+d": "SqDiffD", "vgg": "Feat", "vgg+d": "FeatD", "feat+d": "FeatD",
                 "linear_sample": "LinearSample", "linear in sample space": "LinearSample"})


def method_name(name):
    """Canonical method name; also accepts the spellings (``sqDiff+D``, ``VGG``)."""
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}") from None


class NumericalFailure(FloatingPointError):
    pass


class FeatureMap:
    """Feature map ``H`` built from an Mlp, reading one or more of its layers.

    Each tapped layer's activations are divided by ``sqrt(width)``, so squared
    distances in ``H`` are a sum of per-layer squared distances weighted by
    the reciprocal layer width. With no taps only the final layer is read.
    """

    def __init__(self, net, taps=None):
        self.net = net
        self.taps = tuple(sorted(taps)) if taps else (len(net.layers) - 1,)
        for k in self.taps:
            if not 0 <= k < len(net.layers):
                raise ValueError(f"tap {k} out of range for a {len(net.layers)}-layer network")
        self.widths = [net.layers[k].out_dim for k in self.taps]
        self.scales = [1.0 / np.sqrt(w) for w in self.widths]

    @property
    def input_dim(self):
        return self.net.input_dim

    @property
    def output_dim(self):
        return sum(self.widths)

    def forward_cache(self, x):
        cache = nnet.forward_cache(self.net, x)
        out = np.concatenate([cache.post[k] * s for k, s in zip(self.taps, self.scales)], axis=1)
        return out, cache

    def __call__(self, x):
        return self.forward_cache(x)[0]

    def backward(self, cache, upstream):
        """Input gradient of ``sum(upstream * H(x))``."""
        last = len(self.net.layers) - 1
        injections = {}
        start = 0
        for k, w, s in zip(self.taps, self.widths, self.scales):
            injections[k] = upstream[:, start:start + w] * s
            start += w
        out_grad = injections.pop(last, np.zeros_like(cache.output))
        return nnet.backward(self.net, cache, out_grad, taps=injections)[1]


def _as_feature_map(h):
    if h is None or isinstance(h, FeatureMap):
        return h
    return FeatureMap(h)


@dataclass
class MethodSpec:
    kind: str = "SqDiffD"
    lam: float = 50.0
    eps: float = 1e-3
    feature_map: object = None
    use_geometric_averaging: bool = False
    ensemble_size: int = 1

    def __post_init__(self):
        self.kind = method_name(self.kind)
        self.feature_map = _as_feature_map(self.feature_map)
        if self.lam < 0 or self.eps <= 0:
            raise ValueError("lambda must be >= 0 and eps > 0")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.kind in ("Feat", "FeatD") and self.feature_map is None:
            raise ValueError(f"method {self.kind} needs a feature map")

    @property
    def penalized(self):
        return self.kind in PENALIZED

    @property
    def optimized(self):
        return self.kind in OPTIMIZED

    def features(self):
        """The feature map actually used: identity unless the method is Feat/FeatD."""
        return self.feature_map if self.kind in ("Feat", "FeatD") else None


@dataclass(frozen=True)
class GeodesicConfig:
    n_interp_pts: int = 1024
    poly_degree: int = 6
    n_train_steps: int = 1000
    learn_rate: float = 1e-3
    coefficient_init: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_interp_pts < 2:
            raise ValueError("n_interp_pts must be >= 2")
        if self.poly_degree < 1 or self.n_train_steps < 0 or self.learn_rate <= 0:
            raise ValueError("poly_degree >= 1, n_train_steps >= 0 and learn_rate > 0 required")
        if self.coefficient_init < 0:
            raise ValueError("coefficient_init must be non-negative")

    def hash(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


# Published hyperparameter presets.
SWISS_ROLL = GeodesicConfig(1024, 6, 1000, 1e-3, 1e-1)
MNIST = GeodesicConfig(24, 4, 100, 1e-3, 1e-4)
SWISS_ROLL_LAMBDA = 50.0
MNIST_LAMBDA = 0.6


@dataclass
class PolyCurve:
    z_start: np.ndarray
    z_end: np.ndarray
    free_coeffs: np.ndarray = field(default=None)

    def __post_init__(self):
        self.z_start = np.asarray(self.z_start, dtype=np.float64).ravel()
        self.z_end = np.asarray(self.z_end, dtype=np.float64).ravel()
        if self.z_start.shape != self.z_end.shape:
            raise ValueError("endpoints have different dimensions")
        if self.free_coeffs is None:
            self.free_coeffs = np.zeros((0, self.latent_dim))
        self.free_coeffs = np.asarray(self.free_coeffs, dtype=np.float64).reshape(-1, self.latent_dim)

    @property
    def latent_dim(self):
        return self.z_start.size

    @property
    def degree(self):
        return 1 + len(self.free_coeffs)

    def coefficients(self):
        """All coefficients ``a0..an`` as rows, with a0 and a1 solved from the endpoints."""
        j = np.arange(2, self.degree + 1)[:, None]
        a = self.free_coeffs
        a1 = self.z_end - self.z_start - np.sum(a * (2.0 ** j - 1.0), axis=0)
        a0 = self.z_start - a1 - np.sum(a, axis=0)
        return np.vstack([a0, a1, a])

    def copy(self):
        return PolyCurve(self.z_start.copy(), self.z_end.copy(), self.free_coeffs.copy())


def basis(t, degree):
    """``b_j(t)`` for ``j = 2..degree``, shape ``(len(t), degree - 1)``."""
    t = np.asarray(t, dtype=np.float64)[:, None]
    j = np.arange(2, degree + 1)[None, :]
    return t ** j - 1.0 - (t - 1.0) * (2.0 ** j - 1.0)


def _points(curve, t):
    t = np.asarray(t, dtype=np.float64)
    base = curve.z_start + (t[:, None] - 1.0) * (curve.z_end - curve.z_start)
    if curve.degree > 1:
        base = base + basis(t, curve.degree) @ curve.free_coeffs
    # exact endpoints even when (t - 1) * (z_end - z_start) rounds
    base[t == 1.0] = curve.z_start
    base[t == 2.0] = curve.z_end
    return base


def curve_eval(curve, t):
    """Point(s) of the curve at parameter(s) ``t`` in ``[1, 2]``."""
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any((tt < 1.0) | (tt > 2.0)) or not np.all(np.isfinite(tt)):
        raise ValueError(f"curve parameter must lie in [1, 2], got {t}")
    out = _points(curve, tt)
    return out[0] if scalar else out


def grid(n_interp_pts):
    if n_interp_pts < 2:
        raise ValueError("need at least 2 points")
    t = 1.0 + np.arange(n_interp_pts) / (n_interp_pts - 1)
    t[-1] = 2.0
    return t


def discretize(curve, n_interp_pts):
    if n_interp_pts < 2:
        raise ValueError("need at least 2 points")
    return _points(curve, grid(n_interp_pts))


def linear_path(z_start, z_end):
    return PolyCurve(z_start, z_end)


def linear_sample_space_path(x_start, x_end, n_pts):
    x_start = np.asarray(x_start, dtype=np.float64).ravel()
    x_end = np.asarray(x_end, dtype=np.float64).ravel()
    if x_start.shape != x_end.shape:
        raise ValueError("sample-space endpoints have different dimensions")
    s = np.linspace(0.0, 1.0, n_pts)[:, None]
    out = (1.0 - s) * x_start + s * x_end
    out[0], out[-1] = x_start, x_end
    return out


def penalty_phi(z, model, lam, eps, calib=None, image_dim=None):
    """``(lam / image_dim) / (D_norm(G(z)) + eps)`` for latent point(s) ``z``.

    ``image_dim`` is the dimension of the space lengths are measured in
    (the sample dimension for SqDiffD); it defaults to ``model.sample_dim``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    lam_eff = lam / (image_dim or model.sample_dim)
    if lam_eff == 0:
        out = np.zeros(len(z))
    else:
        _, d, _ = critic_values(model, model.generate(z), calib)
        out = lam_eff / (d + eps)
    return out[0] if len(out) == 1 else out


# --- objective ------------------------------------------------------------

@dataclass
class _Terms:
    seg: np.ndarray          # segment lengths |dY_i|, i = 1..T
    phi: np.ndarray          # penalties, i = 1..T
    energy: float


def _penalty_terms(d, lam_eff, eps, geometric):
    """phi_i and d(phi_i)/d(D) contributions for both neighbours of segment i."""
    if geometric:
        g = np.sqrt(d[:-1] * d[1:])
        phi = lam_eff / (g + eps)
        dphi_dg = -lam_eff / (g + eps) ** 2
        safe = np.where(g > 0, g, 1.0)
        # dg/dD_{i-1} = D_i / (2 g), dg/dD_i = D_{i-1} / (2 g)
        d_left = np.where(g > 0, dphi_dg * d[1:] / (2.0 * safe), 0.0)
        d_right = np.where(g > 0, dphi_dg * d[:-1] / (2.0 * safe), 0.0)
        return phi, d_left, d_right
    phi = lam_eff / (d[1:] + eps)
    return phi, np.zeros_like(phi), -lam_eff / (d[1:] + eps) ** 2


def _evaluate(z, model, method, calib, need_grad):
    """Energy of the discrete path ``z`` (rows) and optionally dE/dz."""
    T = len(z) - 1
    H = method.features()
    g_cache = nnet.forward_cache(model.generator, z)
    x = g_cache.output
    if H is None:
        y, h_cache = x, None
    else:
        y, h_cache = H.forward_cache(x)
    dy = np.diff(y, axis=0)
    seg = np.linalg.norm(dy, axis=1)

    lam_eff = method.lam / y.shape[1] if method.penalized else 0.0
    if lam_eff > 0:
        d_cache = nnet.forward_cache(model.discriminator, x)
        raw = d_cache.output[:, 0]
        if model.kind == "vanilla":
            d, dd_draw = raw, np.ones_like(raw)
        else:
            _, d, dd_draw = critic_values(model, x, calib)
        phi, dphi_left, dphi_right = _penalty_terms(d, lam_eff, method.eps, method.use_geometric_averaging)
    else:
        phi = np.zeros(T)
    r = seg + phi
    energy = float(np.sum(r * r) / T)
    if not np.isfinite(energy):
        bad = np.flatnonzero(~np.isfinite(r))
        i = int(bad[0]) + 1 if bad.size else 0
        raise NumericalFailure(f"non-finite energy term at t_{i}")
    if not need_grad:
        return _Terms(seg, phi, energy), None

    w = 2.0 * r / T                         # dE/d(seg_i) = dE/d(phi_i)
    safe = np.where(seg > 0, seg, 1.0)
    u = np.where(seg[:, None] > 0, dy / safe[:, None], 0.0) * w[:, None]
    gy = np.zeros_like(y)
    gy[1:] += u
    gy[:-1] -= u
    gx = gy if H is None else H.backward(h_cache, gy)
    if lam_eff > 0:
        gd = np.zeros(len(x))
        gd[1:] += w * dphi_right
        gd[:-1] += w * dphi_left
        g_raw = (gd * dd_draw)[:, None]
        gx = gx + nnet.backward(model.discriminator, d_cache, g_raw)[1]
    gz = nnet.backward(model.generator, g_cache, gx)[1]
    return _Terms(seg, phi, energy), gz


def energy(curve, model, method, cfg=GeodesicConfig(), calib=None):
    """Discrete penalized energy of ``curve`` on ``cfg.n_interp_pts`` points.

    Defined for every method; for Linear/LinearSample it is reported with
    the same (identity-H, zero-penalty) formula as SqDiff.
    """
    z = discretize(curve, cfg.n_interp_pts)
    return _evaluate(z, model, method, calib, need_grad=False)[0].energy


def path_energy(z, model, method, calib=None):
    """Energy of an explicit latent polyline (rows of ``z``)."""
    return _evaluate(np.asarray(z, dtype=np.float64), model, method, calib, need_grad=False)[0].energy


def energy_grad(curve, model, method, cfg=GeodesicConfig(), calib=None):
    """Exact gradient of :func:`energy` w.r.t. the free coefficients ``a2..an``."""
    if not method.optimized:
        raise ValueError(f"method {method.kind} is not optimized; it has no trainable coefficients")
    t = grid(cfg.n_interp_pts)
    z = _points(curve, t)
    _, gz = _evaluate(z, model, method, calib, need_grad=True)
    return basis(t, curve.degree).T @ gz


def _energy_and_grad(curve, model, method, cfg, calib, B):
    t = grid(cfg.n_interp_pts)
    terms, gz = _evaluate(_points(curve, t), model, method, calib, need_grad=True)
    return terms.energy, B.T @ gz


@dataclass
class OptimizationTrace:
    energies: list = field(default_factory=list)

    @property
    def initial(self):
        return self.energies[0]

    @property
    def final(self):
        return self.energies[-1]


def optimize_path(z_start, z_end, model, method, cfg=GeodesicConfig(), calib=None, trace=None):
    """Fit the free coefficients with a fixed budget of Adam steps.

    The budget doubles as early stopping. Coefficients start uniform in
    ``[-coefficient_init, coefficient_init]`` drawn from ``cfg.seed``. If
    ``trace`` is an :class:`OptimizationTrace` it receives the energy before
    the first step and after each step.
    """
    if not method.optimized:
        raise ValueError(f"method {method.kind} is not optimized; use linear_path")
    if cfg.poly_degree < 2:
        raise ValueError("optimized methods need poly_degree >= 2 (degree 1 is the linear path)")
    z_start = np.asarray(z_start, dtype=np.float64).ravel()
    z_end = np.asarray(z_end, dtype=np.float64).ravel()
    if np.array_equal(z_start, z_end):
        curve = PolyCurve(z_start, z_end, np.zeros((cfg.poly_degree - 1, z_start.size)))
        if trace is not None:
            trace.energies.append(energy(curve, model, method, cfg, calib))
        return curve

    rng = np.random.default_rng(cfg.seed)
    init = rng.uniform(-cfg.coefficient_init, cfg.coefficient_init,
                       size=(cfg.poly_degree - 1, z_start.size))
    curve = PolyCurve(z_start, z_end, init)
    B = basis(grid(cfg.n_interp_pts), cfg.poly_degree)
    state = nnet.AdamState.like([curve.free_coeffs], cfg.learn_rate)
    for step in range(cfg.n_train_steps):
        try:
            e, g = _energy_and_grad(curve, model, method, cfg, calib, B)
        except NumericalFailure as exc:
            raise NumericalFailure(f"optimization step {step}: {exc}") from None
        if trace is not None:
            trace.energies.append(e)
        try:
            nnet.adam_step(state, [curve.free_coeffs], [g])
        except nnet.NonFiniteGradient:
            raise NumericalFailure(f"non-finite gradient at optimization step {step}") from None
    if trace is not None:
        trace.energies.append(energy(curve, model, method, cfg, calib))
    return curve


def member_seed(seed, k):
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def ensemble_optimize(z_start, z_end, model, method, cfg=GeodesicConfig(), calib=None,
                      return_energies=False, traces=None):
    """Optimize ``method.ensemble_size`` paths from different seeds and keep the lowest energy.

    Member ``k`` uses seed ``member_seed(cfg.seed, k)``; member 0 uses
    ``cfg.seed`` itself so a size-1 ensemble is exactly :func:`optimize_path`.
    Ties go to the lower member index. A list passed as ``traces`` receives
    one :class:`OptimizationTrace` per member.
    """
    best, best_e, energies = None, np.inf, []
    for k in range(method.ensemble_size):
        seed = cfg.seed if k == 0 else member_seed(cfg.seed, k)
        sub = GeodesicConfig(cfg.n_interp_pts, cfg.poly_degree, cfg.n_train_steps,
                             cfg.learn_rate, cfg.coefficient_init, seed)
        tr = OptimizationTrace() if traces is not None else None
        curve = optimize_path(z_start, z_end, model, method, sub, calib, tr)
        if traces is not None:
            traces.append(tr)
        e = energy(curve, model, method, cfg, calib)
        energies.append(e)
        if e < best_e:
            best, best_e = curve, e
    return (best, energies) if return_energies else best


def metric_tensor(model, z, feature_map=None):
    """Pullback metric ``J^T J`` of ``H o G`` at latent point ``z``."""
    J = nnet.input_jacobian(model.generator, np.asarray(z, dtype=np.float64))
    H = _as_feature_map(feature_map)
    if H is not None:
        x = model.generate(z)
        _, cache = H.forward_cache(x)
        # J_H rows by reverse mode, one output coordinate at a time
        JH = np.stack([H.backward(cache, np.eye(H.output_dim)[i][None, :])[0]
                       for i in range(H.output_dim)])
        J = JH @ J
    return J.T @ J
