"""Path reports, trace statistics and critic diagnostics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geodesic
from .datasets import SwissRollSpec, distance_to_manifold, sample_latent
from .gan import critic_values

DEFAULT_EVAL_PTS = 100


@dataclass
class PathReport:
    method: str
    t: np.ndarray
    x: np.ndarray                      # samples along the path
    critic_raw: np.ndarray
    critic_norm: np.ndarray
    z: np.ndarray | None = None        # latent points; None for sample-space paths
    feat_step: np.ndarray | None = None
    final_energy: float = float("nan")
    seed: int | None = None
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def sq_step(self):
        """``|x_i - x_{i-1}|^2`` per point, 0 for the first."""
        d = np.sum(np.diff(self.x, axis=0) ** 2, axis=1)
        return np.concatenate([[0.0], d])

    def __len__(self):
        return len(self.t)


def evaluate_path(curve, model, method, n_eval_pts=DEFAULT_EVAL_PTS, calib=None,
                  energy_cfg=None, seed=None, config_hash=""):
    """Sample a latent curve at ``n_eval_pts`` equispaced parameters and record diagnostics."""
    if n_eval_pts < 2:
        raise ValueError("n_eval_pts must be >= 2")
    t = geodesic.grid(n_eval_pts)
    z = geodesic.discretize(curve, n_eval_pts)
    x = model.generate(z)
    raw, norm = _critic(model, x, calib)
    feat = None
    H = method.feature_map if method is not None else None
    if H is not None:
        y = H(x)
        feat = np.concatenate([[0.0], np.sum(np.diff(y, axis=0) ** 2, axis=1)])
    e = float("nan")
    if energy_cfg is not None and method is not None:
        e = geodesic.energy(curve, model, method, energy_cfg, calib)
    return PathReport(method.kind if method is not None else "Linear", t, x, raw, norm, z, feat,
                      e, seed, config_hash)


def evaluate_sample_path(x, model, calib=None, method="LinearSample", seed=None, config_hash=""):
    """Report for a path given directly in sample space."""
    x = np.asarray(x, dtype=np.float64)
    raw, norm = _critic(model, x, calib)
    return PathReport(method, geodesic.grid(len(x)), x, raw, norm, None, None,
                      float("nan"), seed, config_hash)


def _critic(model, x, calib):
    if model.kind == "wasserstein" and calib is None and model.calibration is None:
        raw = model.critic(x)
        return raw, np.full_like(raw, np.nan)
    raw, norm, _ = critic_values(model, x, calib)
    return raw, norm


@dataclass
class TraceSummary:
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int


def summarize_traces(reports, field="critic_norm"):
    """Position-wise mean and standard error of the mean over paths."""
    if not reports:
        raise ValueError("no reports to summarize")
    lengths = {len(r) for r in reports}
    if len(lengths) != 1:
        raise ValueError(f"reports have different lengths: {sorted(lengths)}")
    methods = {r.method for r in reports}
    if len(methods) != 1:
        raise ValueError(f"reports mix methods: {sorted(methods)}")
    data = np.stack([np.asarray(getattr(r, field), dtype=np.float64) for r in reports])
    n = len(reports)
    if n == 1:
        return TraceSummary(data[0].copy(), np.zeros(data.shape[1]), 1)
    return TraceSummary(data.mean(axis=0), data.std(axis=0, ddof=1) / np.sqrt(n), n)


@dataclass
class Histogram:
    edges: np.ndarray
    real: np.ndarray
    fake: np.ndarray


def critic_histogram(model, calib, real, n_fake=5000, bins=50, seed=0, normalized=False):
    """Counts of critic values on real and generated samples over shared bin edges."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    real = np.asarray(real, dtype=np.float64)
    if len(real) == 0 or n_fake <= 0:
        raise ValueError("empty input")
    fake = model.generate(sample_latent(model.latent_prior, n_fake, model.latent_dim, seed))
    if normalized:
        vr, vf = critic_values(model, real, calib)[1], critic_values(model, fake, calib)[1]
    else:
        vr, vf = model.critic(real), model.critic(fake)
    return histogram_pair(vr, vf, bins)


def histogram_pair(values_real, values_fake, bins=50):
    vr = np.asarray(values_real, dtype=np.float64)
    vf = np.asarray(values_fake, dtype=np.float64)
    if vr.size == 0 or vf.size == 0:
        raise ValueError("empty input")
    lo = min(vr.min(), vf.min())
    hi = max(vr.max(), vf.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    return Histogram(edges, np.histogram(vr, edges)[0], np.histogram(vf, edges)[0])


def perturbation_study(model, calib, z, radius, n, seed=0):
    """Critic values at ``n`` points exactly ``radius`` away from ``z`` in random directions."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    z = np.asarray(z, dtype=np.float64).ravel()
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, z.size))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    zp = z + radius * u
    _, norm, _ = critic_values(model, model.generate(zp), calib)
    return list(zip(zp, norm))


def spread(records):
    v = np.array([c for _, c in records])
    return float(v.max() - v.min())


def manifold_coverage(report, spec=SwissRollSpec(), delta=None):
    """Fraction of path samples within ``delta`` (default 3 noise std) of the noise-free roll."""
    x = report.x if isinstance(report, PathReport) else np.asarray(report)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError(f"manifold coverage needs 2-D samples, got shape {x.shape}")
    if delta is None:
        delta = 3.0 * spec.noise_std
    if isinstance(report, PathReport):
        report.meta["coverage_delta"] = delta
    return float(np.mean(distance_to_manifold(x, spec) <= delta))


# --- CSV artifacts ----------------------------------------------------------

def _fmt(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def write_path_csv(report, path, extra_meta=None):
    """Write one path as CSV with ``# key=value`` preamble lines before the header row."""
    latent_dim = report.z.shape[1] if report.z is not None else int(report.meta.get("latent_dim", 0))
    sample_dim = report.x.shape[1]
    meta = {"method": report.method, "seed": report.seed, "config_hash": report.config_hash,
            "final_energy": _fmt(report.final_energy), "latent_dim": latent_dim,
            "sample_dim": sample_dim}
    meta.update(extra_meta or {})
    header = ["t"] + [f"z{j}" for j in range(latent_dim)] + [f"x{j}" for j in range(sample_dim)] \
        + ["critic_raw", "critic_norm", "sq_step"]
    if report.feat_step is not None:
        header.append("feat_step")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        for k in sorted(meta):
            fh.write(f"# {k}={meta[k]}\r\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        sq = report.sq_step
        for i in range(len(report)):
            row = [_fmt(report.t[i])]
            row += [_fmt(v) for v in report.z[i]] if report.z is not None else [""] * latent_dim
            row += [_fmt(v) for v in report.x[i]]
            row += [_fmt(report.critic_raw[i]), _fmt(report.critic_norm[i]), _fmt(sq[i])]
            if report.feat_step is not None:
                row.append(_fmt(report.feat_step[i]))
            w.writerow(row)
    tmp.replace(path)


class ArtifactError(ValueError):
    pass


def read_path_csv(path):
    meta = {}
    lines = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    if len(rows) < 2:
        raise ArtifactError(f"{path}: no data rows")
    header = rows[0]
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ArtifactError(f"{path}: data row {i - 1} has {len(r)} columns, header has {len(header)}")

    def col(name):
        j = header.index(name)
        return np.array([float(r[j]) if r[j] != "" else np.nan for r in rows[1:]])

    try:
        zcols = [h for h in header if h.startswith("z")]
        xcols = [h for h in header if h.startswith("x")]
        t = col("t")
        x = np.stack([col(c) for c in xcols], axis=1)
        z = np.stack([col(c) for c in zcols], axis=1) if zcols else None
        if z is not None and np.all(np.isnan(z)):
            z = None
        feat = col("feat_step") if "feat_step" in header else None
        raw, norm = col("critic_raw"), col("critic_norm")
    except (ValueError, IndexError) as exc:
        raise ArtifactError(f"{path}: malformed path artifact ({exc})") from None
    seed = meta.get("seed")
    energy = meta.get("final_energy", "")
    return PathReport(meta.get("method", "?"), t, x, raw, norm, z, feat,
                      float(energy) if energy else float("nan"),
                      int(seed) if seed not in (None, "", "None") else None,
                      meta.get("config_hash", ""), meta)


def write_table(path, header, rows):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    tmp.replace(path)
