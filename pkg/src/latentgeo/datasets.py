"""Desk-scale data: the Swiss roll, latent priors and IDX image files."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SwissRollSpec:
    """Archimedean spiral ``r(theta) = radius_scale * theta`` on ``angle_range``.

    Samples are divided by ``r(a_max)`` so the roll fits in the unit disc;
    ``noise_std`` is applied after that normalization.
    """

    n_points: int = 8192
    angle_range: tuple = (1.5 * np.pi, 4.5 * np.pi)
    radius_scale: float = 1.0
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        a_min, a_max = self.angle_range
        if not a_min < a_max:
            raise ValueError(f"angle_range must be increasing, got {self.angle_range}")
        if self.n_points <= 0 or self.radius_scale <= 0 or self.noise_std < 0:
            raise ValueError("n_points and radius_scale must be positive, noise_std non-negative")

    @property
    def norm_scale(self):
        return self.radius_scale * self.angle_range[1]


@dataclass
class DatasetHandle:
    """Samples in the normalized frame; ``raw = samples * scale + offset``."""

    samples: np.ndarray
    name: str
    normalization: dict = field(default_factory=lambda: {"offset": 0.0, "scale": 1.0})

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("dataset contains non-finite samples")
        if np.any(np.asarray(self.normalization["scale"]) == 0):
            raise ValueError("normalization scale must be non-zero")

    def to_raw(self, x=None):
        x = self.samples if x is None else np.asarray(x, dtype=np.float64)
        return x * np.asarray(self.normalization["scale"]) + np.asarray(self.normalization["offset"])

    def from_raw(self, raw):
        return (np.asarray(raw, dtype=np.float64) - np.asarray(self.normalization["offset"])) / \
            np.asarray(self.normalization["scale"])


def spiral_points(theta, spec):
    """Noise-free roll points for angles ``theta``, in the normalized frame."""
    theta = np.asarray(theta, dtype=np.float64)
    r = spec.radius_scale * theta / spec.norm_scale
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def gen_swiss_roll(spec=SwissRollSpec()):
    rng = np.random.default_rng(spec.seed)
    theta = rng.uniform(spec.angle_range[0], spec.angle_range[1], size=spec.n_points)
    x = spiral_points(theta, spec)
    if spec.noise_std > 0:
        x = x + rng.normal(0.0, spec.noise_std, size=x.shape)
    return DatasetHandle(x, "swiss_roll", {"offset": 0.0, "scale": spec.norm_scale})


def _spiral_dist2(x, theta, spec):
    p = spiral_points(theta, spec)
    return np.sum((p - x[..., None, :]) ** 2, axis=-1)


def distance_to_manifold(x, spec=SwissRollSpec(), n_grid=20000, refine=True):
    """Euclidean distance from normalized 2-D point(s) to the noise-free roll.

    A dense angle grid brackets the minimizer; ternary search then refines it
    inside the bracketing cell, where the squared distance is unimodal for a
    grid this fine.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != 2:
        raise ValueError(f"expected 2-D points, got shape {x.shape}")
    a_min, a_max = spec.angle_range
    grid = np.linspace(a_min, a_max, n_grid)
    out = np.empty(len(x))
    step = grid[1] - grid[0]
    chunk = max(1, 2_000_000 // n_grid)
    for s in range(0, len(x), chunk):
        xs = x[s:s + chunk]
        d2 = _spiral_dist2(xs, grid, spec)
        best = np.argmin(d2, axis=1)
        if not refine:
            out[s:s + chunk] = np.sqrt(d2[np.arange(len(xs)), best])
            continue
        lo = np.maximum(grid[best] - step, a_min)
        hi = np.minimum(grid[best] + step, a_max)
        for _ in range(60):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            f1 = _spiral_dist2(xs, m1[:, None], spec)[:, 0]
            f2 = _spiral_dist2(xs, m2[:, None], spec)[:, 0]
            left = f1 < f2
            hi = np.where(left, m2, hi)
            lo = np.where(left, lo, m1)
        mid = (lo + hi) / 2.0
        refined = _spiral_dist2(xs, mid[:, None], spec)[:, 0]
        out[s:s + chunk] = np.sqrt(np.minimum(refined, d2[np.arange(len(xs)), best]))
    return out[0] if single else out


@dataclass(frozen=True)
class LatentPrior:
    kind: str = "standard_gaussian"
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("standard_gaussian", "uniform_box"):
            raise ValueError(f"unknown latent prior {self.kind!r}")
        if self.kind == "uniform_box" and not self.lo < self.hi:
            raise ValueError("uniform_box needs lo < hi")

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


def sample_latent(prior, n, dim, seed=None):
    """``n`` i.i.d. draws of dimension ``dim`` from ``prior``; ``seed`` may be a Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if prior.kind == "standard_gaussian":
        return rng.standard_normal((n, dim))
    return rng.uniform(prior.lo, prior.hi, size=(n, dim))


# --- IDX ------------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


def _read_idx(path, expected_magic):
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise IdxFormatError(f"{path}: truncated header at byte offset {len(data)} (need 4 bytes of magic)")
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expected_magic:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x} at byte offset 0, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(data) < head:
        raise IdxFormatError(f"{path}: truncated dimension table at byte offset {len(data)} (need {head} bytes)")
    dims = struct.unpack(f">{ndim}I", data[4:head])
    need = head + int(np.prod(dims))
    if len(data) < need:
        raise IdxFormatError(f"{path}: truncated payload at byte offset {len(data)} (need {need} bytes)")
    return np.frombuffer(data, dtype=np.uint8, count=need - head, offset=head).reshape(dims)


def load_idx_images(path):
    """Load an IDX image file; pixels map to ``[-1, 1]`` via ``x = (byte - 127.5) / 127.5``."""
    raw = _read_idx(path, IDX_IMAGES_MAGIC)
    flat = raw.reshape(raw.shape[0], -1).astype(np.float64)
    return DatasetHandle((flat - 127.5) / 127.5, Path(path).stem, {"offset": 127.5, "scale": 127.5})


def load_idx_labels(path):
    return _read_idx(path, IDX_LABELS_MAGIC).astype(np.int64)


def write_idx(path, array, labels=False):
    array = np.asarray(array, dtype=np.uint8)
    magic = IDX_LABELS_MAGIC if labels else IDX_IMAGES_MAGIC
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", (magic & ~0xFF) | array.ndim))
        fh.write(struct.pack(f">{array.ndim}I", *array.shape))
        fh.write(array.tobytes(order="C"))


def export_csv(handle, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(handle.samples.shape[1])])
        for row in handle.samples:
            w.writerow([repr(float(v)) for v in row])


def load_csv(path, name=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != width:
            raise ValueError(f"{path}: line {i} has {len(r)} columns, expected {width}")
    return DatasetHandle(np.array(rows[1:], dtype=np.float64), name or Path(path).stem)
