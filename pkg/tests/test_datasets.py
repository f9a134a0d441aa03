import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentgeo import datasets
from latentgeo.datasets import SwissRollSpec


def test_noiseless_roll_is_on_manifold():
    spec = SwissRollSpec(n_points=2000, noise_std=0.0, seed=1)
    d = datasets.distance_to_manifold(datasets.gen_swiss_roll(spec).samples, spec)
    assert d.max() <= 1e-6


def test_same_seed_same_dataset():
    a = datasets.gen_swiss_roll(SwissRollSpec(n_points=300, seed=7)).samples
    b = datasets.gen_swiss_roll(SwissRollSpec(n_points=300, seed=7)).samples
    assert np.array_equal(a, b)


def test_angles_span_full_range():
    spec = SwissRollSpec(n_points=1024, noise_std=0.0, seed=0)
    x = datasets.gen_swiss_roll(spec).samples
    # on the noiseless roll the normalized radius is theta / a_max
    theta = np.linalg.norm(x, axis=1) * spec.angle_range[1]
    a_min, a_max = spec.angle_range
    width = a_max - a_min
    assert theta.min() - a_min <= 0.01 * width
    assert a_max - theta.max() <= 0.01 * width


def test_normalization_round_trip():
    h = datasets.gen_swiss_roll(SwissRollSpec(n_points=100))
    raw = h.to_raw()
    assert np.max(np.abs(h.from_raw(raw) - h.samples)) <= 1e-12
    assert np.max(np.linalg.norm(raw, axis=1)) > 5.0   # raw frame is the unscaled spiral


def test_origin_distance_is_inner_radius():
    spec = SwissRollSpec()
    inner = spec.radius_scale * spec.angle_range[0] / spec.norm_scale
    assert datasets.distance_to_manifold(np.zeros(2), spec) == pytest.approx(inner, abs=1e-9)


def test_grid_and_refined_distances_agree():
    spec = SwissRollSpec()
    x = np.random.default_rng(0).uniform(-1.1, 1.1, size=(1000, 2))
    coarse = datasets.distance_to_manifold(x, spec, refine=False)
    fine = datasets.distance_to_manifold(x, spec)
    assert np.all(fine <= coarse + 1e-15)
    assert np.max(coarse - fine) <= 1e-4


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(1.5 * np.pi, 4.5 * np.pi), off=st.floats(-0.05, 0.05))
def test_distance_along_normal(theta, off):
    # a small step along the outward radial direction changes the distance by at most |off|
    spec = SwissRollSpec()
    p = datasets.spiral_points(theta, spec)
    q = p + off * p / np.linalg.norm(p)
    assert datasets.distance_to_manifold(p, spec) <= 1e-6
    assert datasets.distance_to_manifold(q, spec) <= abs(off) + 1e-9


def test_distance_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        datasets.distance_to_manifold(np.zeros((3, 3)))


def test_invalid_spec_rejected():
    with pytest.raises(ValueError):
        SwissRollSpec(angle_range=(3.0, 1.0))
    with pytest.raises(ValueError):
        SwissRollSpec(noise_std=-1.0)


def test_gaussian_prior_mean():
    z = datasets.sample_latent(datasets.LatentPrior(), 100_000, 3, seed=11)
    assert np.all(np.abs(z.mean(axis=0)) < 0.02)


def test_latent_seed_reproducible_and_box_bounds():
    p = datasets.LatentPrior("uniform_box", -2.0, 0.5)
    a = datasets.sample_latent(p, 1000, 4, 3)
    assert np.array_equal(a, datasets.sample_latent(p, 1000, 4, 3))
    assert a.min() >= -2.0 and a.max() < 0.5
    with pytest.raises(ValueError):
        datasets.LatentPrior("cauchy")


def _fixture_bytes():
    # 2 images of 2x2, built byte by byte
    return (bytes([0, 0, 8, 3]) + struct.pack(">III", 2, 2, 2)
            + bytes([0, 255, 127, 128,
                     10, 20, 30, 40]))


def test_idx_fixture_decodes(tmp_path):
    path = tmp_path / "imgs.idx"
    path.write_bytes(_fixture_bytes())
    h = datasets.load_idx_images(path)
    assert h.samples.shape == (2, 4)
    expected = (np.array([[0, 255, 127, 128], [10, 20, 30, 40]]) - 127.5) / 127.5
    assert np.array_equal(h.samples, expected)
    assert h.samples.min() == -1.0 and h.samples[0, 1] == 1.0


def test_idx_scaling_round_trip(tmp_path):
    path = tmp_path / "imgs.idx"
    path.write_bytes(_fixture_bytes())
    h = datasets.load_idx_images(path)
    raw = h.to_raw()
    assert np.max(np.abs(raw - np.array([[0, 255, 127, 128], [10, 20, 30, 40]]))) <= 1 / 255


def test_idx_writer_round_trip(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, size=(3, 4, 5), dtype=np.uint8)
    datasets.write_idx(tmp_path / "a.idx", imgs)
    datasets.write_idx(tmp_path / "l.idx", np.array([1, 7, 3]), labels=True)
    h = datasets.load_idx_images(tmp_path / "a.idx")
    assert np.array_equal(np.rint(h.to_raw()).astype(int), imgs.reshape(3, -1))
    assert list(datasets.load_idx_labels(tmp_path / "l.idx")) == [1, 7, 3]


@pytest.mark.parametrize("payload,where", [
    (b"", "offset 0"),
    (bytes([0, 0, 8, 1]) + struct.pack(">I", 1) + b"\x00", "offset 0"),
    (bytes([0, 0, 8, 3]) + struct.pack(">I", 2), "offset 8"),
    (bytes([0, 0, 8, 3]) + struct.pack(">III", 1, 2, 2) + b"\x00", "offset 17"),
])
def test_idx_errors_name_byte_offset(tmp_path, payload, where):
    path = tmp_path / "bad.idx"
    path.write_bytes(payload)
    with pytest.raises(datasets.IdxFormatError, match=where):
        datasets.load_idx_images(path)


def test_csv_round_trip(tmp_path):
    h = datasets.gen_swiss_roll(SwissRollSpec(n_points=50))
    datasets.export_csv(h, tmp_path / "d.csv")
    back = datasets.load_csv(tmp_path / "d.csv")
    assert np.array_equal(back.samples, h.samples)
