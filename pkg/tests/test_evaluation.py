import numpy as np
import pytest

from latentgeo import datasets, evaluation, gan, geodesic
from latentgeo.datasets import SwissRollSpec
from latentgeo.evaluation import PathReport
from conftest import linear_model, smooth_model


def _report(values, method="SqDiff"):
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    return PathReport(method, geodesic.grid(n), np.zeros((n, 2)), v, v)


def test_constant_curve_has_zero_steps():
    m = smooth_model()
    rep = evaluation.evaluate_path(geodesic.linear_path([0.2, 0.2], [0.2, 0.2]), m, None)
    assert len(rep) == evaluation.DEFAULT_EVAL_PTS == 100
    assert np.all(rep.sq_step == 0.0)


def test_linear_curve_steps_closed_form():
    A = np.array([[1.0, -2.0], [0.5, 0.5]])
    m = linear_model(A)
    zs, ze = np.array([0.0, 1.0]), np.array([2.0, -1.0])
    n = 25
    rep = evaluation.evaluate_path(geodesic.linear_path(zs, ze), m, None, n)
    expected = np.sum((A @ (ze - zs)) ** 2) / (n - 1) ** 2
    assert rep.sq_step[0] == 0.0
    assert np.allclose(rep.sq_step[1:], expected, rtol=1e-10)


def test_feature_steps_recorded():
    m = smooth_model()
    from conftest import smooth_net
    method = geodesic.MethodSpec("Feat", 0.0, feature_map=smooth_net([2, 4, 3]))
    rep = evaluation.evaluate_path(geodesic.linear_path([0.0, 0.0], [1.0, 1.0]), m, method, 10)
    assert rep.feat_step.shape == (10,) and rep.feat_step[0] == 0.0


def test_summary_single_and_identical():
    s = evaluation.summarize_traces([_report([0.1, 0.5, 0.9])])
    assert np.array_equal(s.mean, [0.1, 0.5, 0.9]) and np.all(s.stderr == 0) and s.n_paths == 1
    s = evaluation.summarize_traces([_report([0.1, 0.5]), _report([0.1, 0.5])])
    assert np.all(s.stderr == 0)


def test_summary_three_paths_by_hand():
    # position 0: 1, 2, 6 -> mean 3, sample var ((4 + 1 + 9) / 2) = 7, stderr sqrt(7/3)
    # position 1: 0, 0, 3 -> mean 1, sample var ((1 + 1 + 4) / 2) = 3, stderr 1
    s = evaluation.summarize_traces([_report([1.0, 0.0]), _report([2.0, 0.0]), _report([6.0, 3.0])])
    assert np.allclose(s.mean, [3.0, 1.0])
    assert np.allclose(s.stderr, [np.sqrt(7.0 / 3.0), 1.0])


def test_summary_rejects_mixed_inputs():
    with pytest.raises(ValueError):
        evaluation.summarize_traces([_report([1.0, 2.0]), _report([1.0, 2.0, 3.0])])
    with pytest.raises(ValueError):
        evaluation.summarize_traces([_report([1.0, 2.0]), _report([1.0, 2.0], "Linear")])
    with pytest.raises(ValueError):
        evaluation.summarize_traces([])


def test_histogram_identical_sets_and_counts():
    h = evaluation.histogram_pair([0.1, 0.2, 0.9], [0.1, 0.2, 0.9], 5)
    assert np.array_equal(h.real, h.fake)
    m = smooth_model()
    real = np.random.default_rng(0).normal(size=(300, 2))
    h = evaluation.critic_histogram(m, None, real, 200, 7, seed=1)
    assert h.real.sum() == 300 and h.fake.sum() == 200 and len(h.edges) == 8
    with pytest.raises(ValueError):
        evaluation.critic_histogram(m, None, real, 10, 1)


def test_perturbation_study():
    m = smooth_model(seed=5)
    z = np.array([0.3, -0.2])
    small = evaluation.perturbation_study(m, None, z, 1e-6, 20, seed=0)
    big = evaluation.perturbation_study(m, None, z, 0.5, 20, seed=0)
    assert evaluation.spread(small) < evaluation.spread(big)
    one = evaluation.perturbation_study(m, None, z, 0.1, 1, seed=3)
    assert len(one) == 1 and np.linalg.norm(one[0][0] - z) == pytest.approx(0.1)
    again = evaluation.perturbation_study(m, None, z, 0.1, 1, seed=3)
    assert np.array_equal(one[0][0], again[0][0]) and one[0][1] == again[0][1]
    with pytest.raises(ValueError):
        evaluation.perturbation_study(m, None, z, 0.0, 5)


def test_manifold_coverage_fixtures():
    spec = SwissRollSpec()
    delta = 3 * spec.noise_std
    theta = np.linspace(2 * np.pi, 4 * np.pi, 10)
    on = datasets.spiral_points(theta, spec)
    assert evaluation.manifold_coverage(on, spec, delta) == 1.0
    # push points outward by 2 delta; the neighbouring turn is farther than that
    off = on + 2 * delta * on / np.linalg.norm(on, axis=1, keepdims=True)
    assert evaluation.manifold_coverage(off, spec, delta) == 0.0
    mixed = np.vstack([on[:7], off[7:]])
    assert evaluation.manifold_coverage(mixed, spec, delta) == pytest.approx(0.7)


def test_coverage_records_default_delta():
    rep = PathReport("Linear", geodesic.grid(3), datasets.spiral_points(np.array([5.0, 6.0, 7.0]), SwissRollSpec()),
                     np.ones(3), np.ones(3))
    assert evaluation.manifold_coverage(rep) == 1.0
    assert rep.meta["coverage_delta"] == pytest.approx(0.03)


def test_path_csv_round_trip(tmp_path):
    m = smooth_model(kind="wasserstein")
    rep = evaluation.evaluate_path(geodesic.linear_path([0.0, 1.0], [1.0, 0.0]), m, geodesic.MethodSpec("SqDiff"),
                                   12, None, geodesic.GeodesicConfig(12), 4, "abc")
    path = tmp_path / "p.csv"
    evaluation.write_path_csv(rep, path, {"pair": 0})
    back = evaluation.read_path_csv(path)
    assert back.method == "SqDiff" and back.seed == 4 and back.config_hash == "abc"
    for f in ("t", "x", "z", "critic_raw", "critic_norm"):
        assert np.array_equal(getattr(back, f), getattr(rep, f))
    assert back.final_energy == rep.final_energy
    assert b"\r\n" in path.read_bytes()


def test_tampered_csv_rejected(tmp_path):
    m = smooth_model()
    rep = evaluation.evaluate_path(geodesic.linear_path([0.0, 1.0], [1.0, 0.0]), m, None, 5)
    path = tmp_path / "p.csv"
    evaluation.write_path_csv(rep, path)
    lines = path.read_text().splitlines()
    lines[-1] += ",42"
    path.write_text("\n".join(lines))
    with pytest.raises(evaluation.ArtifactError, match="columns"):
        evaluation.read_path_csv(path)


def test_sample_path_report_has_no_latents():
    m = smooth_model()
    x = geodesic.linear_sample_space_path([0.0, 0.0], [1.0, 1.0], 6)
    rep = evaluation.evaluate_sample_path(x, m)
    assert rep.z is None and rep.method == "LinearSample"
    assert np.array_equal(rep.critic_norm, gan.critic_normalized(m, None, x))
