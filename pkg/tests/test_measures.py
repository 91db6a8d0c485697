import numpy as np
import pytest

from otbary.errors import ValidationError
from otbary.measures import (
    Sampler,
    affine_pushforward,
    base_sampler,
    check_weights,
    empirical_moments,
    make_scatter_population,
    member_samplers,
    pushforward,
    toy2d_sampler,
    write_samples_csv,
)
from otbary.rng import stream


def test_check_weights_accepts_and_renormalizes():
    w = check_weights([0.1, 0.2, 0.3, 0.4])
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    w2 = check_weights(np.array([0.25, 0.25, 0.25, 0.25 + 5e-9]))
    assert abs(w2.sum() - 1.0) < 1e-15


@pytest.mark.parametrize("bad", [[0.5, 0.6], [0.5, -0.5, 1.0], [1.0, 0.0], [[0.5, 0.5]], []])
def test_check_weights_rejects_invalid(bad):
    with pytest.raises(ValidationError):
        check_weights(bad)


@pytest.mark.parametrize("kind", ["gaussian", "uniform"])
def test_base_sampler_standardized(kind):
    s = base_sampler(kind, 3)
    mean, cov = empirical_moments(s, 400000, stream(41, kind))
    assert np.allclose(mean, 0.0, atol=0.01)
    assert np.allclose(cov, np.eye(3), atol=0.02)


def test_uniform_base_support():
    s = base_sampler("uniform", 2)
    x = s.sample(stream(42), 10000)
    assert np.abs(x).max() <= np.sqrt(3.0) + 1e-12
    # Kurtosis separates uniform from gaussian: E z^4 = 9/5 for U(-sqrt3, sqrt3).
    fourth = (x ** 4).mean()
    assert abs(fourth - 1.8) < 0.05


def test_base_sampler_deterministic():
    s = base_sampler("gaussian", 4)
    a = s.sample(stream(43, "x"), 32)
    b = s.sample(stream(43, "x"), 32)
    assert np.array_equal(a, b)


def test_base_sampler_rejects_bad_args():
    with pytest.raises(ValidationError):
        base_sampler("cauchy", 2)
    with pytest.raises(ValidationError):
        base_sampler("gaussian", 0)
    s = base_sampler("gaussian", 2)
    with pytest.raises(ValidationError):
        s.sample(stream(0), 0)


def test_pushforward_composition_law():
    s = base_sampler("gaussian", 2)
    f = lambda x: x + 1.0
    g = lambda x: 2.0 * x
    composed_outer = pushforward(pushforward(s, f), g)
    composed_inner = pushforward(s, lambda x: g(f(x)))
    a = composed_outer.sample(stream(44, "c"), 64)
    b = composed_inner.sample(stream(44, "c"), 64)
    assert np.array_equal(a, b)


def test_affine_pushforward_matches_manual():
    s = base_sampler("gaussian", 2)
    mat = np.array([[2.0, 1.0], [0.0, 1.0], [1.0, -1.0]])
    shift = np.array([1.0, -2.0, 0.5])
    t = affine_pushforward(s, mat, shift)
    assert t.dim == 3
    x = s.sample(stream(45, "a"), 16)
    y = t.sample(stream(45, "a"), 16)
    assert np.allclose(y, x @ mat.T + shift)
    with pytest.raises(ValidationError):
        affine_pushforward(s, np.ones((2, 3)), np.zeros(2))


def test_sampler_validates_draw_output():
    bad = Sampler(dim=2, draw=lambda rng, n: np.zeros((n, 3)), descriptor={"kind": "bad"})
    with pytest.raises(ValidationError, match="shape"):
        bad.sample(stream(0), 4)
    nan = Sampler(dim=1, draw=lambda rng, n: np.full((n, 1), np.nan), descriptor={"kind": "nan"})
    with pytest.raises(ValidationError, match="non-finite"):
        nan.sample(stream(0), 4)


@pytest.mark.parametrize("dim,expected", [(2, [0.5, 2.0]), (3, [0.5, 1.0, 2.0])])
def test_scatter_profile_axis_scales(dim, expected):
    # Scatter eigenvalues are rotation-invariant, so they must equal the
    # geometric ladder from 1/2 to 2 in every member.
    spec = make_scatter_population(dim, 3, seed=5)
    for s in spec.scatters:
        assert np.allclose(np.sort(np.linalg.eigvalsh(s)), expected, atol=1e-12)
    for c in spec.member_covariances():
        assert np.allclose(np.sort(np.linalg.eigvalsh(c)), np.array(expected) ** 2, atol=1e-12)


def test_scatter_population_distinct_and_deterministic():
    spec = make_scatter_population(4, 4, seed=9, weights=[0.1, 0.2, 0.3, 0.4])
    again = make_scatter_population(4, 4, seed=9, weights=[0.1, 0.2, 0.3, 0.4])
    other = make_scatter_population(4, 4, seed=10, weights=[0.1, 0.2, 0.3, 0.4])
    assert all(np.array_equal(a, b) for a, b in zip(spec.scatters, again.scatters))
    assert not np.allclose(spec.scatters[0], other.scatters[0])
    assert not np.allclose(spec.scatters[0], spec.scatters[1])
    assert np.allclose(spec.weights, [0.1, 0.2, 0.3, 0.4])
    assert all(np.all(u == 0.0) for u in spec.shifts)


def test_member_samplers_have_member_moments():
    spec = make_scatter_population(3, 2, seed=6, shift_scale=1.5)
    members = member_samplers(spec)
    mean, cov = empirical_moments(members[1], 300000, stream(46))
    assert np.allclose(mean, spec.shifts[1], atol=0.02)
    assert np.allclose(cov, spec.member_covariances()[1], atol=0.05)


@pytest.mark.parametrize("shape", ["rectangle", "swiss_roll"])
def test_toy2d_standardized(shape):
    s = toy2d_sampler(shape)
    mean, cov = empirical_moments(s, 400000, stream(47, shape))
    assert np.allclose(mean, 0.0, atol=0.02)
    assert np.allclose(cov, np.eye(2), atol=0.02)


def test_toy2d_rectangle_support():
    x = toy2d_sampler("rectangle").sample(stream(48), 20000)
    assert np.abs(x).max() <= np.sqrt(3.0) + 1e-12


def test_toy2d_rejects_unknown_shape():
    with pytest.raises(ValidationError):
        toy2d_sampler("torus")


def test_empirical_moments_chunking_consistent():
    s = base_sampler("gaussian", 2)
    m1, c1 = empirical_moments(s, 1000, stream(49, "m"), chunk=64)
    m2, c2 = empirical_moments(s, 1000, stream(49, "m"), chunk=1000)
    assert np.allclose(m1, m2, atol=1e-12)
    assert np.allclose(c1, c2, atol=1e-12)


def test_empirical_moments_unbiased_normalization():
    # Two-point sampler with known sample covariance under ddof = 1.
    pts = np.array([[1.0], [-1.0]])
    s = Sampler(dim=1, draw=lambda rng, n: pts[:n], descriptor={"kind": "fixed"})
    mean, cov = empirical_moments(s, 2, stream(0))
    assert mean[0] == pytest.approx(0.0)
    assert cov[0, 0] == pytest.approx(2.0)  # ((1)^2 + (-1)^2) / (2 - 1)


def test_write_samples_csv_round_trip(tmp_path):
    s = base_sampler("gaussian", 3)
    path = tmp_path / "samples.csv"
    write_samples_csv(s, 50, stream(50, "csv"), path)
    header = path.read_text().splitlines()[0]
    assert header == "x0,x1,x2"
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    expected = s.sample(stream(50, "csv"), 50)
    assert np.array_equal(data, expected)
