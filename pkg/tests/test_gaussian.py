import numpy as np
import pytest
import scipy.linalg

from otbary.errors import IterationError, ValidationError
from otbary.gaussian import (
    GaussianMeasure,
    bures_w2_sq,
    bw2_uvp,
    gaussian_barycenter,
    gaussian_ot_map,
    gaussian_sampler,
    location_scatter_truth,
)
from otbary.linalg import random_rotation, spd_sqrt
from otbary.measures import empirical_moments, make_scatter_population
from otbary.rng import stream


def random_gaussian(dim, rng, mean_scale=1.0):
    rot = random_rotation(dim, rng)
    cov = rot.T @ np.diag(np.geomspace(0.3, 3.0, dim)) @ rot
    mean = mean_scale * rng.standard_normal(dim)
    return GaussianMeasure(mean=mean, cov=cov)


def test_bures_one_dimensional_closed_form():
    # Half-cost 1-D formula: 0.5 * ((mu1 - mu2)^2 + (s1 - s2)^2).
    p = GaussianMeasure(mean=[0.0], cov=[[1.0]])
    q = GaussianMeasure(mean=[2.0], cov=[[4.0]])
    assert bures_w2_sq(p, q) == pytest.approx(0.5 * (4.0 + 1.0))


def test_bures_commuting_covariances():
    # Diagonal covariances commute: distance splits per axis.
    p = GaussianMeasure(mean=[0.0, 1.0], cov=np.diag([1.0, 4.0]))
    q = GaussianMeasure(mean=[1.0, -1.0], cov=np.diag([9.0, 1.0]))
    expected = 0.5 * ((1.0 + 4.0) + ((1 - 3) ** 2 + (2 - 1) ** 2))
    assert bures_w2_sq(p, q) == pytest.approx(expected)


def test_bures_zero_on_self_and_symmetric():
    p = random_gaussian(4, stream(61))
    q = random_gaussian(4, stream(62))
    assert bures_w2_sq(p, p) == pytest.approx(0.0, abs=1e-12)
    assert bures_w2_sq(p, q) == pytest.approx(bures_w2_sq(q, p), rel=1e-10)


def test_bures_matches_scipy_route():
    # Independent oracle assembled from scipy.linalg.sqrtm.
    p = random_gaussian(5, stream(63))
    q = random_gaussian(5, stream(64))
    rq = scipy.linalg.sqrtm(q.cov).real
    cross = scipy.linalg.sqrtm(rq @ p.cov @ rq).real
    expected = 0.5 * (np.sum((p.mean - q.mean) ** 2)
                      + np.trace(p.cov) + np.trace(q.cov) - 2 * np.trace(cross))
    assert bures_w2_sq(p, q) == pytest.approx(expected, rel=1e-10)


def test_gaussian_ot_map_pushes_moments():
    p = random_gaussian(4, stream(65))
    q = random_gaussian(4, stream(66))
    a, b = gaussian_ot_map(p, q)
    assert np.allclose(a, a.T, atol=1e-10)
    assert np.allclose(a @ p.cov @ a.T, q.cov, atol=1e-9)
    assert np.allclose(a @ p.mean + b, q.mean, atol=1e-12)


def test_gaussian_ot_map_one_dimensional():
    p = GaussianMeasure(mean=[1.0], cov=[[4.0]])
    q = GaussianMeasure(mean=[-2.0], cov=[[9.0]])
    a, b = gaussian_ot_map(p, q)
    assert a[0, 0] == pytest.approx(1.5)  # sigma_q / sigma_p
    assert b[0] == pytest.approx(-2.0 - 1.5 * 1.0)


def test_gaussian_ot_map_cost_equals_bures():
    # E 0.5 |x - T(x)|^2 under p equals the closed-form distance:
    # mean part 0.5 |mu_p - A mu_p - b|^2 plus 0.5 tr((I-A) cov_p (I-A)).
    p = random_gaussian(3, stream(67))
    q = random_gaussian(3, stream(68))
    a, b = gaussian_ot_map(p, q)
    shift = p.mean - (a @ p.mean + b)
    eye_minus = np.eye(3) - a
    cost = 0.5 * (np.sum(shift ** 2) + np.trace(eye_minus @ p.cov @ eye_minus.T))
    assert cost == pytest.approx(bures_w2_sq(p, q), rel=1e-10)


def test_gaussian_barycenter_one_dimensional_closed_form():
    # In 1-D the barycenter std is the weighted mean of stds.
    covs = [np.array([[0.25]]), np.array([[4.0]]), np.array([[1.0]])]
    w = [0.5, 0.25, 0.25]
    bary = gaussian_barycenter(covs, w)
    expected_std = 0.5 * 0.5 + 0.25 * 2.0 + 0.25 * 1.0
    assert bary[0, 0] == pytest.approx(expected_std ** 2, abs=1e-12)


def test_gaussian_barycenter_commuting_closed_form():
    covs = [np.diag([1.0, 4.0]), np.diag([9.0, 1.0])]
    w = [0.25, 0.75]
    bary = gaussian_barycenter(covs, w)
    expected = np.diag([(0.25 * 1 + 0.75 * 3) ** 2, (0.25 * 2 + 0.75 * 1) ** 2])
    assert np.allclose(bary, expected, atol=1e-12)


def test_gaussian_barycenter_of_identical_inputs():
    cov = random_gaussian(3, stream(69)).cov
    bary = gaussian_barycenter([cov, cov, cov], [0.2, 0.5, 0.3])
    assert np.allclose(bary, cov, atol=1e-12)


@pytest.mark.parametrize("dim", [2, 4, 8])
def test_gaussian_barycenter_fixed_point_residual(dim):
    covs = [random_gaussian(dim, stream(70, dim, n)).cov for n in range(3)]
    w = [0.5, 0.3, 0.2]
    bary = gaussian_barycenter(covs, w, tol=1e-14)
    root = spd_sqrt(bary)
    mix = sum(wn * spd_sqrt(root @ c @ root) for wn, c in zip(w, covs))
    assert np.linalg.norm(mix - bary) / np.linalg.norm(bary) < 1e-12


def test_gaussian_barycenter_maps_average_to_identity():
    # Optimal maps from the barycenter to the inputs average to the identity.
    dim = 4
    covs = [random_gaussian(dim, stream(71, n)).cov for n in range(3)]
    w = [0.4, 0.35, 0.25]
    bary = GaussianMeasure(mean=np.zeros(dim), cov=gaussian_barycenter(covs, w, tol=1e-15))
    acc = np.zeros((dim, dim))
    for wn, c in zip(w, covs):
        a, _ = gaussian_ot_map(bary, GaussianMeasure(mean=np.zeros(dim), cov=c))
        acc += wn * a
    assert np.abs(acc - np.eye(dim)).max() < 1e-8


def test_gaussian_barycenter_budget_exhaustion():
    covs = [random_gaussian(2, stream(72, n)).cov for n in range(2)]
    with pytest.raises(IterationError) as excinfo:
        gaussian_barycenter(covs, [0.5, 0.5], tol=1e-30, max_iter=3)
    assert excinfo.value.residual is not None


def test_bw2_uvp_constant_predictor_is_hundred():
    truth = random_gaussian(5, stream(73))
    constant = GaussianMeasure(mean=truth.mean, cov=np.zeros((5, 5)))
    assert bw2_uvp(constant, truth) == pytest.approx(100.0, abs=1e-9)


def test_bw2_uvp_zero_on_truth():
    truth = random_gaussian(3, stream(74))
    assert bw2_uvp(truth, truth) == pytest.approx(0.0, abs=1e-9)


def test_location_scatter_truth_one_dimensional():
    spec = make_scatter_population(1, 3, seed=7, weights=[0.2, 0.3, 0.5])
    truth = location_scatter_truth(spec)
    # All 1-D scatters are 1.0 (degenerate ladder), so the truth is the base.
    assert truth.cov[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_location_scatter_truth_satisfies_fixed_point():
    spec = make_scatter_population(3, 4, seed=8, weights=[0.1, 0.2, 0.3, 0.4])
    truth = location_scatter_truth(spec)
    root = spd_sqrt(truth.cov)
    mix = sum(w * spd_sqrt(root @ c @ root)
              for w, c in zip(spec.weights, spec.member_covariances()))
    assert np.linalg.norm(mix - truth.cov) / np.linalg.norm(truth.cov) < 1e-12
    assert np.allclose(truth.mean, 0.0)


def test_gaussian_sampler_moments():
    g = random_gaussian(3, stream(75), mean_scale=2.0)
    mean, cov = empirical_moments(gaussian_sampler(g), 400000, stream(76))
    assert np.allclose(mean, g.mean, atol=0.02)
    assert np.allclose(cov, g.cov, atol=0.05)


def test_gaussian_measure_validation():
    with pytest.raises(ValidationError):
        GaussianMeasure(mean=[0.0, 0.0], cov=np.diag([1.0, -1.0]))
    with pytest.raises(ValidationError):
        GaussianMeasure(mean=[0.0], cov=np.eye(2))
    with pytest.raises(ValidationError):
        bures_w2_sq(GaussianMeasure(mean=[0.0], cov=[[1.0]]),
                    GaussianMeasure(mean=[0.0, 0.0], cov=np.eye(2)))
