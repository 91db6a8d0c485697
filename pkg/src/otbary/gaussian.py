"""Closed-form optimal-transport references for Gaussian and
location-scatter measures.

Squared distances use the half-quadratic cost ``min E 0.5 * |x - T(x)|^2``
throughout the package, so every formula here carries the same factor
one half.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IterationError, ValidationError
from .linalg import check_symmetric, spd_inv_sqrt, spd_sqrt, symmetrize
from .measures import affine_pushforward, base_sampler, check_weights

__all__ = [
    "GaussianMeasure",
    "bures_w2_sq",
    "gaussian_ot_map",
    "gaussian_barycenter",
    "bw2_uvp",
    "location_scatter_truth",
    "gaussian_sampler",
]


@dataclass(frozen=True)
class GaussianMeasure:
    """Normal law N(mean, cov); cov must be symmetric positive semi-definite."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = check_symmetric(np.asarray(self.cov, dtype=np.float64), "cov")
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValidationError(f"mean shape {mean.shape} and cov shape {cov.shape} disagree")
        spd_sqrt(cov, name="cov")  # rejects indefinite matrices
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size


def bures_w2_sq(p, q):
    """Squared Wasserstein-2 distance between Gaussians, half-quadratic cost.

    ``0.5 * (|mu_p - mu_q|^2 + tr(cov_p + cov_q - 2 (cov_q^1/2 cov_p cov_q^1/2)^1/2))``.
    """
    if p.dim != q.dim:
        raise ValidationError(f"dimension mismatch: {p.dim} vs {q.dim}")
    root_q = spd_sqrt(q.cov)
    cross = spd_sqrt(root_q @ p.cov @ root_q)
    trace_term = np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross)
    loc_term = float(np.sum((p.mean - q.mean) ** 2))
    return 0.5 * (loc_term + max(trace_term, 0.0))


def gaussian_ot_map(p, q):
    """Optimal map from N(mu_p, cov_p) to N(mu_q, cov_q): ``x -> A x + b``.

    ``A = cov_p^-1/2 (cov_p^1/2 cov_q cov_p^1/2)^1/2 cov_p^-1/2`` and
    ``b = mu_q - A mu_p``.  The source must be non-degenerate.

    Returns
    -------
    (A, b) : ndarray of shape (d, d), ndarray of shape (d,)
    """
    if p.dim != q.dim:
        raise ValidationError(f"dimension mismatch: {p.dim} vs {q.dim}")
    inv_root_p = spd_inv_sqrt(p.cov, name="source cov")
    root_p = spd_sqrt(p.cov)
    mid = spd_sqrt(root_p @ q.cov @ root_p)
    a = symmetrize(inv_root_p @ mid @ inv_root_p)
    b = q.mean - a @ p.mean
    return a, b


def gaussian_barycenter(covs, weights, tol=1e-12, max_iter=10000):
    """Covariance of the weighted Wasserstein-2 barycenter of centered Gaussians.

    Runs the matrix fixed-point iteration

    ``S <- S^-1/2 (sum_n w_n (S^1/2 C_n S^1/2)^1/2)^2 S^-1/2``

    from ``S = sum_n w_n C_n`` until the relative Frobenius residual of
    one update falls below ``tol``.

    Raises
    ------
    IterationError
        If ``max_iter`` updates do not reach ``tol``; the exception
        carries the last residual.
    """
    weights = check_weights(weights, len(covs))
    covs = [check_symmetric(np.asarray(c, dtype=np.float64), f"cov[{n}]")
            for n, c in enumerate(covs)]
    dim = covs[0].shape[0]
    for n, c in enumerate(covs):
        if c.shape != (dim, dim):
            raise ValidationError(f"cov[{n}] has shape {c.shape}, expected {(dim, dim)}")

    def update(s):
        root = spd_sqrt(s)
        inv_root = spd_inv_sqrt(s)
        mix = np.zeros_like(s)
        for w, c in zip(weights, covs):
            mix += w * spd_sqrt(root @ c @ root)
        return symmetrize(inv_root @ mix @ mix @ inv_root)

    s = symmetrize(sum(w * c for w, c in zip(weights, covs)))
    residual = np.inf
    for _ in range(int(max_iter)):
        s_next = update(s)
        residual = np.linalg.norm(s_next - s) / max(np.linalg.norm(s), np.finfo(float).tiny)
        s = s_next
        if residual < tol:
            return s
    raise IterationError(
        f"barycenter fixed point did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {residual:.3e})",
        residual=residual,
        iterations=int(max_iter),
    )


def bw2_uvp(estimate, truth):
    """Unexplained variance percentage of a Gaussian approximation.

    ``100 * bures_w2_sq(estimate, truth) / (0.5 * tr(cov_truth))``; the
    constant predictor concentrated at the true mean scores exactly 100.
    """
    denom = 0.5 * float(np.trace(truth.cov))
    if denom <= 0:
        raise ValidationError("truth covariance has non-positive trace")
    return 100.0 * bures_w2_sq(estimate, truth) / denom


def location_scatter_truth(spec, tol=1e-12, max_iter=10000):
    """Exact barycenter moments of a location-scatter population.

    The barycenter of affine images of one standardized base stays in
    the family: its mean is the weighted mean of locations and its
    covariance solves the same fixed point as in the Gaussian case.
    """
    cov = gaussian_barycenter(spec.member_covariances(), spec.weights,
                              tol=tol, max_iter=max_iter)
    mean = sum(w * u for w, u in zip(spec.weights, spec.shifts))
    return GaussianMeasure(mean=np.asarray(mean, dtype=np.float64), cov=cov)


def gaussian_sampler(measure, seed=0):
    """Sampler for ``measure`` as an affine image of the standard normal."""
    root = spd_sqrt(measure.cov)
    base = base_sampler("gaussian", measure.dim, seed=seed)
    return affine_pushforward(base, root, measure.mean)
