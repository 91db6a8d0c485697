"""Sampleable probability measures and the benchmark input populations.

A measure is represented by a ``Sampler``: an immutable description that
turns an explicit random stream plus a batch size into a batch of
points.  All mutation lives in the ``numpy.random.Generator`` passed to
``sample``, so samplers can be shared freely across threads.
"""

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .linalg import random_rotation, spd_inv_sqrt
from .rng import as_generator, stream

__all__ = [
    "Sampler",
    "check_weights",
    "base_sampler",
    "pushforward",
    "affine_pushforward",
    "LocationScatterSpec",
    "make_scatter_population",
    "member_samplers",
    "toy2d_sampler",
    "empirical_moments",
    "write_samples_csv",
]

BASE_KINDS = ("gaussian", "uniform")
TOY2D_SHAPES = ("rectangle", "swiss_roll")

# Half-width of the componentwise-standardized uniform base: U[-a, a] has
# variance a^2 / 3, so a = sqrt(3) gives unit variance.
_UNIFORM_HALF_WIDTH = float(np.sqrt(3.0))


def check_weights(weights, n=None, name="weights"):
    """Validate a barycentric weight vector and return it as float64.

    Weights must be strictly positive and sum to one within 1e-8; the
    returned copy is renormalized to machine precision so downstream
    identities that rely on the exact sum hold.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-D vector, got shape {w.shape}")
    if n is not None and w.size != n:
        raise ValidationError(f"{name} must have length {n}, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValidationError(f"{name} must be strictly positive and finite")
    total = w.sum()
    if abs(total - 1.0) > 1e-8:
        raise ValidationError(f"{name} must sum to 1 (got {total:.12g})")
    return w / total


@dataclass(frozen=True)
class Sampler:
    """Immutable sampleable measure.

    Attributes
    ----------
    dim : int
        Ambient dimension of the samples.
    draw : callable
        ``draw(rng, n) -> ndarray of shape (n, dim)``.
    descriptor : dict
        Structured provenance (kind plus parameters); serialized into
        run manifests.
    """

    dim: int
    draw: Callable[[np.random.Generator, int], np.ndarray]
    descriptor: dict = field(default_factory=dict)

    def sample(self, rng, batch_size):
        """Draw ``batch_size`` points using the given stream."""
        if batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
        rng = as_generator(rng)
        x = np.asarray(self.draw(rng, int(batch_size)), dtype=np.float64)
        if x.shape != (batch_size, self.dim):
            raise ValidationError(
                f"sampler {self.descriptor.get('kind', '?')!r} returned shape {x.shape}, "
                f"expected {(batch_size, self.dim)}"
            )
        if not np.all(np.isfinite(x)):
            raise ValidationError(f"sampler {self.descriptor.get('kind', '?')!r} produced non-finite samples")
        return x


def base_sampler(kind, dim, seed=0):
    """Standardized base measure: zero mean, identity covariance.

    Parameters
    ----------
    kind : {"gaussian", "uniform"}
        ``gaussian`` is the standard normal; ``uniform`` is the uniform
        law on the cube ``[-sqrt(3), sqrt(3)]^dim``.
    dim : int
    seed : int
        Recorded in the descriptor as the provenance default stream.
    """
    if kind not in BASE_KINDS:
        raise ValidationError(f"unknown base kind {kind!r}, expected one of {BASE_KINDS}")
    if dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    if kind == "gaussian":
        draw = lambda rng, n: rng.standard_normal((n, dim))
    else:
        a = _UNIFORM_HALF_WIDTH
        draw = lambda rng, n: rng.uniform(-a, a, size=(n, dim))
    return Sampler(dim=dim, draw=draw, descriptor={"kind": kind, "dim": dim, "seed": seed})


def pushforward(sampler, fn, dim_out=None, tag="map"):
    """Image measure of ``sampler`` under ``fn`` (applied batchwise)."""
    dim_out = sampler.dim if dim_out is None else int(dim_out)

    def draw(rng, n):
        return fn(sampler.sample(rng, n))

    descriptor = {"kind": "pushforward", "map": tag, "base": sampler.descriptor}
    return Sampler(dim=dim_out, draw=draw, descriptor=descriptor)


def affine_pushforward(sampler, matrix, shift):
    """Pushforward by ``x -> x @ matrix.T + shift`` with descriptor arithmetic."""
    matrix = np.asarray(matrix, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    if matrix.shape != (shift.size, sampler.dim):
        raise ValidationError(
            f"affine map shapes {matrix.shape} / {shift.shape} do not fit sampler dim {sampler.dim}"
        )

    def draw(rng, n):
        return sampler.sample(rng, n) @ matrix.T + shift

    descriptor = {
        "kind": "affine_pushforward",
        "matrix": matrix.tolist(),
        "shift": shift.tolist(),
        "base": sampler.descriptor,
    }
    return Sampler(dim=shift.size, draw=draw, descriptor=descriptor)


@dataclass(frozen=True)
class LocationScatterSpec:
    """Population of affine images ``S_n X + u_n`` of one standardized base.

    ``scatters[n]`` is the symmetric positive definite scatter ``S_n``
    (so member covariance is ``S_n @ S_n``), ``shifts[n]`` the location
    ``u_n``, and ``weights`` the barycentric weights.
    """

    base_kind: str
    scatters: tuple
    shifts: tuple
    weights: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.base_kind not in BASE_KINDS:
            raise ValidationError(f"unknown base kind {self.base_kind!r}")
        if not (len(self.scatters) == len(self.shifts) == self.weights.size):
            raise ValidationError("scatters, shifts, and weights must have equal length")

    @property
    def dim(self):
        return self.scatters[0].shape[0]

    @property
    def n_members(self):
        return len(self.scatters)

    def member_covariances(self):
        """Covariances ``S_n @ S_n`` of the members (base is standardized)."""
        return [s @ s for s in self.scatters]


def _anisotropy_profile(dim):
    # Geometric ladder of axis scales from 1/2 to 2; one entry in D = 1.
    if dim == 1:
        return np.ones(1)
    ratio = 4.0 ** (1.0 / (dim - 1))
    return 0.5 * ratio ** np.arange(dim)


def make_scatter_population(dim, n_members, seed, weights=None, base_kind="gaussian",
                            shift_scale=0.0):
    """Benchmark input population: randomly rotated anisotropic scatters.

    Member ``n`` has scatter ``S_n = R_n.T @ diag(profile) @ R_n`` with an
    independent random rotation ``R_n`` per member and the fixed axis
    profile running geometrically from 1/2 to 2.  Locations are zero
    unless ``shift_scale > 0``, in which case they are i.i.d. normal with
    that scale.
    """
    if n_members < 1:
        raise ValidationError(f"n_members must be >= 1, got {n_members}")
    weights = (np.full(n_members, 1.0 / n_members) if weights is None
               else check_weights(weights, n_members))
    profile = np.diag(_anisotropy_profile(dim))
    scatters, shifts = [], []
    for n in range(n_members):
        if dim == 1:
            rot = np.eye(1)
        else:
            rot = random_rotation(dim, stream(seed, "rotation", n))
        scatters.append(rot.T @ profile @ rot)
        if shift_scale > 0:
            shifts.append(shift_scale * stream(seed, "shift", n).standard_normal(dim))
        else:
            shifts.append(np.zeros(dim))
    return LocationScatterSpec(
        base_kind=base_kind,
        scatters=tuple(scatters),
        shifts=tuple(shifts),
        weights=weights,
        seed=int(seed),
    )


def member_samplers(spec):
    """Samplers for the members of a location-scatter population."""
    base = base_sampler(spec.base_kind, spec.dim, seed=spec.seed)
    return [affine_pushforward(base, s, u) for s, u in zip(spec.scatters, spec.shifts)]


def _spiral_points(rng, n):
    # Two-turn spiral with radial Gaussian noise, before standardization.
    u = rng.random(n)
    theta = 4.0 * np.pi * u
    radius = 0.5 + u + 0.1 * rng.standard_normal(n)
    return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)


def _spiral_moments(n_grid=200001):
    # Trapezoid quadrature of the exact first and second moments over the
    # arclength parameter; quadrature error is far below sampling noise.
    u = np.linspace(0.0, 1.0, n_grid)
    theta = 4.0 * np.pi * u
    d = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    r = 0.5 + u
    w = np.full(n_grid, 1.0 / (n_grid - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    mean = (w * r) @ d
    second = np.einsum("g,gi,gj->ij", w * (r ** 2 + 0.1 ** 2), d, d)
    cov = second - np.outer(mean, mean)
    return mean, cov


def toy2d_sampler(shape, seed=0):
    """Standardized 2-D toy measure.

    ``rectangle`` is the uniform law on ``[-2, 2] x [-1, 1]`` scaled
    componentwise to unit variance; ``swiss_roll`` is a two-turn noisy
    spiral whitened to zero mean and identity covariance.
    """
    if shape not in TOY2D_SHAPES:
        raise ValidationError(f"unknown toy2d shape {shape!r}, expected one of {TOY2D_SHAPES}")
    if shape == "rectangle":
        scale = np.array([np.sqrt(3.0) / 2.0, np.sqrt(3.0)])

        def draw(rng, n):
            x = np.stack([rng.uniform(-2.0, 2.0, n), rng.uniform(-1.0, 1.0, n)], axis=1)
            return x * scale
    else:
        mean, cov = _spiral_moments()
        whiten = spd_inv_sqrt(cov, name="spiral covariance")

        def draw(rng, n):
            return (_spiral_points(rng, n) - mean) @ whiten

    return Sampler(dim=2, draw=draw, descriptor={"kind": "toy2d", "shape": shape, "seed": seed})


def empirical_moments(sampler, n_samples, rng, chunk=65536):
    """Empirical mean and covariance from ``n_samples`` fresh draws.

    Draws in chunks so memory stays bounded; covariance uses the
    unbiased (n - 1) normalization.
    """
    if n_samples < 2:
        raise ValidationError(f"n_samples must be >= 2, got {n_samples}")
    rng = as_generator(rng)
    d = sampler.dim
    total = 0
    s1 = np.zeros(d)
    s2 = np.zeros((d, d))
    remaining = int(n_samples)
    while remaining > 0:
        n = min(chunk, remaining)
        x = sampler.sample(rng, n)
        s1 += x.sum(axis=0)
        s2 += x.T @ x
        total += n
        remaining -= n
    mean = s1 / total
    cov = (s2 - total * np.outer(mean, mean)) / (total - 1)
    return mean, cov


def write_samples_csv(sampler, n_samples, rng, path):
    """Export samples as CSV with header ``x0,...,x{dim-1}`` at full precision."""
    rng = as_generator(rng)
    x = sampler.sample(rng, n_samples)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(sampler.dim)])
        for row in x:
            writer.writerow([f"{v:.17g}" for v in row])
    return path
