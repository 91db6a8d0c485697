"""Benchmark populations with analytically known barycenters.

The construction starts from smooth convex potentials ``psi_m`` and a
mixing parameter ``beta_m`` per potential.  For a query point ``x`` the
pair of points

``y_left = argmax_y <x, y> - beta |y|^2 / 2 - (1 - beta) psi(y)``
``y_right = grad psi(y_left)``

satisfies ``beta * y_left + (1 - beta) * y_right = x`` exactly (first
order optimality).  Mixing left and right points of several potentials
through column-stochastic allocation matrices yields maps ``g_n`` that
are gradients of convex functions and average to the identity, so the
input measures ``g_n # base`` have the base itself as their barycenter
under the induced weights.  That gives a ground-truth benchmark far
outside the Gaussian family.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IterationError, ValidationError
from .measures import check_weights, pushforward
from .rng import as_generator

__all__ = [
    "ConjugateSolveConfig",
    "ConvexQuadratic",
    "LogSumExpPotential",
    "grad_left",
    "grad_pair",
    "grad_right",
    "CongruentSystem",
    "chain_system",
    "verify_congruence",
    "make_known_barycenter_dataset",
    "system_to_json",
    "system_from_json",
]


@dataclass(frozen=True)
class ConjugateSolveConfig:
    """Inner solve for the left point: Adam ascent until the first-order
    residual drops below ``tol`` (at most ``max_steps`` iterations)."""

    learning_rate: float = 2e-2
    max_steps: int = 1000
    tol: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.max_steps < 1 or self.tol <= 0:
            raise ValidationError(f"invalid conjugate solve config: {self}")


class ConvexQuadratic:
    """Potential ``psi(x) = 0.5 * x^T A x`` with symmetric positive definite A.

    All conjugate-pair quantities have closed forms, which makes this
    family the exact reference route next to the iterative solver.
    """

    family = "quadratic"

    def __init__(self, matrix):
        from .linalg import check_symmetric
        a = check_symmetric(np.asarray(matrix, dtype=np.float64), "quadratic matrix")
        eigvals, eigvecs = np.linalg.eigh(a)
        if eigvals[0] <= 0:
            raise ValidationError(f"quadratic matrix must be positive definite "
                                  f"(smallest eigenvalue {eigvals[0]:.3e})")
        self.matrix = a
        self._eigvals = eigvals
        self._eigvecs = eigvecs

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def strong_convexity(self):
        return float(self._eigvals[0])

    @property
    def smoothness(self):
        return float(self._eigvals[-1])

    def value(self, x):
        """Quadratic potential values, one per row of ``x``."""
        return 0.5 * np.einsum("bi,ij,bj->b", x, self.matrix, x)

    def grad(self, x):
        """Gradient ``x A``, rowwise."""
        return x @ self.matrix

    def argmax_left(self, beta, x):
        """Closed-form left point: ``(beta I + (1 - beta) A)^-1 x``."""
        scale = 1.0 / (beta + (1.0 - beta) * self._eigvals)
        return (x @ self._eigvecs) * scale @ self._eigvecs.T

    def left_value(self, beta, x):
        """Conjugate of ``beta |.|^2/2 + (1-beta) psi`` at ``x``."""
        scale = 1.0 / (beta + (1.0 - beta) * self._eigvals)
        return 0.5 * np.einsum("bi,i,bi->b", x @ self._eigvecs, scale, x @ self._eigvecs)

    def right_value(self, beta, x):
        """Counterpart conjugate: ``0.5 x^T ((1-beta) I + beta A^-1)^-1 x``."""
        scale = 1.0 / ((1.0 - beta) + beta / self._eigvals)
        return 0.5 * np.einsum("bi,i,bi->b", x @ self._eigvecs, scale, x @ self._eigvecs)

    def descriptor(self):
        """JSON-serializable reconstruction record."""
        return {"family": self.family, "matrix": self.matrix.tolist()}


class LogSumExpPotential:
    """Potential ``psi(x) = lam |x|^2 / 2 + eps * logsumexp_k(<a_k, x> + b_k)``.

    Strongly convex with parameter ``lam`` and smooth with parameter at
    most ``lam + eps * max_k |a_k|^2``; has no closed-form conjugate, so
    it exercises the iterative solve path.
    """

    family = "log_sum_exp"

    def __init__(self, lam, eps, planes, offsets):
        planes = np.asarray(planes, dtype=np.float64)
        offsets = np.asarray(offsets, dtype=np.float64)
        if lam <= 0 or eps <= 0:
            raise ValidationError(f"lam and eps must be positive, got {lam}, {eps}")
        if planes.ndim != 2 or offsets.shape != (planes.shape[0],):
            raise ValidationError(f"planes {planes.shape} and offsets {offsets.shape} disagree")
        self.lam = float(lam)
        self.eps = float(eps)
        self.planes = planes
        self.offsets = offsets

    @classmethod
    def random(cls, dim, rng, n_planes=8, lam=0.2, eps=1.0):
        """Random instance with plane normals of typical unit length."""
        rng = as_generator(rng)
        planes = rng.standard_normal((n_planes, dim)) / np.sqrt(dim)
        offsets = 0.5 * rng.standard_normal(n_planes)
        return cls(lam=lam, eps=eps, planes=planes, offsets=offsets)

    @property
    def dim(self):
        return self.planes.shape[1]

    @property
    def strong_convexity(self):
        return self.lam

    @property
    def smoothness(self):
        return self.lam + self.eps * float(np.max(np.sum(self.planes ** 2, axis=1)))

    def _scores(self, x):
        return x @ self.planes.T + self.offsets

    def value(self, x):
        """Regularized log-sum-exp potential values, one per row."""
        s = self._scores(x)
        peak = s.max(axis=1, keepdims=True)
        lse = peak[:, 0] + np.log(np.exp(s - peak).sum(axis=1))
        return 0.5 * self.lam * np.sum(x ** 2, axis=1) + self.eps * lse

    def grad(self, x):
        """Gradient: ``lam x`` plus the softmax-weighted plane mix."""
        s = self._scores(x)
        s = s - s.max(axis=1, keepdims=True)
        p = np.exp(s)
        p /= p.sum(axis=1, keepdims=True)
        return self.lam * x + self.eps * (p @ self.planes)

    def descriptor(self):
        """JSON-serializable reconstruction record."""
        return {
            "family": self.family,
            "lam": self.lam,
            "eps": self.eps,
            "planes": self.planes.tolist(),
            "offsets": self.offsets.tolist(),
        }


def _check_beta(beta):
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"beta must lie in (0, 1), got {beta}")
    return beta


def grad_left(psi, beta, x, solve=None, method="auto"):
    """Left point of the conjugate pair for each row of ``x``.

    ``method="analytic"`` requires the potential to provide a closed
    form (``argmax_left``); ``"iterative"`` forces the Adam solve;
    ``"auto"`` prefers the closed form when available.

    Raises
    ------
    IterationError
        If the iterative solve exhausts its step budget with the worst
        per-point residual still above tolerance.
    """
    beta = _check_beta(beta)
    x = np.asarray(x, dtype=np.float64)
    if method not in ("auto", "analytic", "iterative"):
        raise ValidationError(f"unknown method {method!r}")
    if method != "iterative" and hasattr(psi, "argmax_left"):
        return psi.argmax_left(beta, x)
    if method == "analytic":
        raise ValidationError(f"potential {type(psi).__name__} has no closed-form left point")
    solve = solve or ConjugateSolveConfig()
    y = x.copy()
    m = np.zeros_like(y)
    v = np.zeros_like(y)
    beta1, beta2, eps_hat = 0.9, 0.999, 1e-8
    best_y, best_residual = y, np.inf

    def first_order_gap(y):
        return x - beta * y - (1.0 - beta) * psi.grad(y)

    for t in range(1, solve.max_steps + 1):
        g = first_order_gap(y)
        residual = float(np.sqrt(np.sum(g ** 2, axis=1)).max())
        if residual < best_residual:
            best_y, best_residual = y, residual
        if residual < solve.tol:
            return y
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g ** 2
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        y = y + solve.learning_rate * m_hat / (np.sqrt(v_hat) + eps_hat)

    # Adam's normalized steps plateau near the learning-rate scale on some
    # instances; finish with fixed-step ascent whose contraction rate is
    # guaranteed by the potential's convexity constants.
    mu = beta + (1.0 - beta) * psi.strong_convexity
    lip = beta + (1.0 - beta) * psi.smoothness
    step = 2.0 / (mu + lip)
    y = best_y
    residual = best_residual
    for _ in range(solve.max_steps):
        g = first_order_gap(y)
        residual = float(np.sqrt(np.sum(g ** 2, axis=1)).max())
        if residual < solve.tol:
            return y
        y = y + step * g
    raise IterationError(
        f"conjugate solve stalled at residual {residual:.3e} "
        f"(tol {solve.tol:g}, {2 * solve.max_steps} steps)",
        residual=residual,
        iterations=2 * solve.max_steps,
    )


def grad_pair(psi, beta, x, solve=None, method="auto"):
    """Left and right points; ``beta*left + (1-beta)*right = x`` up to solve error."""
    left = grad_left(psi, beta, x, solve=solve, method=method)
    right = psi.grad(left)
    return left, right


def grad_right(psi, beta, x, solve=None, method="auto"):
    """Right point ``grad psi(y_left)`` of the conjugate pair."""
    return grad_pair(psi, beta, x, solve=solve, method=method)[1]


def _check_allocation(gamma, n_members, n_functions, name):
    g = np.asarray(gamma, dtype=np.float64)
    if g.shape != (n_members, n_functions):
        raise ValidationError(f"{name} must have shape {(n_members, n_functions)}, got {g.shape}")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValidationError(f"{name} must be non-negative and finite")
    cols = g.sum(axis=0)
    if np.abs(cols - 1.0).max() > 1e-12:
        raise ValidationError(f"{name} columns must sum to 1 (got {cols})")
    return g


@dataclass(frozen=True)
class CongruentSystem:
    """Family of maps ``g_n`` that average to the identity by construction.

    ``g_n(x) = sum_m w_m (beta_m gl[n,m] left_m(x) + (1-beta_m) gr[n,m] right_m(x)) / alpha_n``
    with ``alpha_n = sum_m w_m (beta_m gl[n,m] + (1-beta_m) gr[n,m])``.
    Both allocation matrices are column-stochastic, which makes
    ``sum_n alpha_n g_n(x) = x`` and ``sum_n alpha_n = 1``.
    """

    functions: tuple
    betas: np.ndarray
    base_weights: np.ndarray
    gamma_left: np.ndarray
    gamma_right: np.ndarray
    solve: ConjugateSolveConfig = field(default_factory=ConjugateSolveConfig)

    def __post_init__(self):
        functions = tuple(self.functions)
        m = len(functions)
        if m == 0:
            raise ValidationError("system needs at least one potential")
        dims = {f.dim for f in functions}
        if len(dims) != 1:
            raise ValidationError(f"potentials disagree on dimension: {sorted(dims)}")
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.shape != (m,):
            raise ValidationError(f"betas must have shape ({m},), got {betas.shape}")
        for b in betas:
            _check_beta(b)
        base_weights = check_weights(self.base_weights, m, name="base_weights")
        n = np.asarray(self.gamma_left).shape[0] if np.asarray(self.gamma_left).ndim == 2 else 0
        gl = _check_allocation(self.gamma_left, n, m, "gamma_left")
        gr = _check_allocation(self.gamma_right, n, m, "gamma_right")
        alpha = gl @ (base_weights * betas) + gr @ (base_weights * (1.0 - betas))
        if np.any(alpha <= 0):
            raise ValidationError(f"every member must receive positive weight, got alpha={alpha}")
        object.__setattr__(self, "functions", functions)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "base_weights", base_weights)
        object.__setattr__(self, "gamma_left", gl)
        object.__setattr__(self, "gamma_right", gr)

    @property
    def dim(self):
        return self.functions[0].dim

    @property
    def n_members(self):
        return self.gamma_left.shape[0]

    @property
    def weights(self):
        """Barycentric weights ``alpha`` induced by the allocation."""
        return (self.gamma_left @ (self.base_weights * self.betas)
                + self.gamma_right @ (self.base_weights * (1.0 - self.betas)))

    def conjugate_pairs(self, x, method="auto"):
        """Left/right points of every potential at ``x``; two (M, B, dim) arrays."""
        x = np.asarray(x, dtype=np.float64)
        lefts, rights = [], []
        for psi, beta in zip(self.functions, self.betas):
            left, right = grad_pair(psi, beta, x, solve=self.solve, method=method)
            lefts.append(left)
            rights.append(right)
        return np.stack(lefts), np.stack(rights)

    def system_grads(self, x, method="auto"):
        """All member maps at ``x`` as an (n_members, batch, dim) array."""
        lefts, rights = self.conjugate_pairs(x, method=method)
        wl = self.base_weights * self.betas
        wr = self.base_weights * (1.0 - self.betas)
        alpha = self.weights
        num = (np.einsum("nm,mbd->nbd", self.gamma_left * wl, lefts)
               + np.einsum("nm,mbd->nbd", self.gamma_right * wr, rights))
        return num / alpha[:, None, None]

    def member_grad(self, index, x, method="auto"):
        """Map ``g_n`` of one member at ``x``."""
        if not 0 <= index < self.n_members:
            raise ValidationError(f"member index {index} out of range")
        return self.system_grads(np.asarray(x, dtype=np.float64), method=method)[index]


def chain_system(functions, betas=None, base_weights=None, solve=None):
    """Chain allocation: potential m sends its left point to member m and
    its right point to member m + 1, giving N = M + 1 members."""
    m = len(functions)
    betas = np.full(m, 0.5) if betas is None else np.asarray(betas, dtype=np.float64)
    base_weights = (np.full(m, 1.0 / m) if base_weights is None
                    else np.asarray(base_weights, dtype=np.float64))
    gl = np.zeros((m + 1, m))
    gr = np.zeros((m + 1, m))
    for j in range(m):
        gl[j, j] = 1.0
        gr[j + 1, j] = 1.0
    kwargs = {} if solve is None else {"solve": solve}
    return CongruentSystem(functions=tuple(functions), betas=betas,
                           base_weights=base_weights, gamma_left=gl,
                           gamma_right=gr, **kwargs)


def verify_congruence(system, points, method="auto"):
    """Worst-case identity defect, ``max_b |mix(x_b) - x_b| / (1 + |x_b|)``
    with ``mix = sum_n alpha_n g_n``."""
    x = np.asarray(points, dtype=np.float64)
    grads = system.system_grads(x, method=method)
    mix = np.einsum("n,nbd->bd", system.weights, grads)
    defect = np.sqrt(np.sum((mix - x) ** 2, axis=1))
    return float((defect / (1.0 + np.sqrt(np.sum(x ** 2, axis=1)))).max())


def make_known_barycenter_dataset(base, system):
    """Input samplers ``g_n # base`` whose barycenter is ``base`` itself.

    Returns
    -------
    (members, weights) : list of Sampler, ndarray
        One pushforward sampler per member and the matching barycentric
        weights ``alpha``.
    """
    if base.dim != system.dim:
        raise ValidationError(f"base dim {base.dim} does not match system dim {system.dim}")
    members = []
    for n in range(system.n_members):
        fn = (lambda pts, idx=n: system.member_grad(idx, pts))
        members.append(pushforward(base, fn, tag=f"congruent_member_{n}"))
    return members, system.weights


def system_to_json(system):
    """Serialize a system to a JSON string; exact float round trip."""
    payload = {
        "schema": "congruent-system-v1",
        "betas": system.betas.tolist(),
        "base_weights": system.base_weights.tolist(),
        "gamma_left": system.gamma_left.tolist(),
        "gamma_right": system.gamma_right.tolist(),
        "solve": {
            "learning_rate": system.solve.learning_rate,
            "max_steps": system.solve.max_steps,
            "tol": system.solve.tol,
        },
        "functions": [f.descriptor() for f in system.functions],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def _function_from_descriptor(desc):
    family = desc.get("family")
    if family == "quadratic":
        return ConvexQuadratic(desc["matrix"])
    if family == "log_sum_exp":
        return LogSumExpPotential(lam=desc["lam"], eps=desc["eps"],
                                  planes=desc["planes"], offsets=desc["offsets"])
    raise ValidationError(f"unknown potential family {family!r}")


def system_from_json(text):
    """Inverse of ``system_to_json``."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed system JSON: {exc}") from exc
    if payload.get("schema") != "congruent-system-v1":
        raise ValidationError(f"unsupported system schema {payload.get('schema')!r}")
    try:
        solve = ConjugateSolveConfig(**payload["solve"])
        return CongruentSystem(
            functions=tuple(_function_from_descriptor(d) for d in payload["functions"]),
            betas=np.asarray(payload["betas"], dtype=np.float64),
            base_weights=np.asarray(payload["base_weights"], dtype=np.float64),
            gamma_left=np.asarray(payload["gamma_left"], dtype=np.float64),
            gamma_right=np.asarray(payload["gamma_right"], dtype=np.float64),
            solve=solve,
        )
    except KeyError as exc:
        raise ValidationError(f"system JSON missing field {exc}") from exc
