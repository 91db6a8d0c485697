"""Barycenter estimation as a generative fixed-point iteration.

A generator network pushes a latent measure forward to the current
barycenter estimate.  Each outer iteration alternates two phases:

1. For every input measure, advance its adversarial solver pair so that
   its map network transports the *current* generated measure toward
   that input.
2. Freeze a copy of the generator, form the weighted average of the
   transported frozen samples, and regress the live generator onto that
   average: ``loss_G = mean 0.5 |G(z) - sum_n w_n T_n(G_frozen(z))|^2``.

At the fixed point the generated measure reproduces itself under the
averaged transport maps, which characterizes the barycenter.  Solver
networks and optimizer moments persist across outer iterations (warm
start); a config flag resets moments instead.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .gaussian import GaussianMeasure, bures_w2_sq, bw2_uvp
from .measures import Sampler, base_sampler, check_weights, empirical_moments, pushforward
from .nn import AdamState, LrSchedule, Mlp, adam_step, he_init
from .rng import as_generator, stream
from .solver import MmrConfig, make_mmr_pair, mmr_update

__all__ = [
    "TrainConfig",
    "TrainState",
    "MetricsRow",
    "OuterResult",
    "init_state",
    "generated_sampler",
    "update_transport_maps",
    "regress_generator",
    "run_outer_iteration",
    "train",
    "variational_gradient_check",
    "BaselineResult",
    "constant_shift_baseline",
]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the outer fixed-point training loop."""

    outer_iterations: int = 100
    generator_steps: int = 50
    potential_steps: int = 50
    map_inner_steps: int = 10
    batch_size: int = 256
    lr_generator: float = 1e-4
    lr_potential: float = 1e-3
    lr_map: float = 1e-3
    lr_decay_every: int = 1000
    lr_decay_every_map: int = 0   # 0: aligned to the solver clock
    lr_decay_factor: float = 0.5
    latent_dim: int = 0           # 0: same as the data dimension
    hidden_width: int = 0         # 0: max(100, 2 * dim)
    hidden_depth: int = 3
    eval_samples: int = 16384
    reset_solver_moments: bool = False
    n_threads: int = 1

    def __post_init__(self):
        if min(self.outer_iterations, self.potential_steps,
               self.map_inner_steps, self.batch_size, self.hidden_depth) < 1:
            raise ValidationError(f"step counts and batch must be >= 1: {self}")
        if self.generator_steps < 0:  # 0 is the fixed-generator mode
            raise ValidationError(f"generator_steps must be >= 0: {self}")
        if min(self.lr_generator, self.lr_potential, self.lr_map) <= 0:
            raise ValidationError(f"learning rates must be positive: {self}")
        if self.eval_samples < 2 or self.n_threads < 1:
            raise ValidationError(f"eval_samples must be >= 2 and n_threads >= 1: {self}")

    def resolved_width(self, dim):
        """Hidden width for data dimension ``dim`` (0 means auto)."""
        return self.hidden_width if self.hidden_width > 0 else max(100, 2 * dim)

    def resolved_latent_dim(self, dim):
        """Latent dimension for data dimension ``dim`` (0 means same)."""
        return self.latent_dim if self.latent_dim > 0 else dim

    def mmr_config(self, dim):
        """Solver configuration induced by these training hyperparameters."""
        return MmrConfig(
            batch_size=self.batch_size,
            potential_steps=self.potential_steps,
            map_inner_steps=self.map_inner_steps,
            lr_potential=self.lr_potential,
            lr_map=self.lr_map,
            lr_decay_every=self.lr_decay_every,
            lr_decay_every_map=self.lr_decay_every_map,
            lr_decay_factor=self.lr_decay_factor,
            hidden_width=self.resolved_width(dim),
            hidden_depth=self.hidden_depth,
        )


@dataclass
class TrainState:
    """Mutable training state: generator, its optimizer, and one solver pair
    per input measure."""

    generator: Mlp
    gen_adam: AdamState
    gen_schedule: LrSchedule
    latent: Sampler
    pairs: list
    weights: np.ndarray
    outer_iteration: int = 0

    @property
    def dim(self):
        return self.generator.layer_sizes[-1]


@dataclass(frozen=True)
class MetricsRow:
    """Per-outer-iteration diagnostics (CSV row)."""

    outer_iter: int
    proxy_objective: float
    uvp_vs_truth: float  # NaN when no ground truth is known
    loss_g_mean: float


@dataclass(frozen=True)
class OuterResult:
    """Per-iteration diagnostics: one solver trace per input, generator losses."""

    solver_traces: list
    generator_losses: list


def init_state(dim, n_inputs, weights, cfg, seed):
    """Fresh training state for ``n_inputs`` measures of dimension ``dim``."""
    weights = check_weights(weights, n_inputs)
    latent_dim = cfg.resolved_latent_dim(dim)
    width = cfg.resolved_width(dim)
    latent = base_sampler("gaussian", latent_dim, seed=seed)
    generator = he_init([latent_dim] + [width] * cfg.hidden_depth + [dim],
                        stream(seed, "generator-init"))
    mmr_cfg = cfg.mmr_config(dim)
    pairs = [make_mmr_pair(dim, mmr_cfg, stream(seed, "pair-init", n))
             for n in range(n_inputs)]
    return TrainState(
        generator=generator,
        gen_adam=AdamState.create(generator.n_params, cfg.lr_generator),
        gen_schedule=LrSchedule(cfg.lr_generator, cfg.lr_decay_every, cfg.lr_decay_factor),
        latent=latent,
        pairs=pairs,
        weights=weights,
    )


def generated_sampler(state):
    """Live view of the generated measure (tracks generator updates)."""
    return pushforward(state.latent, lambda z: state.generator.forward(z),
                       dim_out=state.dim, tag="generator")


def update_transport_maps(state, inputs, cfg, rngs):
    """Phase 1: advance every solver pair toward its input measure."""
    if len(inputs) != len(state.pairs) or len(rngs) != len(state.pairs):
        raise ValidationError("inputs and rngs must match the number of solver pairs")
    source = generated_sampler(state)
    mmr_cfg = cfg.mmr_config(state.dim)

    def work(n):
        if cfg.reset_solver_moments:
            state.pairs[n].reset_moments()
        return mmr_update(state.pairs[n], source, inputs[n], mmr_cfg, rngs[n])

    if cfg.n_threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_threads) as pool:
            return list(pool.map(work, range(len(inputs))))
    return [work(n) for n in range(len(inputs))]


def regress_generator(state, cfg, rng, map_fns=None, probe_latent=None):
    """Phase 2: regress the generator onto the frozen averaged transport.

    The regression target uses an immutable copy of the generator taken
    at entry, so the target distribution is fixed during the inner loop.
    ``map_fns`` overrides the live map networks (used by the equivalence
    check and by exact-map experiments).  When ``probe_latent`` is given,
    the target of that batch is evaluated before and after the loop and
    both copies are returned; they must match bitwise since nothing the
    target depends on is updated here.

    Returns ``(losses, probe_targets)``.
    """
    frozen = state.generator.copy()
    if map_fns is None:
        map_fns = [pair.map_net.forward for pair in state.pairs]
    if len(map_fns) != state.weights.size:
        raise ValidationError("one map per weight required")

    def target_of(z):
        x0 = frozen.forward(z)
        acc = np.zeros_like(x0)
        for w, fn in zip(state.weights, map_fns):
            acc += w * fn(x0)
        return acc

    probe_first = None if probe_latent is None else target_of(probe_latent)
    batch = cfg.batch_size
    losses = []
    for _ in range(cfg.generator_steps):
        z = state.latent.sample(rng, batch)
        target = target_of(z)
        x = state.generator.forward(z)
        loss = float(0.5 * np.sum((x - target) ** 2) / batch)
        if not math.isfinite(loss):
            raise NumericalError(
                f"generator loss diverged at step {state.gen_adam.step_count}"
            )
        grad, _ = state.generator.backward(z, (x - target) / batch)
        params = adam_step(state.gen_adam, state.generator.get_params(), grad,
                           state.gen_schedule)
        state.generator.set_params(params)
        losses.append(loss)
    probe_last = None if probe_latent is None else target_of(probe_latent)
    probes = None if probe_latent is None else (probe_first, probe_last)
    return losses, probes


def run_outer_iteration(state, inputs, cfg, rng):
    """One outer iteration: solver phase, then generator regression.

    Per-pair streams are spawned from ``rng`` up front, so results do not
    depend on ``cfg.n_threads``.
    """
    rng = as_generator(rng)
    children = rng.spawn(len(inputs) + 1)
    traces = update_transport_maps(state, inputs, cfg, children[:-1])
    losses, _ = regress_generator(state, cfg, children[-1])
    state.outer_iteration += 1
    return OuterResult(solver_traces=traces, generator_losses=losses)


def _moment_gaussian(x):
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return GaussianMeasure(mean=mean, cov=cov)


def train(inputs, weights, cfg, seed, truth=None, trace_sink=None):
    """Full training loop with per-iteration diagnostics.

    The proxy objective is the weighted Bures distance between moment
    Gaussians of the generated measure and of each input; all evaluation
    batches are drawn once up front (common random numbers), so the
    recorded sequence is comparable across iterations.

    Parameters
    ----------
    inputs : list of Sampler
    weights : array-like
    cfg : TrainConfig
    seed : int
    truth : GaussianMeasure, optional
        Known barycenter moments; enables the UVP column.
    trace_sink : callable, optional
        Called as ``trace_sink(outer_iter, solver_traces)`` after every
        outer iteration; used by the experiment runner to persist traces.

    Returns
    -------
    (state, metrics) : TrainState, list of MetricsRow
    """
    if not inputs:
        raise ValidationError("need at least one input measure")
    dim = inputs[0].dim
    for n, s in enumerate(inputs):
        if s.dim != dim:
            raise ValidationError(f"input {n} has dim {s.dim}, expected {dim}")
    weights = check_weights(weights, len(inputs))
    state = init_state(dim, len(inputs), weights, cfg, seed)
    z_eval = state.latent.sample(stream(seed, "eval", "latent"), cfg.eval_samples)
    input_refs = []
    for n, s in enumerate(inputs):
        mean, cov = empirical_moments(s, cfg.eval_samples, stream(seed, "eval", "input", n))
        input_refs.append(GaussianMeasure(mean=mean, cov=cov))
    train_rng = stream(seed, "train")
    metrics = []
    for outer in range(cfg.outer_iterations):
        result = run_outer_iteration(state, inputs, cfg, train_rng)
        if trace_sink is not None:
            trace_sink(outer + 1, result.solver_traces)
        generated = _moment_gaussian(state.generator.forward(z_eval))
        proxy = float(sum(w * bures_w2_sq(generated, ref)
                          for w, ref in zip(weights, input_refs)))
        uvp = float("nan") if truth is None else bw2_uvp(generated, truth)
        loss_g = float(np.mean(result.generator_losses)) if result.generator_losses else 0.0
        metrics.append(MetricsRow(
            outer_iter=outer + 1,
            proxy_objective=proxy,
            uvp_vs_truth=uvp,
            loss_g_mean=loss_g,
        ))
    return state, metrics


def variational_gradient_check(generator, map_fns, weights, latent_batch):
    """Two routes to the generator gradient at the frozen point.

    Route one backpropagates the single regression loss against the
    weighted average of the transported batch; route two accumulates one
    backward pass per input and mixes the parameter gradients with the
    weights.  At the freeze point both compute the derivative of the
    same objective, so they must agree to numerical precision.

    Returns
    -------
    (grad_regression, grad_variational, rel_diff)
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(map_fns),):
        raise ValidationError(f"need one weight per map, got shape {weights.shape}")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise ValidationError("weights must be finite and non-negative")
    if abs(weights.sum() - 1.0) > 1e-8:
        raise ValidationError(f"weights must sum to 1, got {weights.sum()!r}")
    z = np.asarray(latent_batch, dtype=np.float64)
    batch = z.shape[0]
    x0 = generator.forward(z)
    transported = [fn(x0) for fn in map_fns]
    combined = np.zeros_like(x0)
    for w, tx in zip(weights, transported):
        combined += w * tx
    grad_regression, _ = generator.backward(z, (x0 - combined) / batch)
    grad_variational = np.zeros_like(grad_regression)
    for w, tx in zip(weights, transported):
        g, _ = generator.backward(z, (x0 - tx) / batch)
        grad_variational += w * g
    denom = max(np.linalg.norm(grad_regression), np.finfo(float).tiny)
    rel = float(np.linalg.norm(grad_regression - grad_variational) / denom)
    return grad_regression, grad_variational, rel


@dataclass(frozen=True)
class BaselineResult:
    """Mean-shift reference: recentered inputs plus the constant predictor."""

    shifted: list          # input samplers translated onto the common mean
    mean: np.ndarray       # weighted mean of the estimated input means
    estimate: GaussianMeasure  # point measure at the mean (zero covariance)
    uvp: float             # NaN when no ground truth was given


def constant_shift_baseline(inputs, weights, n_samples, rng, truth=None):
    """Mean-shift baseline around ``mu_bar = sum_n w_n mu_hat_n``.

    Estimates each input mean from ``n_samples`` draws, returns every
    input recentered by ``y -> y + (mu_bar - mu_n)``, and scores the
    constant predictor concentrated at ``mu_bar`` (zero covariance).
    Against any non-degenerate truth the constant predictor scores an
    unexplained-variance percentage of exactly 100 up to the
    mean-estimation error.
    """
    weights = check_weights(weights, len(inputs))
    rng = as_generator(rng)
    dim = inputs[0].dim
    means = []
    for s in inputs:
        mean, _ = empirical_moments(s, n_samples, rng)
        means.append(mean)
    mu_bar = sum(w * m for w, m in zip(weights, means))
    shifted = []
    for n, (s, mean) in enumerate(zip(inputs, means)):
        delta = mu_bar - mean
        shifted.append(pushforward(s, lambda y, d=delta: y + d, tag=f"mean_shift_{n}"))
    estimate = GaussianMeasure(mean=mu_bar, cov=np.zeros((dim, dim)))
    uvp = float("nan") if truth is None else bw2_uvp(estimate, truth)
    return BaselineResult(shifted=shifted, mean=mu_bar, estimate=estimate, uvp=uvp)
