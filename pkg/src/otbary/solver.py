"""Adversarial solver for one optimal transport map between sampleable measures.

The semi-dual problem is solved in its reversed maximin form: a
potential network ``v`` on the target side ascends the dual gap while a
map network ``T`` descends the amortized transport objective

``loss_v = mean v(T(x)) - mean v(y)``        (x from source, y from target)
``loss_T = mean(0.5 |x - T(x)|^2 - v(T(x)))``

with the half-quadratic ground cost.  Both networks take descent steps
on their stated losses with Adam.  At the saddle point ``T`` is the
optimal map and ``loss_T + mean v(y)`` estimates the squared distance.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .nn import AdamState, LrSchedule, Mlp, adam_step, he_init
from .rng import as_generator, stream

__all__ = [
    "MmrConfig",
    "MmrPair",
    "TraceRow",
    "make_mmr_pair",
    "mmr_update",
    "transport_cost_estimate",
    "dual_value_estimate",
    "map_mse",
    "fit_inverse_maps",
]


@dataclass(frozen=True)
class MmrConfig:
    """Hyperparameters of the maximin solver.

    One solver iteration is one potential step followed by
    ``map_inner_steps`` map steps, all on fresh batches.
    """

    batch_size: int = 256
    potential_steps: int = 50
    map_inner_steps: int = 10
    lr_potential: float = 1e-3
    lr_map: float = 1e-3
    # Potential cadence counts solver iterations.  The map cadence counts
    # map optimizer steps; 0 aligns it to the solver clock by scaling
    # lr_decay_every with map_inner_steps.
    lr_decay_every: int = 10000
    lr_decay_every_map: int = 0
    lr_decay_factor: float = 0.5
    hidden_width: int = 100
    hidden_depth: int = 3

    def __post_init__(self):
        if min(self.batch_size, self.potential_steps, self.map_inner_steps) < 1:
            raise ValidationError(f"batch and step counts must be >= 1: {self}")
        if min(self.lr_potential, self.lr_map) <= 0:
            raise ValidationError(f"learning rates must be positive: {self}")
        if self.hidden_width < 1 or self.hidden_depth < 1:
            raise ValidationError(f"hidden layout must be >= 1: {self}")
        if self.lr_decay_every_map < 0:
            raise ValidationError(f"lr_decay_every_map must be >= 0: {self}")

    def hidden_layers(self):
        """Hidden layer sizes shared by map and potential networks."""
        return [self.hidden_width] * self.hidden_depth

    def map_cadence(self):
        """Decay interval of the map network, in its own optimizer steps."""
        if self.lr_decay_every_map > 0:
            return self.lr_decay_every_map
        return self.lr_decay_every * self.map_inner_steps


@dataclass
class MmrPair:
    """A transport map network with its adversarial potential and optimizer state."""

    map_net: Mlp
    potential_net: Mlp
    map_adam: AdamState
    potential_adam: AdamState
    map_schedule: LrSchedule
    potential_schedule: LrSchedule

    @property
    def dim(self):
        return self.map_net.layer_sizes[0]

    def reset_moments(self):
        """Forget optimizer moments (cold restart); parameters are kept."""
        self.map_adam.reset_moments()
        self.potential_adam.reset_moments()


@dataclass(frozen=True)
class TraceRow:
    """One solver iteration in the loss trace (CSV row)."""

    step: int
    loss_v: float
    loss_t: float
    lr_v: float
    lr_t: float


def make_mmr_pair(dim, cfg, rng):
    """Fresh map/potential pair for measures of dimension ``dim``."""
    rng = as_generator(rng)
    hidden = cfg.hidden_layers()
    map_net = he_init([dim] + hidden + [dim], rng)
    potential_net = he_init([dim] + hidden + [1], rng)
    return MmrPair(
        map_net=map_net,
        potential_net=potential_net,
        map_adam=AdamState.create(map_net.n_params, cfg.lr_map),
        potential_adam=AdamState.create(potential_net.n_params, cfg.lr_potential),
        map_schedule=LrSchedule(cfg.lr_map, cfg.map_cadence(), cfg.lr_decay_factor),
        potential_schedule=LrSchedule(cfg.lr_potential, cfg.lr_decay_every,
                                      cfg.lr_decay_factor),
    )


def _potential_step(pair, source, target, batch_size, rng):
    x = source.sample(rng, batch_size)
    y = target.sample(rng, batch_size)
    tx = pair.map_net.forward(x)
    loss = float(pair.potential_net.forward(tx).mean() - pair.potential_net.forward(y).mean())
    up_tx = np.full((batch_size, 1), 1.0 / batch_size)
    grad_tx, _ = pair.potential_net.backward(tx, up_tx)
    grad_y, _ = pair.potential_net.backward(y, -up_tx)
    params = adam_step(pair.potential_adam, pair.potential_net.get_params(),
                       grad_tx + grad_y, pair.potential_schedule)
    pair.potential_net.set_params(params)
    return loss


def _map_step(pair, source, batch_size, rng):
    x = source.sample(rng, batch_size)
    tx = pair.map_net.forward(x)
    v_tx, dv_dtx = pair.potential_net.input_backward(tx, np.full((batch_size, 1), 1.0))
    loss = float((0.5 * np.sum((x - tx) ** 2, axis=1) - v_tx[:, 0]).mean())
    upstream = ((tx - x) - dv_dtx) / batch_size
    grad, _ = pair.map_net.backward(x, upstream)
    params = adam_step(pair.map_adam, pair.map_net.get_params(), grad, pair.map_schedule)
    pair.map_net.set_params(params)
    return loss


def mmr_update(pair, source, target, cfg, rng):
    """Run ``cfg.potential_steps`` solver iterations of the pair.

    Optimizer state persists inside ``pair``, so consecutive calls warm
    start.  Returns one ``TraceRow`` per iteration; the map loss of a row
    is the mean over its inner steps.

    Raises
    ------
    NumericalError
        As soon as either loss turns non-finite, reporting the step.
    """
    if source.dim != pair.dim or target.dim != pair.dim:
        raise ValidationError(
            f"pair dim {pair.dim} does not match source {source.dim} / target {target.dim}"
        )
    rng = as_generator(rng)
    rows = []
    for _ in range(cfg.potential_steps):
        step = pair.potential_adam.step_count
        lr_v = pair.potential_schedule.lr_at(step)
        lr_t = pair.map_schedule.lr_at(pair.map_adam.step_count)
        loss_v = _potential_step(pair, source, target, cfg.batch_size, rng)
        if not np.isfinite(loss_v):
            raise NumericalError(
                f"potential loss diverged at solver step {pair.potential_adam.step_count}"
            )
        inner = []
        for _ in range(cfg.map_inner_steps):
            loss_t = _map_step(pair, source, cfg.batch_size, rng)
            if not np.isfinite(loss_t):
                raise NumericalError(
                    f"map loss diverged at map step {pair.map_adam.step_count}"
                )
            inner.append(loss_t)
        rows.append(TraceRow(
            step=step,
            loss_v=loss_v,
            loss_t=float(np.mean(inner)),
            lr_v=lr_v,
            lr_t=lr_t,
        ))
    return rows


def _as_map_fn(map_fn):
    if isinstance(map_fn, MmrPair):
        return map_fn.map_net.forward
    if hasattr(map_fn, "forward"):
        return map_fn.forward
    return map_fn


def transport_cost_estimate(map_fn, source, n_samples, rng, batch=8192):
    """Monte-Carlo estimate of ``E 0.5 |x - T(x)|^2`` under the source."""
    fn = _as_map_fn(map_fn)
    rng = as_generator(rng)
    total = 0.0
    remaining = int(n_samples)
    count = 0
    while remaining > 0:
        n = min(batch, remaining)
        x = source.sample(rng, n)
        total += float(np.sum(0.5 * np.sum((x - fn(x)) ** 2, axis=1)))
        count += n
        remaining -= n
    return total / count


def dual_value_estimate(pair, source, target, n_samples, rng, batch=8192):
    """Dual estimate of the squared distance: ``E[0.5 |x-T(x)|^2 - v(T(x))] + E[v(y)]``."""
    rng = as_generator(rng)
    total = 0.0
    remaining = int(n_samples)
    count = 0
    while remaining > 0:
        n = min(batch, remaining)
        x = source.sample(rng, n)
        y = target.sample(rng, n)
        tx = pair.map_net.forward(x)
        term = (0.5 * np.sum((x - tx) ** 2, axis=1)
                - pair.potential_net.forward(tx)[:, 0]
                + pair.potential_net.forward(y)[:, 0])
        total += float(term.sum())
        count += n
        remaining -= n
    return total / count


def map_mse(map_fn, reference_fn, source, n_samples, rng, batch=8192):
    """Monte-Carlo ``E |T(x) - T_ref(x)|^2`` under the source."""
    fn = _as_map_fn(map_fn)
    ref = _as_map_fn(reference_fn)
    rng = as_generator(rng)
    total = 0.0
    remaining = int(n_samples)
    count = 0
    while remaining > 0:
        n = min(batch, remaining)
        x = source.sample(rng, n)
        total += float(np.sum(np.sum((fn(x) - ref(x)) ** 2, axis=1)))
        count += n
        remaining -= n
    return total / count


def fit_inverse_maps(barycenter, inputs, cfg, rounds, seed):
    """Train maps from every input measure onto a fixed barycenter sampler.

    Runs ``rounds`` solver iterations per input with the barycenter as
    the shared target side.  Fresh pairs are created per call; streams
    are derived from ``seed`` per input, so inputs are independent.

    Returns
    -------
    (pairs, traces) : list of MmrPair, list of list of TraceRow
    """
    if rounds < 1:
        raise ValidationError(f"rounds must be >= 1, got {rounds}")
    pairs, traces = [], []
    run_cfg = MmrConfig(
        batch_size=cfg.batch_size,
        potential_steps=int(rounds),
        map_inner_steps=cfg.map_inner_steps,
        lr_potential=cfg.lr_potential,
        lr_map=cfg.lr_map,
        lr_decay_every=cfg.lr_decay_every,
        lr_decay_every_map=cfg.lr_decay_every_map,
        lr_decay_factor=cfg.lr_decay_factor,
        hidden_width=cfg.hidden_width,
        hidden_depth=cfg.hidden_depth,
    )
    for n, source in enumerate(inputs):
        pair = make_mmr_pair(source.dim, cfg, stream(seed, "inverse-init", n))
        rows = mmr_update(pair, source, barycenter, run_cfg, stream(seed, "inverse", n))
        pairs.append(pair)
        traces.append(rows)
    return pairs, traces
