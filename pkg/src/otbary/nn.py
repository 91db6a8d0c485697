"""Minimal fully connected networks with exact gradients, in plain numpy.

The package trains three kinds of networks (generator, transport maps,
potentials), all of them small MLPs with ReLU hidden layers and a linear
output layer.  Parameters live in a single flat float64 vector so that
optimizer state, finite-difference checks, and checkpoints all share one
canonical layout: for each layer, the weight matrix of shape
``(fan_in, fan_out)`` in row-major order, then the bias vector.

Checkpoints are a single self-describing file: a JSON header line with
the layer sizes, activation tag and format version, followed by the raw
little-endian float64 parameter bytes in the canonical layout.  A saved
network reloads bit for bit.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .rng import as_generator

__all__ = [
    "Mlp",
    "he_init",
    "AdamState",
    "LrSchedule",
    "adam_step",
    "save_mlp",
    "load_mlp",
]

_FORMAT = "mlp-f64"
_VERSION = 1
_ACTIVATION = "relu"


class Mlp:
    """Fully connected network: ReLU on hidden layers, identity output.

    Parameters
    ----------
    weights : list of ndarray
        Layer matrices, ``weights[l]`` of shape ``(fan_in, fan_out)``.
    biases : list of ndarray
        Bias vectors, ``biases[l]`` of shape ``(fan_out,)``.
    """

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise ValidationError("weights and biases must be non-empty lists of equal length")
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[1]:
                raise ValidationError(f"layer {l}: weight shape {w.shape} and bias shape {b.shape} disagree")
            if l > 0 and w.shape[0] != self.weights[l - 1].shape[1]:
                raise ValidationError(f"layer {l}: fan-in {w.shape[0]} does not match previous fan-out")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {l}: non-finite parameters")

    @property
    def layer_sizes(self):
        """Sizes [d_in, h_1, ..., d_out]."""
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        """Deep copy with independent parameter arrays."""
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def get_params(self):
        """Flat parameter vector in the canonical layout (a copy)."""
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b)
        return np.concatenate(chunks)

    def set_params(self, vec):
        """Load parameters from a flat vector in the canonical layout."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise ValidationError(f"expected {self.n_params} parameters, got shape {vec.shape}")
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = vec[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = vec[pos:pos + b.size]
            pos += b.size

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weights[0].shape[0]:
            raise ValidationError(
                f"expected input of shape (batch, {self.weights[0].shape[0]}), got {x.shape}"
            )
        return x

    def forward(self, x):
        """Apply the network to a batch of shape ``(batch, d_in)``."""
        h = self._check_input(x)
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if l < last:
                np.maximum(h, 0.0, out=h)
        return h

    def _forward_cached(self, x):
        # Returns (activations, preacts): activations[l] feeds layer l,
        # preacts[l] is the pre-activation output of layer l.
        acts = [x]
        pres = []
        h = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pres.append(z)
            h = np.maximum(z, 0.0) if l < last else z
            if l < last:
                acts.append(h)
        return acts, pres

    def backward(self, x, upstream):
        """Vector-Jacobian product for a batch.

        Parameters
        ----------
        x : ndarray of shape (batch, d_in)
        upstream : ndarray of shape (batch, d_out)
            Gradient of the scalar loss with respect to the network
            output, row per sample.

        Returns
        -------
        param_grad : ndarray of shape (n_params,)
            Gradient with respect to the flat parameter vector.
        input_grad : ndarray of shape (batch, d_in)
            Gradient with respect to the input.
        """
        x = self._check_input(x)
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (x.shape[0], self.weights[-1].shape[1]):
            raise ValidationError(f"upstream shape {upstream.shape} does not match output")
        acts, pres = self._forward_cached(x)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        g = upstream
        for l in range(len(self.weights) - 1, -1, -1):
            grads_w[l] = acts[l].T @ g
            grads_b[l] = g.sum(axis=0)
            g = g @ self.weights[l].T
            if l > 0:
                g = g * (pres[l - 1] > 0.0)
        chunks = []
        for gw, gb in zip(grads_w, grads_b):
            chunks.append(gw.ravel())
            chunks.append(gb)
        return np.concatenate(chunks), g

    def input_backward(self, x, upstream):
        """Like ``backward`` but skips parameter gradients.

        Returns ``(outputs, input_grad)``; used where only the gradient
        through the network as a function of its input is needed.
        """
        x = self._check_input(x)
        acts, pres = self._forward_cached(x)
        g = np.asarray(upstream, dtype=np.float64)
        for l in range(len(self.weights) - 1, -1, -1):
            g = g @ self.weights[l].T
            if l > 0:
                g = g * (pres[l - 1] > 0.0)
        out = pres[-1]
        return out, g


def he_init(layer_sizes, rng):
    """Build an ``Mlp`` with He-normal weights and zero biases.

    Weights of layer ``l`` are drawn i.i.d. from a centered normal with
    standard deviation ``sqrt(2 / fan_in)``.
    """
    if len(layer_sizes) < 2 or any(int(s) < 1 for s in layer_sizes):
        raise ValidationError(f"layer_sizes must be >= 2 positive ints, got {layer_sizes}")
    rng = as_generator(rng)
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        std = np.sqrt(2.0 / n_in)
        weights.append(rng.standard_normal((n_in, n_out)) * std)
        biases.append(np.zeros(n_out))
    return Mlp(weights, biases)


@dataclass(frozen=True)
class LrSchedule:
    """Step learning-rate decay: multiply by ``decay_factor`` every
    ``decay_every`` optimizer steps (0 disables decay)."""

    initial_lr: float
    decay_every: int = 10000
    decay_factor: float = 0.5

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValidationError(f"initial_lr must be positive, got {self.initial_lr}")
        if self.decay_every < 0:
            raise ValidationError(f"decay_every must be >= 0, got {self.decay_every}")
        if not 0 < self.decay_factor <= 1:
            raise ValidationError(f"decay_factor must be in (0, 1], got {self.decay_factor}")

    def lr_at(self, step):
        """Learning rate applied at optimizer step ``step`` (0-based)."""
        if self.decay_every == 0:
            return self.initial_lr
        return self.initial_lr * self.decay_factor ** (step // self.decay_every)


@dataclass
class AdamState:
    """Adam moment estimates for one flat parameter vector."""

    learning_rate: float
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def create(cls, n_params, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8):
        """Zeroed optimizer state for a flat parameter vector of this size."""
        if learning_rate <= 0:
            raise ValidationError(f"learning_rate must be positive, got {learning_rate}")
        return cls(
            learning_rate=learning_rate,
            first_moment=np.zeros(n_params),
            second_moment=np.zeros(n_params),
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )

    def reset_moments(self):
        """Clear both moment buffers and the step counter in place."""
        self.first_moment[...] = 0.0
        self.second_moment[...] = 0.0
        self.step_count = 0


def adam_step(state, params, grads, schedule=None):
    """One Adam update with bias correction.

    Mutates ``state`` (moments and step count) and returns the updated
    parameter vector.  The effective learning rate is
    ``schedule.lr_at(step_count_before_this_step)`` when a schedule is
    given, else ``state.learning_rate``.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != state.first_moment.shape:
        raise ValidationError(f"grad shape {grads.shape} does not match state {state.first_moment.shape}")
    if not np.all(np.isfinite(grads)):
        raise NumericalError(f"non-finite gradient at optimizer step {state.step_count}")
    lr = schedule.lr_at(state.step_count) if schedule is not None else state.learning_rate
    state.step_count += 1
    t = state.step_count
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * grads
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * np.square(grads)
    m_hat = state.first_moment / (1.0 - state.beta1 ** t)
    v_hat = state.second_moment / (1.0 - state.beta2 ** t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def save_mlp(net, path):
    """Write ``net`` to ``path`` in the single-file checkpoint format."""
    header = {
        "format": _FORMAT,
        "version": _VERSION,
        "layer_sizes": net.layer_sizes,
        "activation": _ACTIVATION,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_mlp(path):
    """Read a checkpoint written by ``save_mlp``; bit-exact round trip."""
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ValidationError(f"{path}: missing checkpoint header")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: malformed checkpoint header: {exc}") from exc
    if header.get("format") != _FORMAT or header.get("version") != _VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint format {header.get('format')!r} "
                              f"version {header.get('version')!r}")
    if header.get("activation") != _ACTIVATION:
        raise ValidationError(f"{path}: unsupported activation {header.get('activation')!r}")
    sizes = header.get("layer_sizes")
    if (not isinstance(sizes, list) or len(sizes) < 2
            or not all(isinstance(s, int) and s >= 1 for s in sizes)):
        raise ValidationError(f"{path}: bad layer_sizes {sizes!r}")
    body = raw[newline + 1:]
    expected = sum((n_in + 1) * n_out for n_in, n_out in zip(sizes[:-1], sizes[1:])) * 8
    if len(body) != expected:
        raise ValidationError(f"{path}: expected {expected} parameter bytes, found {len(body)}")
    weights, biases = [], []
    pos = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(body, dtype="<f8", count=n_in * n_out, offset=pos).reshape(n_in, n_out)
        pos += n_in * n_out * 8
        b = np.frombuffer(body, dtype="<f8", count=n_out, offset=pos)
        pos += n_out * 8
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    return Mlp(weights, biases)
