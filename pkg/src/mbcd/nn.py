"""Dense ReLU networks with hand-written backprop and an Adam optimizer.

Parameters of a network live in one flat float64 array; per-layer weight and
bias arrays are views into it.  That keeps Adam and target-network averaging
to a handful of vector operations regardless of depth.

A network may carry a leading *member* axis (``members=N``), in which case it
is N independent networks evaluated in one batched matmul.  Ensembles of
dynamics models and the twin critics both use this.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOGVAR_MIN = -10.0
LOGVAR_MAX = 4.0


class ConfigurationError(ValueError):
    """Raised on inconsistent dimensions or invalid settings."""


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def soft_clamp(x, lo: float, hi: float):
    """Smoothly squash ``x`` into ``[lo, hi]``.

    Returns ``(value, dvalue/dx)``.  The map is monotone and close to the
    identity well inside the interval.
    """
    upper = hi - softplus(hi - x)
    value = lo + softplus(upper - lo)
    deriv = sigmoid(hi - x) * sigmoid(upper - lo)
    return np.clip(value, lo, hi), deriv


class DenseNetwork:
    """Fully connected net: ReLU hidden layers, linear output layer."""

    def __init__(self, sizes, rng: np.random.Generator | None = None,
                 members: int | None = None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ConfigurationError(f"invalid layer sizes {sizes}")
        if members is not None and members < 1:
            raise ConfigurationError("members must be >= 1")
        self.sizes = sizes
        self.members = members
        lead = () if members is None else (members,)

        shapes = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            shapes.append(lead + (fan_in, fan_out))
            shapes.append(lead + (1, fan_out))
        self._shapes = shapes
        self._offsets = np.cumsum([0] + [int(np.prod(s)) for s in shapes])
        self.params = np.zeros(int(self._offsets[-1]))
        self._bind_views()

        if rng is not None:
            for w in self.weights:
                bound = np.sqrt(6.0 / w.shape[-2])
                w[...] = rng.uniform(-bound, bound, size=w.shape)

    def _bind_views(self):
        self.weights, self.biases = [], []
        offset = 0
        for i, shape in enumerate(self._shapes):
            n = int(np.prod(shape))
            view = self.params[offset:offset + n].reshape(shape)
            (self.weights if i % 2 == 0 else self.biases).append(view)
            offset += n

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def output_dim(self) -> int:
        return self.sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> "DenseNetwork":
        other = DenseNetwork.__new__(DenseNetwork)
        other.sizes = self.sizes
        other.members = self.members
        other._shapes = self._shapes
        other._offsets = self._offsets
        other.params = self.params.copy()
        other._bind_views()
        return other

    def load_params(self, params) -> None:
        params = np.asarray(params, dtype=float)
        if params.shape != self.params.shape:
            raise ConfigurationError(
                f"expected {self.params.shape[0]} parameters, got {params.shape}")
        self.params[...] = params

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ConfigurationError(
                f"input width {x.shape[-1]} != network input width {self.input_dim}")
        return x

    def forward(self, x):
        """Evaluate the network.  Accepts ``(in,)``, ``(B, in)`` or, for
        member networks, ``(members, B, in)``."""
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x):
        x = self._check_input(x)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        inputs, pre = [], []
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            if i < last:
                pre.append(z)
                h = np.maximum(z, 0.0)
            else:
                h = z
        cache = (inputs, pre, squeeze, x.ndim)
        if squeeze and self.members is None:
            return h[0], cache
        if squeeze:
            return h[:, 0, :], cache
        return h, cache

    def backward(self, cache, grad_out, input_grad: bool = False):
        """Backpropagate ``grad_out`` (same shape as the forward output).

        Returns ``(param_grads, input_grad_or_None)`` where ``param_grads`` is
        flat and aligned with ``self.params``.
        """
        inputs, pre, squeeze, in_ndim = cache
        g = np.asarray(grad_out, dtype=float)
        if squeeze:
            g = g[None, :] if self.members is None else g[:, None, :]
        grads = np.zeros_like(self.params)
        offsets = self._offsets
        dx = None
        for i in range(self.n_layers - 1, -1, -1):
            h_in = inputs[i]
            gw = np.swapaxes(h_in, -1, -2) @ g
            if gw.shape != self._shapes[2 * i]:
                gw = gw.sum(axis=tuple(range(gw.ndim - len(self._shapes[2 * i]))))
            gb = g.sum(axis=-2, keepdims=True)
            grads[offsets[2 * i]:offsets[2 * i + 1]] = gw.ravel()
            grads[offsets[2 * i + 1]:offsets[2 * i + 2]] = gb.ravel()
            if i > 0:
                g = (g @ np.swapaxes(self.weights[i], -1, -2)) * (pre[i - 1] > 0.0)
            elif input_grad:
                dx = g @ np.swapaxes(self.weights[0], -1, -2)
                # a shared (un-membered) input receives the sum over members
                extra = dx.ndim - inputs[0].ndim
                if extra > 0:
                    dx = dx.sum(axis=tuple(range(extra)))
                if squeeze:
                    dx = dx[0]
        return grads, dx


class GaussianHead:
    """Split a network output into a mean and a soft-clamped log-variance."""

    def __init__(self, dim: int, lv_min: float = LOGVAR_MIN, lv_max: float = LOGVAR_MAX):
        if lv_min >= lv_max:
            raise ConfigurationError("lv_min must be below lv_max")
        self.dim = dim
        self.lv_min = lv_min
        self.lv_max = lv_max

    def __call__(self, out):
        mean = out[..., :self.dim]
        logvar, dlogvar = soft_clamp(out[..., self.dim:], self.lv_min, self.lv_max)
        return mean, logvar, dlogvar

    def backward(self, dmean, dlogvar_out, dlogvar_draw):
        """Gradient with respect to the raw network output."""
        return np.concatenate([dmean, dlogvar_out * dlogvar_draw], axis=-1)


@dataclass
class Adam:
    """Adam over a flat parameter vector."""

    size: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        """Update ``params`` in place and return it."""
        if params.shape != grads.shape or params.shape != self.m.shape:
            raise ConfigurationError("parameter/gradient shape mismatch")
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1.0 - b1) * grads
        self.v *= b2
        self.v += (1.0 - b2) * grads * grads
        m_hat = self.m / (1.0 - b1 ** self.step_count)
        v_hat = self.v / (1.0 - b2 ** self.step_count)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params

    def copy(self) -> "Adam":
        return Adam(self.size, self.lr, self.beta1, self.beta2, self.eps,
                    self.step_count, self.m.copy(), self.v.copy())


def adam_step(state: Adam, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    return state.step(params, grads)
