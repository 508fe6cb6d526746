"""Minimal reverse-mode autodiff engine over numpy arrays.

Provides the dense / conv1d / batchnorm / dropout / activation operations and
the SGD / Adam / RMSprop optimizers used by the batch generator, the critic
and the logistic-regression classifier. Everything runs in float64 and every
stochastic operation takes an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DegenerateBatchError, ShapeError

Array = np.ndarray

LEAKY_SLOPE = 0.01
BN_VAR_FLOOR = 1e-5
BN_MOMENTUM = 0.1


def sigmoid(x: Array) -> Array:
    """Numerically stable elementwise logistic function."""
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Dense float64 array participating in a reverse-mode graph.

    A tensor produced by an operation on tracked inputs records the operation
    and its parents; ``backward()`` on a scalar then fills ``grad`` for every
    tracked tensor in the graph, accumulating over fan-out.
    """

    def __init__(self, data, requires_grad: bool = False, _parents=(), _op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._parents = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self._op or 'leaf'!r})"

    def _accum(self, grad: Array) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad += grad

    def _accum_owned(self, grad: Array) -> None:
        # Caller guarantees ``grad`` is freshly allocated and aliases nothing,
        # so the first contribution can be adopted without a copy.
        if self.grad is None:
            self.grad = grad
        else:
            self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph construction helpers ------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other) -> "Tensor":
        other = self._lift(other)
        out = Tensor(self.data + other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other), "+")
        if out.requires_grad:
            def backward():
                if self.requires_grad:
                    self._accum(_unbroadcast(out.grad, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(out.grad, other.data.shape))
            out._backward = backward
        return out

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        other = self._lift(other)
        out = Tensor(self.data * other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other), "*")
        if out.requires_grad:
            def backward():
                if self.requires_grad:
                    self._accum_owned(_unbroadcast(out.grad * other.data, self.data.shape))
                if other.requires_grad:
                    other._accum_owned(_unbroadcast(out.grad * self.data, other.data.shape))
            out._backward = backward
        return out

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other) -> "Tensor":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Tensor":
        return self._lift(other) + (-self)

    def __matmul__(self, other) -> "Tensor":
        other = self._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2 \
                or self.data.shape[1] != other.data.shape[0]:
            raise ShapeError(
                f"matmul shapes {self.data.shape} x {other.data.shape}")
        out = Tensor(self.data @ other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other), "@")
        if out.requires_grad:
            def backward():
                if self.requires_grad:
                    self._accum_owned(out.grad @ other.data.T)
                if other.requires_grad:
                    other._accum_owned(self.data.T @ out.grad)
            out._backward = backward
        return out

    def square(self) -> "Tensor":
        out = Tensor(self.data * self.data, self.requires_grad, (self,), "square")
        if out.requires_grad:
            def backward():
                self._accum_owned(2.0 * self.data * out.grad)
            out._backward = backward
        return out

    def sum(self) -> "Tensor":
        out = Tensor(self.data.sum(), self.requires_grad, (self,), "sum")
        if out.requires_grad:
            def backward():
                self._accum_owned(np.full_like(self.data, out.grad))
            out._backward = backward
        return out

    def mean(self) -> "Tensor":
        out = Tensor(self.data.mean(), self.requires_grad, (self,), "mean")
        if out.requires_grad:
            inv_n = 1.0 / self.data.size
            def backward():
                self._accum_owned(np.full_like(self.data, out.grad * inv_n))
            out._backward = backward
        return out

    def reshape(self, *shape: int) -> "Tensor":
        out = Tensor(self.data.reshape(*shape), self.requires_grad, (self,), "reshape")
        if out.requires_grad:
            def backward():
                self._accum(out.grad.reshape(self.data.shape))
            out._backward = backward
        return out

    def transpose(self) -> "Tensor":
        if self.data.ndim != 2:
            raise ShapeError("transpose expects a 2-d tensor")
        out = Tensor(self.data.T.copy(), self.requires_grad, (self,), "T")
        if out.requires_grad:
            def backward():
                self._accum(out.grad.T)
            out._backward = backward
        return out

    def relu(self) -> "Tensor":
        out = Tensor(np.maximum(self.data, 0.0), self.requires_grad, (self,), "relu")
        if out.requires_grad:
            def backward():
                self._accum_owned(out.grad * (self.data > 0.0))
            out._backward = backward
        return out

    def leaky_relu(self, slope: float = LEAKY_SLOPE) -> "Tensor":
        out = Tensor(np.where(self.data > 0.0, self.data, slope * self.data),
                     self.requires_grad, (self,), "leaky_relu")
        if out.requires_grad:
            def backward():
                self._accum_owned(out.grad * np.where(self.data > 0.0, 1.0, slope))
            out._backward = backward
        return out

    def sigmoid(self) -> "Tensor":
        s = sigmoid(self.data)
        out = Tensor(s, self.requires_grad, (self,), "sigmoid")
        if out.requires_grad:
            def backward():
                self._accum_owned(out.grad * s * (1.0 - s))
            out._backward = backward
        return out

    # -- backward pass -------------------------------------------------

    def backward(self) -> None:
        """Populate gradients of every tracked tensor reachable from here.

        Only valid on a scalar; each graph node is visited exactly once in
        reverse topological order.
        """
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar tensor")
        if not self.requires_grad:
            raise ShapeError("backward() on an untracked tensor")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()


def activation(x: Tensor, kind: str) -> Tensor:
    """Apply a named activation: relu, leaky-relu (slope 0.01) or sigmoid."""
    if kind == "relu":
        return x.relu()
    if kind == "leaky-relu":
        return x.leaky_relu()
    if kind == "sigmoid":
        return x.sigmoid()
    if kind in (None, "none"):
        return x
    raise ConfigError(f"unknown activation kind {kind!r}")


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``rate`` and scale survivors
    by 1/(1-rate) in train mode; exact identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate {rate} outside [0, 1)")
    if not train or rate == 0.0:
        return x
    keep = rng.random(x.data.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = Tensor(x.data * keep * scale, x.requires_grad, (x,), "dropout")
    if out.requires_grad:
        def backward():
            x._accum_owned(out.grad * keep * scale)
        out._backward = backward
    return out


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Stride-1 cross-correlation over the length axis with zero padding.

    ``x`` is [c_in, L], ``kernels`` [c_out, c_in, k] with odd k, ``bias``
    [c_out]; output is [c_out, L] (same length).
    """
    c_out, c_in, k = kernels.data.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d kernel width {k} must be odd")
    if x.data.ndim != 2 or x.data.shape[0] != c_in:
        raise ShapeError(f"conv1d input {x.data.shape} vs kernels {kernels.data.shape}")
    length = x.data.shape[1]
    pad = k // 2
    xp = np.zeros((c_in, length + 2 * pad))
    xp[:, pad:pad + length] = x.data

    out_data = np.empty((c_out, length))
    out_data[:] = bias.data[:, None]
    for j in range(k):
        out_data += kernels.data[:, :, j] @ xp[:, j:j + length]

    requires = x.requires_grad or kernels.requires_grad or bias.requires_grad
    out = Tensor(out_data, requires, (x, kernels, bias), "conv1d")
    if requires:
        def backward():
            g = out.grad
            if bias.requires_grad:
                bias._accum_owned(g.sum(axis=1))
            if kernels.requires_grad:
                dk = np.empty_like(kernels.data)
                for j in range(k):
                    dk[:, :, j] = g @ xp[:, j:j + length].T
                kernels._accum_owned(dk)
            if x.requires_grad:
                dxp = np.zeros_like(xp)
                for j in range(k):
                    dxp[:, j:j + length] += kernels.data[:, :, j].T @ g
                x._accum(dxp[:, pad:pad + length])
        out._backward = backward
    return out


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: Array,
              running_var: Array, train: bool,
              momentum: float = BN_MOMENTUM,
              var_floor: float = BN_VAR_FLOOR) -> Tensor:
    """Batch normalization over axis 0 of a [n, d] tensor.

    Train mode normalizes by batch statistics (variance floored at
    ``var_floor``) and updates the running buffers in place; eval mode
    normalizes by the running buffers and leaves them untouched.
    """
    if x.data.ndim != 2:
        raise ShapeError("batchnorm expects a [n, d] tensor")
    n = x.data.shape[0]
    if train:
        if n < 2:
            raise DegenerateBatchError(
                f"batchnorm in train mode needs batch extent >= 2, got {n}")
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
        active = var > var_floor
    else:
        mu = running_mean
        var = running_var
        active = np.zeros_like(var, dtype=bool)  # stats are constants in eval
    inv = 1.0 / np.sqrt(np.maximum(var, var_floor))
    xhat = (x.data - mu) * inv
    out_data = gamma.data * xhat + beta.data

    requires = x.requires_grad or gamma.requires_grad or beta.requires_grad
    out = Tensor(out_data, requires, (x, gamma, beta), "batchnorm")
    if requires:
        def backward():
            g = out.grad
            if beta.requires_grad:
                beta._accum_owned(g.sum(axis=0))
            if gamma.requires_grad:
                gamma._accum_owned((g * xhat).sum(axis=0))
            if x.requires_grad:
                dxhat = g * gamma.data
                if train:
                    dx = dxhat - dxhat.mean(axis=0)
                    dx -= active * xhat * (dxhat * xhat).mean(axis=0)
                    dx *= inv
                else:
                    dx = dxhat * inv
                x._accum_owned(dx)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Layers


def uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> Array:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight draw."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    """Affine layer: x[n, d_in] -> x @ W + b with W[d_in, d_out]."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        if d_in < 1 or d_out < 1:
            raise ConfigError(f"dense extents must be >= 1, got {d_in}x{d_out}")
        self.weight = Tensor(uniform_init(rng, d_in, (d_in, d_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Conv1d:
    """Stride-1 same-padding 1-d convolution layer over [c_in, L] inputs."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator):
        if kernel < 1:
            raise ConfigError(f"conv1d kernel width must be >= 1, got {kernel}")
        if kernel % 2 == 0:
            raise ConfigError(f"conv1d kernel width must be odd, got {kernel}")
        fan_in = c_in * kernel
        self.kernels = Tensor(uniform_init(rng, fan_in, (c_out, c_in, kernel)),
                              requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.kernels, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.kernels, self.bias]


class BatchNorm1d:
    """Per-feature batch normalization with learnable scale and shift."""

    def __init__(self, dim: int):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return batchnorm(x, self.gamma, self.beta,
                         self.running_mean, self.running_var, train)

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]


# ---------------------------------------------------------------------------
# Optimizers: functional cores working in place on numpy arrays, plus
# Tensor-level wrappers. Shared with the logistic-regression trainer.
#
# The updates are memory-bound on the large generator / critic matrices, so
# the elementwise work is fused into a single jitted pass when numba is
# available. The numpy fallback evaluates the identical expression tree in
# the identical order, so both paths produce bit-for-bit equal results.

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None


def _adam_apply_numpy(param, grad, m, v, s, beta1, one_m_b1, beta2,
                      one_m_b2, corr2, eps, lr_c):
    m *= beta1
    np.multiply(grad, one_m_b1, out=s)
    m += s
    v *= beta2
    np.multiply(grad, grad, out=s)
    s *= one_m_b2
    v += s
    np.divide(v, corr2, out=s)
    np.sqrt(s, out=s)
    s += eps
    np.divide(m, s, out=s)
    s *= lr_c
    param -= s


def _rmsprop_apply_numpy(param, grad, sq, s, decay, one_m_d, eps, lr):
    sq *= decay
    np.multiply(grad, grad, out=s)
    s *= one_m_d
    sq += s
    np.sqrt(sq, out=s)
    s += eps
    np.divide(grad, s, out=s)
    s *= lr
    param -= s


if njit is not None:
    @njit(cache=True)
    def _adam_apply_fused(param, grad, m, v, beta1, one_m_b1, beta2,
                          one_m_b2, corr2, eps, lr_c):
        for i in range(param.size):
            g = grad[i]
            mi = m[i] * beta1 + g * one_m_b1
            vi = v[i] * beta2 + (g * g) * one_m_b2
            m[i] = mi
            v[i] = vi
            param[i] -= (mi / (np.sqrt(vi / corr2) + eps)) * lr_c

    @njit(cache=True)
    def _rmsprop_apply_fused(param, grad, sq, decay, one_m_d, eps, lr):
        for i in range(param.size):
            g = grad[i]
            si = sq[i] * decay + (g * g) * one_m_d
            sq[i] = si
            param[i] -= (g / (np.sqrt(si) + eps)) * lr

    @njit(cache=True)
    def _rmsprop_outer_fused(param, u, v, sq, decay, one_m_d, eps, lr):
        cols = v.size
        for i in range(u.size):
            ui = u[i]
            base = i * cols
            for j in range(cols):
                g = ui * v[j]
                si = sq[base + j] * decay + (g * g) * one_m_d
                sq[base + j] = si
                param[base + j] -= (g / (np.sqrt(si) + eps)) * lr


def _flat_f64(a: Array) -> Array | None:
    """Contiguous float64 1-d view of ``a``, or None if that needs a copy."""
    if a.dtype == np.float64 and a.flags.c_contiguous:
        return a.reshape(-1)
    return None


def sgd_step(param: Array, grad: Array, lr: float) -> None:
    param -= lr * grad


def adam_step(param: Array, grad: Array, state: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update with bias correction; moment buffers live in ``state``."""
    if not state:
        state["m"] = np.zeros_like(param)
        state["v"] = np.zeros_like(param)
        state["t"] = 0
    state["t"] += 1
    t = state["t"]
    m, v = state["m"], state["v"]
    corr2 = 1.0 - beta2 ** t
    lr_c = lr / (1.0 - beta1 ** t)
    if njit is not None:
        pf, gf = _flat_f64(param), _flat_f64(grad)
        if pf is not None and gf is not None:
            _adam_apply_fused(pf, gf, m.reshape(-1), v.reshape(-1), beta1,
                              1.0 - beta1, beta2, 1.0 - beta2, corr2, eps, lr_c)
            return
    s = state.get("scratch")
    if s is None:
        s = state["scratch"] = np.empty_like(param)
    _adam_apply_numpy(param, grad, m, v, s, beta1, 1.0 - beta1, beta2,
                      1.0 - beta2, corr2, eps, lr_c)


def rmsprop_step(param: Array, grad: Array, state: dict, lr: float,
                 decay: float = 0.99, eps: float = 1e-8) -> None:
    """One RMSprop update; the squared-gradient average lives in ``state``."""
    if not state:
        state["sq"] = np.zeros_like(param)
        state["t"] = 0
    state["t"] += 1
    sq = state["sq"]
    if njit is not None:
        pf, gf = _flat_f64(param), _flat_f64(grad)
        if pf is not None and gf is not None:
            _rmsprop_apply_fused(pf, gf, sq.reshape(-1), decay,
                                 1.0 - decay, eps, lr)
            return
    s = state.get("scratch")
    if s is None:
        s = state["scratch"] = np.empty_like(param)
    _rmsprop_apply_numpy(param, grad, sq, s, decay, 1.0 - decay, eps, lr)


def rmsprop_step_outer(param: Array, u: Array, v: Array, state: dict, lr: float,
                       decay: float = 0.99, eps: float = 1e-8) -> None:
    """rmsprop_step for a rank-1 gradient outer(u, v), never materialized.

    ``param`` is [len(u), len(v)]; the result is bit-identical to computing
    np.outer(u, v) and calling rmsprop_step on it, without the len(u)*len(v)
    gradient allocation and traffic. ``state`` is interchangeable with the
    one rmsprop_step maintains.
    """
    if param.shape != (u.size, v.size):
        raise ShapeError(
            f"outer update needs param {u.size} x {v.size}, got {param.shape}")
    if not state:
        state["sq"] = np.zeros_like(param)
        state["t"] = 0
    state["t"] += 1
    sq = state["sq"]
    if njit is not None:
        pf = _flat_f64(param)
        if pf is not None and u.flags.c_contiguous and v.flags.c_contiguous:
            _rmsprop_outer_fused(pf, u, v, sq.reshape(-1), decay,
                                 1.0 - decay, eps, lr)
            return
    grad = np.outer(u, v)
    s = state.get("scratch")
    if s is None:
        s = state["scratch"] = np.empty_like(param)
    _rmsprop_apply_numpy(param, grad, sq, s, decay, 1.0 - decay, eps, lr)


class Optimizer:
    """Applies one of the functional update rules to a list of tensors."""

    kind = "sgd"

    def __init__(self, params: list[Tensor], lr: float):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.step_count = 0
        self._states = [dict() for _ in self.params]

    def _update(self, param: Array, grad: Array, state: dict) -> None:
        sgd_step(param, grad, self.lr)

    def step(self) -> None:
        self.step_count += 1
        for p, state in zip(self.params, self._states):
            if p.grad is not None:
                self._update(p.data, p.grad, state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class SGD(Optimizer):
    kind = "sgd"


class Adam(Optimizer):
    kind = "adam"

    def _update(self, param, grad, state):
        adam_step(param, grad, state, self.lr)


class RMSprop(Optimizer):
    kind = "rmsprop"

    def _update(self, param, grad, state):
        rmsprop_step(param, grad, state, self.lr)


OPTIMIZERS = {"sgd": SGD, "adam": Adam, "rmsprop": RMSprop}


def make_optimizer(kind: str, params: list[Tensor], lr: float) -> Optimizer:
    try:
        cls = OPTIMIZERS[kind]
    except KeyError:
        raise ConfigError(f"unknown optimizer kind {kind!r}") from None
    return cls(params, lr)
