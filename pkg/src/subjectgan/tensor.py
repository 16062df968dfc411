"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the primitives needed by the generator, discriminator and classifier
networks are provided. Every operation records a closure that maps the
output gradient to input gradients; :meth:`Tensor.backward` replays them
in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "concat",
    "conv1d",
    "batchnorm1d",
    "leaky_relu",
    "tanh",
    "log_softmax",
    "softmax",
    "softmax_cross_entropy",
    "mse",
    "linear",
]


class Tensor:
    """A node in the computation graph.

    Leaves created by the user hold parameters or data; interior nodes are
    produced by the operations in this module and keep references to their
    parents together with a backward closure.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _op: str = ""):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = _op
        self._consumed = False

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad += g

    # -- graph replay ---------------------------------------------------

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor that requires it.

        The loss must be a scalar. A graph can be replayed only once; build
        a fresh graph (a new forward pass) for the next gradient.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise RuntimeError("backward() already called on this graph; run a new forward pass first")
        if not self.requires_grad:
            raise RuntimeError("loss does not depend on any tensor that requires grad")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p is not None and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or parent is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg
        self._consumed = True

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], op: str, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    # gradient tracking is decided when the graph is built: parents that did not
    # require grad at this moment are dropped (None) even if unfrozen later
    out._parents = tuple(p if p.requires_grad else None for p in parents) if out.requires_grad else ()
    out._backward = backward if out.requires_grad else None
    out._op = op
    out._consumed = False
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise and structural ops ------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b), "add",
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), "mul",
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), "neg", lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner axis mismatch: {a.shape[1]} vs {b.shape[0]}")
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), "matmul", lambda g: (g @ bd.T, ad.T @ g))


def reduce_sum(a: Tensor, axis=None) -> Tensor:
    shape = a.shape

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(np.asarray(a.data.sum(axis=axis)), (a,), "sum", back)


def reduce_mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(reduce_sum(a, axis), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _node(a.data.reshape(shape), (a,), "reshape", lambda g: (g.reshape(old),))


def take(a: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing; fancy indexing is not differentiated."""
    shape = a.shape

    def back(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _node(np.array(a.data[index]), (a,), "take", back)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(np.concatenate([t.data for t in ts], axis=axis), ts, "concat", back)


# -- activations -------------------------------------------------------

def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"leaky_relu alpha must lie in (0, 1), got {alpha}")
    slope = np.where(x.data >= 0.0, 1.0, alpha)
    return _node(x.data * slope, (x,), "leaky_relu", lambda g: (g * slope,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _node(y, (x,), "tanh", lambda g: (g * (1.0 - y * y),))


def log_softmax(logits: Tensor) -> Tensor:
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return _node(out, (logits,), "log_softmax",
                 lambda g: (g - p * g.sum(axis=1, keepdims=True),))


def softmax(logits) -> np.ndarray:
    """Row-wise softmax of raw values (no graph)."""
    x = logits.data if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


# -- layers ------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` with weight shaped ``[out, in]``."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: feature axis mismatch, input {x.shape} vs weight {weight.shape}")
    xd, wd = x.data, weight.data
    return _node(xd @ wd.T + bias.data, (x, weight, bias), "linear",
                 lambda g: (g @ wd, g.T @ xd, g.sum(axis=0)))


def _conv_pad(padding, k: int) -> int:
    if padding == "valid":
        return 0
    if padding == "same":
        if k % 2 == 0:
            raise ValueError(f"'same' padding needs an odd kernel width, got {k}")
        return (k - 1) // 2
    if isinstance(padding, (int, np.integer)) and padding >= 0:
        return int(padding)
    raise ValueError(f"unknown padding {padding!r}")


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor, padding="same", stride: int = 1) -> Tensor:
    """Cross-correlation of ``[batch, c_in, length]`` with ``[c_out, c_in, k]``.

    Output length is ``(length + 2*pad - k) // stride + 1``.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 3:
        raise ValueError(f"conv1d input must be [batch, channels, length], got {x.shape}")
    if kernel.ndim != 3:
        raise ValueError(f"conv1d kernel must be [c_out, c_in, k], got {kernel.shape}")
    b, c_in, length = x.shape
    c_out, kc_in, k = kernel.shape
    if kc_in != c_in:
        raise ValueError(f"conv1d channels axis mismatch: input has {c_in}, kernel expects {kc_in}")
    if bias.shape != (c_out,):
        raise ValueError(f"conv1d bias axis mismatch: expected ({c_out},), got {bias.shape}")
    if stride < 1:
        raise ValueError(f"conv1d stride must be >= 1, got {stride}")
    pad = _conv_pad(padding, k)
    if k > length + 2 * pad:
        raise ValueError(f"conv1d length axis too short: kernel {k} > padded length {length + 2 * pad}")

    # channels-last im2col: k shifted slices concatenated along the channel axis
    lp = length + 2 * pad
    xp = np.zeros((b, lp, c_in))
    xp[:, pad:pad + length] = x.data.transpose(0, 2, 1)
    l_out = (lp - k) // stride + 1
    span = stride * (l_out - 1) + 1
    cols = np.concatenate([xp[:, j:j + span:stride] for j in range(k)], axis=2).reshape(b * l_out, k * c_in)
    wmat = kernel.data.transpose(0, 2, 1).reshape(c_out, k * c_in)
    out = (cols @ wmat.T + bias.data).reshape(b, l_out, c_out).transpose(0, 2, 1)

    def back(g):
        gy = g.transpose(0, 2, 1).reshape(b * l_out, c_out)
        gw = (gy.T @ cols).reshape(c_out, k, c_in).transpose(0, 2, 1)
        gb = gy.sum(axis=0)
        gcols = (gy @ wmat).reshape(b, l_out, k, c_in)
        gxp = np.zeros((b, lp, c_in))
        for j in range(k):
            gxp[:, j:j + span:stride] += gcols[:, :, j]
        return gxp[:, pad:pad + length].transpose(0, 2, 1), gw, gb

    return _node(out, (x, kernel, bias), "conv1d", back)


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool = True,
    momentum: float = 0.9,
    eps: float = 1e-5,
    update_stats: bool = True,
) -> Tensor:
    """Per-channel normalization over the batch and length axes.

    In training mode batch statistics are used and, when ``update_stats``
    is set, the running buffers are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    if x.ndim != 3:
        raise ValueError(f"batchnorm1d input must be [batch, channels, length], got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"batchnorm1d channels axis mismatch: input has {c}, gamma {gamma.shape}")
    gd = gamma.data[None, :, None]

    if not training:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean[None, :, None]) * inv[None, :, None]
        return _node(xhat * gd + beta.data[None, :, None], (x, gamma, beta), "batchnorm1d",
                     lambda g: (g * gd * inv[None, :, None],
                                (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2))))

    if x.shape[0] < 2:
        raise ValueError("batchnorm1d in train mode needs batch >= 2 (variance undefined for one example)")
    mean = x.data.mean(axis=(0, 2))
    var = x.data.var(axis=(0, 2))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None]) * inv[None, :, None]
    if update_stats:
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    n = x.shape[0] * x.shape[2]

    def back(g):
        dxhat = g * gd
        sum_d = dxhat.sum(axis=(0, 2), keepdims=True)
        sum_dx = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        gx = inv[None, :, None] / n * (n * dxhat - sum_d - xhat * sum_dx)
        return gx, (g * xhat).sum(axis=(0, 2)), g.sum(axis=(0, 2))

    return _node(xhat * gd + beta.data[None, :, None], (x, gamma, beta), "batchnorm1d", back)


# -- losses ------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, onehot) -> Tensor:
    """Mean over the batch of ``-sum(y * log_softmax(logits))``."""
    y = onehot.data if isinstance(onehot, Tensor) else np.asarray(onehot, dtype=np.float64)
    if logits.ndim != 2 or y.shape != logits.shape:
        raise ValueError(f"softmax_cross_entropy shape mismatch: logits {logits.shape}, targets {y.shape}")
    if np.any(y < 0.0) or np.any(y > 1.0):
        raise ValueError("softmax_cross_entropy targets must lie in [0, 1]")
    if not np.allclose(y.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("softmax_cross_entropy target rows must sum to 1")
    return mul(reduce_sum(mul(log_softmax(logits), y)), -1.0 / logits.shape[0])


def mse(pred: Tensor, target) -> Tensor:
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ValueError(f"mse shape mismatch: pred {pred.shape}, target {t.shape}")
    if pred.data.size == 0:
        raise ValueError("mse of an empty batch")
    diff = pred.data - t
    n = diff.size
    return _node(np.asarray((diff * diff).sum() / n), (pred,), "mse", lambda g: (g * 2.0 * diff / n,))
