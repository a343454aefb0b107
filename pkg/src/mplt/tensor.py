"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Everything downstream (backbone, prompters, head, loss) is built from these
operations.  Values are float64 by default so that finite-difference gradient
checks are meaningful; a float32 "fast" mode is available per-tensor but is
excluded from gradient-check guarantees.

Tensors are immutable value objects after construction.  Any operation that
produces a non-finite value raises ``NumericError`` naming the operation
instead of silently propagating NaN/Inf.
"""

import math

import numpy as np

from . import kernels

DEFAULT_DTYPE = np.float64


class NumericError(ArithmeticError):
    """A tensor operation produced a non-finite value."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


def _check_finite(data, op):
    # a single sum reduce is nan/inf iff the array holds any non-finite value
    # (or overflows, which the contract also forbids)
    if not math.isfinite(float(data.sum())):
        if np.all(np.isfinite(data)):
            raise NumericError(f"overflow in finiteness check after '{op}'")
        raise NumericError(f"non-finite value produced by '{op}'")


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_op")

    def __init__(self, data, requires_grad=False, _children=(), _op="leaf",
                 dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        want = dtype or DEFAULT_DTYPE
        if type(data) is np.ndarray and data.dtype == want:
            arr = data
        else:
            arr = np.asarray(data, dtype=want)
        _check_finite(arr, _op)
        self.data = arr
        self.grad = None
        if not requires_grad:
            for c in _children:
                if c.requires_grad:
                    requires_grad = True
                    break
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = _children
        self._op = _op

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def zeros(*shape, requires_grad=False):
        return Tensor(np.zeros(shape), requires_grad=requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op})"

    # -- autograd ------------------------------------------------------------

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without grad needs a scalar")
            grad = np.ones_like(self.data)
        topo, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))
        self.grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.shape)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- elementwise arithmetic ----------------------------------------------

    def _wrap(self, other):
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = self._wrap(other)
        out = Tensor(self.data + other.data, _children=(self, other), _op="add")

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g, other.shape))
        out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, _children=(self,), _op="neg")

        def bwd(g):
            if self.requires_grad:
                self._accum(-g)
        out._backward = bwd
        return out

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        other = self._wrap(other)
        out = Tensor(self.data * other.data, _children=(self, other), _op="mul")

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g * self.data, other.shape))
        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._wrap(other)
        return self * other.power(-1.0)

    def __rtruediv__(self, other):
        return self._wrap(other) * self.power(-1.0)

    def power(self, p):
        out = Tensor(self.data ** p, _children=(self,), _op=f"pow{p}")

        def bwd(g):
            if self.requires_grad:
                self._accum(g * p * self.data ** (p - 1))
        out._backward = bwd
        return out

    def sqrt(self):
        return self.power(0.5)

    def exp(self):
        out = Tensor(np.exp(self.data), _children=(self,), _op="exp")

        def bwd(g):
            if self.requires_grad:
                self._accum(g * out.data)
        out._backward = bwd
        return out

    def log(self):
        out = Tensor(np.log(self.data), _children=(self,), _op="log")

        def bwd(g):
            if self.requires_grad:
                self._accum(g / self.data)
        out._backward = bwd
        return out

    def tanh(self):
        out = Tensor(np.tanh(self.data), _children=(self,), _op="tanh")

        def bwd(g):
            if self.requires_grad:
                self._accum(g * (1.0 - out.data ** 2))
        out._backward = bwd
        return out

    def sigmoid(self):
        x = self.data
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = Tensor(s, _children=(self,), _op="sigmoid")

        def bwd(g):
            if self.requires_grad:
                self._accum(g * out.data * (1.0 - out.data))
        out._backward = bwd
        return out

    def relu(self):
        out = Tensor(np.maximum(self.data, 0.0), _children=(self,), _op="relu")

        def bwd(g):
            if self.requires_grad:
                self._accum(g * (self.data > 0))
        out._backward = bwd
        return out

    def gelu(self):
        # tanh approximation of gelu
        c = math.sqrt(2.0 / math.pi)
        inner = (self + self.power(3.0) * 0.044715) * c
        return self * (inner.tanh() + 1.0) * 0.5

    def maximum(self, other):
        other = self._wrap(other)
        out = Tensor(np.maximum(self.data, other.data),
                     _children=(self, other), _op="maximum")

        def bwd(g):
            # ties route to the first operand
            take_self = self.data >= other.data
            if self.requires_grad:
                self._accum(_unbroadcast(g * take_self, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g * ~take_self, other.shape))
        out._backward = bwd
        return out

    def minimum(self, other):
        other = self._wrap(other)
        out = Tensor(np.minimum(self.data, other.data),
                     _children=(self, other), _op="minimum")

        def bwd(g):
            take_self = self.data <= other.data
            if self.requires_grad:
                self._accum(_unbroadcast(g * take_self, self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(g * ~take_self, other.shape))
        out._backward = bwd
        return out

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims),
                     _children=(self,), _op="sum")

        def bwd(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accum(np.broadcast_to(g, self.shape).copy())
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.shape).copy())
        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis=None, keepdims=False):
        out = Tensor(self.data.max(axis=axis, keepdims=keepdims),
                     _children=(self,), _op="max")

        def bwd(g):
            if not self.requires_grad:
                return
            if axis is None:
                mask = np.zeros(self.data.size)
                mask[np.argmax(self.data)] = 1.0  # first index on ties
                self._accum((mask * float(g)).reshape(self.shape))
            else:
                idx = np.argmax(self.data, axis=axis)
                mask = np.zeros_like(self.data)
                np.put_along_axis(mask, np.expand_dims(idx, axis), 1.0, axis)
                gg = g if keepdims else np.expand_dims(g, axis)
                self._accum(mask * gg)
        out._backward = bwd
        return out

    def reduce(self, axis, kind, keepdims=True):
        if kind == "mean":
            return self.mean(axis=axis, keepdims=keepdims)
        if kind == "max":
            return self.max(axis=axis, keepdims=keepdims)
        raise ValueError(f"unknown reduction kind '{kind}'")

    # -- shape manipulation ------------------------------------------------------

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), _children=(self,), _op="reshape")

        def bwd(g):
            if self.requires_grad:
                self._accum(g.reshape(self.shape))
        out._backward = bwd
        return out

    def transpose(self, *axes):
        axes = axes or None
        out = Tensor(self.data.transpose(axes), _children=(self,), _op="transpose")

        def bwd(g):
            if not self.requires_grad:
                return
            if axes is None:
                self._accum(g.transpose())
            else:
                self._accum(g.transpose(np.argsort(axes)))
        out._backward = bwd
        return out

    def narrow(self, axis, start, length):
        index = [slice(None)] * self.ndim
        index[axis] = slice(start, start + length)
        index = tuple(index)
        out = Tensor(self.data[index], _children=(self,), _op="narrow")

        def bwd(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                full[index] = g
                self._accum(full)
        out._backward = bwd
        return out

    # -- linear algebra -----------------------------------------------------------

    def matmul(self, other):
        other = self._wrap(other)
        a, b = self.data, other.data
        if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
            raise DimensionError(
                f"matmul inner extents differ: {a.shape} x {b.shape}")
        out = Tensor(a @ b, _children=(self, other), _op="matmul")

        def bwd(g):
            if self.requires_grad:
                self._accum(_unbroadcast(g @ np.swapaxes(b, -1, -2), self.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(np.swapaxes(a, -1, -2) @ g, other.shape))
        out._backward = bwd
        return out

    __matmul__ = matmul

    def conv1d(self, weight, bias, padding=None):
        """Length-preserving cross-correlation: x (C_in, L) -> (C_out, L)."""
        weight = self._wrap(weight)
        bias = self._wrap(bias)
        k = weight.shape[2]
        if k % 2 == 0:
            raise DimensionError("conv1d kernel size must be odd")
        pad = (k - 1) // 2 if padding is None else padding
        y = kernels.conv1d_forward(self.data, weight.data, bias.data, pad)
        out = Tensor(y, _children=(self, weight, bias), _op="conv1d")

        def bwd(g):
            gx, gw, gb = kernels.conv1d_backward(self.data, weight.data, g, pad)
            if self.requires_grad:
                self._accum(gx)
            if weight.requires_grad:
                weight._accum(gw)
            if bias.requires_grad:
                bias._accum(gb)
        out._backward = bwd
        return out

    def conv2d(self, weight, bias):
        """Same-size 3x3-style cross-correlation: x (C, H, W) -> (C_out, H, W)."""
        weight = self._wrap(weight)
        bias = self._wrap(bias)
        c_out, c_in, k, k2 = weight.shape
        if k != k2 or k % 2 == 0:
            raise DimensionError("conv2d kernel must be square with odd size")
        if c_in != self.shape[0]:
            raise DimensionError("conv2d channel mismatch")
        pad = (k - 1) // 2
        c, h, w = self.shape
        cols = kernels.im2col(self.data, k, pad)
        wmat = weight.data.reshape(c_out, -1)
        y = (wmat @ cols + bias.data[:, None]).reshape(c_out, h, w)
        out = Tensor(y, _children=(self, weight, bias), _op="conv2d")

        def bwd(g):
            g2 = g.reshape(c_out, -1)
            if weight.requires_grad:
                weight._accum((g2 @ cols.T).reshape(weight.shape))
            if bias.requires_grad:
                bias._accum(g2.sum(axis=1))
            if self.requires_grad:
                self._accum(kernels.col2im(wmat.T @ g2, c, h, w, k, pad))
        out._backward = bwd
        return out


# ---------------------------------------------------------------------------
# composite operations
# ---------------------------------------------------------------------------

def concat(tensors, axis=0):
    datas = [t.data for t in tensors]
    out = Tensor(np.concatenate(datas, axis=axis), _children=tuple(tensors),
                 _op="concat")

    def bwd(g):
        offset = 0
        for t in tensors:
            length = t.shape[axis]
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + length)
            if t.requires_grad:
                t._accum(g[tuple(index)])
            offset += length
    out._backward = bwd
    return out


def softmax(x, axis=-1):
    """Numerically stable softmax (max-subtraction)."""
    shifted = x - x.max(axis=axis, keepdims=True)
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, gain, bias, eps=1e-6):
    """Normalize the trailing axis to zero mean / unit variance, then affine."""
    if x.shape[-1] != gain.shape[-1]:
        raise DimensionError("layer_norm gain extent must match trailing axis")
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = centered.power(2.0).mean(axis=-1, keepdims=True)
    normed = centered / (var + eps).sqrt()
    return normed * gain + bias


def affine(x, weight, bias=None):
    """y = x @ W (+ b), broadcast over leading axes."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"affine input extent {x.shape[-1]} != weight rows {weight.shape[0]}")
    y = x.matmul(weight)
    if bias is not None:
        y = y + bias
    return y


def activation(x, kind):
    if kind == "relu":
        return x.relu()
    if kind == "gelu":
        return x.gelu()
    raise ValueError(f"unknown activation '{kind}'")


class Parameter:
    """A named learnable tensor; the name is its checkpoint identity."""

    __slots__ = ("name", "value")

    def __init__(self, name, value):
        self.name = name
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.value.requires_grad = True

    @property
    def data(self):
        return self.value.data

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.value.shape})"


def grad_check(f, tensors, step=1e-5, max_checks=None, seed=0):
    """Max relative error between reverse-mode and central-difference gradients.

    `f` must rebuild its computation from the `.data` of the given leaf
    tensors on every call and return a scalar Tensor.  Every element is
    perturbed unless `max_checks` caps the total, in which case a
    deterministic uniform subsample of elements (seeded) is checked.
    """
    for t in tensors:
        t.grad = None
        t.requires_grad = True
    out = f()
    out.backward()
    ad_grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]

    coords = [(ti, i) for ti, t in enumerate(tensors)
              for i in range(t.data.size)]
    if max_checks is not None and len(coords) > max_checks:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=max_checks, replace=False)
        coords = [coords[int(p)] for p in picks]

    worst = 0.0
    for ti, i in coords:
        # index via unravel so mutation works for non-contiguous leaves too
        idx = np.unravel_index(i, tensors[ti].data.shape)
        orig = tensors[ti].data[idx]
        tensors[ti].data[idx] = orig + step
        hi = float(f().data)
        tensors[ti].data[idx] = orig - step
        lo = float(f().data)
        tensors[ti].data[idx] = orig
        g_fd = (hi - lo) / (2.0 * step)
        err = abs(ad_grads[ti].reshape(-1)[i] - g_fd) / max(1.0, abs(g_fd))
        worst = max(worst, err)
    for t in tensors:
        t.grad = None
    return worst
