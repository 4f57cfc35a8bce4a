"""Reverse-mode automatic differentiation over numpy arrays.

Only the operations the segmentation model needs are provided. Tensors are
immutable once produced by an op; every op validates that its output is
finite and raises NonFiniteError naming the offending op otherwise.
"""

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


class DimensionError(ValueError):
    """Raised on shape or axis violations."""


def _check_finite(data, op):
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by op '{op}'")


def _unbroadcast(grad, shape):
    """Sum a broadcasted gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        _check_finite(arr, "leaf")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op})"

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        g = _unbroadcast(np.asarray(g), self.data.shape).reshape(self.data.shape)
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self):
        if self.data.size != 1:
            raise DimensionError("backward() requires a scalar output")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # ---- arithmetic -----------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other, self.dtype)
        out = _make(self.data + other.data, (self, other), "add")

        def bwd():
            self._accum(out.grad)
            other._accum(out.grad)

        out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _make(-self.data, (self,), "neg")
        out._backward = lambda: self._accum(-out.grad)
        return out

    def __sub__(self, other):
        return self + (-_as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return _as_tensor(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other, self.dtype)
        out = _make(self.data * other.data, (self, other), "mul")

        def bwd():
            self._accum(out.grad * other.data)
            other._accum(out.grad * self.data)

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other, self.dtype)
        return self * other ** -1.0

    def __rtruediv__(self, other):
        return _as_tensor(other, self.dtype) * self ** -1.0

    def __pow__(self, p):
        p = float(p)
        out = _make(self.data ** p, (self,), "pow")
        out._backward = lambda: self._accum(out.grad * p * self.data ** (p - 1.0))
        return out

    def __matmul__(self, other):
        other = _as_tensor(other, self.dtype)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise DimensionError("matmul operands must have rank >= 2")
        out = _make(np.matmul(self.data, other.data), (self, other), "matmul")

        def bwd():
            self._accum(np.matmul(out.grad, other.data.swapaxes(-1, -2)))
            other._accum(np.matmul(self.data.swapaxes(-1, -2), out.grad))

        out._backward = bwd
        return out

    # ---- elementwise ----------------------------------------------------

    def exp(self):
        out = _make(np.exp(self.data), (self,), "exp")
        out._backward = lambda: self._accum(out.grad * out.data)
        return out

    def log(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _make(np.log(self.data), (self,), "log")
        out._backward = lambda: self._accum(out.grad / self.data)
        return out

    def relu(self):
        out = _make(np.maximum(self.data, 0.0), (self,), "relu")
        out._backward = lambda: self._accum(out.grad * (self.data > 0))
        return out

    def sigmoid(self):
        d = self.data
        s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                     np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
        out = _make(s, (self,), "sigmoid")
        out._backward = lambda: self._accum(out.grad * out.data * (1.0 - out.data))
        return out

    def softplus(self):
        out = _make(np.logaddexp(0.0, self.data), (self,), "softplus")

        def bwd():
            d = self.data
            s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                         np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
            self._accum(out.grad * s)

        out._backward = bwd
        return out

    # ---- structural -----------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _make(self.data.reshape(shape), (self,), "reshape")
        out._backward = lambda: self._accum(out.grad.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        out = _make(self.data.transpose(axes), (self,), "transpose")
        out._backward = lambda: self._accum(out.grad.transpose(inv))
        return out

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, idx):
        out = _make(self.data[idx], (self,), "getitem")

        def bwd():
            g = np.zeros_like(self.data)
            np.add.at(g, idx, out.grad)
            self._accum(g)

        out._backward = bwd
        return out

    def sum(self, axis=None, keepdims=False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum")

        def bwd():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.data.shape))

        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)


def _as_tensor(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, op):
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad or p._parents for p in parents)
    out._parents = parents
    out._backward = None
    out._op = op
    return out


def concat(tensors, axis=0):
    tensors = list(tensors)
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat")

    def bwd():
        splits = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]
        for t, g in zip(tensors, np.split(out.grad, splits, axis=axis)):
            t._accum(g)

    out._backward = bwd
    return out


def stack(tensors, axis=0):
    return concat([t.reshape(t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis=axis)


# ---- neural-net building blocks -----------------------------------------

def linear(x, W, b=None):
    """y = x W + b over the last axis of x."""
    if x.shape[-1] != W.shape[0]:
        raise DimensionError(f"linear: inner extents differ ({x.shape[-1]} vs {W.shape[0]})")
    squeeze = x.data.ndim == 1
    if squeeze:
        x = x.reshape(1, -1)
    y = x @ W
    if b is not None:
        y = y + b
    return y.reshape(y.shape[1:]) if squeeze else y


def relu(x):
    return x.relu()


def softmax(x, axis=-1):
    if axis >= x.data.ndim or axis < -x.data.ndim:
        raise DimensionError(f"softmax: axis {axis} out of range for rank {x.data.ndim}")
    shift = Tensor(x.data.max(axis=axis, keepdims=True))
    e = (x - shift).exp()
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, gamma, beta, eps=1e-6):
    """Normalize over the last axis, then scale and shift."""
    if eps <= 0:
        raise DimensionError("layer_norm: eps must be > 0")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc * (var + eps) ** -0.5 * gamma + beta


def conv1x1(x, W, b=None):
    """Per-pixel linear map: x is (C_in, H, W), W is (C_in, C_out)."""
    if x.data.ndim != 3:
        raise DimensionError("conv1x1: input must be (C, H, W)")
    cin, h, w = x.shape
    if cin != W.shape[0]:
        raise DimensionError(f"conv1x1: channel mismatch ({cin} vs {W.shape[0]})")
    cout = W.shape[1]
    y = linear(x.reshape(cin, h * w).transpose(1, 0), W, b)
    return y.transpose(1, 0).reshape(cout, h, w)


def _interp_matrix(n_out, n_in, dtype):
    # half-pixel sampling, clamped at the borders
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        w = src - lo
        m[i, lo] += 1.0 - w
        m[i, hi] += w
    return m


def bilinear_resize(x, out_h, out_w):
    """Resize a (C, H, W) map with bilinear interpolation."""
    if x.data.ndim != 3:
        raise DimensionError("bilinear_resize: input must be (C, H, W)")
    _, h, w = x.shape
    rows = Tensor(_interp_matrix(out_h, h, x.dtype))
    cols = Tensor(_interp_matrix(out_w, w, x.dtype))
    return (rows @ x) @ cols.T


def transposed_conv_upscale(x, W, b=None):
    """Stride-2 transposed conv with a 2x2 kernel; doubles the spatial size.

    x: (C_in, H, W); W: (C_in, C_out, 2, 2); b: (C_out,).
    """
    if x.data.ndim != 3 or W.data.ndim != 4:
        raise DimensionError("transposed_conv_upscale: bad ranks")
    cin, h, w = x.shape
    if cin != W.shape[0] or W.shape[2:] != (2, 2):
        raise DimensionError("transposed_conv_upscale: weight shape mismatch")
    cout = W.shape[1]
    y = linear(x.reshape(cin, h * w).transpose(1, 0), W.reshape(cin, cout * 4))
    y = y.reshape(h, w, cout, 2, 2).transpose(2, 0, 3, 1, 4).reshape(cout, 2 * h, 2 * w)
    if b is not None:
        y = y + b.reshape(cout, 1, 1)
    return y


def grad_check(f, x, eps=1e-5, indices=None):
    """Max relative error between the analytic gradient of f at x and
    central differences. `indices` restricts the probe to a coordinate
    subset (flat indices); default checks every coordinate."""
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError("grad_check: eps must lie in [1e-6, 1e-3]")
    x = Tensor(np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64),
               requires_grad=True)
    y = f(x)
    if not np.isfinite(y.data):
        raise NonFiniteError("grad_check: f(x) is non-finite")
    y.backward()
    analytic = np.zeros(x.data.size) if x.grad is None else x.grad.reshape(-1)
    flat = x.data.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    worst = 0.0
    for i in indices:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(Tensor(x.data.copy())).data)
        flat[i] = orig - eps
        fm = float(f(Tensor(x.data.copy())).data)
        flat[i] = orig
        fd = (fp - fm) / (2.0 * eps)
        err = abs(analytic[i] - fd) / max(1.0, abs(analytic[i]), abs(fd))
        worst = max(worst, err)
    return worst
