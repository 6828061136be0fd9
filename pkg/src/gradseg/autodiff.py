"""Minimal reverse-mode automatic differentiation on dense numpy tensors.

A Tensor wraps a numpy array and records the operation that produced it,
forming an implicit acyclic dataflow graph (a tape). Calling backward() on
a scalar loss walks the tape in reverse topological order and accumulates
gradients into every reachable tensor with requires_grad set.

Supported primitives are exactly what the two network architectures need:
elementwise arithmetic with numpy-style broadcasting, matmul, 2-D
convolution, transposed 2-D convolution (kernel 2, stride 2), 2x2 max
pooling, leaky rectifier, channel softmax, reductions, reshape and
channel concatenation. float32 is the training precision; build graphs
from float64 arrays for verification-grade gradients.
"""

import numpy as np

from .backend import kernels


class ShapeError(ValueError):
    """Raised when an operation's input shapes are inconsistent."""

    def __init__(self, node, message):
        super().__init__(f"{node}: {message}")
        self.node = node


def _unbroadcast(grad, shape):
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A node in the dataflow graph: value, optional gradient, backward rule."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor(data)
        if any(p.requires_grad or p._parents for p in parents):
            out._parents = tuple(parents)
            out._backward = backward
            out.requires_grad = True
        return out

    @staticmethod
    def _wrap(other, like):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=like.dtype))

    def __add__(self, other):
        other = Tensor._wrap(other, self)
        data = self.data + other.data

        def backward(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        return Tensor._result(data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-Tensor._wrap(other, self))

    def __rsub__(self, other):
        return Tensor._wrap(other, self) + (-self)

    def __mul__(self, other):
        other = Tensor._wrap(other, self)
        data = self.data * other.data

        def backward(g):
            return (
                _unbroadcast(g * other.data, self.shape),
                _unbroadcast(g * self.data, other.shape),
            )

        return Tensor._result(data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._wrap(other, self)
        data = self.data / other.data

        def backward(g):
            return (
                _unbroadcast(g / other.data, self.shape),
                _unbroadcast(-g * self.data / (other.data * other.data), other.shape),
            )

        return Tensor._result(data, (self, other), backward)

    def pow(self, exponent):
        """Elementwise power with a constant scalar exponent."""
        data = self.data**exponent

        def backward(g):
            return (g * exponent * self.data ** (exponent - 1),)

        return Tensor._result(data, (self,), backward)

    def __pow__(self, exponent):
        return self.pow(exponent)

    def exp(self):
        data = np.exp(self.data)
        return Tensor._result(data, (self,), lambda g: (g * data,))

    def sqrt(self):
        return self.pow(0.5)

    def sum(self, axis=None, keepdims=False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.shape

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, shape).astype(self.dtype, copy=False),)
            ax = axis if isinstance(axis, tuple) else (axis,)
            if not keepdims:
                g = np.expand_dims(g, ax)
            return (np.broadcast_to(g, shape).astype(self.dtype, copy=False),)

        return Tensor._result(data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            ax = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in ax]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        data = self.data.reshape(shape)
        return Tensor._result(data, (self,), lambda g: (g.reshape(old),))

    def matmul(self, other):
        other = Tensor._wrap(other, self)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError("matmul", "only 2-D operands are supported")
        if self.shape[1] != other.shape[0]:
            raise ShapeError(
                "matmul", f"inner dimensions differ: {self.shape} @ {other.shape}"
            )
        data = self.data @ other.data

        def backward(g):
            return g @ other.data.T, self.data.T @ g

        return Tensor._result(data, (self, other), backward)

    __matmul__ = matmul

    def leaky_relu(self, leak=1e-2):
        mask = self.data > 0
        data = np.where(mask, self.data, leak * self.data)

        def backward(g):
            return (np.where(mask, g, leak * g),)

        return Tensor._result(data.astype(self.dtype, copy=False), (self,), backward)

    def softmax_channels(self):
        """Softmax over axis 1 of an (N,K,H,W) tensor."""
        if self.data.ndim != 4:
            raise ShapeError("softmax", f"expected (N,K,H,W), got {self.shape}")
        shifted = self.data - self.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=1, keepdims=True)

        def backward(g):
            dot = (g * y).sum(axis=1, keepdims=True)
            return (y * (g - dot),)

        return Tensor._result(y, (self,), backward)

    def conv2d(self, weight, bias=None, pad=0):
        """2-D cross-correlation, stride 1. x:(N,C,H,W), w:(F,C,KH,KW)."""
        weight = Tensor._wrap(weight, self)
        if self.data.ndim != 4 or weight.data.ndim != 4:
            raise ShapeError("conv2d", "operands must be 4-D")
        N, C, H, W = self.shape
        F, CW, KH, KW = weight.shape
        if C != CW:
            raise ShapeError("conv2d", f"channels {C} != weight channels {CW}")
        parents = [self, weight]
        bdata = None
        if bias is not None:
            bias = Tensor._wrap(bias, self)
            if bias.shape != (F,):
                raise ShapeError("conv2d", f"bias shape {bias.shape} != ({F},)")
            parents.append(bias)
            bdata = bias.data
        data = kernels.conv2d_fwd(self.data, weight.data, bdata, pad)

        def backward(g):
            g = np.ascontiguousarray(g)
            dx = kernels.conv2d_bwd_input(g, weight.data, pad, H, W)
            dw = kernels.conv2d_bwd_weight(self.data, g, pad, KH, KW)
            if bias is None:
                return dx, dw
            return dx, dw, g.sum(axis=(0, 2, 3))

        return Tensor._result(data, parents, backward)

    def conv_transpose2x2(self, weight, bias=None):
        """Transposed conv, kernel 2 stride 2. x:(N,C,H,W), w:(C,F,2,2)."""
        weight = Tensor._wrap(weight, self)
        N, C, H, W = self.shape
        if weight.shape[0] != C or weight.shape[2:] != (2, 2):
            raise ShapeError(
                "conv_transpose2x2", f"weight {weight.shape} incompatible with C={C}"
            )
        F = weight.shape[1]
        parents = [self, weight]
        bdata = None
        if bias is not None:
            bias = Tensor._wrap(bias, self)
            if bias.shape != (F,):
                raise ShapeError("conv_transpose2x2", "bias shape mismatch")
            parents.append(bias)
            bdata = bias.data
        data = kernels.convt2_fwd(self.data, weight.data, bdata)

        def backward(g):
            g = np.ascontiguousarray(g)
            dx = kernels.convt2_bwd_input(g, weight.data)
            dw = kernels.convt2_bwd_weight(self.data, g)
            if bias is None:
                return dx, dw
            return dx, dw, g.sum(axis=(0, 2, 3))

        return Tensor._result(data, parents, backward)

    def maxpool2(self):
        """2x2 max pool, stride 2, on (N,C,H,W) with even H and W."""
        N, C, H, W = self.shape
        if H % 2 or W % 2:
            raise ShapeError("maxpool2", f"extents must be even, got {H}x{W}")
        data, idx = kernels.maxpool2_fwd(self.data)

        def backward(g):
            return (kernels.maxpool2_bwd(np.ascontiguousarray(g), idx, H, W),)

        return Tensor._result(data, (self,), backward)

    # -- backward pass ------------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into the tape's tensors."""
        if self.data.size != 1:
            raise ShapeError("backward", f"loss must be scalar, got {self.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg


def concat_channels(tensors):
    """Concatenate (N,C,H,W) tensors along the channel axis."""
    shapes = [t.shape for t in tensors]
    base = shapes[0]
    for s in shapes[1:]:
        if s[0] != base[0] or s[2:] != base[2:]:
            raise ShapeError("concat", f"incompatible shapes {shapes}")
    data = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum([s[1] for s in shapes])[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=1))

    return Tensor._result(data, tuple(tensors), backward)


def constant(data, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr)


def parameter(data, name=None):
    t = Tensor(np.asarray(data), requires_grad=True, name=name)
    return t
