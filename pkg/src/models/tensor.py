"""
Reverse-mode differentiation over dense float64 tensors.

Only the operations the stress networks need are provided: affine layers,
elementwise activations, the half squared-error loss and scalar sums/scales
used to assemble the composite training loss.
"""

import numpy as np

from src.errors import ConfigurationError, NumericalError

ACTIVATIONS = ('relu', 'sigmoid', 'identity')


class Tensor:
    """Dense array node in a differentiation graph"""

    __slots__ = ('data', 'grad', 'requires_grad', 'tracks', 'name', '_parents', '_backward')

    def __init__(self, values, requires_grad=False, name=None, parents=(), backward_fn=None):
        self.data = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        # only parents that lead to a trainable leaf are kept in the graph
        self._parents = tuple(p for p in parents if p.tracks)
        self._backward = backward_fn if self._parents else None
        self.tracks = requires_grad or bool(self._parents)
        if backward_fn is not None and self._parents:
            keep = tuple(p.tracks for p in parents)
            if not all(keep):
                self._backward = _select_grads(backward_fn, keep)

    def __repr__(self):
        label = f' {self.name}' if self.name else ''
        return f'<Tensor{label} shape={self.shape}>'

    @property
    def shape(self):
        return tuple(self.data.shape)

    @property
    def values(self):
        """Row-major flat view of the data"""
        return self.data.reshape(-1)

    def item(self):
        if self.data.size != 1:
            raise ConfigurationError(f'item() needs a single element, got shape {self.shape}')
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def backward(self):
        """Accumulate d(self)/d(leaf) into every trainable leaf reachable from self."""
        if self.data.size != 1:
            raise ConfigurationError(f'backward() needs a scalar output, got shape {self.shape}')
        if not self.tracks:
            return

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
            for parent in reversed(node._parents):
                if id(parent) not in seen:
                    stack.append((parent, False))

        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            upstream = pending.pop(id(node), None)
            if upstream is None:
                continue
            if node.requires_grad:
                node.grad += upstream
            if node._backward is None:
                continue
            for parent, grad in zip(node._parents, node._backward(upstream)):
                if id(parent) in pending:
                    pending[id(parent)] = pending[id(parent)] + grad
                else:
                    pending[id(parent)] = grad


def _select_grads(backward_fn, keep):
    def wrapped(upstream):
        grads = backward_fn(upstream)
        return tuple(g for g, k in zip(grads, keep) if k)
    return wrapped


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _check_finite(array, op):
    if not np.all(np.isfinite(array)):
        raise NumericalError(f'{op}: non-finite values encountered')
    return array


def affine(inputs, weights, bias):
    """output[i, j] = sum_k inputs[i, k] * weights[k, j] + bias[j]"""
    x, w, b = as_tensor(inputs), as_tensor(weights), as_tensor(bias)
    if (x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1
            or x.shape[1] != w.shape[0] or b.shape[0] != w.shape[1]):
        raise ConfigurationError(
            f'affine shape mismatch: input {x.shape}, weights {w.shape}, bias {b.shape}')

    out = _check_finite(x.data @ w.data + b.data, 'affine')

    def backward(upstream):
        return upstream @ w.data.T, x.data.T @ upstream, upstream.sum(axis=0)

    return Tensor(out, parents=(x, w, b), backward_fn=backward)


def _sigmoid(values):
    e = np.exp(-np.abs(values))
    return np.where(values >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activation(inputs, kind):
    """Elementwise relu, sigmoid or identity; relu'(0) is taken as 0."""
    x = as_tensor(inputs)
    if kind not in ACTIVATIONS:
        raise ConfigurationError(f'unknown activation {kind!r}, expected one of {ACTIVATIONS}')
    _check_finite(x.data, kind)

    if kind == 'relu':
        mask = x.data > 0
        out = np.where(mask, x.data, 0.0)

        def backward(upstream):
            return (upstream * mask,)
    elif kind == 'sigmoid':
        out = _sigmoid(x.data)

        def backward(upstream):
            return (upstream * out * (1.0 - out),)
    else:
        out = x.data.copy()

        def backward(upstream):
            return (upstream,)

    return Tensor(out, parents=(x,), backward_fn=backward)


def sq_err_loss(pred, target):
    """Half sum of squared differences; d/dpred = pred - target."""
    p, t = as_tensor(pred), as_tensor(target)
    if p.shape != t.shape:
        raise ConfigurationError(f'loss shape mismatch: pred {p.shape} vs target {t.shape}')
    diff = p.data - t.data
    out = _check_finite(np.asarray(0.5 * np.sum(diff * diff)), 'sq_err_loss')

    def backward(upstream):
        return upstream * diff, -upstream * diff

    return Tensor(out, parents=(p, t), backward_fn=backward)


def scale(value, factor):
    x = as_tensor(value)
    factor = float(factor)

    def backward(upstream):
        return (upstream * factor,)

    return Tensor(x.data * factor, parents=(x,), backward_fn=backward)


def add(*terms):
    """Sum of same-shaped tensors (used for scalar loss terms)."""
    tensors = [as_tensor(t) for t in terms]
    if not tensors:
        raise ConfigurationError('add() needs at least one term')
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ConfigurationError(f'add shape mismatch: {shape} vs {t.shape}')
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        out = out + t.data

    def backward(upstream):
        return tuple(upstream for _ in tensors)

    return Tensor(out, parents=tuple(tensors), backward_fn=backward)
