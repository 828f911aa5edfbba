from dataclasses import dataclass, field

import numpy as np

from src.errors import ConfigurationError
from src.models.tensor import Tensor


class ParamStore:
    """Named trainable tensors, each with a gradient slot of the same shape"""

    def __init__(self, params=None):
        self._params = {}
        for name, value in (params or {}).items():
            self.add(name, value)

    def __repr__(self):
        return f'<ParamStore {len(self._params)} tensors, {self.size} values>'

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name):
        return self._params[name]

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def add(self, name, value):
        if name in self._params:
            raise ConfigurationError(f'duplicate parameter name {name!r}')
        self._params[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        return self._params[name]

    def items(self):
        return self._params.items()

    def names(self, prefix=None):
        return [n for n in self._params if prefix is None or n.startswith(prefix)]

    @property
    def size(self):
        return int(sum(t.data.size for t in self._params.values()))

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.zero_grad()

    def grads(self, prefix=None):
        return {n: self._params[n].grad.copy() for n in self.names(prefix)}

    def state(self):
        """Plain name -> array snapshot of the parameter values"""
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state(self, values):
        for name, array in values.items():
            if name not in self._params:
                raise ConfigurationError(f'unknown parameter {name!r} in checkpoint')
            target = self._params[name]
            array = np.asarray(array, dtype=np.float64)
            if array.shape != target.shape:
                raise ConfigurationError(
                    f'parameter {name!r} shape {array.shape} does not match {target.shape}')
            target.data[...] = array


@dataclass
class OptimizerState:
    """Adaptive-moment optimizer state"""
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def moments_for(self, name, shape):
        if name not in self.first_moment:
            self.first_moment[name] = np.zeros(shape)
            self.second_moment[name] = np.zeros(shape)
        return self.first_moment[name], self.second_moment[name]


def adam_step(store, state, mask=None):
    """
    Apply one adaptive-moment update to the parameters selected by ``mask``.

    ``mask`` is a collection of parameter-name prefixes (``None`` selects every
    parameter). Unselected parameters and their moments are left untouched.
    All gradients are zeroed afterwards.
    """
    selected = [n for n in store if mask is None or any(n.startswith(m) for m in mask)]
    for name in selected:
        tensor = store[name]
        if tensor.grad is None or tensor.grad.shape != tensor.data.shape:
            raise ConfigurationError(f'missing gradient slot for parameter {name!r}')

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name in selected:
        tensor = store[name]
        m, v = state.moments_for(name, tensor.shape)
        m *= state.beta1
        m += (1.0 - state.beta1) * tensor.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * tensor.grad * tensor.grad
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)

    store.zero_grad()
    return store, state
