"""Bias-corrected Adam optimizer over named parameter tensors."""

import numpy as np


class NonFiniteGradient(RuntimeError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.param_name = name


class Adam:
    """Standard Adam with bias correction.

    Holds first/second moment accumulators per parameter; `params` is a dict
    of name -> Tensor whose .grad fields are consumed (and cleared) by step().
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {g.shape} != param shape {p.data.shape} "
                    f"for {name!r}"
                )
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(name)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / b1t
            vhat = v / b2t
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def reset(self):
        """Clear moments and step counter (fresh optimizer, same params)."""
        self.t = 0
        for k in self.m:
            self.m[k][...] = 0.0
            self.v[k][...] = 0.0
