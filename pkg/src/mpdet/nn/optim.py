"""Adam optimizer with bias correction and decoupled-from-bias L2 decay."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-3


def adam_step(param, grad, m, v, t, hyper: AdamHyper, decay: bool = True):
    """One Adam update for a single array.

    Weight decay is applied as an L2 term added to the gradient before the
    moment updates. `t` is the 1-based step count after this update.
    Returns (new_param, new_m, new_v).
    """
    g = grad + hyper.weight_decay * param if (decay and hyper.weight_decay) else grad
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g
    m_hat = m / (1.0 - hyper.beta1**t)
    v_hat = v / (1.0 - hyper.beta2**t)
    return param - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps), m, v


class Adam:
    """Tracks moments for a list of parameter arrays.

    `decay_mask[i]` says whether weight decay applies to parameter i;
    biases conventionally opt out.
    """

    def __init__(self, params: list, hyper: AdamHyper, decay_mask: list | None = None):
        self.hyper = hyper
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.decay_mask = list(decay_mask) if decay_mask is not None else [True] * len(params)
        self.t = 0

    def step(self, params: list, grads: list) -> list:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient count does not match optimizer state")
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            p_new, self.m[i], self.v[i] = adam_step(
                p, g, self.m[i], self.v[i], self.t, self.hyper, decay=self.decay_mask[i]
            )
            out.append(p_new.astype(p.dtype))
        return out
