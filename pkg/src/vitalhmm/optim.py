"""ADAM optimizer over lists of parameter arrays.

Used for the gradient M-step of flow emissions and for discriminative
fine-tuning. Updates are applied in the ascent direction by default since
both callers maximize an objective.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class AdamConfig:
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )

    def copy(self):
        return AdamState(m=[a.copy() for a in self.m], v=[a.copy() for a in self.v], t=self.t)


def adam_step(state, params, grads, cfg, maximize=True):
    """One bias-corrected ADAM update, in place on ``params``.

    ``params`` and ``grads`` are parallel lists of arrays with matching
    shapes. Returns ``(params, state)`` for convenience; both are the same
    objects that were passed in, mutated.
    """
    if len(params) != len(grads):
        raise ContractError(
            f"parameter/gradient count mismatch: {len(params)} vs {len(grads)}"
        )
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ContractError(f"shape mismatch in adam_step: {p.shape} vs {g.shape}")

    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    sign = 1.0 if maximize else -1.0
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p += sign * cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return params, state
