from typing import Dict

import numpy as np

Params = Dict[str, np.ndarray]


class Adam:
    """
    Bias-corrected Adam over a dict of named parameters, updated in place.
    """
    def __init__(self, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Params = {}
        self.v: Params = {}
        self.t = 0

    def step(self, params: Params, grads: Params) -> Params:
        """
        One update. Parameters without a gradient entry are left alone.
        :return: The (same, mutated) parameter dict.
        """
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t

        for k in params:
            if k not in grads:
                continue
            g = grads[k]
            if g.shape != params[k].shape:
                raise ValueError(f"gradient for {k} has shape {g.shape}, parameter has {params[k].shape}")
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])

            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * (g * g)

            params[k] -= (self.lr / bc1) * self.m[k] / (np.sqrt(self.v[k] / bc2) + self.epsilon)
        return params

    def state(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon, "t": self.t}


class TargetPair:
    """
    Online parameters and a Polyak-averaged target copy.
    """
    def __init__(self, online: Params, tau: float = 0.005, target: Params = None):
        self.online = online
        self.target = {k: v.copy() for k, v in online.items()} if target is None else target
        self.tau = float(tau)
        for k in self.online:
            if self.target[k].shape != self.online[k].shape:
                raise ValueError(f"target {k} shape differs from online")

    def polyak_update(self) -> Params:
        """
        target <- (1 - tau) target + tau online.
        """
        for k, online in self.online.items():
            self.target[k] *= (1.0 - self.tau)
            self.target[k] += self.tau * online
        return self.target
