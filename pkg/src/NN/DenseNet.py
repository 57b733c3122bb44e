from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import special

Params = Dict[str, np.ndarray]

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class NetworkError(ValueError):
    """
    Raised on shape mismatches between networks, inputs and gradients.
    """


def gelu(x: np.ndarray) -> np.ndarray:
    """
    Exact GELU, x * Phi(x).
    """
    return x * special.ndtr(x)


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return special.ndtr(x) + x * INV_SQRT_2PI * np.exp(-0.5 * x * x)


@dataclass
class ForwardCache:
    """
    Per-layer inputs and pre-activations of one forward pass.
    """
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]


class DenseNet:
    """
    Feedforward network: GELU on hidden layers, identity on the output.

    Parameters live in a dict ("W0", "b0", "W1", ...) so optimizers and target copies can work on
    them by name. Weights are (fan_in, fan_out); inputs are batches of row vectors.
    """
    def __init__(self, layer_sizes: Sequence[int], seed: int = 0, params: Params = None):
        """
        :param layer_sizes: [input, hidden..., output].
        :param seed: Initialisation seed, uniform in +-sqrt(1/fan_in).
        :param params: Existing parameters; skips initialisation.
        """
        self.layer_sizes = [int(size) for size in layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise NetworkError(f"invalid layer sizes {self.layer_sizes}")
        self.seed = int(seed)
        if params is None:
            rng = np.random.default_rng(self.seed)
            params = {}
            for i, (fan_in, fan_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
                bound = np.sqrt(1.0 / fan_in)
                params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                params[f"b{i}"] = rng.uniform(-bound, bound, size=fan_out)
        self.params = params
        self._check_params()

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def _check_params(self):
        for i, (fan_in, fan_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            if self.params[f"W{i}"].shape != (fan_in, fan_out) or self.params[f"b{i}"].shape != (fan_out,):
                raise NetworkError(f"layer {i} parameters do not match sizes {fan_in}->{fan_out}")

    def copy(self) -> "DenseNet":
        return DenseNet(self.layer_sizes, self.seed, {k: v.copy() for k, v in self.params.items()})

    def forward(self, x: np.ndarray, params: Params = None) -> Tuple[np.ndarray, ForwardCache]:
        """
        :param x: (batch, input) or a single input vector.
        :param params: Parameters to evaluate with, the online ones by default (target copies pass theirs).
        :return: (output, cache for backward).
        """
        params = self.params if params is None else params
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.input_dim:
            raise NetworkError(f"input dimension {h.shape[1]} does not match network input {self.input_dim}")
        inputs, pre_activations = [], []
        for i in range(self.n_layers):
            inputs.append(h)
            pre = h @ params[f"W{i}"] + params[f"b{i}"]
            pre_activations.append(pre)
            h = gelu(pre) if i < self.n_layers - 1 else pre
        return (h[0] if single else h), ForwardCache(inputs, pre_activations)

    def __call__(self, x: np.ndarray, params: Params = None) -> np.ndarray:
        return self.forward(x, params)[0]

    def backward(self, cache: ForwardCache, upstream: np.ndarray, params: Params = None) -> Tuple[Params, np.ndarray]:
        """
        Reverse-mode gradients of a scalar loss whose gradient w.r.t. the output is `upstream`.
        :return: (parameter gradients, input gradient).
        """
        params = self.params if params is None else params
        grad = np.asarray(upstream, dtype=np.float64)
        if grad.ndim == 1:
            grad = grad[None, :]
        if grad.shape != cache.pre_activations[-1].shape:
            raise NetworkError(f"upstream shape {grad.shape} does not match output {cache.pre_activations[-1].shape}")
        grads: Params = {}
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                grad = grad * gelu_grad(cache.pre_activations[i])
            grads[f"W{i}"] = cache.inputs[i].T @ grad
            grads[f"b{i}"] = grad.sum(axis=0)
            grad = grad @ params[f"W{i}"].T
        return grads, (grad[0] if np.ndim(upstream) == 1 else grad)
