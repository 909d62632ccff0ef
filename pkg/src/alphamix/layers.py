"""Dense layers and MLP stacks over the autodiff substrate."""

from __future__ import annotations

from enum import Enum

import numpy as np

from alphamix import autodiff as ad
from alphamix.autodiff import Tensor2


class Activation(Enum):
    IDENTITY = "identity"
    LEAKY_RELU = "leaky_relu"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    """Uniform init in +/- sqrt(6/(fan_in+fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class DenseLayer:
    """Affine layer y = act(x @ W.T + b) with W (out,in) and b (1,out).

    Weights are Glorot-uniform, biases zero; the negative slope of the leaky
    rectifier is fixed at 0.01.
    """

    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int,
                 activation: Activation = Activation.IDENTITY):
        self.weight = Tensor2(glorot_uniform(rng, fan_out, fan_in), requires_grad=True)
        self.bias = Tensor2(np.zeros((1, fan_out)), requires_grad=True)
        self.activation = activation

    @property
    def fan_in(self) -> int:
        return self.weight.cols

    @property
    def fan_out(self) -> int:
        return self.weight.rows

    def __call__(self, x: Tensor2) -> Tensor2:
        z = ad.linear(x, self.weight, self.bias)
        if self.activation is Activation.IDENTITY:
            return z
        if self.activation is Activation.LEAKY_RELU:
            return ad.leaky_relu(z)
        if self.activation is Activation.SIGMOID:
            return ad.sigmoid(z)
        return ad.softmax(z)

    def params(self) -> list[Tensor2]:
        return [self.weight, self.bias]


class MLP:
    """A stack of DenseLayers."""

    def __init__(self, layers: list[DenseLayer]):
        self.layers = layers

    @classmethod
    def build(cls, rng: np.random.Generator, sizes: list[int],
              hidden_activation: Activation = Activation.LEAKY_RELU,
              output_activation: Activation = Activation.IDENTITY) -> "MLP":
        """sizes = [in, h1, ..., out]; hidden layers share one activation."""
        layers = []
        for i in range(len(sizes) - 1):
            act = output_activation if i == len(sizes) - 2 else hidden_activation
            layers.append(DenseLayer(rng, sizes[i], sizes[i + 1], act))
        return cls(layers)

    def __call__(self, x: Tensor2) -> Tensor2:
        for layer in self.layers:
            x = layer(x)
        return x

    def params(self) -> list[Tensor2]:
        return [p for layer in self.layers for p in layer.params()]
