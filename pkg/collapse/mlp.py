"""Configurable MLP classifier with analytic backpropagation.

Layout: ``(Linear -> Act) x depth -> Linear`` head. Weights are stored
``out x in`` and applied as ``x @ W.T + b``. Penultimate features are the
post-activation outputs of the last hidden layer, i.e. the head's input.
"""

import copy
import hashlib
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr

from collapse import numcore
from collapse.exceptions import ArgumentError, ShapeError
from collapse.models import ActivationKind, LossKind

logger = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    depth: int
    width: int
    num_classes: int
    activation: str = ActivationKind.RELU

    def __post_init__(self):
        if self.input_dim < 1:
            raise ArgumentError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.depth < 1:
            raise ArgumentError(f"depth must be >= 1, got {self.depth}")
        if self.width < 1:
            raise ArgumentError(f"width must be >= 1, got {self.width}")
        if self.num_classes < 2:
            raise ArgumentError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.activation not in ActivationKind.values:
            raise ArgumentError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "activation", ActivationKind(self.activation))

    def to_dict(self):
        data = asdict(self)
        data["activation"] = str(self.activation)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray

    @property
    def shape(self):
        return self.weight.shape


@dataclass
class MlpModel:
    config: MlpConfig
    layers: list

    @property
    def head(self):
        return self.layers[-1]

    @property
    def hidden_layers(self):
        return self.layers[:-1]

    def parameter_count(self):
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def copy(self):
        return copy.deepcopy(self)

    def digest(self):
        """sha256 over every parameter's raw bytes, in layer order."""
        sha = hashlib.sha256()
        for layer in self.layers:
            sha.update(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
            sha.update(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
        return sha.hexdigest()


@dataclass
class LayerGrad:
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: list = field(default_factory=list)
    activations: list = field(default_factory=list)
    logits: np.ndarray = None

    @property
    def features(self):
        return self.activations[-1]

    @property
    def batch_size(self):
        return self.inputs.shape[0]


def activation_apply(kind, z):
    if kind == ActivationKind.RELU:
        return np.maximum(z, 0.0)
    if kind == ActivationKind.TANH:
        return np.tanh(z)
    if kind == ActivationKind.GELU:
        # Exact form z * Phi(z).
        return z * ndtr(z)
    raise ArgumentError(f"unknown activation {kind!r}")


def activation_deriv(kind, z):
    if kind == ActivationKind.RELU:
        return (np.asarray(z) > 0).astype(np.float64)
    if kind == ActivationKind.TANH:
        return 1.0 - np.tanh(z) ** 2
    if kind == ActivationKind.GELU:
        return ndtr(z) + z * _INV_SQRT_2PI * np.exp(-0.5 * np.square(z))
    raise ArgumentError(f"unknown activation {kind!r}")


def build(config, rng):
    dims = [config.input_dim] + [config.width] * config.depth + [config.num_classes]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        layers.append(
            Layer(
                weight=numcore.kaiming_normal(rng, fan_in, fan_out),
                bias=np.zeros(fan_out),
            )
        )
    model = MlpModel(config=config, layers=layers)
    logger.debug(
        "Built MLP depth=%d width=%d activation=%s params=%d",
        config.depth,
        config.width,
        config.activation,
        model.parameter_count(),
    )
    return model


def forward(model, x):
    x = numcore.as_matrix(x)
    if x.shape[1] != model.config.input_dim:
        raise ShapeError(
            f"input has {x.shape[1]} columns, model expects {model.config.input_dim}"
        )
    trace = ForwardTrace(inputs=x)
    out = x
    for layer in model.hidden_layers:
        z = out @ layer.weight.T + layer.bias
        out = activation_apply(model.config.activation, z)
        trace.pre_activations.append(z)
        trace.activations.append(out)
    trace.logits = out @ model.head.weight.T + model.head.bias
    return trace


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ArgumentError(f"labels must lie in 0..{num_classes - 1}")
    targets = np.zeros((labels.size, num_classes))
    targets[np.arange(labels.size), labels] = 1.0
    return targets


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def loss_value(logits, labels, kind):
    """Mean-over-batch loss and the gradient with respect to the logits."""
    n, num_classes = logits.shape
    targets = one_hot(labels, num_classes)
    if kind == LossKind.CROSS_ENTROPY:
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = -np.sum(log_probs * targets) / n
        dlogits = (_softmax(logits) - targets) / n
    elif kind == LossKind.MSE_ONE_HOT:
        residual = logits - targets
        # Mean over batch and output coordinates, no 1/2 factor.
        loss = np.sum(residual**2) / (n * num_classes)
        dlogits = 2.0 * residual / (n * num_classes)
    else:
        raise ArgumentError(f"unknown loss {kind!r}")
    return float(loss), dlogits


def loss_and_grad(trace, labels, kind, model):
    loss, delta = loss_value(trace.logits, labels, kind)
    grads = [None] * len(model.layers)

    head_input = trace.activations[-1]
    grads[-1] = LayerGrad(weight=delta.T @ head_input, bias=delta.sum(axis=0))
    delta = delta @ model.head.weight

    for index in range(len(model.hidden_layers) - 1, -1, -1):
        layer = model.layers[index]
        delta = delta * activation_deriv(
            model.config.activation, trace.pre_activations[index]
        )
        layer_input = trace.inputs if index == 0 else trace.activations[index - 1]
        grads[index] = LayerGrad(weight=delta.T @ layer_input, bias=delta.sum(axis=0))
        if index > 0:
            delta = delta @ layer.weight
    return loss, grads


def predictions(trace):
    return np.argmax(trace.logits, axis=1)
