"""Dense feedforward network with hand-written backprop and plain SGD.

All arithmetic is float64. A model is a stack of ``Layer`` objects computing
``act(W @ x + b)``; the trainable scale ``alpha`` of the Siamese distance
output is stored as ``log_alpha`` so that it stays positive.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidConfigError, ShapeError

CHECKPOINT_VERSION = 1
ACTIVATIONS = ("relu", "linear")

DEFAULT_LAYER_DIMS = (256, 512, 256, 128, 64, 32, 2)


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    @property
    def shape(self):
        return self.weight.shape


@dataclass
class MlpModel:
    layers: list[Layer]
    log_alpha: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if not self.layers:
            raise InvalidConfigError("model needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise InvalidConfigError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.weight.shape[0],):
                raise ShapeError(f"layer {i}: bias shape {layer.bias.shape} vs weight {layer.weight.shape}")
        for i, (a, b) in enumerate(zip(self.layers[:-1], self.layers[1:])):
            if a.weight.shape[0] != b.weight.shape[1]:
                raise ShapeError(f"layer {i} outputs {a.weight.shape[0]} but layer {i + 1} expects {b.weight.shape[1]}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [layer.weight.shape[0] for layer in self.layers]

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    @property
    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def copy(self) -> "MlpModel":
        return MlpModel(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            float(self.log_alpha),
            self.seed,
        )

    def equals(self, other: "MlpModel") -> bool:
        """Bit-exact equality of architecture and parameters."""
        if len(self.layers) != len(other.layers) or self.log_alpha != other.log_alpha:
            return False
        return all(
            a.activation == b.activation
            and a.weight.shape == b.weight.shape
            and np.array_equal(a.weight, b.weight)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    d_log_alpha: float = 0.0

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "GradientSet":
        return cls(
            [np.zeros_like(l.weight) for l in model.layers],
            [np.zeros_like(l.bias) for l in model.layers],
            0.0,
        )

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
            self.d_log_alpha + other.d_log_alpha,
        )

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(
            [factor * w for w in self.weights],
            [factor * b for b in self.biases],
            factor * self.d_log_alpha,
        )

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b.ravel()]
        parts.append(np.array([self.d_log_alpha]))
        return np.concatenate(parts)

    def check_congruent(self, model: MlpModel) -> None:
        if len(self.weights) != len(model.layers) or len(self.biases) != len(model.layers):
            raise ShapeError("gradient set has a different number of layers than the model")
        for w, b, layer in zip(self.weights, self.biases, model.layers):
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ShapeError("gradient set is not shape-congruent with the model")


@dataclass
class SgdConfig:
    learning_rate: float = 1e-3
    l2_lambda: float = 0.0
    batch_size: int = 200
    epochs: int = 100
    seed: int = 0
    # geometric per-epoch decay reaching this rate in the last epoch; None keeps lr fixed
    final_learning_rate: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfigError("learning_rate must be positive")
        if self.l2_lambda < 0:
            raise InvalidConfigError("l2_lambda must be nonnegative")
        if self.batch_size < 2:
            raise InvalidConfigError("batch_size must be at least 2 for pairwise losses")
        if self.epochs < 1:
            raise InvalidConfigError("epochs must be positive")
        if self.seed < 0:
            raise InvalidConfigError("seed must be unsigned")
        if self.final_learning_rate is not None and not self.final_learning_rate > 0:
            raise InvalidConfigError("final_learning_rate must be positive")

    def epoch_learning_rate(self, epoch: int) -> float:
        if self.final_learning_rate is None or self.epochs == 1:
            return self.learning_rate
        ratio = self.final_learning_rate / self.learning_rate
        return self.learning_rate * ratio ** (epoch / (self.epochs - 1))


class Tape(NamedTuple):
    """Activation record of one forward pass.

    ``inputs[i]`` is the (batch, in) input to layer ``i`` and ``pre[i]`` its
    pre-activation. ``squeeze`` remembers whether a single vector was passed.
    """

    inputs: list
    pre: list
    squeeze: bool


def init_model(layer_dims, seed: int = 0) -> MlpModel:
    """Build a relu MLP with a linear output layer.

    Weights are drawn from U(-a, a) with a = sqrt(6 / fan_in) for relu layers
    (He uniform) and a = sqrt(3 / fan_in) for the linear output layer. Biases
    start at zero and alpha at one.
    """
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise InvalidConfigError("layer_dims needs an input and at least one output dimension")
    if any(d <= 0 for d in dims):
        raise InvalidConfigError(f"all layer dimensions must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    layers = []
    n_layers = len(dims) - 1
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        activation = "linear" if i == n_layers - 1 else "relu"
        bound = np.sqrt((3.0 if activation == "linear" else 6.0) / fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(Layer(weight, np.zeros(fan_out), activation))
    return MlpModel(layers, 0.0, seed)


def forward(model: MlpModel, x):
    """Evaluate the network on one feature vector or a (batch, D) matrix.

    Returns ``(y, tape)``; the model is not modified.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != model.input_dim:
        raise ShapeError(f"expected input with {model.input_dim} features, got shape {x.shape}")
    inputs, pre = [], []
    for layer in model.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    y = h[0] if squeeze else h
    return y, Tape(inputs, pre, squeeze)


def backward(model: MlpModel, tape: Tape, upstream) -> GradientSet:
    """Reverse-mode gradient of a loss with respect to all weights and biases.

    ``upstream`` is dloss/dy with the same shape as the forward output. The
    relu derivative at exactly zero is taken as zero. ``d_log_alpha`` is left
    at zero; losses that use alpha add their own contribution.
    """
    g = np.asarray(upstream, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :]
    if len(tape.inputs) != len(model.layers):
        raise ShapeError("tape was recorded with a different number of layers")
    if g.shape != tape.pre[-1].shape:
        raise ShapeError(f"upstream gradient shape {g.shape} does not match output {tape.pre[-1].shape}")
    n = len(model.layers)
    dws: list = [None] * n
    dbs: list = [None] * n
    for i in range(n - 1, -1, -1):
        layer = model.layers[i]
        if tape.inputs[i].shape[1] != layer.weight.shape[1]:
            raise ShapeError("tape does not belong to this model")
        if layer.activation == "relu":
            g = g * (tape.pre[i] > 0.0)
        dws[i] = g.T @ tape.inputs[i]
        dbs[i] = g.sum(axis=0)
        if i > 0:
            g = g @ layer.weight
    return GradientSet(dws, dbs, 0.0)


def sgd_step(model: MlpModel, grads: GradientSet, cfg: SgdConfig, inplace: bool = False) -> MlpModel:
    """One SGD update; the l2 decay applies to weight matrices only."""
    grads.check_congruent(model)
    out = model if inplace else model.copy()
    lr, lam = cfg.learning_rate, cfg.l2_lambda
    for layer, dw, db in zip(out.layers, grads.weights, grads.biases):
        if lam:
            layer.weight -= lr * (dw + lam * layer.weight)
        else:
            layer.weight -= lr * dw
        layer.bias -= lr * db
    out.log_alpha = float(out.log_alpha - lr * grads.d_log_alpha)
    return out


def model_params(model: MlpModel) -> np.ndarray:
    """All parameters flattened in the same order as ``GradientSet.flat``."""
    parts = []
    for layer in model.layers:
        parts += [layer.weight.ravel(), layer.bias.ravel()]
    parts.append(np.array([model.log_alpha]))
    return np.concatenate(parts)


def set_model_params(model: MlpModel, flat) -> MlpModel:
    out = model.copy()
    flat = np.asarray(flat, dtype=np.float64)
    pos = 0
    for layer in out.layers:
        for arr in (layer.weight, layer.bias):
            arr[...] = flat[pos : pos + arr.size].reshape(arr.shape)
            pos += arr.size
    out.log_alpha = float(flat[pos])
    if pos + 1 != flat.size:
        raise ShapeError("flat parameter vector has the wrong length")
    return out


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(model: MlpModel, path, extra: dict | None = None) -> None:
    """Write the model to an ``.npz`` container.

    Arrays are stored losslessly (float64, row-major), so a load reproduces the
    model bit for bit.
    """
    header = {
        "format": "siamloc-checkpoint",
        "version": CHECKPOINT_VERSION,
        "layer_dims": model.layer_dims,
        "activations": [l.activation for l in model.layers],
        "seed": model.seed,
        "extra": extra or {},
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True)), "log_alpha": np.array(model.log_alpha)}
    for i, layer in enumerate(model.layers):
        arrays[f"W{i}"] = np.ascontiguousarray(layer.weight)
        arrays[f"b{i}"] = layer.bias
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path, with_extra: bool = False):
    with np.load(path, allow_pickle=False) as npz:
        header = json.loads(str(npz["header"]))
        if header.get("format") != "siamloc-checkpoint":
            raise InvalidConfigError(f"{path} is not a checkpoint file")
        if header["version"] != CHECKPOINT_VERSION:
            raise InvalidConfigError(f"unsupported checkpoint version {header['version']}")
        layers = [
            Layer(npz[f"W{i}"].copy(), npz[f"b{i}"].copy(), act)
            for i, act in enumerate(header["activations"])
        ]
        model = MlpModel(layers, float(npz["log_alpha"]), header["seed"])
    if model.layer_dims != header["layer_dims"]:
        raise ShapeError("checkpoint payload does not match its declared layer dims")
    return (model, header["extra"]) if with_extra else model
