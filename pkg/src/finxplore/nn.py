"""Minimal dense networks with exact reverse-mode gradients and Adam.

Everything is float64 numpy. Weight matrices are stored [fan_in, fan_out] so a
batch forward is ``x @ W + b``. ``forward`` records the intermediates needed by
``backward``, which returns gradients of ``sum(output * output_grad)`` with
respect to every parameter and the input. Dropout (inverted scaling) applies to
hidden-layer outputs only and only when ``train=True``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ShapeMismatchError, TapeMismatchError

ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear")

CHECKPOINT_VERSION = 1


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseNet:
    """Feed-forward net: list of (W, b) pairs with a per-layer activation tag."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError("consecutive layer dimensions are incompatible")

    @classmethod
    def create(cls, layer_sizes, hidden_activation="tanh", output_activation="linear", rng=None):
        """Xavier/Glorot-uniform initialized net for sizes [d0, d1, ..., dL]."""
        rng = rng if rng is not None else np.random.default_rng()
        weights, biases, acts = [], [], []
        for i in range(len(layer_sizes) - 1):
            fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
            acts.append(output_activation if i == len(layer_sizes) - 2 else hidden_activation)
        return cls(weights, biases, acts)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [w.shape[1] for w in self.weights]

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list[np.ndarray]:
        """Live references, ordered W0, b0, W1, b1, ... (Adam updates in place)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "DenseNet":
        return DenseNet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )

    def load_parameters_from(self, other: "DenseNet") -> None:
        if [w.shape for w in self.weights] != [w.shape for w in other.weights]:
            raise ShapeMismatchError("network shapes differ")
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src


@dataclass
class ActivationTape:
    """Intermediates from one forward pass, consumed by backward()."""

    net_id: int
    inputs: list[np.ndarray]  # input to each layer, [B, fan_in]
    pre_activations: list[np.ndarray]
    outputs: list[np.ndarray]  # post-activation (and post-dropout) per layer
    dropout_masks: list[np.ndarray | None]
    dropout: float
    squeeze: bool


@dataclass
class GradBuffer:
    """Parameter gradients mirroring DenseNet shapes, plus the input gradient."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    input_grad: np.ndarray

    def parameters(self) -> list[np.ndarray]:
        out = []
        for dw, db in zip(self.weight_grads, self.bias_grads):
            out.extend((dw, db))
        return out


def forward(
    net: DenseNet, x, *, train: bool = False, dropout: float = 0.0, rng=None
) -> tuple[np.ndarray, ActivationTape]:
    """Affine + activation composition; returns (output, tape)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionMismatchError(
            f"input shape {x.shape} incompatible with net input dim {net.input_dim}"
        )
    use_dropout = train and dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("dropout requires an rng")
    inputs, pres, outs, masks = [], [], [], []
    a = x
    last = len(net.weights) - 1
    for i, (w, b, act) in enumerate(zip(net.weights, net.biases, net.activations)):
        inputs.append(a)
        z = a @ w + b
        a = _apply_activation(act, z)
        mask = None
        if use_dropout and i < last:
            mask = (rng.random(a.shape) >= dropout).astype(np.float64)
            a = a * mask / (1.0 - dropout)
        pres.append(z)
        outs.append(a)
        masks.append(mask)
    tape = ActivationTape(id(net), inputs, pres, outs, masks, dropout if use_dropout else 0.0, squeeze)
    out = a[0] if squeeze else a
    return out, tape


def backward(net: DenseNet, tape: ActivationTape, output_grad) -> GradBuffer:
    """Exact gradients of sum(output * output_grad) w.r.t. parameters and input."""
    if tape.net_id != id(net):
        raise TapeMismatchError("tape was recorded by a different network")
    g = np.asarray(output_grad, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :]
    if g.shape != tape.outputs[-1].shape:
        raise TapeMismatchError(
            f"output_grad shape {g.shape} does not match forward output {tape.outputs[-1].shape}"
        )
    weight_grads = [np.empty_like(w) for w in net.weights]
    bias_grads = [np.empty_like(b) for b in net.biases]
    delta = g
    for i in range(len(net.weights) - 1, -1, -1):
        mask = tape.dropout_masks[i]
        if mask is not None:
            delta = delta * mask / (1.0 - tape.dropout)
        post = tape.outputs[i] if mask is None else None
        act_grad = _activation_grad(
            net.activations[i],
            tape.pre_activations[i],
            post if post is not None else _apply_activation(net.activations[i], tape.pre_activations[i]),
        )
        delta = delta * act_grad
        weight_grads[i][...] = tape.inputs[i].T @ delta
        bias_grads[i][...] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
    input_grad = delta[0] if tape.squeeze else delta
    return GradBuffer(weight_grads, bias_grads, input_grad)


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax along the last axis; output on the simplex."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class AdamState:
    """Bias-corrected adaptive-moment optimizer state over a fixed parameter list."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> list[np.ndarray]:
    """One in-place Adam update; returns the (mutated) parameter list."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise DimensionMismatchError("parameter/gradient/state lengths differ")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step_count
    bc2 = 1.0 - b2 ** state.step_count
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DimensionMismatchError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


# -- checkpoint io ---------------------------------------------------------------


def save_checkpoint(path, nets: dict[str, DenseNet], arrays: dict[str, np.ndarray] | None = None,
                    meta: dict | None = None) -> None:
    """Versioned .npz checkpoint: per-net parameter arrays plus a JSON manifest."""
    payload: dict[str, np.ndarray] = {}
    manifest = {"version": CHECKPOINT_VERSION, "nets": {}, "arrays": [], "meta": meta or {}}
    for name, net in nets.items():
        manifest["nets"][name] = {
            "layer_sizes": net.layer_sizes,
            "activations": list(net.activations),
        }
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            payload[f"{name}.w{i}"] = w
            payload[f"{name}.b{i}"] = b
    for name, arr in (arrays or {}).items():
        manifest["arrays"].append(name)
        payload[f"arr.{name}"] = np.asarray(arr, dtype=np.float64)
    payload["manifest"] = np.frombuffer(
        json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> tuple[dict[str, DenseNet], dict[str, np.ndarray], dict]:
    """Load a checkpoint; returns (nets, arrays, meta). Rejects corrupt manifests."""
    with np.load(path) as data:
        manifest = json.loads(bytes(data["manifest"]).decode())
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise ShapeMismatchError(f"unsupported checkpoint version {manifest.get('version')}")
        nets = {}
        for name, info in manifest["nets"].items():
            sizes = info["layer_sizes"]
            weights, biases = [], []
            for i in range(len(sizes) - 1):
                w = data[f"{name}.w{i}"]
                b = data[f"{name}.b{i}"]
                if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                    raise ShapeMismatchError(
                        f"checkpoint array {name}.w{i} has shape {w.shape}, manifest says "
                        f"({sizes[i]}, {sizes[i + 1]})"
                    )
                weights.append(w.astype(np.float64))
                biases.append(b.astype(np.float64))
            nets[name] = DenseNet(weights, biases, list(info["activations"]))
        arrays = {name: data[f"arr.{name}"] for name in manifest["arrays"]}
    return nets, arrays, manifest["meta"]
