"""Dense feed-forward classifier with softmax output, trained by Adam.

Layers hold ``(out, in)`` weight matrices.  Inputs are standardized with the
training mean and std stored on the model.  Only the activations needed by
the function-node classifier are supported: sigmoid, relu, softmax (last).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DomainError, ModelParseError
from .nodes import TransitionTable
from .rng import rng_stream
from .states import Alphabet, StateSpace

ACTIVATIONS = ("sigmoid", "relu", "softmax")
FORMAT_NAME = "learnedfg-model"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str


@dataclass(frozen=True)
class MlpModel:
    layers: tuple[Layer, ...]
    input_mean: np.ndarray
    input_std: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("model needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ConfigError(f"layer {k}: unknown activation {layer.activation!r}")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[0],):
                raise ConfigError(f"layer {k}: weight/bias shapes disagree")
            if k > 0 and layer.weight.shape[1] != self.layers[k - 1].weight.shape[0]:
                raise ConfigError(f"layer {k}: input width does not chain")
            if (layer.activation == "softmax") != (k == len(self.layers) - 1):
                raise ConfigError("softmax must be the final activation, and only there")
        if self.input_mean.shape != (self.n_inputs,) or self.input_std.shape != (self.n_inputs,):
            raise ConfigError("input statistics do not match the input width")
        if (self.input_std <= 0).any():
            raise ConfigError("input std entries must be positive")

    @property
    def n_inputs(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].weight.shape[0]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "MlpModel":
        layers = tuple(
            Layer(np.array(params[2 * k]), np.array(params[2 * k + 1]), layer.activation)
            for k, layer in enumerate(self.layers))
        return replace(self, layers=layers)

    def log_proba(self, x) -> np.ndarray:
        """Batched log-softmax outputs for ``x`` of shape ``(batch, n_inputs)``."""
        x = _check_batch(self, x)
        logits = _forward(self, x)[-1]
        return _log_softmax(logits)

    def predict_proba(self, x) -> np.ndarray:
        return np.exp(self.log_proba(x))


def init_mlp(sizes: Sequence[int], activations: Sequence[str], seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero biases, identity input statistics."""
    if len(activations) != len(sizes) - 1:
        raise ConfigError("need one activation per layer")
    rng = rng_stream(seed, "mlp-init")
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-bound, bound, size=(fan_out, fan_in)), np.zeros(fan_out), act))
    return MlpModel(tuple(layers), np.zeros(sizes[0]), np.ones(sizes[0]), seed=int(seed))


def default_classifier(n_classes: int = 16, seed: int = 0) -> MlpModel:
    """The 1-100-50-K network used for scalar-observation function nodes."""
    return init_mlp([1, 100, 50, n_classes], ["sigmoid", "relu", "softmax"], seed=seed)


def _check_batch(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.n_inputs:
        raise ConfigError(f"expected inputs of width {model.n_inputs}, got shape {x.shape}")
    return x


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _forward(model: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    """Activations per layer; the last entry holds the pre-softmax logits."""
    return _forward_raw(model.params(), [l.activation for l in model.layers],
                        model.input_mean, model.input_std, x)


def _forward_raw(params, activations, mean, std, x) -> list[np.ndarray]:
    a = (x - mean) / std
    acts = [a]
    for k, act in enumerate(activations):
        z = a @ params[2 * k].T + params[2 * k + 1]
        if act == "sigmoid":
            a = expit(z)
        elif act == "relu":
            a = np.maximum(z, 0.0)
        else:
            a = z
        acts.append(a)
    return acts


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    """Probability vector for a single feature vector."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.n_inputs:
        raise ConfigError(f"expected {model.n_inputs} features, got {x.size}")
    return np.exp(model.log_proba(x[None, :])[0])


def grad_cross_entropy(model: MlpModel, x, labels) -> tuple[list[np.ndarray], float]:
    """Mean cross-entropy over the batch and its exact parameter gradients.

    Gradients are returned in :meth:`MlpModel.params` order.
    """
    x = _check_batch(model, x)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size == 0 or x.shape[0] == 0:
        raise DomainError("empty batch")
    if labels.size != x.shape[0]:
        raise DomainError("inputs and labels differ in length")
    if labels.min() < 0 or labels.max() >= model.n_outputs:
        raise DomainError("label outside the output range")
    return _grad_raw(model.params(), [l.activation for l in model.layers],
                     model.input_mean, model.input_std, x, labels)


def _grad_raw(params, activations, mean, std, x, labels):
    acts = _forward_raw(params, activations, mean, std, x)
    logp = _log_softmax(acts[-1])
    b = labels.size
    rows = np.arange(b)
    loss = float(-logp[rows, labels].mean())

    delta = np.exp(logp)
    delta[rows, labels] -= 1.0
    delta /= b
    grads: list[np.ndarray] = []
    for k in range(len(activations) - 1, -1, -1):
        a_prev = acts[k]
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ a_prev)
        if k > 0:
            da = delta @ params[2 * k]
            if activations[k - 1] == "sigmoid":
                delta = da * a_prev * (1.0 - a_prev)
            else:
                delta = da * (a_prev > 0)
    grads.reverse()
    return grads, loss


def cross_entropy(model: MlpModel, x, labels) -> float:
    logp = model.log_proba(x)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    return float(-logp[np.arange(labels.size), labels].mean())


@dataclass
class AdamState:
    lr: float
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], lr: float, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update.  Returns new params; ``state`` is advanced in place."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ConfigError("parameter and gradient shapes differ")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        out.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return out, state


@dataclass(frozen=True)
class TrainSpec:
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 27
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"training hyperparameters must be positive: {self}")


def fit(model: MlpModel, x, labels, spec: TrainSpec = TrainSpec(), refit_stats: bool = True):
    """Train a copy of ``model`` with shuffled Adam minibatches.

    Returns ``(trained_model, losses)`` where ``losses[e]`` is the full
    training-set cross-entropy after epoch ``e``.  With ``refit_stats`` the
    input standardization is recomputed from ``x`` first; pass False to
    warm-start a model whose first layer already assumes its statistics.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise DomainError("no training data")
    if refit_stats:
        std = x.std(axis=0)
        model = replace(model, input_mean=x.mean(axis=0), input_std=np.where(std > 0, std, 1.0))
    _check_batch(model, x)

    rng = rng_stream(spec.shuffle_seed, "shuffle")
    shapes = [p.shape for p in model.params()]
    sizes = [int(np.prod(sh)) for sh in shapes]
    offsets = np.cumsum([0] + sizes)

    def unflatten(flat):
        return [flat[a:b].reshape(sh) for a, b, sh in zip(offsets[:-1], offsets[1:], shapes)]

    # Adam runs on one flat vector; the per-layer arrays are views into it.
    theta = np.concatenate([p.reshape(-1) for p in model.params()])
    params = unflatten(theta)
    activations = [layer.activation for layer in model.layers]
    xs = (x - model.input_mean) / model.input_std
    zero, one = np.zeros_like(model.input_mean), np.ones_like(model.input_std)
    state = AdamState.zeros_like([theta], spec.learning_rate)
    n = x.shape[0]
    losses = []
    for _ in range(spec.epochs):
        order = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            idx = order[start : start + spec.batch_size]
            grads, _ = _grad_raw(params, activations, zero, one, xs[idx], labels[idx])
            (theta,), state = adam_step([theta], [np.concatenate([g.reshape(-1) for g in grads])], state)
            params = unflatten(theta)
        model = model.with_params(params)
        losses.append(cross_entropy(model, x, labels))
    return model, losses


# ----------------------------------------------------------------- persistence


class ModelFile(NamedTuple):
    model: MlpModel
    transitions: Optional[TransitionTable]
    space: Optional[StateSpace]
    train_spec: Optional[TrainSpec]


def model_to_dict(model: MlpModel, transitions: Optional[TransitionTable] = None,
                  space: Optional[StateSpace] = None, train_spec: Optional[TrainSpec] = None) -> dict:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "alphabet": list(space.alphabet.symbols) if space else None,
        "memory": space.memory if space else None,
        "input_stats": {"mean": model.input_mean.tolist(), "std": model.input_std.tolist()},
        "layers": [
            {
                "in": int(layer.weight.shape[1]),
                "out": int(layer.weight.shape[0]),
                "activation": layer.activation,
                "weights": layer.weight.reshape(-1).tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in model.layers
        ],
        "transitions": transitions.to_dict() if transitions is not None else None,
        "seeds": {"init": model.seed, "shuffle": train_spec.shuffle_seed if train_spec else None},
        "train_spec": None,
    }
    if train_spec is not None:
        doc["train_spec"] = {"learning_rate": train_spec.learning_rate, "epochs": train_spec.epochs,
                             "batch_size": train_spec.batch_size}
    return doc


def _field(doc: dict, key: str, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ModelParseError(f"missing field '{where}{key}'")
    return doc[key]


def _floats(value, where: str, shape=None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"field '{where}' is not numeric") from exc
    if shape is not None and arr.shape != shape:
        raise ModelParseError(f"field '{where}' has shape {arr.shape}, expected {shape}")
    return arr


def model_from_dict(doc: dict) -> ModelFile:
    if _field(doc, "format", "") != FORMAT_NAME:
        raise ModelParseError(f"field 'format' must be {FORMAT_NAME!r}")
    if _field(doc, "version", "") != FORMAT_VERSION:
        raise ModelParseError(f"field 'version': unsupported {doc['version']!r}")
    layers = []
    raw_layers = _field(doc, "layers", "")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ModelParseError("field 'layers' must be a nonempty list")
    for k, raw in enumerate(raw_layers):
        where = f"layers[{k}]."
        n_in, n_out = _field(raw, "in", where), _field(raw, "out", where)
        if not isinstance(n_in, int) or not isinstance(n_out, int):
            raise ModelParseError(f"field '{where}in/out' must be integers")
        w = _floats(_field(raw, "weights", where), where + "weights", (n_in * n_out,)).reshape(n_out, n_in)
        b = _floats(_field(raw, "bias", where), where + "bias", (n_out,))
        layers.append(Layer(w, b, _field(raw, "activation", where)))
    stats = _field(doc, "input_stats", "")
    n0 = layers[0].weight.shape[1]
    mean = _floats(_field(stats, "mean", "input_stats."), "input_stats.mean", (n0,))
    std = _floats(_field(stats, "std", "input_stats."), "input_stats.std", (n0,))
    seeds = _field(doc, "seeds", "")
    try:
        model = MlpModel(tuple(layers), mean, std, seed=int(_field(seeds, "init", "seeds.")))
    except ConfigError as exc:
        raise ModelParseError(f"field 'layers': {exc}") from exc

    space = None
    if doc.get("alphabet") is not None:
        try:
            space = StateSpace(Alphabet(tuple(doc["alphabet"])), int(_field(doc, "memory", "")))
        except (TypeError, ValueError) as exc:
            raise ModelParseError(f"field 'alphabet'/'memory': {exc}") from exc
    transitions = None
    if doc.get("transitions") is not None:
        raw = doc["transitions"]
        try:
            transitions = TransitionTable(_floats(_field(raw, "probs", "transitions."), "transitions.probs"),
                                          _floats(_field(raw, "prior", "transitions."), "transitions.prior"))
        except ConfigError as exc:
            raise ModelParseError(f"field 'transitions': {exc}") from exc
    train_spec = None
    if doc.get("train_spec") is not None:
        raw = doc["train_spec"]
        try:
            train_spec = TrainSpec(float(raw["learning_rate"]), int(raw["epochs"]), int(raw["batch_size"]),
                                   int(seeds.get("shuffle") or 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelParseError(f"field 'train_spec': {exc}") from exc
    return ModelFile(model, transitions, space, train_spec)


def save_model(path, model: MlpModel, transitions: Optional[TransitionTable] = None,
               space: Optional[StateSpace] = None, train_spec: Optional[TrainSpec] = None) -> None:
    text = json.dumps(model_to_dict(model, transitions, space, train_spec), indent=1)
    Path(path).write_text(text + "\n")


def load_model(path) -> ModelFile:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"not a valid model document: {exc}") from exc
    return model_from_dict(doc)
