"""Multilayer-perceptron classifier with per-epoch recording of training dynamics.

Weights are stored input-major (``W[l]`` has shape ``fan_in x fan_out``) and
all arithmetic is 64-bit. Backpropagation is written out by hand so that
per-sample quantities (squared parameter-gradient norms, input gradients)
are exact rather than estimated.
"""

import io
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, softmax

from hardness_bench.const import (
    ADAM_BETAS,
    ADAM_EPSILON,
    DEFAULT_AGREEMENT_PASSES,
    DEFAULT_BATCH_SIZE,
    DEFAULT_DROPOUT,
    DEFAULT_EPOCHS,
    DEFAULT_HIDDEN_SIZES,
    DEFAULT_INPUT_GRAD_STRIDE,
    DEFAULT_LEARNING_RATE,
)
from hardness_bench.data.dataset import Dataset
from hardness_bench.exceptions import TrainingDivergedError, TrainingError
from hardness_bench.helpers import atomic_write_text, make_rng, read_json, write_json

_LOGGER = logging.getLogger(__name__)

RECORD_HEADER_FILE = "record.json"
RECORD_FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class MlpConfig:
    """Architecture of the classifier: ReLU hidden layers, each followed by inverted dropout."""

    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN_SIZES
    dropout_rate: float = DEFAULT_DROPOUT
    seed: int = 0
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h < 1 for h in self.hidden_sizes):
            raise TrainingError(f"hidden layer widths must be >= 1, got {self.hidden_sizes}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise TrainingError(f"dropout rate must be in [0, 1), got {self.dropout_rate}")
        if self.activation != "relu":
            raise TrainingError(f"unsupported activation {self.activation!r}")

    def to_dict(self) -> dict:
        return {"hidden_sizes": list(self.hidden_sizes), "dropout_rate": self.dropout_rate, "seed": self.seed}


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch Adam schedule. ``input_grad_stride`` of 0 disables input-gradient recording."""

    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    betas: tuple[float, float] = ADAM_BETAS
    epsilon: float = ADAM_EPSILON
    seed: int = 0
    input_grad_stride: int = DEFAULT_INPUT_GRAD_STRIDE

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise TrainingError(f"learning rate must be > 0, got {self.learning_rate}")
        if int(self.batch_size) < 1:
            raise TrainingError(f"batch size must be >= 1, got {self.batch_size}")
        if int(self.input_grad_stride) < 0:
            raise TrainingError(f"input gradient stride must be >= 0, got {self.input_grad_stride}")
        beta1, beta2 = self.betas
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise TrainingError(f"Adam betas must be in [0, 1), got {self.betas}")

    def to_dict(self) -> dict:
        return {
            "epochs": int(self.epochs),
            "learning_rate": self.learning_rate,
            "batch_size": int(self.batch_size),
            "betas": list(self.betas),
            "epsilon": self.epsilon,
            "seed": self.seed,
            "input_grad_stride": int(self.input_grad_stride),
        }


@dataclass
class Model:
    config: MlpConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def d(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def k(self) -> int:
        return int(self.weights[-1].shape[1])

    @property
    def embedding_width(self) -> int:
        return int(self.weights[-1].shape[0])

    @property
    def n_params(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases, strict=True)))

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays, layer by layer (weight then bias); mutating them mutates the model."""
        params = []
        for w, b in zip(self.weights, self.biases, strict=True):
            params.extend((w, b))
        return params

    def copy(self) -> "Model":
        return Model(self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True, eq=False)
class ForwardResult:
    logits: np.ndarray
    probs: np.ndarray
    penultimate: np.ndarray


@dataclass(eq=False)
class _Cache:
    activations: list[np.ndarray]  # a_0 = input, a_l = post-dropout hidden outputs
    pre_activations: list[np.ndarray]
    masks: list[np.ndarray | None]
    logits: np.ndarray


@dataclass(eq=False)
class DynamicsRecord:
    """Per-epoch signals recorded in evaluation mode after each training epoch.

    Shapes: probs/logits ``T x n x k``; losses/correct/grad_sq_norm ``T x n``;
    embeddings ``n x h`` (final epoch); input_grads ``C x n x d`` for the
    checkpoints listed in ``input_grad_epochs`` (1-based epoch numbers).
    """

    probs: np.ndarray
    logits: np.ndarray
    losses: np.ndarray
    correct: np.ndarray
    grad_sq_norm: np.ndarray
    embeddings: np.ndarray
    input_grads: np.ndarray | None = None
    input_grad_epochs: tuple[int, ...] = field(default_factory=tuple)
    model_seed: int = 0
    train_seed: int = 0

    @property
    def epochs(self) -> int:
        return int(self.probs.shape[0])

    @property
    def n(self) -> int:
        return int(self.probs.shape[1])

    @property
    def k(self) -> int:
        return int(self.probs.shape[2])

    def save(self, directory: str | Path) -> Path:
        """Write one CSV matrix per field plus a JSON header with dimensions, shapes and seeds.

        3-D fields are flattened to ``(T * n) x k`` (or ``(C * n) x d``) rows, epoch-major.
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        fields = {
            "probs": self.probs,
            "logits": self.logits,
            "losses": self.losses,
            "correct": self.correct.astype(np.int64),
            "grad_sq_norm": self.grad_sq_norm,
            "embeddings": self.embeddings,
        }
        if self.input_grads is not None:
            fields["input_grads"] = self.input_grads
        shapes = {}
        for name, values in fields.items():
            shapes[name] = list(values.shape)
            matrix = values.reshape(-1, values.shape[-1]) if values.ndim == 3 else values
            buffer = io.StringIO()
            fmt = "%d" if name == "correct" else RECORD_FLOAT_FORMAT
            np.savetxt(buffer, matrix, fmt=fmt, delimiter=",")
            atomic_write_text(directory / f"{name}.csv", buffer.getvalue())
        write_json(
            directory / RECORD_HEADER_FILE,
            {
                "epochs": self.epochs,
                "n": self.n,
                "k": self.k,
                "shapes": shapes,
                "input_grad_epochs": list(self.input_grad_epochs),
                "model_seed": self.model_seed,
                "train_seed": self.train_seed,
            },
        )
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "DynamicsRecord":
        directory = Path(directory)
        header = read_json(directory / RECORD_HEADER_FILE)
        shapes = header["shapes"]

        def _read(name: str) -> np.ndarray:
            shape = tuple(shapes[name])
            count = int(np.prod(shape))
            values = np.loadtxt(directory / f"{name}.csv", delimiter=",", ndmin=2) if count else np.empty(0)
            return values.reshape(shape)

        return cls(
            probs=_read("probs"),
            logits=_read("logits"),
            losses=_read("losses"),
            correct=_read("correct").astype(bool),
            grad_sq_norm=_read("grad_sq_norm"),
            embeddings=_read("embeddings"),
            input_grads=_read("input_grads") if "input_grads" in shapes else None,
            input_grad_epochs=tuple(header["input_grad_epochs"]),
            model_seed=header["model_seed"],
            train_seed=header["train_seed"],
        )


def init_model(mcfg: MlpConfig, d: int, k: int) -> Model:
    """He-uniform weights (limit sqrt(6 / fan_in)) and zero biases, deterministic per seed."""
    if d < 1 or k < 2:
        raise TrainingError(f"need d >= 1 and k >= 2, got d={d}, k={k}")
    rng = make_rng(mcfg.seed, "init")
    sizes = [d, *mcfg.hidden_sizes, k]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:], strict=True):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Model(mcfg, weights, biases)


def _check_input(model: Model, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise TrainingError(f"input has {X.shape[-1]} columns, model expects {model.d}")
    return X


def _forward_cache(model: Model, X: np.ndarray, rng: np.random.Generator | None) -> _Cache:
    rate = model.config.dropout_rate
    activations = [X]
    pre_activations = []
    masks: list[np.ndarray | None] = []
    h = X
    for w, b in zip(model.weights[:-1], model.biases[:-1], strict=True):
        z = h @ w + b
        h = np.maximum(z, 0.0)
        mask = None
        if rng is not None and rate > 0:
            mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
            h = h * mask
        pre_activations.append(z)
        masks.append(mask)
        activations.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    return _Cache(activations, pre_activations, masks, logits)


def _backward(model: Model, cache: _Cache, delta_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-sample error signals for every layer (output last) and the gradient w.r.t. the input."""
    deltas = [delta_out]
    delta = delta_out
    for layer in range(len(model.weights) - 1, 0, -1):
        delta = delta @ model.weights[layer].T
        mask = cache.masks[layer - 1]
        if mask is not None:
            delta = delta * mask
        delta = delta * (cache.pre_activations[layer - 1] > 0)
        deltas.append(delta)
    deltas.reverse()
    input_grad = deltas[0] @ model.weights[0].T
    return deltas, input_grad


def forward(model: Model, X: np.ndarray, dropout_active: bool = False, seed: int = 0) -> ForwardResult:
    """Logits, softmax probabilities and penultimate activations.

    Dropout masks are drawn from ``seed`` only when ``dropout_active``.
    """
    X = _check_input(model, X)
    rng = make_rng(seed, "forward_dropout") if dropout_active else None
    cache = _forward_cache(model, X, rng)
    return ForwardResult(cache.logits, softmax(cache.logits, axis=1), cache.activations[-1])


def predict_proba(model: Model, X: np.ndarray) -> np.ndarray:
    return forward(model, X).probs


def accuracy(model: Model, ds: Dataset) -> float:
    if ds.n == 0:
        raise TrainingError("accuracy of an empty dataset is undefined")
    return float(np.mean(np.argmax(predict_proba(model, ds.features), axis=1) == ds.labels))


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def per_sample_grad_sq_norms(model: Model, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared norm of each sample's cross-entropy gradient over all parameters.

    For a dense layer the weight gradient of one sample is the outer product
    of its input activation and error signal, so its squared Frobenius norm
    factorises; the bias contributes the error signal's squared norm.
    """
    X = _check_input(model, X)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    cache = _forward_cache(model, X, None)
    delta_out = softmax(cache.logits, axis=1) - _one_hot(y, model.k)
    deltas, _ = _backward(model, cache, delta_out)
    total = np.zeros(X.shape[0])
    for a_prev, delta in zip(cache.activations, deltas, strict=True):
        total += (np.sum(a_prev**2, axis=1) + 1.0) * np.sum(delta**2, axis=1)
    return total


def per_sample_grad_sq_norm(model: Model, x: np.ndarray, y: int) -> float:
    return float(per_sample_grad_sq_norms(model, np.reshape(x, (1, -1)), np.array([y]))[0])


def input_gradients(model: Model, X: np.ndarray, classes: np.ndarray) -> np.ndarray:
    """Row i is d z_{classes[i]}(x_i) / d x_i, with dropout off."""
    X = _check_input(model, X)
    classes = np.asarray(classes, dtype=np.int64).reshape(-1)
    if classes.size and (classes.min() < 0 or classes.max() >= model.k):
        raise TrainingError(f"class indices must lie in [0, {model.k})")
    cache = _forward_cache(model, X, None)
    _, grad = _backward(model, cache, _one_hot(classes, model.k))
    return grad


def input_gradient(model: Model, x: np.ndarray, c: int) -> np.ndarray:
    return input_gradients(model, np.reshape(x, (1, -1)), np.array([c]))[0]


def loss_gradients(model: Model, X: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and its gradient for every parameter array (in ``Model.parameters`` order)."""
    X = _check_input(model, X)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    cache = _forward_cache(model, X, None)
    return _batch_loss_and_grads(model, cache, y)


def _batch_loss_and_grads(model: Model, cache: _Cache, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    n = y.shape[0]
    log_probs = log_softmax(cache.logits, axis=1)
    loss = float(-np.mean(log_probs[np.arange(n), y]))
    delta_out = (np.exp(log_probs) - _one_hot(y, model.k)) / n
    deltas, _ = _backward(model, cache, delta_out)
    grads = []
    for a_prev, delta in zip(cache.activations, deltas, strict=True):
        grads.extend((a_prev.T @ delta, delta.sum(axis=0)))
    return loss, grads


class AdamOptimizer:
    """Bias-corrected Adam over a model's parameter arrays, updated in place."""

    def __init__(self, model: Model, tcfg: TrainConfig):
        self._params = model.parameters()
        self._lr = tcfg.learning_rate
        self._beta1, self._beta2 = tcfg.betas
        self._epsilon = tcfg.epsilon
        self._m = [np.zeros_like(p) for p in self._params]
        self._v = [np.zeros_like(p) for p in self._params]
        self._step = 0

    def step(self, grads: list[np.ndarray]):
        self._step += 1
        correction1 = 1.0 - self._beta1**self._step
        correction2 = 1.0 - self._beta2**self._step
        for param, grad, m, v in zip(self._params, grads, self._m, self._v, strict=True):
            m *= self._beta1
            m += (1.0 - self._beta1) * grad
            v *= self._beta2
            v += (1.0 - self._beta2) * grad**2
            param -= self._lr * (m / correction1) / (np.sqrt(v / correction2) + self._epsilon)


def _run_epochs(model: Model, ds: Dataset, tcfg: TrainConfig, on_epoch: Callable[[int], None] | None = None):
    if ds.n == 0:
        raise TrainingError("cannot train on an empty dataset")
    if ds.d != model.d or ds.k != model.k:
        raise TrainingError(f"dataset is {ds.d}->{ds.k}, model is {model.d}->{model.k}")
    order_rng = make_rng(tcfg.seed, "batch_order")
    dropout_rng = make_rng(tcfg.seed, "dropout")
    optimizer = AdamOptimizer(model, tcfg)
    batch_size = int(tcfg.batch_size)
    for epoch in range(1, int(tcfg.epochs) + 1):
        order = order_rng.permutation(ds.n)
        epoch_loss = 0.0
        for batch, start in enumerate(range(0, ds.n, batch_size)):
            idx = order[start : start + batch_size]
            cache = _forward_cache(model, ds.features[idx], dropout_rng)
            loss, grads = _batch_loss_and_grads(model, cache, ds.labels[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, batch, loss)
            optimizer.step(grads)
            epoch_loss += loss * idx.size
        _LOGGER.debug("Epoch %d/%d: mean batch loss %.6f", epoch, tcfg.epochs, epoch_loss / ds.n)
        if on_epoch is not None:
            on_epoch(epoch)


def train(model: Model, ds: Dataset, tcfg: TrainConfig) -> Model:
    """Train in place without recording; returns the same model."""
    _run_epochs(model, ds, tcfg)
    return model


def fit_with_recording(model: Model, ds: Dataset, tcfg: TrainConfig) -> DynamicsRecord:
    """Train in place, recording every dynamics field after each epoch.

    Recording is a dropout-free pass over the dataset in its stored order;
    the pre-training state is not recorded.
    """
    T, n, k = int(tcfg.epochs), ds.n, ds.k
    probs = np.empty((T, n, k))
    logits = np.empty((T, n, k))
    losses = np.empty((T, n))
    correct = np.empty((T, n), dtype=bool)
    grad_sq = np.empty((T, n))
    stride = int(tcfg.input_grad_stride)
    grad_epochs = tuple(t for t in range(1, T + 1) if stride and (t % stride == 0 or t == T))
    input_grads = np.empty((len(grad_epochs), n, ds.d)) if grad_epochs else None
    rows = np.arange(n)
    state = {"embeddings": None, "checkpoint": 0}

    def _record(epoch: int):
        cache = _forward_cache(model, ds.features, None)
        log_probs = log_softmax(cache.logits, axis=1)
        t = epoch - 1
        logits[t] = cache.logits
        probs[t] = np.exp(log_probs)
        losses[t] = -log_probs[rows, ds.labels]
        correct[t] = np.argmax(probs[t], axis=1) == ds.labels
        deltas, _ = _backward(model, cache, probs[t] - _one_hot(ds.labels, k))
        grad_sq[t] = sum(
            (np.sum(a**2, axis=1) + 1.0) * np.sum(delta**2, axis=1)
            for a, delta in zip(cache.activations, deltas, strict=True)
        )
        if input_grads is not None and epoch in grad_epochs:
            _, grad = _backward(model, cache, _one_hot(ds.labels, k))
            input_grads[state["checkpoint"]] = grad
            state["checkpoint"] += 1
        state["embeddings"] = cache.activations[-1].copy()
        _LOGGER.debug("Recorded epoch %d: accuracy %.4f", epoch, correct[t].mean())

    _run_epochs(model, ds, tcfg, _record)
    return DynamicsRecord(
        probs=probs,
        logits=logits,
        losses=losses,
        correct=correct,
        grad_sq_norm=grad_sq,
        embeddings=state["embeddings"],
        input_grads=input_grads,
        input_grad_epochs=grad_epochs,
        model_seed=model.config.seed,
        train_seed=tcfg.seed,
    )


def mc_dropout_proba(model: Model, X: np.ndarray, passes: int = DEFAULT_AGREEMENT_PASSES, seed: int = 0) -> np.ndarray:
    """``passes x n x k`` probabilities with dropout active at the model's configured rate."""
    if passes < 1:
        raise TrainingError(f"passes must be >= 1, got {passes}")
    X = _check_input(model, X)
    if model.config.dropout_rate == 0:
        _LOGGER.warning("MC-dropout with dropout rate 0: all %d passes are identical", passes)
    rng = make_rng(seed, "mc_dropout")
    out = np.empty((passes, X.shape[0], model.k))
    for i in range(passes):
        out[i] = softmax(_forward_cache(model, X, rng).logits, axis=1)
    return out
