"""Classifier architectures and the training loop.

The baseline CNN is a single valid 1D convolution (3 channels, kernel 3)
followed by a 100-unit dense head. Training uses softmax cross-entropy
with a seeded Adam optimizer and is fully deterministic per seed.
"""

from dataclasses import dataclass, field

import numpy as np

from tsxplain import ndnet
from tsxplain.ndnet import Conv1d, Dense, Flatten, NetworkModel, ReLU, glorot_uniform


class TrainingError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"

    def validate(self):
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise TrainingError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")
        return self


@dataclass
class EpochStats:
    loss: float
    accuracy: float


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)


def build_baseline_cnn(input_length, classes, seed=0):
    """Conv1d(1->3, k=3) -> ReLU -> Flatten -> Dense(100) -> ReLU -> Dense(classes)."""
    if input_length < 3:
        raise ValueError(f"input_length must be >= 3 (kernel size), got {input_length}")
    if classes < 2:
        raise ValueError(f"classes must be >= 2, got {classes}")
    rng = np.random.default_rng(seed)
    conv_out = input_length - 3 + 1
    flat = 3 * conv_out
    conv_w = glorot_uniform(rng, (3, 1, 3), fan_in=3, fan_out=9)
    d1_w = glorot_uniform(rng, (100, flat), fan_in=flat, fan_out=100)
    d2_w = glorot_uniform(rng, (classes, 100), fan_in=100, fan_out=classes)
    layers = [
        Conv1d(conv_w, np.zeros(3)),
        ReLU(),
        Flatten(),
        Dense(d1_w, np.zeros(100)),
        ReLU(),
        Dense(d2_w, np.zeros(classes)),
    ]
    return NetworkModel(layers, (1, input_length), classes, seed).validate()


def build_dense(input_length, hidden, classes, seed=0):
    """Plain MLP alternative: Dense(hidden) -> ReLU -> Dense(classes)."""
    if classes < 2:
        raise ValueError(f"classes must be >= 2, got {classes}")
    rng = np.random.default_rng(seed)
    w1 = glorot_uniform(rng, (hidden, input_length), input_length, hidden)
    w2 = glorot_uniform(rng, (classes, hidden), hidden, classes)
    layers = [Dense(w1, np.zeros(hidden)), ReLU(), Dense(w2, np.zeros(classes))]
    return NetworkModel(layers, (input_length,), classes, seed).validate()


def model_inputs(model, values):
    """Reshape dataset rows (n, m) to the model's batched input layout."""
    values = np.asarray(values, dtype=np.float64)
    if len(model.input_shape) == 2:
        return values.reshape(values.shape[0], *model.input_shape)
    return values


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient wrt the logits."""
    p = ndnet.softmax(logits)
    n = logits.shape[0]
    eps = 1e-300
    loss = -np.log(p[np.arange(n), labels] + eps).mean()
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v = {}, {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for key, p in params.items():
            g = grads[key]
            m = self.m.setdefault(key, np.zeros_like(p))
            v = self.v.setdefault(key, np.zeros_like(p))
            m += (1 - self.beta1) * (g - m)
            v += (1 - self.beta2) * (g * g - v)
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for key, p in params.items():
            p -= self.lr * grads[key]


def train(model, train_set, config):
    """Train in place; returns a TrainHistory with one entry per epoch."""
    config.validate()
    if len(train_set) == 0:
        raise TrainingError("training dataset is empty")
    labels = np.asarray(train_set.labels)
    if labels.min() < 0 or labels.max() >= model.classes:
        raise TrainingError(
            f"labels must lie in [0, {model.classes}), got "
            f"[{labels.min()}, {labels.max()}]"
        )
    x_all = model_inputs(model, train_set.values)
    n = len(train_set)
    rng = np.random.default_rng(config.seed)

    params = {}
    for i, layer in enumerate(model.layers):
        if layer.params is not None:
            for name, p in layer.params.items():
                params[(i, name)] = p
    opt = _Adam(config.learning_rate) if config.optimizer == "adam" else _SGD(
        config.learning_rate
    )

    history = TrainHistory()
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = x_all[idx], labels[idx]
            logits, trace = ndnet.forward(model, xb)
            loss, dlogits = cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise TrainingError("training loss diverged to non-finite value")
            grads_list = ndnet.backward_params(model, trace, dlogits)
            grads = {}
            for i, g in enumerate(grads_list):
                if g is not None:
                    for name, ga in g.items():
                        grads[(i, name)] = ga
            opt.step(params, grads)
            epoch_loss += loss * len(idx)
            correct += int((logits.argmax(axis=1) == yb).sum())
        history.epochs.append(EpochStats(epoch_loss / n, correct / n))
    return history


def predict(model, dataset):
    logits, _ = ndnet.forward(model, model_inputs(model, dataset.values))
    return logits.argmax(axis=1)


def evaluate(model, test_set):
    """Classification accuracy on a dataset; a pure function of the inputs."""
    if len(test_set) == 0:
        raise TrainingError("test dataset is empty")
    return float((predict(model, test_set) == np.asarray(test_set.labels)).mean())
