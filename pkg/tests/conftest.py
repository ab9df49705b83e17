import numpy as np
import pytest

from tsxplain import models, ndnet


def finite_diff_input(model, x, class_index, h=1e-4):
    """Central finite-difference gradient of logit[class_index] wrt x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fp, _ = ndnet.forward(model, xp)
        fm, _ = ndnet.forward(model, xm)
        grad[idx] = (fp[class_index] - fm[class_index]) / (2 * h)
    return grad


def finite_diff_params(model, x, loss_fn, h=1e-4):
    """Central finite differences of loss_fn(logits) wrt every parameter."""
    grads = []
    for layer in model.layers:
        if layer.params is None:
            grads.append(None)
            continue
        layer_grads = {}
        for name, p in layer.params.items():
            g = np.zeros_like(p)
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = p[idx]
                p[idx] = orig + h
                fp, _ = ndnet.forward(model, x)
                p[idx] = orig - h
                fm, _ = ndnet.forward(model, x)
                p[idx] = orig
                g[idx] = (loss_fn(fp) - loss_fn(fm)) / (2 * h)
            layer_grads[name] = g
        grads.append(layer_grads)
    return grads


def random_small_model(rng, input_len=None, with_bias=True):
    """1-3 layer model mixing dense/conv1d/relu/flatten, m <= 32."""
    m = input_len or int(rng.integers(3, 33))
    classes = int(rng.integers(2, 5))
    arch = rng.choice(["dense", "cnn", "deep_dense"])
    def bias(n):
        return rng.normal(size=n) * 0.3 if with_bias else np.zeros(n)
    if arch == "dense":
        w = rng.normal(size=(classes, m)) * 0.5
        layers = [ndnet.Dense(w, bias(classes))]
        shape = (m,)
    elif arch == "deep_dense":
        h = int(rng.integers(2, 9))
        layers = [
            ndnet.Dense(rng.normal(size=(h, m)) * 0.5, bias(h)),
            ndnet.ReLU(),
            ndnet.Dense(rng.normal(size=(classes, h)) * 0.5, bias(classes)),
        ]
        shape = (m,)
    else:
        ch = int(rng.integers(1, 4))
        k = int(rng.integers(1, min(4, m) + 1))
        conv_out = m - k + 1
        layers = [
            ndnet.Conv1d(rng.normal(size=(ch, 1, k)) * 0.5, bias(ch)),
            ndnet.ReLU(),
            ndnet.Flatten(),
            ndnet.Dense(rng.normal(size=(classes, ch * conv_out)) * 0.5, bias(classes)),
        ]
        shape = (1, m)
    return ndnet.NetworkModel(layers, shape, classes).validate()


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = np.maximum(np.abs(a) + np.abs(b), 1e-6)
    return np.max(np.abs(a - b) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def separable_dataset():
    """Trivially separable 2-class set: class by sign of a step pattern."""
    from tsxplain import data

    rng = np.random.default_rng(7)
    n, m = 80, 24
    values = rng.normal(0, 0.1, size=(n, m))
    labels = np.array([i % 2 for i in range(n)])
    values[labels == 1, 8:16] += 2.0
    values[labels == 0, 8:16] -= 2.0
    return data.Dataset(values, labels, 2, name="separable")
