"""Per-time-point relevance for five attribution methods.

All methods run against the built-in engine and return one relevance value
per time point of the explained sample. Gradient-style methods (saliency,
relevance propagation, difference-from-reference) run batched over whole
datasets; the sampling methods (local surrogate, Shapley regression) batch
their model queries per sample and derive a per-sample RNG from
(seed, sample index) so results do not depend on execution order.
"""

import json
from dataclasses import dataclass, field
from math import comb

import numpy as np

from tsxplain import kernels, ndnet
from tsxplain.models import model_inputs

METHODS = ("saliency", "lrp", "deeplift", "lime", "shap")

_PROPAGATION_LAYERS = ("dense", "conv1d", "relu", "flatten")


class AttributionError(ValueError):
    pass


@dataclass
class RelevanceVector:
    values: np.ndarray
    method: str
    target_class: int
    sample_index: int = -1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.isfinite(self.values).all():
            raise AttributionError(f"{self.method}: non-finite relevance values")


@dataclass
class Explainer:
    """An attribution method plus its hyperparameters and optional reference input."""

    method: str
    params: dict = field(default_factory=dict)
    reference: np.ndarray = None

    def validate(self):
        if self.method not in METHODS:
            raise AttributionError(f"unknown attribution method {self.method!r}")
        if self.method == "lrp" and self.params.get("epsilon", 1e-6) < 0:
            raise AttributionError("lrp epsilon must be >= 0")
        if self.method == "lime" and self.params.get("num_samples", 1000) < 10:
            raise AttributionError("lime num_samples must be >= 10")
        return self


def _check_sample(model, x):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    expected = int(np.prod(model.input_shape))
    if x.size != expected:
        raise AttributionError(
            f"sample length {x.size} does not match model input length {expected}"
        )
    return x


def _check_propagation_support(model, method):
    for i, layer in enumerate(model.layers):
        if layer.kind not in _PROPAGATION_LAYERS:
            raise AttributionError(
                f"{method}: unsupported layer {i} of kind {layer.kind!r}"
            )


def _predicted(model, batch):
    logits, _ = ndnet.forward(model, batch)
    return logits.argmax(axis=1)


# ---------------------------------------------------------------------------
# gradient-style methods (batched)
# ---------------------------------------------------------------------------

def saliency_batch(model, values, targets):
    """|d logit_target / d input| for every row of values (n, m)."""
    batch = model_inputs(model, values)
    _, trace = ndnet.forward(model, batch)
    grads = ndnet.backward_input(model, trace, targets)
    return np.abs(grads.reshape(len(values), -1))


def lrp_batch(model, values, targets, epsilon=1e-6):
    """Epsilon-stabilized relevance propagation down to the input."""
    _check_propagation_support(model, "lrp")
    batch = model_inputs(model, values)
    logits, trace = ndnet.forward(model, batch)
    n = len(values)
    relevance = np.zeros_like(logits)
    relevance[np.arange(n), targets] = logits[np.arange(n), targets]
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        a = trace.inputs[i]
        if layer.kind == "relu":
            continue  # relevance passes through unchanged
        if layer.kind == "flatten":
            relevance = relevance.reshape(a.shape)
            continue
        z = trace.layer_output(i)
        denom = z + epsilon * np.where(z >= 0.0, 1.0, -1.0)
        s = np.where(denom == 0.0, 0.0, relevance / np.where(denom == 0.0, 1.0, denom))
        if layer.kind == "dense":
            relevance = a * (s @ layer.weight)
        else:  # conv1d
            relevance = a * kernels.conv1d_input_grad(s, layer.weight, layer.stride, a.shape[2])
    return relevance.reshape(n, -1)


def deeplift_batch(model, values, targets, reference=None):
    """Rescale-rule contributions relative to a reference input.

    Contributions per sample sum to logit(sample) - logit(reference) for the
    target class (summation-to-delta).
    """
    _check_propagation_support(model, "deeplift")
    batch = model_inputs(model, values)
    if reference is None:
        reference = np.zeros(batch.shape[1:])
    reference = np.asarray(reference, dtype=np.float64).reshape(batch.shape[1:])
    ref_batch = np.broadcast_to(reference, batch.shape).copy()
    _, trace = ndnet.forward(model, batch)
    _, ref_trace = ndnet.forward(model, ref_batch)

    n = len(values)
    k = trace.output.shape[1]
    mult = np.zeros((n, k))
    mult[np.arange(n), targets] = 1.0
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        x_in, r_in = trace.inputs[i], ref_trace.inputs[i]
        if layer.kind == "relu":
            delta_in = x_in - r_in
            delta_out = np.maximum(x_in, 0.0) - np.maximum(r_in, 0.0)
            small = np.abs(delta_in) < 1e-9
            ratio = np.where(small, (x_in > 0.0).astype(np.float64),
                             delta_out / np.where(small, 1.0, delta_in))
            mult = mult * ratio
        elif layer.kind == "flatten":
            mult = mult.reshape(x_in.shape)
        elif layer.kind == "dense":
            mult = mult @ layer.weight
        else:  # conv1d
            mult = kernels.conv1d_input_grad(mult, layer.weight, layer.stride, x_in.shape[2])
    contrib = mult * (batch - ref_batch)
    return contrib.reshape(n, -1)


# ---------------------------------------------------------------------------
# sampling methods (per sample, batched model queries)
# ---------------------------------------------------------------------------

@dataclass
class LimeConfig:
    num_samples: int = 1000
    kernel_width: float = None  # default 0.75 * sqrt(m)
    mask_value: float = 0.0
    ridge: float = 1e-3
    seed: int = 0


def lime_surrogate(model, sample, target_class, config=None):
    """Weighted ridge fit of a linear surrogate over binary time-point masks."""
    config = config or LimeConfig()
    if config.num_samples < 10:
        raise AttributionError("lime num_samples must be >= 10")
    x = _check_sample(model, sample)
    m = x.size
    rng = np.random.default_rng(config.seed)
    masks = rng.integers(0, 2, size=(config.num_samples, m)).astype(np.float64)
    masks[0] = 1.0  # always include the unperturbed sample
    perturbed = np.where(masks > 0, x, config.mask_value)
    logits, _ = ndnet.forward(model, model_inputs(model, perturbed))
    y = logits[:, target_class]

    kw = config.kernel_width or 0.75 * np.sqrt(m)
    hamming = (masks == 0).sum(axis=1)  # squared euclidean distance to the full mask
    w = np.exp(-hamming / kw**2)

    design = np.hstack([np.ones((len(masks), 1)), masks])
    penalty = np.eye(m + 1) * config.ridge
    penalty[0, 0] = 0.0  # intercept unpenalized
    lhs = (design.T * w) @ design + penalty
    rhs = (design.T * w) @ y
    try:
        beta = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        raise AttributionError(
            "lime: singular regression system; raise num_samples"
        ) from None
    return beta[1:]


@dataclass
class KernelShapConfig:
    num_coalitions: int = 2048
    background: np.ndarray = None  # defaults to all zeros
    seed: int = 0
    exact: bool = None  # default: exact when m <= 12

    def resolve_exact(self, m):
        return self.exact if self.exact is not None else m <= 12


def _shap_kernel_weights(m, sizes):
    sizes = np.asarray(sizes)
    return (m - 1) / (
        np.array([comb(m, int(s)) for s in sizes]) * sizes * (m - sizes)
    )


def _solve_constrained_wls(masks, y, weights, efficiency):
    """Least squares of y ~ masks @ phi subject to sum(phi) = efficiency."""
    m = masks.shape[1]
    if m == 1:
        return np.array([efficiency])
    reduced = masks[:, :-1] - masks[:, -1:]
    target = y - masks[:, -1] * efficiency
    sw = np.sqrt(weights)
    beta, *_ = np.linalg.lstsq(reduced * sw[:, None], target * sw, rcond=None)
    return np.append(beta, efficiency - beta.sum())


def kernel_shap(model, sample, target_class, config=None):
    """Shapley-kernel weighted least squares over coalitions of time points.

    Exact mode enumerates all coalitions and reproduces exact Shapley values;
    sampling mode draws coalitions with size probabilities proportional to
    the Shapley kernel.
    """
    config = config or KernelShapConfig()
    x = _check_sample(model, sample)
    m = x.size
    background = config.background
    if background is None:
        background = np.zeros(m)
    background = np.asarray(background, dtype=np.float64).reshape(-1)
    if background.size == 1:
        background = np.full(m, float(background[0]))
    if background.size != m:
        raise AttributionError("shap background shape does not match the sample")

    exact = config.resolve_exact(m)
    if exact:
        if m > 25:
            raise AttributionError(f"exact mode limited to m <= 25 features, got {m}")
        codes = np.arange(1, 2**m - 1, dtype=np.uint64)
        masks = ((codes[:, None] >> np.arange(m, dtype=np.uint64)) & 1).astype(np.float64)
        weights = _shap_kernel_weights(m, masks.sum(axis=1))
    else:
        if config.num_coalitions < m + 2:
            raise AttributionError("shap num_coalitions must be >= m + 2")
        rng = np.random.default_rng(config.seed)
        sizes = np.arange(1, m)
        p = (m - 1) / (sizes * (m - sizes))
        p = p / p.sum()
        drawn = rng.choice(sizes, size=config.num_coalitions, p=p)
        masks = np.zeros((config.num_coalitions, m))
        for row, s in enumerate(drawn):
            masks[row, rng.choice(m, size=int(s), replace=False)] = 1.0
        weights = np.ones(config.num_coalitions)

    full = np.vstack([np.zeros(m), np.ones(m), masks])
    perturbed = np.where(full > 0, x, background)
    logits, _ = ndnet.forward(model, model_inputs(model, perturbed))
    values = logits[:, target_class]
    v_empty, v_full = values[0], values[1]
    y = values[2:] - v_empty
    return _solve_constrained_wls(masks, y, weights, v_full - v_empty)


def brute_force_shapley(value_fn, m):
    """Independent oracle: exact Shapley values by full subset enumeration."""
    phi = np.zeros(m)
    cache = {}

    def v(code):
        if code not in cache:
            mask = np.array([(code >> i) & 1 for i in range(m)], dtype=np.float64)
            cache[code] = value_fn(mask)
        return cache[code]

    from math import factorial

    for i in range(m):
        for code in range(2**m):
            if (code >> i) & 1:
                continue
            s = bin(code).count("1")
            weight = factorial(s) * factorial(m - s - 1) / factorial(m)
            phi[i] += weight * (v(code | (1 << i)) - v(code))
    return phi


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def saliency(model, sample, target_class):
    x = _check_sample(model, sample)
    return saliency_batch(model, x[None, :], np.array([target_class]))[0]


def lrp_epsilon(model, sample, target_class, epsilon=1e-6):
    if epsilon < 0:
        raise AttributionError("lrp epsilon must be >= 0")
    x = _check_sample(model, sample)
    return lrp_batch(model, x[None, :], np.array([target_class]), epsilon)[0]


def deeplift_rescale(model, sample, target_class, reference=None):
    x = _check_sample(model, sample)
    return deeplift_batch(model, x[None, :], np.array([target_class]), reference)[0]


def explain(explainer, model, sample, target_class=None, sample_index=-1):
    """Produce a RelevanceVector for one sample; target defaults to the prediction."""
    explainer.validate()
    values = np.asarray(sample.values if hasattr(sample, "values") else sample)
    x = _check_sample(model, values)
    if target_class is None:
        target_class = int(_predicted(model, model_inputs(model, x[None, :]))[0])
    p = explainer.params
    if explainer.method == "saliency":
        r = saliency(model, x, target_class)
    elif explainer.method == "lrp":
        r = lrp_epsilon(model, x, target_class, p.get("epsilon", 1e-6))
    elif explainer.method == "deeplift":
        r = deeplift_rescale(model, x, target_class, explainer.reference)
    elif explainer.method == "lime":
        cfg = LimeConfig(
            num_samples=p.get("num_samples", 1000),
            kernel_width=p.get("kernel_width"),
            mask_value=p.get("mask_value", 0.0),
            ridge=p.get("ridge", 1e-3),
            seed=_per_sample_seed(p.get("seed", 0), sample_index),
        )
        r = lime_surrogate(model, x, target_class, cfg)
    else:
        cfg = KernelShapConfig(
            num_coalitions=p.get("num_coalitions", 2048),
            background=explainer.reference,
            seed=_per_sample_seed(p.get("seed", 0), sample_index),
            exact=p.get("exact"),
        )
        r = kernel_shap(model, x, target_class, cfg)
    return RelevanceVector(r, explainer.method, target_class, sample_index)


def _per_sample_seed(seed, sample_index):
    return int(np.random.SeedSequence((seed, max(sample_index, 0))).generate_state(1)[0])


def explain_dataset(explainer, model, dataset, target_classes=None):
    """Relevance matrix (n, m) for every sample of a dataset, plus targets."""
    explainer.validate()
    if target_classes is None:
        target_classes = _predicted(model, model_inputs(model, dataset.values))
    target_classes = np.asarray(target_classes, dtype=np.int64)
    p = explainer.params
    if explainer.method == "saliency":
        mat = saliency_batch(model, dataset.values, target_classes)
    elif explainer.method == "lrp":
        mat = lrp_batch(model, dataset.values, target_classes, p.get("epsilon", 1e-6))
    elif explainer.method == "deeplift":
        mat = deeplift_batch(model, dataset.values, target_classes, explainer.reference)
    else:
        rows = []
        for i in range(len(dataset)):
            rv = explain(explainer, model, dataset.values[i],
                         target_class=int(target_classes[i]), sample_index=i)
            rows.append(rv.values)
        mat = np.vstack(rows)
    if not np.isfinite(mat).all():
        raise AttributionError(f"{explainer.method}: non-finite relevance values")
    return mat, target_classes


# ---------------------------------------------------------------------------
# relevance matrix files: raw little-endian float64 plus a JSON manifest
# ---------------------------------------------------------------------------

def save_relevance(matrix, targets, explainer, seed, path_prefix, extra=None):
    matrix = np.asarray(matrix, dtype=np.float64)
    bin_path = f"{path_prefix}.bin"
    manifest_path = f"{path_prefix}.json"
    with open(bin_path, "wb") as fh:
        fh.write(matrix.astype("<f8").tobytes(order="C"))
    manifest = {
        **(extra or {}),
        "method": explainer.method,
        "params": {k: v for k, v in sorted(explainer.params.items())},
        "seed": seed,
        "rows": int(matrix.shape[0]),
        "cols": int(matrix.shape[1]),
        "target_classes": [int(t) for t in targets],
        "matrix_file": bin_path.rsplit("/", 1)[-1],
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return bin_path, manifest_path


def load_relevance(manifest_path):
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = manifest_path.rsplit("/", 1)[0] if "/" in manifest_path else "."
    with open(f"{base}/{manifest['matrix_file']}", "rb") as fh:
        data = np.frombuffer(fh.read(), dtype="<f8")
    expected = manifest["rows"] * manifest["cols"]
    if data.size != expected:
        raise AttributionError(
            f"relevance matrix has {data.size} values, manifest expects {expected}"
        )
    return data.reshape(manifest["rows"], manifest["cols"]).copy(), manifest
