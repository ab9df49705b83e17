"""Dataset ingestion, normalization, and the planted-pattern generator.

Loaded labels are remapped to contiguous 0..k-1 with the mapping kept on
the Dataset. The synthetic generator plants a class-determining pattern in
a known window, so attribution quality can be scored against ground truth.
"""

import json
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class TimeSeriesSample:
    values: np.ndarray
    label: int


@dataclass
class Dataset:
    """Uniform-length univariate series with integer labels in [0, k)."""

    values: np.ndarray  # (n, m)
    labels: np.ndarray  # (n,)
    class_count: int
    name: str = ""
    split: str = "train"
    label_map: dict = field(default_factory=dict)  # original label -> contiguous

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise DataError("dataset values must be a (n, m) array with m >= 1")
        if len(self.labels) != len(self.values):
            raise DataError("label count does not match sample count")
        if self.class_count < 2:
            raise DataError("class_count must be >= 2")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError("labels must lie in [0, class_count)")
        if not np.isfinite(self.values).all():
            raise DataError("dataset contains non-finite values")

    def __len__(self):
        return len(self.values)

    @property
    def length(self):
        return self.values.shape[1]

    def sample(self, i):
        return TimeSeriesSample(self.values[i], int(self.labels[i]))

    def fingerprint(self):
        import hashlib

        h = hashlib.sha256()
        h.update(self.values.astype("<f8").tobytes())
        h.update(self.labels.astype("<i8").tobytes())
        return h.hexdigest()


@dataclass
class GroundTruthMask:
    """Per-sample boolean masks marking the planted discriminative window."""

    masks: np.ndarray  # (n, m) bool
    window: tuple = None  # (start, end) when the position is fixed

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=bool)


def _parse_rows(path, sep):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(sep)
            try:
                row = [float(f) for f in fields]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field") from None
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: need a label and at least one value")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: file contains no samples")
    width = len(rows[0])
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DataError(
                f"{path}:{i}: ragged row ({len(row)} fields, expected {width})"
            )
    return rows


def _load_delimited(path, sep, name, split, label_map):
    rows = _parse_rows(path, sep)
    raw_labels = [row[0] for row in rows]
    values = np.array([row[1:] for row in rows])
    if label_map is None:
        label_map = {lab: i for i, lab in enumerate(sorted(set(raw_labels)))}
    else:
        unknown = set(raw_labels) - set(label_map)
        if unknown:
            raise DataError(
                f"{path}: labels {sorted(unknown)} absent from the training label map"
            )
    labels = np.array([label_map[lab] for lab in raw_labels], dtype=np.int64)
    return Dataset(values, labels, len(label_map), name=name, split=split, label_map=dict(label_map))


def load_ucr_tsv(path, name="", split="train", label_map=None):
    """UCR layout: one sample per line, label first, tab-separated values."""
    return _load_delimited(path, "\t", name or str(path), split, label_map)


def load_csv(path, name="", split="train", label_map=None):
    """Comma-separated variant of the UCR layout."""
    return _load_delimited(path, ",", name or str(path), split, label_map)


def save_tsv(dataset, path):
    """Inverse of load_ucr_tsv (labels written as the contiguous integers)."""
    with open(path, "w") as fh:
        for row, lab in zip(dataset.values, dataset.labels):
            fh.write("\t".join([repr(int(lab))] + [repr(float(v)) for v in row]) + "\n")


def z_normalize(dataset):
    """Per-series zero mean, unit population std; constant series become zeros."""
    mu = dataset.values.mean(axis=1, keepdims=True)
    sd = dataset.values.std(axis=1, keepdims=True)
    centered = dataset.values - mu
    out = np.where(sd > 0, centered / np.where(sd > 0, sd, 1.0), 0.0)
    return Dataset(
        out,
        dataset.labels.copy(),
        dataset.class_count,
        name=dataset.name,
        split=dataset.split,
        label_map=dict(dataset.label_map),
    )


@dataclass
class PlantedConfig:
    n: int = 200
    m: int = 96
    window_len: int = 8
    noise_std: float = 0.3
    seed: int = 0
    kind: str = "spike"  # spike | slope | flat_vs_sine
    per_sample_position: bool = False

    def validate(self):
        if self.window_len >= self.m:
            raise DataError("window_len must be smaller than the series length")
        if self.n % 2 != 0:
            raise DataError("n must be even (balanced classes)")
        if self.kind not in ("spike", "slope", "flat_vs_sine"):
            raise DataError(f"unknown planted kind {self.kind!r}")
        return self


def _patterns(kind, window_len):
    """Window patterns for (class 0, class 1).

    The two classes carry mirrored patterns of identical amplitude in the
    same window, so direction (not magnitude) is the class cue; reversal,
    averaging, zeroing, and inversion of the window all destroy it while
    changes outside the window are uninformative for both classes.
    """
    pos = np.arange(window_len, dtype=np.float64)
    if kind == "spike":
        ramp = 3.0 * (pos + 1) / window_len  # ascending ramp spike, peak 3
        return ramp[::-1].copy(), ramp
    if kind == "slope":
        up = np.linspace(-1.5, 1.5, window_len)
        return -up, up
    sine = np.sin(np.linspace(0.0, 2.0 * np.pi, window_len, endpoint=False)) * 2.0
    return -sine, sine


def _make_split(cfg, rng, split):
    n, m, w = cfg.n, cfg.m, cfg.window_len
    values = rng.normal(0.0, cfg.noise_std, size=(n, m))
    labels = np.array([0, 1] * (n // 2), dtype=np.int64)
    masks = np.zeros((n, m), dtype=bool)
    patterns = _patterns(cfg.kind, w)
    fixed_start = (m - w) // 2
    for i in range(n):
        start = int(rng.integers(0, m - w + 1)) if cfg.per_sample_position else fixed_start
        masks[i, start : start + w] = True
        values[i, start : start + w] += patterns[labels[i]]
    window = None if cfg.per_sample_position else (fixed_start, fixed_start + w)
    ds = Dataset(values, labels, 2, name=f"planted-{cfg.kind}", split=split)
    return ds, GroundTruthMask(masks, window)


def generate_planted(config):
    """Generate (train, test, truth-for-test); deterministic per seed.

    Each split holds config.n samples, classes alternating 0/1. Class 1
    carries the planted pattern inside the window; everything outside the
    window is i.i.d. noise for both classes.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    train, _ = _make_split(config, rng, "train")
    test, truth = _make_split(config, rng, "test")
    return train, test, truth


def attribution_mass_on_truth(relevance, truth_mask):
    """Fraction of absolute relevance mass inside the ground-truth window."""
    r = np.abs(np.asarray(relevance, dtype=np.float64))
    mask = np.asarray(truth_mask, dtype=bool)
    if r.shape != mask.shape:
        raise DataError(
            f"relevance length {r.shape} does not match mask length {mask.shape}"
        )
    total = r.sum()
    if total == 0.0:
        return 0.0
    return float(r[mask].sum() / total)


def save_truth(truth, path):
    payload = {
        "window": list(truth.window) if truth.window else None,
        "masks": truth.masks.astype(int).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_truth(path):
    with open(path) as fh:
        payload = json.load(fh)
    window = tuple(payload["window"]) if payload["window"] else None
    return GroundTruthMask(np.array(payload["masks"], dtype=bool), window)
