"""Perturbation analysis and sequence verification of relevance vectors.

Point strategies (zero, inverse) change the individual time points whose
relevance exceeds the percentile threshold. Sequence strategies (swap,
mean, and their zero variants) treat those points as window starts,
merge overlapping windows into maximal runs, and rewrite each run.
Every strategy has a count-matched random-position control.
"""

import json
from dataclasses import dataclass

import numpy as np

STRATEGIES = ("zero", "inverse", "swap", "mean", "swap_zero", "mean_zero")
POINT_STRATEGIES = ("zero", "inverse")
SEQUENCE_STRATEGIES = ("swap", "mean", "swap_zero", "mean_zero")


class PerturbationError(ValueError):
    pass


@dataclass
class PerturbationSpec:
    strategy: str
    threshold_percentile: float = 90.0
    subseq_len: int = None  # sequence strategies; default max(3, round(0.05 * m))
    relevance_source: str = "method"  # method | random
    seed: int = 0

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise PerturbationError(f"unknown strategy {self.strategy!r}")
        if not 0.0 < self.threshold_percentile < 100.0:
            raise PerturbationError("threshold_percentile must lie in (0, 100)")
        if self.relevance_source not in ("method", "random"):
            raise PerturbationError(
                f"unknown relevance source {self.relevance_source!r}"
            )
        if self.subseq_len is not None and self.subseq_len < 1:
            raise PerturbationError("subseq_len must be >= 1")
        return self

    def effective_subseq_len(self, m):
        if self.subseq_len is not None:
            return self.subseq_len
        return max(3, round(0.05 * m))


@dataclass
class PerturbedDataset:
    """Perturbed copies of a dataset's samples plus the change bookkeeping."""

    dataset: object  # data.Dataset with modified values
    changed_ranges: list  # per sample: list of (start, end) half-open ranges
    spec: PerturbationSpec


def default_subseq_len(m):
    return max(3, round(0.05 * m))


def threshold_select(relevance, percentile):
    """Indices whose relevance strictly exceeds the interpolated percentile."""
    r = np.asarray(relevance, dtype=np.float64)
    if r.size == 0:
        raise PerturbationError("relevance vector is empty")
    e = np.percentile(r, percentile)
    return np.flatnonzero(r > e)


def _check_indices(indices, m):
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= m):
        raise PerturbationError(f"index out of range [0, {m})")
    return idx


def perturb_zero(sample, indices):
    t = np.array(sample, dtype=np.float64)
    idx = _check_indices(indices, t.size)
    t[idx] = 0.0
    return t


def perturb_inverse(sample, indices):
    """t_i -> max(t) - t_i, the max taken over the full original sample."""
    t = np.array(sample, dtype=np.float64)
    idx = _check_indices(indices, t.size)
    t[idx] = t.max() - t[idx]
    return t


def merge_windows(start_indices, n_s, m):
    """Sorted maximal runs of the windows [i, i+n_s), clipped at the end."""
    starts = np.unique(_check_indices(start_indices, m))
    merged = []
    for s in starts:
        e = min(s + n_s, m)
        if merged and s < merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((int(s), int(e)))
    return merged


def perturb_swap(sample, start_indices, n_s):
    t = np.array(sample, dtype=np.float64)
    for s, e in merge_windows(start_indices, n_s, t.size):
        t[s:e] = t[s:e][::-1]
    return t


def perturb_mean(sample, start_indices, n_s):
    t = np.array(sample, dtype=np.float64)
    for s, e in merge_windows(start_indices, n_s, t.size):
        t[s:e] = t[s:e].mean()
    return t


def perturb_subsequence_zero(sample, start_indices, n_s):
    t = np.array(sample, dtype=np.float64)
    for s, e in merge_windows(start_indices, n_s, t.size):
        t[s:e] = 0.0
    return t


_SEQUENCE_OPS = {
    "swap": perturb_swap,
    "mean": perturb_mean,
    "swap_zero": perturb_subsequence_zero,
    "mean_zero": perturb_subsequence_zero,
}


def _apply_strategy(sample, positions, spec, m):
    """Apply spec.strategy at the given point indices / window starts."""
    if spec.strategy in POINT_STRATEGIES:
        op = perturb_zero if spec.strategy == "zero" else perturb_inverse
        modified = op(sample, positions)
        ranges = [(int(i), int(i) + 1) for i in sorted(positions)]
    else:
        n_s = spec.effective_subseq_len(m)
        modified = _SEQUENCE_OPS[spec.strategy](sample, positions, n_s)
        ranges = merge_windows(positions, n_s, m)
    return modified, ranges


def _control_rng(spec, sample_index):
    strategy_id = STRATEGIES.index(spec.strategy)
    return np.random.default_rng(
        np.random.SeedSequence((spec.seed, sample_index, strategy_id))
    )


def random_control(sample, relevance, spec, sample_index=0):
    """Apply the strategy at random positions, matching the method's count."""
    spec.validate()
    if spec.relevance_source != "random":
        raise PerturbationError("random_control requires relevance_source='random'")
    t = np.asarray(sample, dtype=np.float64)
    count = len(threshold_select(relevance, spec.threshold_percentile))
    rng = _control_rng(spec, sample_index)
    positions = np.sort(rng.choice(t.size, size=count, replace=False))
    return _apply_strategy(t, positions, spec, t.size)


def apply_spec(dataset, relevances, spec):
    """Perturb every sample of a dataset per the spec.

    relevances is one vector per sample. With relevance_source='method' the
    vectors pick the positions directly; with 'random' they only fix the
    per-sample count and seeded random positions are drawn instead.
    """
    from tsxplain.data import Dataset

    spec.validate()
    relevances = np.asarray(relevances, dtype=np.float64)
    if relevances.shape != dataset.values.shape:
        raise PerturbationError(
            f"relevance matrix shape {relevances.shape} does not match "
            f"dataset shape {dataset.values.shape}"
        )
    m = dataset.length
    out = np.empty_like(dataset.values)
    all_ranges = []
    for i in range(len(dataset)):
        if spec.relevance_source == "method":
            positions = threshold_select(relevances[i], spec.threshold_percentile)
            modified, ranges = _apply_strategy(dataset.values[i], positions, spec, m)
        else:
            modified, ranges = random_control(
                dataset.values[i], relevances[i], spec, sample_index=i
            )
        out[i] = modified
        all_ranges.append(ranges)
    perturbed = Dataset(
        out,
        dataset.labels.copy(),
        dataset.class_count,
        name=dataset.name,
        split=dataset.split,
        label_map=dict(dataset.label_map),
    )
    return PerturbedDataset(perturbed, all_ranges, spec)


def save_changed_ranges(perturbed, path):
    """Sidecar JSON with the per-sample change ranges (audit + plotting)."""
    payload = {
        "strategy": perturbed.spec.strategy,
        "threshold_percentile": perturbed.spec.threshold_percentile,
        "relevance_source": perturbed.spec.relevance_source,
        "ranges": [
            [[int(s), int(e)] for s, e in sample]
            for sample in perturbed.changed_ranges
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_changed_ranges(path):
    with open(path) as fh:
        payload = json.load(fh)
    return [[tuple(r) for r in sample] for sample in payload["ranges"]]
