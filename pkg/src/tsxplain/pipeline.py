"""Three-stage evaluation pipeline and report aggregation.

Stage 1 trains and scores the model, stage 2 explains every test sample
and builds the perturbed test sets (method-driven plus count-matched
random controls), stage 3 re-scores each perturbed set. The report stores
the full grid and the triples needed to check the ordering assumption
base >= random-control > method-perturbed.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from tsxplain import attribution, models, verification


class PipelineError(RuntimeError):
    pass


ASSUMPTION_TOLERANCE = 1e-12


def normalized_change(base_acc, changed_acc):
    """(base - changed) / base; None (missing cell) when base is 0."""
    if not 0.0 <= base_acc <= 1.0 or not 0.0 <= changed_acc <= 1.0:
        raise ValueError("accuracies must lie in [0, 1]")
    if base_acc == 0.0:
        return None
    return (base_acc - changed_acc) / base_acc


@dataclass
class AssumptionVerdict:
    method: str
    strategy: str
    base_accuracy: float
    random_accuracy: float
    method_accuracy: float
    first_holds: bool  # base >= random (within tolerance)
    second_holds: bool  # random strictly > method

    @property
    def holds(self):
        return self.first_holds and self.second_holds


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise PipelineError(f"stage '{name}' failed: {exc}") from exc


def run_pipeline(train_set, test_set, train_config, explainers, specs, seed=0,
                 model=None, extra_relevances=None, collect_relevances=None):
    """Run the full evaluation; returns the report as a JSON-ready dict.

    explainers: mapping display name -> attribution.Explainer.
    extra_relevances: mapping name -> (n, m) matrix, evaluated alongside the
    explainers (used to feed oracle relevance such as ground-truth masks).
    collect_relevances: optional dict that receives the computed matrices.
    A pre-trained model skips stage 1's training but is still scored.
    """
    for spec in specs:
        spec.validate()

    # stage 1: train and score
    history = None
    if model is None:
        model = _stage(
            "train",
            models.build_baseline_cnn,
            test_set.length,
            test_set.class_count,
            seed,
        )
        history = _stage("train", models.train, model, train_set, train_config)
    base_acc = _stage("train", models.evaluate, model, test_set)

    # stage 2: explanations for every test sample, then the perturbed sets
    relevance_matrices = {}
    for name, explainer in explainers.items():
        mat, _ = _stage("explain", attribution.explain_dataset, explainer, model, test_set)
        relevance_matrices[name] = mat
    for name, mat in (extra_relevances or {}).items():
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape != test_set.values.shape:
            raise PipelineError(
                f"stage 'explain' failed: extra relevance {name!r} has shape "
                f"{mat.shape}, expected {test_set.values.shape}"
            )
        relevance_matrices[name] = mat
    if collect_relevances is not None:
        collect_relevances.update(relevance_matrices)

    # stage 3: re-score each perturbed test set
    cells = {}
    for name, mat in relevance_matrices.items():
        cells[name] = {}
        for spec in specs:
            method_spec = verification.PerturbationSpec(
                spec.strategy, spec.threshold_percentile, spec.subseq_len,
                "method", seed,
            )
            random_spec = verification.PerturbationSpec(
                spec.strategy, spec.threshold_percentile, spec.subseq_len,
                "random", seed,
            )
            perturbed = _stage("perturb", verification.apply_spec, test_set, mat, method_spec)
            control = _stage("perturb", verification.apply_spec, test_set, mat, random_spec)
            changed = _stage("score", models.evaluate, model, perturbed.dataset)
            random_changed = _stage("score", models.evaluate, model, control.dataset)
            cells[name][spec.strategy] = {
                "changed_accuracy": changed,
                "normalized_change": normalized_change(base_acc, changed),
                "random_changed_accuracy": random_changed,
                "random_normalized_change": normalized_change(base_acc, random_changed),
            }

    random_row = {}
    for spec in specs:
        vals = [
            cells[name][spec.strategy]["random_normalized_change"]
            for name in cells
            if cells[name][spec.strategy]["random_normalized_change"] is not None
        ]
        random_row[spec.strategy] = float(np.mean(vals)) if vals else None

    report = {
        "base_accuracy": base_acc,
        "cells": cells,
        "random_row": random_row,
        "metadata": {
            "seed": seed,
            "train_config": asdict(train_config),
            "trained_here": history is not None,
            "final_train_loss": history.epochs[-1].loss if history else None,
            "dataset": {
                "name": test_set.name,
                "classes": test_set.class_count,
                "length": test_set.length,
                "n_train": len(train_set),
                "n_test": len(test_set),
                "train_fingerprint": train_set.fingerprint(),
                "test_fingerprint": test_set.fingerprint(),
            },
            "methods": sorted(relevance_matrices),
            "strategies": [
                {
                    "strategy": s.strategy,
                    "threshold_percentile": s.threshold_percentile,
                    "subseq_len": s.effective_subseq_len(test_set.length),
                }
                for s in specs
            ],
            "relevance_mode": "signed",
            "normalization": "(base - changed) / base",
            "random_row_rule": "mean of per-method random controls",
        },
    }
    return report


def check_assumption(report):
    """Evaluate base >= random > method per (method, strategy) cell."""
    verdicts = []
    base = report["base_accuracy"]
    for method in sorted(report["cells"]):
        for strat in report["cells"][method]:
            cell = report["cells"][method][strat]
            rnd = cell["random_changed_accuracy"]
            chg = cell["changed_accuracy"]
            verdicts.append(
                AssumptionVerdict(
                    method=method,
                    strategy=strat,
                    base_accuracy=base,
                    random_accuracy=rnd,
                    method_accuracy=chg,
                    first_holds=base - rnd >= -ASSUMPTION_TOLERANCE,
                    second_holds=rnd - chg > ASSUMPTION_TOLERANCE,
                )
            )
    return verdicts


def aggregate(reports):
    """Unweighted per-cell mean of normalized changes across datasets."""
    if not reports:
        raise ValueError("no reports to aggregate")
    methods = sorted(reports[0]["cells"])
    strategies = [s["strategy"] for s in reports[0]["metadata"]["strategies"]]
    for rep in reports[1:]:
        if sorted(rep["cells"]) != methods or [
            s["strategy"] for s in rep["metadata"]["strategies"]
        ] != strategies:
            raise ValueError("reports do not share method/strategy axes")
    out = {"cells": {}, "random_row": {}}
    for method in methods:
        out["cells"][method] = {}
        for strat in strategies:
            vals = [
                rep["cells"][method][strat]["normalized_change"]
                for rep in reports
                if rep["cells"][method][strat]["normalized_change"] is not None
            ]
            out["cells"][method][strat] = {
                "mean_normalized_change": float(np.mean(vals)) if vals else None,
                "count": len(vals),
            }
    for strat in strategies:
        vals = [
            rep["random_row"][strat]
            for rep in reports
            if rep["random_row"][strat] is not None
        ]
        out["random_row"][strat] = {
            "mean_normalized_change": float(np.mean(vals)) if vals else None,
            "count": len(vals),
        }
    return out


_DISPLAY = {
    "zero": "Zero",
    "inverse": "Inverse",
    "swap": "Swap",
    "mean": "Mean",
    "swap_zero": "SwapZero",
    "mean_zero": "MeanZero",
}


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def report_to_csv(report):
    """Grid CSV: methods as rows, strategies as columns, Random as final row."""
    strategies = [s["strategy"] for s in report["metadata"]["strategies"]]
    lines = ["method," + ",".join(_DISPLAY.get(s, s) for s in strategies)]
    for method in sorted(report["cells"]):
        row = [method] + [
            _fmt(report["cells"][method][s]["normalized_change"]) for s in strategies
        ]
        lines.append(",".join(row))
    lines.append(
        ",".join(["Random"] + [_fmt(report["random_row"][s]) for s in strategies])
    )
    return "\n".join(lines) + "\n"


def report_to_json(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
