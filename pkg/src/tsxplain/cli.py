"""Command-line entry point: run, verify, plot, gen-data.

A run is driven by one declarative YAML config; every field has a default
and the resolved config is echoed into the output directory so a run can
be reproduced from its artifacts alone. Exit codes: 0 success, 2 config
or input validation failure, 1 runtime failure.
"""

import argparse
import copy
import os
import sys
from pathlib import Path

import yaml

from tsxplain import attribution, data, heatmap, models, pipeline, verification


class CliError(Exception):
    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


DEFAULT_CONFIG = {
    "seed": 0,
    "output_dir": None,  # default: $TSXPLAIN_OUT/run or ./out
    "dataset": {
        "synthetic": {
            "kind": "spike",
            "n": 200,
            "length": 96,
            "window_len": 8,
            "noise_std": 0.3,
            "per_sample_position": False,
        },
        "train_path": None,
        "test_path": None,
        "format": "tsv",
        "normalize": True,
    },
    "model": {
        "epochs": 50,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "optimizer": "adam",
    },
    "explainers": [
        {"method": "saliency"},
        {"method": "lrp", "epsilon": 1e-6},
        {"method": "deeplift"},
        {"method": "lime", "num_samples": 1000},
        {"method": "shap", "num_coalitions": 1024},
    ],
    "perturbations": {
        "strategies": ["zero", "inverse", "swap", "mean", "swap_zero", "mean_zero"],
        "threshold_percentile": 90.0,
        "subseq_len": None,
    },
    "plots": {"sample_indices": [], "mode": "abs"},
    "save_perturbed": False,
}


def _merge(defaults, override, path="config"):
    if override is None:
        return copy.deepcopy(defaults)
    if isinstance(defaults, dict):
        if not isinstance(override, dict):
            raise CliError(f"{path}: expected a mapping, got {type(override).__name__}")
        out = {}
        for key in defaults:
            out[key] = _merge(defaults[key], override.get(key), f"{path}.{key}")
        unknown = set(override) - set(defaults)
        if unknown:
            raise CliError(f"{path}: unknown keys {sorted(unknown)}")
        return out
    return copy.deepcopy(override)


def load_config(path, overrides=None):
    path = Path(path)
    if not path.exists():
        raise CliError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise CliError(f"{path}: invalid YAML: {exc}") from None
    # explainers is a list; replace wholesale when given
    explainers = raw.pop("explainers", None)
    cfg = _merge(DEFAULT_CONFIG, raw)
    if explainers is not None:
        cfg["explainers"] = explainers
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg
        *parents, leaf = key.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
    if cfg["output_dir"] is None:
        root = os.environ.get("TSXPLAIN_OUT", "out")
        cfg["output_dir"] = str(Path(root) / "run")
    return cfg


def _load_datasets(cfg):
    ds_cfg = cfg["dataset"]
    if ds_cfg.get("train_path"):
        loader = data.load_ucr_tsv if ds_cfg["format"] == "tsv" else data.load_csv
        train_path, test_path = ds_cfg["train_path"], ds_cfg["test_path"]
        for p in (train_path, test_path):
            if not p or not Path(p).exists():
                raise CliError(f"dataset.train_path/test_path: file not found: {p}")
        train = loader(train_path, split="train")
        test = loader(test_path, split="test", label_map=train.label_map)
        if ds_cfg["normalize"]:
            train, test = data.z_normalize(train), data.z_normalize(test)
        return train, test, None
    syn = ds_cfg["synthetic"]
    try:
        planted = data.PlantedConfig(
            n=syn["n"],
            m=syn["length"],
            window_len=syn["window_len"],
            noise_std=syn["noise_std"],
            seed=cfg["seed"],
            kind=syn["kind"],
            per_sample_position=syn["per_sample_position"],
        ).validate()
    except data.DataError as exc:
        raise CliError(f"dataset.synthetic: {exc}") from None
    train, test, truth = data.generate_planted(planted)
    return train, test, truth


def _build_explainers(cfg):
    out = {}
    for item in cfg["explainers"]:
        if "method" not in item:
            raise CliError("explainers: every entry needs a 'method' key")
        params = {k: v for k, v in item.items() if k != "method"}
        try:
            out[item["method"]] = attribution.Explainer(item["method"], params).validate()
        except attribution.AttributionError as exc:
            raise CliError(f"explainers: {exc}") from None
    return out


def _build_specs(cfg):
    pert = cfg["perturbations"]
    specs = []
    for strat in pert["strategies"]:
        try:
            specs.append(
                verification.PerturbationSpec(
                    strat,
                    threshold_percentile=pert["threshold_percentile"],
                    subseq_len=pert["subseq_len"],
                    seed=cfg["seed"],
                ).validate()
            )
        except verification.PerturbationError as exc:
            raise CliError(f"perturbations: {exc}") from None
    return specs


def cmd_run(args):
    cfg = load_config(
        args.config,
        overrides={
            "seed": args.seed,
            "output_dir": args.output_dir,
            "perturbations.threshold_percentile": args.threshold_percentile,
            "perturbations.subseq_len": args.subseq_len,
        },
    )
    train, test, truth = _load_datasets(cfg)
    explainers = _build_explainers(cfg)
    specs = _build_specs(cfg)
    train_config = models.TrainConfig(seed=cfg["seed"], **cfg["model"])
    try:
        train_config.validate()
    except models.TrainingError as exc:
        raise CliError(f"model: {exc}") from None

    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.yaml", "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)

    from tsxplain import ndnet

    collected = {}
    try:
        model = models.build_baseline_cnn(test.length, test.class_count, cfg["seed"])
        models.train(model, train, train_config)
        report = pipeline.run_pipeline(
            train, test, train_config, explainers, specs,
            seed=cfg["seed"], model=model, collect_relevances=collected,
        )
    except (pipeline.PipelineError, models.TrainingError) as exc:
        raise CliError(str(exc), code=1) from None
    ndnet.save_model(model, out / "model.ndn")

    data.save_tsv(test, out / "test.tsv")
    data.save_tsv(train, out / "train.tsv")
    if truth is not None:
        data.save_truth(truth, out / "truth.json")

    targets = models.predict(model, test)
    for name, mat in collected.items():
        attribution.save_relevance(
            mat, targets, explainers.get(name, attribution.Explainer(name)),
            cfg["seed"], str(out / f"relevance_{name}"),
            extra={"dataset_file": "test.tsv"},
        )

    if cfg["save_perturbed"]:
        for name, mat in collected.items():
            for spec in specs:
                perturbed = verification.apply_spec(test, mat, spec)
                stem = f"perturbed_{name}_{spec.strategy}"
                data.save_tsv(perturbed.dataset, out / f"{stem}.tsv")
                verification.save_changed_ranges(perturbed, out / f"{stem}_ranges.json")

    with open(out / "report.json", "w") as fh:
        fh.write(pipeline.report_to_json(report))
    with open(out / "report.csv", "w") as fh:
        fh.write(pipeline.report_to_csv(report))

    for idx in cfg["plots"]["sample_indices"]:
        if not 0 <= idx < len(test):
            raise CliError(f"plots.sample_indices: index {idx} out of range")
        for name, mat in collected.items():
            svg = heatmap.render_heatmap_svg(
                test.values[idx], mat[idx], mode=cfg["plots"]["mode"],
                title=f"{name} relevance, sample {idx}",
            )
            with open(out / f"heatmap_{name}_{idx}.svg", "w") as fh:
                fh.write(svg)

    print(f"run complete: base accuracy {report['base_accuracy']:.4f}, "
          f"artifacts in {out}")
    return 0


def cmd_verify(args):
    cfg = load_config(args.config)
    out = Path(cfg["output_dir"])
    report_path = out / "report.json"
    if not report_path.exists():
        raise CliError(f"no prior run artifacts at {report_path}")
    import json

    with open(report_path) as fh:
        report = json.load(fh)
    if report["metadata"]["seed"] != cfg["seed"]:
        raise CliError(
            f"fingerprint mismatch: report was produced with seed "
            f"{report['metadata']['seed']}, config says {cfg['seed']}"
        )
    if not cfg["dataset"].get("train_path"):
        _, test, _ = _load_datasets(cfg)
        if report["metadata"]["dataset"]["test_fingerprint"] != test.fingerprint():
            raise CliError("fingerprint mismatch: stored report does not match "
                           "the dataset this config generates")
    verdicts = pipeline.check_assumption(report)
    failed = [v for v in verdicts if not v.holds]
    for v in verdicts:
        status = "PASS" if v.holds else "FAIL"
        print(f"{status} {v.method}/{v.strategy}: base={v.base_accuracy:.4f} "
              f"random={v.random_accuracy:.4f} method={v.method_accuracy:.4f}")
    if failed:
        print(f"{len(failed)} of {len(verdicts)} cells violate the ordering assumption")
        return 1
    print(f"all {len(verdicts)} cells satisfy the ordering assumption")
    return 0


def cmd_plot(args):
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise CliError(f"manifest not found: {manifest_path}")
    try:
        matrix, manifest = attribution.load_relevance(str(manifest_path))
    except attribution.AttributionError as exc:
        raise CliError(str(exc)) from None
    if not 0 <= args.index < matrix.shape[0]:
        raise CliError(f"sample index {args.index} out of range [0, {matrix.shape[0]})")
    dataset_file = args.dataset or manifest.get("dataset_file")
    if dataset_file is None:
        raise CliError("no dataset file in the manifest; pass --dataset")
    ds_path = Path(dataset_file)
    if not ds_path.is_absolute():
        ds_path = manifest_path.parent / ds_path
    if not ds_path.exists():
        raise CliError(f"dataset file not found: {ds_path}")
    dataset = data.load_ucr_tsv(str(ds_path))
    ranges = None
    if args.ranges:
        ranges = verification.load_changed_ranges(args.ranges)[args.index]
    svg = heatmap.render_heatmap_svg(
        dataset.values[args.index], matrix[args.index], changed_ranges=ranges,
        mode=args.mode, title=f"{manifest['method']} relevance, sample {args.index}",
    )
    with open(args.out, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.out}")
    return 0


def cmd_gen_data(args):
    try:
        cfg = data.PlantedConfig(
            n=args.n, m=args.length, window_len=args.window_len,
            noise_std=args.noise_std, seed=args.seed, kind=args.kind,
            per_sample_position=args.per_sample_position,
        ).validate()
    except data.DataError as exc:
        raise CliError(str(exc)) from None
    train, test, truth = data.generate_planted(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.save_tsv(train, out / "train.tsv")
    data.save_tsv(test, out / "test.tsv")
    data.save_truth(truth, out / "truth.json")
    print(f"wrote train.tsv, test.tsv, truth.json to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tsxplain",
        description="Train time-series classifiers, explain them, and verify "
                    "the explanations by perturbation analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the full three-stage pipeline")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--output-dir")
    run.add_argument("--threshold-percentile", type=float)
    run.add_argument("--subseq-len", type=int)
    run.set_defaults(fn=cmd_run)

    verify = sub.add_parser("verify", help="re-check the ordering assumption "
                                           "from a prior run's artifacts")
    verify.add_argument("config")
    verify.set_defaults(fn=cmd_verify)

    plot = sub.add_parser("plot", help="render a relevance heatmap SVG")
    plot.add_argument("manifest")
    plot.add_argument("index", type=int)
    plot.add_argument("out")
    plot.add_argument("--dataset")
    plot.add_argument("--ranges")
    plot.add_argument("--mode", choices=["abs", "signed"], default="abs")
    plot.set_defaults(fn=cmd_plot)

    gen = sub.add_parser("gen-data", help="write a planted synthetic dataset")
    gen.add_argument("out")
    gen.add_argument("--kind", default="spike",
                     choices=["spike", "slope", "flat_vs_sine"])
    gen.add_argument("--n", type=int, default=200)
    gen.add_argument("--length", type=int, default=96)
    gen.add_argument("--window-len", type=int, default=8)
    gen.add_argument("--noise-std", type=float, default=0.3)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--per-sample-position", action="store_true")
    gen.set_defaults(fn=cmd_gen_data)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (data.DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
