"""
Command-line experiment runner.

    simlabel run <config.json> [--out DIR] [--seed-override S]
    simlabel ablate <config.json> --axis threshold --values 0.5,0.6,0.7,0.8
    simlabel validate <dataset.csv|json> [--json]
    simlabel generate <generator.json> -o <dataset.csv>

Exit codes: 0 success, 1 configuration error, 2 data error, 3 training failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agreement import resolve_metric
from .annotation_store import DatasetError, load_dataset, save_dataset
from .config import ConfigError, ExperimentConfig
from .evaluation import _fmt, compare
from .experiment import evaluate_run, generate_for_seed, prepare, split_seeds
from .refinement import SIM_WEIGHTED_CONFIDENCE, PolicyError, TrainingError
from .soft_label import CONFIDENCE_VARIANTS
from .synth import GeneratorSpec, generate

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3

ABLATION_AXES = ("similarity_metric", "threshold", "confidence_variant")


def _dataset_for_seed(cfg: ExperimentConfig, seed: int):
    """The matrix (and ground truth, when generated) used by master seed ``seed``."""
    if cfg.load is not None:
        return load_dataset(cfg.load, num_classes=cfg.num_classes), None
    return generate_for_seed(cfg.generator_spec(), seed)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _save_run(run_dir: Path, report, result) -> None:
    _write(run_dir / "report.json", report.to_json())
    _write(run_dir / "accuracy.csv", report.accuracy_csv())
    _write(run_dir / "dic.csv", report.dic_csv())
    result.trace.save(run_dir / "trace.csv")
    result.matrix.write_imputation_log(run_dir / "imputations.jsonl")
    result.similarity.save(run_dir / "similarity.csv")
    (run_dir / "models").mkdir(exist_ok=True)
    for m in result.models:
        m.save(run_dir / "models" / f"annotator_{m.annotator_id}.json")


def _save_failure(run_dir: Path, exc: TrainingError) -> None:
    if exc.trace is not None:
        _write(run_dir / "trace.csv", exc.trace.to_csv())
    if exc.matrix is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        exc.matrix.write_imputation_log(run_dir / "imputations.jsonl")
    _write(run_dir / "FAILED", f"{exc}\n")


def cmd_run(cfg: ExperimentConfig) -> int:
    out = cfg.output_dir
    dataset = cfg.dataset_name()
    reports = []
    files = []
    for seed in cfg.seeds:
        matrix, truth = _dataset_for_seed(cfg, seed)
        data = prepare(matrix, truth, cfg.removal_ratio, cfg.test_fraction, seed)
        train_seed = split_seeds(seed)["train"]
        for mode in cfg.modes:
            policy = cfg.policy.replace(mode=mode, seed=train_seed)
            run_dir = out / f"seed_{seed}" / mode
            run_dir.mkdir(parents=True, exist_ok=True)
            try:
                report, result = evaluate_run(data, policy, cfg.metric, dataset, seed)
            except TrainingError as exc:
                _save_failure(run_dir, exc)
                _write_manifest(cfg, files, failed=f"seed_{seed}/{mode}")
                print(f"training failed (seed {seed}, mode {mode}): {exc}", file=sys.stderr)
                return EXIT_TRAINING
            _save_run(run_dir, report, result)
            files.append(f"seed_{seed}/{mode}")
            reports.append(report)
            print(f"seed {seed:>4}  {mode:<24} accuracy {report.mean_accuracy:.4f}  "
                  f"dic {report.dic:.4f}  imputations {report.imputations}")

    table = compare(reports)
    _write(out / "comparison.csv", table.accuracy_csv())
    _write(out / "dic.csv", table.dic_csv())
    _write(out / "comparison.json", table.to_json())
    _write_manifest(cfg, files)
    print(table.accuracy_csv(), end="")
    return EXIT_OK


def _write_manifest(cfg: ExperimentConfig, runs, failed=None) -> None:
    doc = {
        "config": cfg.effective_dict(),
        "config_hash": cfg.config_hash(),
        "modes": cfg.modes,
        "seeds": cfg.seeds,
        "runs": list(runs),
        "version": __version__,
    }
    if failed is not None:
        doc["failed"] = failed
    _write(cfg.output_dir / "manifest.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def parse_axis_values(axis: str, raw: str) -> list:
    """Parse and check the comma-separated ``--values`` for an ablation axis."""
    if axis not in ABLATION_AXES:
        raise ConfigError(f"--axis: expected one of {list(ABLATION_AXES)}")
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if not items:
        raise ConfigError("--values: at least one value is required")
    if axis == "threshold":
        try:
            values = [float(v) for v in items]
        except ValueError:
            raise ConfigError("--values: thresholds must be numbers") from None
        if any(not 0 <= v <= 1 for v in values):
            raise ConfigError("--values: thresholds must lie in [0, 1]")
        return values
    if axis == "similarity_metric":
        try:
            return [resolve_metric(v) for v in items]
        except ValueError as exc:
            raise ConfigError(f"--values: {exc}") from None
    bad = [v for v in items if v not in CONFIDENCE_VARIANTS]
    if bad:
        raise ConfigError(f"--values: unknown confidence variant(s) {bad}; "
                          f"expected {list(CONFIDENCE_VARIANTS)}")
    return items


def cmd_ablate(cfg: ExperimentConfig, axis: str, values: list) -> int:
    """Sweep one axis under similarity-weighted confidence training, paired by seed."""
    rows = {str(v): {"acc": [], "dic": []} for v in values}
    for seed in cfg.seeds:
        matrix, truth = _dataset_for_seed(cfg, seed)
        data = prepare(matrix, truth, cfg.removal_ratio, cfg.test_fraction, seed)
        train_seed = split_seeds(seed)["train"]
        for v in values:
            metric = cfg.metric
            policy = cfg.policy.replace(mode=SIM_WEIGHTED_CONFIDENCE, seed=train_seed)
            if axis == "threshold":
                policy = policy.replace(confidence_threshold=v)
            elif axis == "confidence_variant":
                policy = policy.replace(confidence_variant=v)
            else:
                metric = v
            try:
                report, _ = evaluate_run(data, policy, metric, cfg.dataset_name(), seed)
            except TrainingError as exc:
                _write(cfg.output_dir / f"ablation_{axis}.FAILED", f"value {v}, seed {seed}: {exc}\n")
                print(f"training failed (value {v}, seed {seed}): {exc}", file=sys.stderr)
                return EXIT_TRAINING
            rows[str(v)]["acc"].append(report.mean_accuracy)
            rows[str(v)]["dic"].append(report.dic)
            print(f"seed {seed:>4}  {axis}={v:<14} accuracy {report.mean_accuracy:.4f}")

    text = ablation_csv(rows)
    _write(cfg.output_dir / f"ablation_{axis}.csv", text)
    print(text, end="")
    return EXIT_OK


def ablation_csv(rows: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["value", "mean_accuracy", "std_accuracy", "mean_dic", "n_seeds"])
    for value, r in rows.items():
        acc = np.asarray(r["acc"], dtype=float)
        dics = np.asarray(r["dic"], dtype=float)
        w.writerow([value, _fmt(float(acc.mean())), _fmt(float(acc.std())),
                    _fmt(float(np.nanmean(dics)) if np.isfinite(dics).any() else None), acc.size])
    return buf.getvalue()


def diagnostics(matrix) -> dict:
    return {
        "num_samples": matrix.num_samples,
        "num_annotators": matrix.num_annotators,
        "num_classes": matrix.num_classes,
        "feature_dim": matrix.feature_dim,
        "missing_rates": [float(r) for r in matrix.missing_rates()],
        "overlap_counts": matrix.overlap_counts().tolist(),
        "label_histogram": matrix.label_histogram().tolist(),
    }


def format_diagnostics(diag: dict) -> str:
    k = diag["num_annotators"]
    lines = [
        f"samples {diag['num_samples']}  annotators {k}  classes {diag['num_classes']}  "
        f"features {diag['feature_dim']}",
        "",
        "annotator  missing rate  " + "  ".join(f"c{c:<4}" for c in range(diag["num_classes"])),
    ]
    for a in range(k):
        hist = "  ".join(f"{n:<5}" for n in diag["label_histogram"][a])
        lines.append(f"A_{a + 1:<8} {100 * diag['missing_rates'][a]:>10.1f}%  {hist}")
    mean_rate = 100 * float(np.mean(diag["missing_rates"]))
    lines.append(f"{'mean':<10} {mean_rate:>10.1f}%")
    lines += ["", "overlap counts"]
    for a, row in enumerate(diag["overlap_counts"]):
        lines.append(f"A_{a + 1:<8} " + " ".join(f"{n:>6}" for n in row))
    return "\n".join(lines) + "\n"


def cmd_validate(path, as_json: bool = False, num_classes=None) -> int:
    matrix = load_dataset(path, num_classes=num_classes)
    diag = diagnostics(matrix)
    if as_json:
        print(json.dumps(diag, indent=1, sort_keys=True))
    else:
        print(format_diagnostics(diag), end="")
    return EXIT_OK


def _load_generator(path: Path) -> GeneratorSpec:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such generator spec") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if isinstance(doc, dict) and "preset" in doc:
        cfg = ExperimentConfig.from_dict({"dataset": {"generate": doc}}, path.parent)
        return cfg.generator_spec()
    return GeneratorSpec.from_dict(doc)


def cmd_generate(spec_path, output, seed=None) -> int:
    spec = _load_generator(Path(spec_path))
    if seed is not None:
        spec.seed = int(seed)
    matrix, truth = generate(spec)
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(matrix, output)
    truth.save(output.with_name(output.stem + ".truth.json"))
    print(f"wrote {output} ({matrix.num_samples} samples, {matrix.num_annotators} annotators)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simlabel", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seed-override", type=int, help="run this single master seed instead")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="train and evaluate every listed mode and seed")
    p.add_argument("config")

    p = sub.add_parser("ablate", parents=[common], help="sweep one axis of the confidence policy")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=ABLATION_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")

    p = sub.add_parser("validate", help="print dataset diagnostics")
    p.add_argument("file")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.add_argument("--num-classes", type=int)

    p = sub.add_parser("generate", help="write a synthetic dataset and its ground truth")
    p.add_argument("spec")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed-override", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("run", "ablate"):
            cfg = ExperimentConfig.from_file(args.config).with_overrides(args.out, args.seed_override)
            if args.command == "run":
                return cmd_run(cfg)
            return cmd_ablate(cfg, args.axis, parse_axis_values(args.axis, args.values))
        if args.command == "validate":
            return cmd_validate(args.file, args.json, args.num_classes)
        return cmd_generate(args.spec, args.output, args.seed_override)
    except (ConfigError, PolicyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
