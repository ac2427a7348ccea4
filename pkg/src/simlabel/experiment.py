"""
One train/evaluate run on a fixed split, shared by the CLI and the demos.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotation_store import AnnotationMatrix, remove_annotations, train_test_split
from .evaluation import RunReport, accuracy, dic
from .refinement import TrainingPolicy, TrainResult, train
from .synth import GeneratorSpec, GroundTruth, generate


def split_seeds(master_seed: int) -> dict:
    """Independent integer seeds for data generation/removal, splitting and training."""
    children = np.random.SeedSequence(int(master_seed)).spawn(3)
    names = ("data", "split", "train")
    return {name: int(child.generate_state(1)[0]) for name, child in zip(names, children)}


@dataclass
class PreparedData:
    train: AnnotationMatrix
    test: AnnotationMatrix
    train_index: np.ndarray
    test_index: np.ndarray
    reference: np.ndarray | None


def prepare(
    matrix: AnnotationMatrix,
    truth: GroundTruth | None = None,
    removal_ratio: float | None = None,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> PreparedData:
    """Optional random removal, then the stratified train/test split."""
    seeds = split_seeds(seed)
    if removal_ratio:
        matrix = remove_annotations(matrix, removal_ratio, seeds["data"])
    tr, te, tr_idx, te_idx = train_test_split(matrix, test_fraction, seeds["split"])
    reference = truth.pre_removal_labels[te_idx] if truth is not None else None
    return PreparedData(tr, te, tr_idx, te_idx, reference)


def generate_for_seed(spec: GeneratorSpec, seed: int):
    """Generate ``spec`` with its seed replaced by the run's data seed."""
    doc = spec.to_dict()
    doc["seed"] = split_seeds(seed)["data"]
    return generate(GeneratorSpec.from_dict(doc))


def evaluate_run(
    data: PreparedData,
    policy: TrainingPolicy,
    metric: str = "cohen_kappa",
    dataset: str = "dataset",
    seed: int | None = None,
) -> tuple[RunReport, TrainResult]:
    """Train under ``policy`` on ``data.train`` and score on ``data.test``."""
    result = train(data.train, policy, metric)
    acc = accuracy(result.models, data.test)
    try:
        d = dic(result.models, data.test, data.reference)
    except ValueError:
        d = float("nan")
    report = RunReport.from_arrays(
        acc, d, policy.mode, policy.seed if seed is None else seed, dataset,
        policy.max_epochs, result.trace.cum_imputations,
    )
    return report, result


def run_modes(
    spec: GeneratorSpec,
    seed: int,
    policy: TrainingPolicy,
    modes=("skip", "sim_weighted", "sim_weighted_confidence"),
    metric: str = "cohen_kappa",
    removal_ratio: float | None = None,
    test_fraction: float = 0.2,
) -> dict:
    """Paired runs of several modes on one generated dataset."""
    matrix, truth = generate_for_seed(spec, seed)
    data = prepare(matrix, truth, removal_ratio, test_fraction, seed)
    train_seed = split_seeds(seed)["train"]
    out = {}
    for mode in modes:
        report, _ = evaluate_run(data, policy.replace(mode=mode, seed=train_seed), metric,
                                 dataset="planted", seed=seed)
        out[mode] = report
    return out
