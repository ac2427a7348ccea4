"""Multi-annotator learning with missing annotations via similarity-weighted soft labels."""

__version__ = "0.1.0"

from .agreement import (
    SimilarityMatrix,
    build_similarity_matrix,
    cohen_kappa,
    krippendorff_alpha,
    pearson_similarity,
    soft_label_weights,
)
from .annotation_store import (
    IMPUTED,
    MISSING,
    OBSERVED,
    AnnotationMatrix,
    DatasetError,
    ImputationError,
    ValidationError,
    load_dataset,
    remove_annotations,
    save_dataset,
    train_test_split,
)
from .evaluation import RunReport, accuracy, compare, dic
from .model import AnnotatorModel, ce_loss, kl_loss, softmax
from .refinement import TrainingError, TrainingPolicy, TrainingTrace, train
from .soft_label import SoftLabelResult, confidence, confidence_variant, generate_soft_label, make_soft_label
from .synth import GeneratorSpec, GroundTruth, generate, two_group_spec

__all__ = [name for name in dir() if not name.startswith("_")]
