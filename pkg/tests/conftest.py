import numpy as np
import pytest

from simlabel.annotation_store import AnnotationMatrix
from simlabel.synth import generate, two_group_spec


def random_matrix(rng, samples=30, annotators=4, classes=3, dim=5, missing=0.4):
    labels = rng.integers(0, classes, size=(samples, annotators)).astype(object)
    labels[rng.random((samples, annotators)) < missing] = None
    return AnnotationMatrix(rng.standard_normal((samples, dim)), labels, classes)


@pytest.fixture
def small_matrix():
    labels = [
        [0, 1, None],
        [1, None, 1],
        [None, 2, 2],
        [0, 0, 0],
        [2, None, None],
    ]
    feats = np.arange(10, dtype=float).reshape(5, 2)
    return AnnotationMatrix(feats, labels, 3)


@pytest.fixture(scope="session")
def planted_small():
    spec = two_group_spec(num_samples=240, num_annotators=6, feature_dim=8,
                          class_separation=1.0, seed=3)
    return generate(spec)
