import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simlabel.annotation_store import (
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

from conftest import random_matrix


def test_states_and_counts(small_matrix):
    m = small_matrix
    assert m.num_samples == 5 and m.num_annotators == 3 and m.feature_dim == 2
    assert m.counts() == {"observed": 10, "imputed": 0, "missing": 5}
    assert m.cell(0, 2) == ("missing", None)
    assert m.cell(0, 1) == ("observed", 1)
    np.testing.assert_allclose(m.missing_rates(), [0.2, 0.4, 0.4])


def test_overlap_and_histogram(small_matrix):
    ov = small_matrix.overlap_counts()
    assert ov[0, 1] == 2 and ov[1, 2] == 2 and ov[0, 2] == 2
    np.testing.assert_array_equal(np.diag(ov), [4, 3, 3])
    np.testing.assert_array_equal(small_matrix.label_histogram()[0], [2, 1, 1])


def test_label_view(small_matrix):
    v = small_matrix.label_view(1)
    assert v.present_annotators == (0, 2) and v.absent_annotators == (1,)


def test_rejects_out_of_range_and_bad_shapes():
    with pytest.raises(ValidationError, match="outside"):
        AnnotationMatrix(np.zeros((1, 1)), [[3]], 3)
    with pytest.raises(ValidationError):
        AnnotationMatrix(np.zeros((2, 1)), [[0]], 3)
    with pytest.raises(ValidationError):
        AnnotationMatrix(np.zeros((1, 1)), [[0.5]], 3)
    with pytest.raises(ValidationError):
        AnnotationMatrix(np.array([[np.inf]]), [[0]], 3)


def test_negative_and_nan_mean_missing():
    m = AnnotationMatrix(np.zeros((1, 1)), [[-1, float("nan"), 1]], 2)
    assert m.counts()["missing"] == 2


def test_impute_is_single_shot(small_matrix):
    m = small_matrix.copy()
    m.impute(0, 2, 1, 0.9, epoch=1, threshold=0.6)
    assert m.cell(0, 2) == ("imputed", 1)
    assert m.state[0, 2] == IMPUTED
    assert m.imputed_confidence(0, 2) == 0.9
    with pytest.raises(ImputationError, match="already imputed"):
        m.impute(0, 2, 0, 0.95, epoch=2)
    with pytest.raises(ImputationError, match="observed"):
        m.impute(0, 0, 2, 0.95, epoch=2)
    with pytest.raises(ImputationError, match="below the threshold"):
        m.impute(1, 1, 0, 0.5, epoch=2, threshold=0.6)
    assert len(m.imputation_log) == 1
    # the source matrix is untouched by operations on the copy
    assert small_matrix.counts()["imputed"] == 0


def test_imputed_cells_are_excluded_unless_requested(small_matrix):
    m = small_matrix.copy()
    m.impute(0, 2, 1, 0.9, epoch=1)
    assert not m.usable_mask()[0, 2]
    assert m.usable_mask(include_imputed=True)[0, 2]
    assert m.overlap_counts(include_imputed=True)[0, 2] == 3


def test_remove_annotations_exact_count(small_matrix):
    out = remove_annotations(small_matrix, 0.5, seed=1)
    assert out.counts()["observed"] == 5
    assert small_matrix.counts()["observed"] == 10
    # removal only ever turns observed cells into missing ones
    before = small_matrix.state
    after = out.state
    assert np.all((after == before) | ((before == OBSERVED) & (after == MISSING)))


def test_remove_annotations_keeps_imputed(small_matrix):
    m = small_matrix.copy()
    m.impute(0, 2, 1, 0.9, epoch=1)
    out = remove_annotations(m, 1.0, seed=0)
    assert out.counts() == {"observed": 0, "imputed": 1, "missing": 14}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_remove_annotations_property(seed, ratio):
    m = random_matrix(np.random.default_rng(seed), samples=20)
    n_obs = m.counts()["observed"]
    out = remove_annotations(m, ratio, seed)
    assert out.counts()["observed"] == n_obs - int(np.floor(ratio * n_obs))
    again = remove_annotations(m, ratio, seed)
    np.testing.assert_array_equal(out.state, again.state)


def test_split_is_partition_and_stratified():
    rng = np.random.default_rng(0)
    m = random_matrix(rng, samples=200, missing=0.3)
    tr, te, tri, tei = train_test_split(m, 0.2, seed=4)
    assert sorted(np.concatenate([tri, tei]).tolist()) == list(range(200))
    assert abs(te.num_samples - 40) <= 4
    np.testing.assert_array_equal(te.features, m.features[tei])
    t2 = train_test_split(m, 0.2, seed=4)[3]
    np.testing.assert_array_equal(tei, t2)


@pytest.mark.parametrize("ext", ["csv", "json"])
def test_round_trip(tmp_path, ext):
    m = random_matrix(np.random.default_rng(1))
    m.metadata["source"] = "unit"
    path = tmp_path / f"d.{ext}"
    save_dataset(m, path)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.labels, m.labels)
    np.testing.assert_array_equal(back.state, m.state)
    np.testing.assert_array_equal(back.features, m.features)
    assert back.metadata["source"] == "unit"
    assert back.num_classes == m.num_classes
    # canonical form: writing again is byte-identical
    path2 = tmp_path / f"e.{ext}"
    save_dataset(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_imputed_written_as_missing_by_default(tmp_path, small_matrix):
    m = small_matrix.copy()
    m.impute(0, 2, 1, 0.9, epoch=1)
    save_dataset(m, tmp_path / "a.csv")
    save_dataset(m, tmp_path / "b.csv", include_imputed=True)
    assert load_dataset(tmp_path / "a.csv").cell(0, 2)[0] == "missing"
    assert load_dataset(tmp_path / "b.csv").cell(0, 2) == ("observed", 1)


def test_csv_declares_num_classes_beyond_observed(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text('# {"num_classes": 5}\nsample_id,f_0,a_0,a_1\nx,0.5,1,\ny,1.5,,0\n')
    m = load_dataset(path)
    assert m.num_classes == 5 and m.sample_ids == ["x", "y"]


@pytest.mark.parametrize(
    "body, line, needle",
    [
        ("sample_id,f_0,a_0\nx,1.0,0\ny,oops,1\n", 3, "real number"),
        ("sample_id,f_0,a_0\nx,1.0,0,4\n", 2, "fields"),
        ("sample_id,f_0,a_0\nx,1.0,zz\n", 2, "not an integer"),
        ('# {"num_classes": 2}\nsample_id,f_0,a_0\nx,1.0,0\n\ny,1.0,7\n', 5, "outside"),
        ("id,f_0,a_0\n", 1, "sample_id"),
    ],
)
def test_csv_errors_carry_line_numbers(tmp_path, body, line, needle):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(DatasetError, match=needle) as info:
        load_dataset(path)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_json_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"samples": [{"features": [1], "labels": [0, 1]}, {"features": [1], "labels": [0]}]}')
    with pytest.raises(ValidationError, match="sample 1"):
        load_dataset(path)
    path.write_text("{\n  oops")
    with pytest.raises(DatasetError) as info:
        load_dataset(path)
    assert info.value.line == 2


def test_unknown_format_and_missing_file(tmp_path):
    with pytest.raises(DatasetError, match="no such file"):
        load_dataset(tmp_path / "nope.csv")
    (tmp_path / "x.txt").write_text("")
    with pytest.raises(DatasetError, match="unsupported"):
        load_dataset(tmp_path / "x.txt")


def test_imputation_log_jsonl(tmp_path, small_matrix):
    m = small_matrix.copy()
    m.impute(0, 2, 1, 0.75, epoch=3)
    m.write_imputation_log(tmp_path / "log.jsonl")
    rec = json.loads((tmp_path / "log.jsonl").read_text().strip())
    assert rec == {"epoch": 3, "sample": 0, "annotator": 2, "label": 1, "confidence": 0.75}
