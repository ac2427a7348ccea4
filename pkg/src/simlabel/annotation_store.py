"""
Sparse multi-annotator label storage.

An :class:`AnnotationMatrix` holds one categorical label per (sample, annotator)
cell together with a per-sample feature vector. Every cell is in exactly one of
three states:

* ``OBSERVED`` -- a label supplied by the annotator. Never overwritten.
* ``MISSING`` -- no label.
* ``IMPUTED`` -- a pseudo-label written by the refinement loop into a cell that
  was previously missing, with the confidence and epoch that produced it.

Files never encode missingness with a sentinel class index: an empty CSV field
or a JSON ``null`` marks a missing cell.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING = 0
OBSERVED = 1
IMPUTED = 2

STATE_NAMES = {MISSING: "missing", OBSERVED: "observed", IMPUTED: "imputed"}


class DatasetError(ValueError):
    """Raised for unreadable or malformed dataset files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DatasetError):
    """Raised when parsed data violates an :class:`AnnotationMatrix` invariant."""


class ImputationError(RuntimeError):
    """Raised when an imputation would violate the cell-state invariants."""


@dataclass(frozen=True)
class ImputationRecord:
    epoch: int
    sample: int
    annotator: int
    label: int
    confidence: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)


@dataclass(frozen=True)
class LabelView:
    """Which annotators have a usable label for one sample."""

    sample_id: int
    present_annotators: tuple[int, ...]
    absent_annotators: tuple[int, ...]


class AnnotationMatrix:
    """Samples x annotators label store with an explicit missing mask.

    Parameters
    ----------
    features : array_like, shape (num_samples, feature_dim)
        Precomputed real-valued input vector for every sample.
    labels : array_like, shape (num_samples, num_annotators)
        Class index per cell. ``None``, ``NaN`` or any negative value marks the
        cell as missing.
    num_classes : int
        Number of label classes ``N``; every label must lie in ``[0, N)``.
    sample_ids : sequence of str, optional
        External identifiers, defaults to ``"0", "1", ...``.
    metadata : dict, optional
        Free-form key/value pairs carried through file round trips.
    """

    def __init__(
        self,
        features,
        labels,
        num_classes: int,
        sample_ids: Sequence[str] | None = None,
        metadata: dict | None = None,
    ):
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        if features.ndim != 2:
            raise ValidationError("features must be a 2-D array")
        if not np.all(np.isfinite(features)):
            raise ValidationError("features must be finite")

        raw = np.asarray(labels, dtype=object)
        if raw.ndim != 2:
            raise ValidationError("labels must be a 2-D array (samples x annotators)")
        if raw.shape[0] != features.shape[0]:
            raise ValidationError(
                f"labels have {raw.shape[0]} rows but features have {features.shape[0]}"
            )
        if int(num_classes) < 2:
            raise ValidationError("num_classes must be at least 2")

        lab = np.full(raw.shape, -1, dtype=np.int64)
        for idx, value in np.ndenumerate(raw):
            if value is None:
                continue
            fv = float(value)
            if np.isnan(fv) or fv < 0:
                continue
            if fv != int(fv):
                raise ValidationError(f"non-integer label {value!r} at cell {idx}")
            lab[idx] = int(fv)
        bad = lab >= num_classes
        if bad.any():
            i, k = map(int, np.argwhere(bad)[0])
            raise ValidationError(
                f"label {lab[i, k]} at sample {i}, annotator {k} is outside [0, {num_classes})"
            )

        self.features = features
        self.num_classes = int(num_classes)
        self._labels = lab
        self._state = np.where(lab >= 0, OBSERVED, MISSING).astype(np.int8)
        self._confidence = np.full(lab.shape, np.nan)
        self._epoch = np.full(lab.shape, -1, dtype=np.int64)
        if sample_ids is None:
            sample_ids = [str(i) for i in range(lab.shape[0])]
        if len(sample_ids) != lab.shape[0]:
            raise ValidationError("sample_ids length does not match number of samples")
        self.sample_ids = [str(s) for s in sample_ids]
        self.metadata = dict(metadata or {})
        self.imputation_log: list[ImputationRecord] = []

    # ------------------------------------------------------------------ shape
    @property
    def num_samples(self) -> int:
        return self._labels.shape[0]

    @property
    def num_annotators(self) -> int:
        return self._labels.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    # ----------------------------------------------------------------- access
    @property
    def labels(self) -> np.ndarray:
        """Copy of the label array, ``-1`` where missing."""
        return self._labels.copy()

    @property
    def state(self) -> np.ndarray:
        return self._state.copy()

    @property
    def observed_mask(self) -> np.ndarray:
        return self._state == OBSERVED

    @property
    def imputed_mask(self) -> np.ndarray:
        return self._state == IMPUTED

    @property
    def missing_mask(self) -> np.ndarray:
        return self._state == MISSING

    def usable_mask(self, include_imputed: bool = False) -> np.ndarray:
        mask = self._state == OBSERVED
        if include_imputed:
            mask = mask | (self._state == IMPUTED)
        return mask

    def cell(self, sample: int, annotator: int) -> tuple[str, int | None]:
        s = int(self._state[sample, annotator])
        lab = int(self._labels[sample, annotator])
        return STATE_NAMES[s], (lab if s != MISSING else None)

    def imputed_confidence(self, sample: int, annotator: int) -> float:
        return float(self._confidence[sample, annotator])

    def counts(self) -> dict[str, int]:
        return {
            "observed": int(np.sum(self._state == OBSERVED)),
            "imputed": int(np.sum(self._state == IMPUTED)),
            "missing": int(np.sum(self._state == MISSING)),
        }

    def missing_rates(self) -> np.ndarray:
        """Fraction of missing cells per annotator."""
        if self.num_samples == 0:
            return np.zeros(self.num_annotators)
        return np.sum(self._state == MISSING, axis=0) / self.num_samples

    def overlap_counts(self, include_imputed: bool = False) -> np.ndarray:
        m = self.usable_mask(include_imputed).astype(np.int64)
        return m.T @ m

    def label_histogram(self) -> np.ndarray:
        """Observed label counts, shape (num_annotators, num_classes)."""
        hist = np.zeros((self.num_annotators, self.num_classes), dtype=np.int64)
        for k in range(self.num_annotators):
            col = self._labels[self._state[:, k] == OBSERVED, k]
            hist[k] = np.bincount(col, minlength=self.num_classes)
        return hist

    def label_view(self, sample: int, include_imputed: bool = False) -> LabelView:
        mask = self.usable_mask(include_imputed)[sample]
        present = tuple(int(k) for k in np.flatnonzero(mask))
        absent = tuple(int(k) for k in np.flatnonzero(~mask))
        return LabelView(int(sample), present, absent)

    # --------------------------------------------------------------- mutation
    def impute(
        self,
        sample: int,
        annotator: int,
        label: int,
        confidence: float,
        epoch: int,
        threshold: float | None = None,
    ) -> "AnnotationMatrix":
        """Write a pseudo-label into a missing cell.

        Imputation is single-shot: observed cells and already-imputed cells are
        rejected with :class:`ImputationError`.
        """
        state = self._state[sample, annotator]
        if state == OBSERVED:
            raise ImputationError(
                f"cell ({sample}, {annotator}) is observed and cannot be imputed"
            )
        if state == IMPUTED:
            raise ImputationError(f"cell ({sample}, {annotator}) was already imputed")
        if not 0 <= label < self.num_classes:
            raise ImputationError(f"label {label} outside [0, {self.num_classes})")
        if not 0.0 <= confidence <= 1.0:
            raise ImputationError(f"confidence {confidence} outside [0, 1]")
        if threshold is not None and confidence < threshold:
            raise ImputationError(
                f"confidence {confidence} is below the threshold {threshold}"
            )
        self._labels[sample, annotator] = int(label)
        self._state[sample, annotator] = IMPUTED
        self._confidence[sample, annotator] = float(confidence)
        self._epoch[sample, annotator] = int(epoch)
        self.imputation_log.append(
            ImputationRecord(int(epoch), int(sample), int(annotator), int(label), float(confidence))
        )
        return self

    def copy(self) -> "AnnotationMatrix":
        return self.subset(np.arange(self.num_samples))

    def subset(self, indices: Iterable[int]) -> "AnnotationMatrix":
        """Row subset preserving cell states (imputation log is not carried)."""
        idx = np.asarray(list(indices), dtype=np.int64)
        out = AnnotationMatrix.__new__(AnnotationMatrix)
        out.features = self.features[idx].copy()
        out.num_classes = self.num_classes
        out._labels = self._labels[idx].copy()
        out._state = self._state[idx].copy()
        out._confidence = self._confidence[idx].copy()
        out._epoch = self._epoch[idx].copy()
        out.sample_ids = [self.sample_ids[i] for i in idx]
        out.metadata = dict(self.metadata)
        out.imputation_log = []
        return out

    def write_imputation_log(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.imputation_log:
                fh.write(rec.to_json() + "\n")

    def __repr__(self) -> str:
        c = self.counts()
        return (
            f"AnnotationMatrix(samples={self.num_samples}, annotators={self.num_annotators}, "
            f"classes={self.num_classes}, dim={self.feature_dim}, observed={c['observed']}, "
            f"imputed={c['imputed']}, missing={c['missing']})"
        )


def remove_annotations(matrix: AnnotationMatrix, ratio: float, seed) -> AnnotationMatrix:
    """Simulate sparser annotation by deleting observed labels at random.

    Exactly ``floor(ratio * n_observed)`` observed cells become missing, chosen
    uniformly without replacement. Missing and imputed cells are untouched. The
    input matrix is not modified.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must be in [0, 1], got {ratio}")
    out = matrix.copy()
    obs = np.flatnonzero(out._state.ravel() == OBSERVED)
    n_remove = int(np.floor(ratio * obs.size))
    if n_remove == 0:
        return out
    rng = np.random.default_rng(seed)
    chosen = rng.choice(obs, size=n_remove, replace=False)
    flat_state = out._state.reshape(-1)
    flat_labels = out._labels.reshape(-1)
    flat_state[chosen] = MISSING
    flat_labels[chosen] = -1
    return out


def train_test_split(matrix: AnnotationMatrix, test_fraction: float = 0.2, seed=0):
    """Stratified split by sample.

    Samples are stratified by their majority observed label (lowest class wins
    ties); samples without any label form their own stratum. Returns
    ``(train, test, train_index, test_index)``.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    strata = np.full(matrix.num_samples, -1, dtype=np.int64)
    obs = matrix.observed_mask
    for i in range(matrix.num_samples):
        row = matrix._labels[i, obs[i]]
        if row.size:
            strata[i] = int(np.argmax(np.bincount(row, minlength=matrix.num_classes)))
    test = []
    for s in np.unique(strata):
        members = np.flatnonzero(strata == s)
        members = rng.permutation(members)
        n_test = int(round(test_fraction * members.size))
        test.extend(members[:n_test].tolist())
    test_idx = np.sort(np.asarray(test, dtype=np.int64))
    train_idx = np.setdiff1d(np.arange(matrix.num_samples), test_idx)
    return matrix.subset(train_idx), matrix.subset(test_idx), train_idx, test_idx


# ---------------------------------------------------------------------- file I/O
def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        fmt = fmt.lower()
    else:
        fmt = path.suffix.lower().lstrip(".")
    if fmt not in ("csv", "json"):
        raise DatasetError(f"unsupported dataset format {fmt!r} (expected csv or json)")
    return fmt


def load_dataset(path, format: str | None = None, num_classes: int | None = None) -> AnnotationMatrix:
    """Read a dataset file into an :class:`AnnotationMatrix`.

    CSV files carry the header ``sample_id,f_0..f_{d-1},a_0..a_{K-1}``, optionally
    preceded by one ``# {json}`` metadata line (which may declare
    ``num_classes``). JSON files follow
    ``{num_classes, feature_dim, samples: [{id, features, labels}]}``.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: no such file")
    fmt = _infer_format(path, format)
    text = path.read_text(encoding="utf-8")
    if fmt == "csv":
        return _parse_csv(text, num_classes)
    return _parse_json(text, num_classes)


def _resolve_num_classes(declared, requested, labels) -> int:
    if declared is not None and requested is not None and int(declared) != int(requested):
        raise ValidationError(
            f"file declares num_classes={declared} but {requested} was requested"
        )
    n = requested if requested is not None else declared
    if n is None:
        seen = [v for row in labels for v in row if v is not None]
        n = max(2, max(seen) + 1) if seen else 2
    return int(n)


def _parse_csv(text: str, num_classes: int | None) -> AnnotationMatrix:
    lines = text.splitlines()
    metadata: dict = {}
    start = 0
    if lines and lines[0].startswith("#"):
        try:
            metadata = json.loads(lines[0][1:].strip() or "{}")
        except json.JSONDecodeError as exc:
            raise DatasetError(f"metadata line is not valid JSON: {exc.msg}", line=1) from None
        if not isinstance(metadata, dict):
            raise DatasetError("metadata line must hold a JSON object", line=1)
        start = 1
    reader = csv.reader(io.StringIO("\n".join(lines[start:])))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("missing header row", line=start + 1) from None
    if not header or header[0].strip() != "sample_id":
        raise DatasetError("header must start with 'sample_id'", line=start + 1)
    feat_cols, ann_cols = [], []
    for j, name in enumerate(header[1:], start=1):
        name = name.strip()
        if name.startswith("f_"):
            if ann_cols:
                raise DatasetError("feature columns must precede annotator columns", line=start + 1)
            feat_cols.append(j)
        elif name.startswith("a_"):
            ann_cols.append(j)
        else:
            raise DatasetError(f"unexpected column {name!r}", line=start + 1)
    if not ann_cols:
        raise DatasetError("no annotator columns (a_0..a_{K-1})", line=start + 1)

    ids, feats, labels, linenos = [], [], [], []
    width = len(header)
    for offset, row in enumerate(reader):
        lineno = start + 2 + offset
        if not row:
            continue
        if len(row) != width:
            raise DatasetError(f"expected {width} fields, found {len(row)}", line=lineno)
        ids.append(row[0])
        try:
            feats.append([float(row[j]) for j in feat_cols])
        except ValueError:
            raise DatasetError("feature value is not a real number", line=lineno) from None
        labs = []
        for j in ann_cols:
            field = row[j].strip()
            if field == "":
                labs.append(None)
                continue
            try:
                v = int(field)
            except ValueError:
                raise DatasetError(f"label {field!r} is not an integer", line=lineno) from None
            if v < 0:
                raise ValidationError(f"negative label {v}", line=lineno)
            labs.append(v)
        labels.append(labs)
        linenos.append(lineno)

    n = _resolve_num_classes(metadata.get("num_classes"), num_classes, labels)
    for lineno, labs in zip(linenos, labels):
        for v in labs:
            if v is not None and v >= n:
                raise ValidationError(f"label {v} outside [0, {n})", line=lineno)
    features = np.asarray(feats, dtype=float).reshape(len(ids), len(feat_cols))
    metadata["num_classes"] = n
    return AnnotationMatrix(features, _as_object(labels, len(ann_cols)), n, ids, metadata)


def _as_object(labels, k: int) -> np.ndarray:
    arr = np.empty((len(labels), k), dtype=object)
    for i, row in enumerate(labels):
        for j, v in enumerate(row):
            arr[i, j] = v
    return arr


def _parse_json(text: str, num_classes: int | None) -> AnnotationMatrix:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or "samples" not in doc:
        raise DatasetError("JSON dataset must be an object with a 'samples' list")
    samples = doc["samples"]
    dim = doc.get("feature_dim")
    ids, feats, labels = [], [], []
    k = None
    for i, s in enumerate(samples):
        try:
            f = [float(v) for v in s["features"]]
            labs = s["labels"]
        except (KeyError, TypeError, ValueError):
            raise DatasetError(f"sample {i} is malformed") from None
        if dim is None:
            dim = len(f)
        if len(f) != dim:
            raise ValidationError(
                f"sample {i} has feature dimension {len(f)}, expected {dim}"
            )
        if k is None:
            k = len(labs)
        if len(labs) != k:
            raise ValidationError(f"sample {i} has {len(labs)} labels, expected {k}")
        row = []
        for v in labs:
            if v is None:
                row.append(None)
            elif isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(f"sample {i} has non-integer label {v!r}")
            elif v < 0:
                raise ValidationError(f"sample {i} has negative label {v}")
            else:
                row.append(v)
        ids.append(str(s.get("id", i)))
        feats.append(f)
        labels.append(row)
    n = _resolve_num_classes(doc.get("num_classes"), num_classes, labels)
    for i, row in enumerate(labels):
        for v in row:
            if v is not None and v >= n:
                raise ValidationError(f"sample {i} has label {v} outside [0, {n})")
    metadata = {
        key: val
        for key, val in doc.items()
        if key not in ("samples", "feature_dim")
    }
    metadata["num_classes"] = n
    features = np.asarray(feats, dtype=float).reshape(len(ids), dim or 0)
    return AnnotationMatrix(features, _as_object(labels, k or 0), n, ids, metadata)


def _fmt_float(x: float) -> str:
    return repr(float(x))


def save_dataset(
    matrix: AnnotationMatrix,
    path,
    format: str | None = None,
    include_imputed: bool = False,
) -> None:
    """Write the canonical CSV or JSON form of ``matrix``.

    Imputed cells are written as missing unless ``include_imputed`` is set; the
    imputation log is the record of pseudo-labels.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    mask = matrix.usable_mask(include_imputed)
    meta = dict(matrix.metadata)
    meta["num_classes"] = matrix.num_classes
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        header = (
            ["sample_id"]
            + [f"f_{j}" for j in range(matrix.feature_dim)]
            + [f"a_{k}" for k in range(matrix.num_annotators)]
        )
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for i in range(matrix.num_samples):
            row = [matrix.sample_ids[i]]
            row += [_fmt_float(v) for v in matrix.features[i]]
            row += [
                str(int(matrix._labels[i, k])) if mask[i, k] else ""
                for k in range(matrix.num_annotators)
            ]
            writer.writerow(row)
        path.write_text(buf.getvalue(), encoding="utf-8")
        return
    doc = dict(meta)
    doc["feature_dim"] = matrix.feature_dim
    doc["samples"] = [
        {
            "id": matrix.sample_ids[i],
            "features": [float(v) for v in matrix.features[i]],
            "labels": [
                int(matrix._labels[i, k]) if mask[i, k] else None
                for k in range(matrix.num_annotators)
            ],
        }
        for i in range(matrix.num_samples)
    ]
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
