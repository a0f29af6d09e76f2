"""Records, the dirty/clean partition, corruption models, and CSV interchange.

A :class:`DatasetView` owns a list of records and the partition of their ids
into ``dirty_ids`` (candidates for cleaning) and ``clean_ids``. Records carry
their current values plus, for simulation datasets, ground-truth clean values
and an error-class tag (0 means never corrupted). Datasets are mutated only
through the explicit cleaning entry points.

Corruption models:

* ``random``: ceil(rate * n) records chosen uniformly; one uniformly chosen
  feature per record is overwritten with ``outlier_scale`` times that
  feature's maximum over the dataset.
* ``systematic``: the ``num_features`` features with the largest reference
  model weights are targeted; for each, the top ceil(rate * n / num_features)
  records by that feature's value get the feature overwritten with the
  feature's (pre-corruption) mean. Records hit on several features are
  allowed, and error classes are numbered per distinct corrupted-feature
  subset.

CSV columns: ``id``, ``f0..f{d-1}``, ``label``, then optionally
``clean_f0..``, ``clean_label``, ``error_class``, ``status`` (dirty|clean).
UTF-8, comma separated, '.' decimal point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Record:
    id: int
    x: np.ndarray
    y: np.ndarray
    clean_x: np.ndarray | None = None
    clean_y: np.ndarray | None = None
    error_class: int | None = None

    def has_ground_truth(self) -> bool:
        return self.clean_x is not None and self.clean_y is not None

    def is_corrupted(self) -> bool:
        """True when current values differ from ground truth."""
        if not self.has_ground_truth():
            return False
        return not (np.array_equal(self.x, self.clean_x) and np.array_equal(self.y, self.clean_y))


class DatasetView:
    """Records plus the current dirty/clean partition."""

    def __init__(self, records: list[Record], dirty_ids=None, clean_ids=None):
        if not records:
            self.records = []
            self.d = 0
            self.l = 1
            self.dirty_ids = set()
            self.clean_ids = set()
            self._by_id = {}
            return
        self.records = list(records)
        self.d = int(self.records[0].x.shape[0])
        self.l = int(np.asarray(self.records[0].y).reshape(-1).shape[0])
        self._by_id = {}
        for r in self.records:
            r.x = np.asarray(r.x, dtype=float)
            r.y = np.asarray(r.y, dtype=float).reshape(-1)
            if r.x.shape != (self.d,) or r.y.shape != (self.l,):
                raise ValueError(f"record {r.id}: inconsistent dimensions")
            if not (np.all(np.isfinite(r.x)) and np.all(np.isfinite(r.y))):
                raise ValueError(f"record {r.id}: non-finite values")
            if r.clean_x is not None:
                r.clean_x = np.asarray(r.clean_x, dtype=float)
                r.clean_y = np.asarray(r.clean_y, dtype=float).reshape(-1)
                if r.clean_x.shape != (self.d,) or r.clean_y.shape != (self.l,):
                    raise ValueError(f"record {r.id}: clean values have wrong dimensions")
            if r.id in self._by_id:
                raise ValueError(f"duplicate record id {r.id}")
            self._by_id[r.id] = r
        all_ids = set(self._by_id)
        self.dirty_ids = set(dirty_ids) if dirty_ids is not None else set(all_ids)
        self.clean_ids = set(clean_ids) if clean_ids is not None else all_ids - self.dirty_ids
        if self.dirty_ids | self.clean_ids != all_ids or self.dirty_ids & self.clean_ids:
            raise ValueError("dirty_ids and clean_ids must partition the record ids")

    def __len__(self):
        return len(self.records)

    def ids(self) -> list[int]:
        return sorted(self._by_id)

    def record(self, record_id: int) -> Record:
        try:
            return self._by_id[record_id]
        except KeyError:
            raise KeyError(f"no record with id {record_id}") from None

    def sorted_dirty_ids(self) -> list[int]:
        return sorted(self.dirty_ids)

    def sorted_clean_ids(self) -> list[int]:
        return sorted(self.clean_ids)

    def x_matrix(self, ids, clean: bool = False) -> np.ndarray:
        rows = []
        for i in ids:
            r = self.record(i)
            rows.append(r.clean_x if clean else r.x)
        return np.array(rows) if rows else np.zeros((0, self.d))

    def y_vector(self, ids, clean: bool = False) -> np.ndarray:
        vals = []
        for i in ids:
            r = self.record(i)
            vals.append(float((r.clean_y if clean else r.y)[0]))
        return np.array(vals)

    def apply_clean_values(self, record_id: int, x, y):
        """Overwrite a record's current values (the cleaning write-back)."""
        r = self.record(record_id)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.shape != (self.d,) or y.shape != (self.l,):
            raise ValueError(f"record {record_id}: repaired values have wrong dimensions")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError(f"record {record_id}: repaired values are non-finite")
        r.x = x
        r.y = y

    def mark_clean(self, record_id: int):
        self.dirty_ids.discard(record_id)
        self.clean_ids.add(record_id)

    def set_partition(self, dirty_ids, clean_ids):
        dirty_ids, clean_ids = set(dirty_ids), set(clean_ids)
        if dirty_ids | clean_ids != set(self._by_id) or dirty_ids & clean_ids:
            raise ValueError("partition must cover all ids exactly once")
        self.dirty_ids, self.clean_ids = dirty_ids, clean_ids

    def copy(self) -> "DatasetView":
        records = [
            Record(
                r.id,
                r.x.copy(),
                r.y.copy(),
                None if r.clean_x is None else r.clean_x.copy(),
                None if r.clean_y is None else r.clean_y.copy(),
                r.error_class,
            )
            for r in self.records
        ]
        return DatasetView(records, set(self.dirty_ids), set(self.clean_ids))


def from_arrays(X, Y, start_id: int = 0) -> DatasetView:
    """Build a dataset (no ground truth yet) from feature/label arrays."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    records = [Record(start_id + i, X[i].copy(), np.array([Y[i]])) for i in range(X.shape[0])]
    return DatasetView(records)


@dataclass(frozen=True)
class CorruptionSpec:
    """How to corrupt a clean dataset.

    kind: "random" or "systematic"; rate in (0, 1]; seed drives all draws.
    outlier_scale applies to random corruption, num_features to systematic.
    """

    kind: str
    rate: float
    seed: int = 0
    outlier_scale: float = 3.0
    num_features: int = 3

    def __post_init__(self):
        if self.kind not in ("random", "systematic"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not 0.0 < self.rate <= 1.0:
            raise ValueError("rate must be in (0, 1]")
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")


def _assign_error_classes(dataset: DatasetView, touched: dict[int, set[int]]):
    subsets = sorted({tuple(sorted(feats)) for feats in touched.values()})
    class_of = {sub: i + 1 for i, sub in enumerate(subsets)}
    for r in dataset.records:
        if r.id in touched:
            r.error_class = class_of[tuple(sorted(touched[r.id]))]
        else:
            r.error_class = 0
    return class_of


def corrupt(dataset: DatasetView, spec: CorruptionSpec, reference_theta=None) -> DatasetView:
    """Return a corrupted copy with ground truth recorded on every record.

    The input must be uncorrupted (no record may already carry ground
    truth). Systematic corruption requires ``reference_theta``, whose
    largest-magnitude weights pick the target features (ties break toward
    the lower feature index; record ties break toward the earlier record).
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot corrupt an empty dataset")
    if any(r.has_ground_truth() for r in dataset.records):
        raise ValueError("dataset already carries corruption ground truth")
    count = math.ceil(spec.rate * n)
    if count < 1:
        raise ValueError("rate * n rounds to zero records")

    out = dataset.copy()
    for r in out.records:
        r.clean_x = r.x.copy()
        r.clean_y = r.y.copy()
    order = sorted(out._by_id)
    X = out.x_matrix(order)
    rng = np.random.default_rng(spec.seed)
    touched: dict[int, set[int]] = {}

    if spec.kind == "random":
        col_max = X.max(axis=0)
        picks = rng.choice(n, size=count, replace=False)
        feats = rng.integers(0, out.d, size=count)
        for pos, j in zip(picks, feats):
            rid = order[int(pos)]
            rec = out.record(rid)
            rec.x = rec.x.copy()
            rec.x[int(j)] = spec.outlier_scale * col_max[int(j)]
            touched.setdefault(rid, set()).add(int(j))
    else:
        if reference_theta is None:
            raise ValueError("systematic corruption needs a reference model")
        w = np.abs(np.asarray(reference_theta, dtype=float))
        if w.ndim > 1:
            w = np.linalg.norm(w, axis=1)
        if w.shape[0] != out.d:
            raise ValueError("reference model dimension does not match the dataset")
        if spec.num_features > out.d:
            raise ValueError("num_features exceeds the feature dimension")
        # stable sort on -|w|: ties keep the lower index
        top = np.argsort(-w, kind="stable")[: spec.num_features]
        per_feature = math.ceil(count / spec.num_features)
        col_mean = X.mean(axis=0)
        for j in top:
            j = int(j)
            ranked = np.argsort(-X[:, j], kind="stable")[:per_feature]
            for pos in ranked:
                rid = order[int(pos)]
                rec = out.record(rid)
                rec.x = rec.x.copy()
                rec.x[j] = col_mean[j]
                touched.setdefault(rid, set()).add(j)

    _assign_error_classes(out, touched)
    out.set_partition(set(out._by_id), set())
    return out


class OracleCleaner:
    """Ground-truth cleaning function with memoized call accounting.

    ``clean`` returns (clean_x, clean_y, error_class) for a record id;
    repeated calls on the same id are free (``calls_made`` counts distinct
    records, the thing a cleaning budget pays for).
    """

    def __init__(self, dataset: DatasetView):
        for r in dataset.records:
            if not r.has_ground_truth():
                raise ValueError(f"record {r.id} has no ground truth; oracle unavailable")
        self._dataset = dataset
        self._memo: dict[int, tuple] = {}

    @property
    def calls_made(self) -> int:
        return len(self._memo)

    def clean(self, record_id: int):
        if record_id not in self._memo:
            r = self._dataset.record(record_id)
            ec = r.error_class if r.error_class is not None else (1 if r.is_corrupted() else 0)
            self._memo[record_id] = (r.clean_x.copy(), r.clean_y.copy(), ec)
        return self._memo[record_id]


@dataclass(frozen=True)
class ValueRule:
    """Find-and-replace rule on one feature: value == old becomes new."""

    feature: int
    old: float
    new: float


def set_of_records_clean(sample_ids, dataset: DatasetView, rules) -> DatasetView:
    """Set-of-records cleaning: the sample is fully cleaned from ground
    truth, and each rule's find-and-replace is applied across the remaining
    dirty records. Raises if a rule would touch a record already in
    clean_ids (cleaned data is a fixed point). Mutates and returns the
    dataset; re-run detection afterwards to migrate the partition.
    """
    sample_ids = list(sample_ids)
    for rid in sample_ids:
        if not dataset.record(rid).has_ground_truth():
            raise ValueError(f"record {rid} has no ground truth")
    rules = list(rules) if rules else []
    for rule in rules:
        if not 0 <= rule.feature < dataset.d:
            raise ValueError(f"rule feature {rule.feature} out of range")
        for rid in dataset.sorted_clean_ids():
            if dataset.record(rid).x[rule.feature] == rule.old:
                raise ValueError(f"rule would modify already-clean record {rid}")
    for rid in sample_ids:
        r = dataset.record(rid)
        dataset.apply_clean_values(rid, r.clean_x, r.clean_y)
    sample_set = set(sample_ids)
    for rule in rules:
        for rid in dataset.sorted_dirty_ids():
            if rid in sample_set:
                continue
            r = dataset.record(rid)
            if r.x[rule.feature] == rule.old:
                r.x = r.x.copy()
                r.x[rule.feature] = rule.new
    return dataset


def _fmt(v: float) -> str:
    return repr(float(v))


def save_csv(dataset: DatasetView, path):
    """Byte-reproducible CSV export (shortest round-trip float format)."""
    has_truth = all(r.has_ground_truth() for r in dataset.records) and len(dataset) > 0
    has_classes = has_truth and all(r.error_class is not None for r in dataset.records)
    d = dataset.d
    header = ["id"] + [f"f{j}" for j in range(d)] + ["label"]
    if has_truth:
        header += [f"clean_f{j}" for j in range(d)] + ["clean_label"]
    if has_classes:
        header.append("error_class")
    header.append("status")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for rid in dataset.ids():
            r = dataset.record(rid)
            row = [str(r.id)] + [_fmt(v) for v in r.x] + [_fmt(r.y[0])]
            if has_truth:
                row += [_fmt(v) for v in r.clean_x] + [_fmt(r.clean_y[0])]
            if has_classes:
                row.append(str(r.error_class))
            row.append("dirty" if rid in dataset.dirty_ids else "clean")
            w.writerow(row)


def load_csv(path) -> DatasetView:
    """Load the interchange format; errors name the offending row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty file: missing header") from None
        cols = {name: i for i, name in enumerate(header)}
        if "id" not in cols or "label" not in cols:
            raise ValueError("header must contain 'id' and 'label'")
        f_idx = sorted(
            (int(name[1:]), i) for name, i in cols.items() if name.startswith("f") and name[1:].isdigit()
        )
        d = len(f_idx)
        if d == 0:
            raise ValueError("header has no feature columns f0..")
        if [j for j, _ in f_idx] != list(range(d)):
            raise ValueError("feature columns must be f0..f{d-1} without gaps")
        cf_idx = sorted(
            (int(name[7:]), i)
            for name, i in cols.items()
            if name.startswith("clean_f") and name[7:].isdigit()
        )
        has_truth = bool(cf_idx)
        if has_truth:
            if [j for j, _ in cf_idx] != list(range(d)) or "clean_label" not in cols:
                raise ValueError("clean_f columns must mirror f0..f{d-1} and include clean_label")
        records, dirty, clean = [], set(), set()
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
            try:
                rid = int(row[cols["id"]])
                x = np.array([float(row[i]) for _, i in f_idx])
                y = np.array([float(row[cols["label"]])])
                clean_x = clean_y = None
                if has_truth:
                    clean_x = np.array([float(row[i]) for _, i in cf_idx])
                    clean_y = np.array([float(row[cols["clean_label"]])])
                ec = int(row[cols["error_class"]]) if "error_class" in cols else None
            except ValueError as e:
                raise ValueError(f"row {rownum}: {e}") from None
            records.append(Record(rid, x, y, clean_x, clean_y, ec))
            if "status" in cols:
                status = row[cols["status"]]
                if status not in ("dirty", "clean"):
                    raise ValueError(f"row {rownum}: status must be dirty or clean, got {status!r}")
                (dirty if status == "dirty" else clean).add(rid)
            else:
                dirty.add(rid)
        return DatasetView(records, dirty, clean)
