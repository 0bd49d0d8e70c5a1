"""The textual feature table: records, encoding, scaling, CSV and splits."""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateSplit, EmptyDataset, SchemaViolation, StorageError
from .grades import ResolutionGrade, UsabilityGrade

FEATURES = ("load_time", "resolution", "mobile_ui", "contact_info")
CSV_COLUMNS = ("url", "load_time_s", "mobile_ui", "resolution_grade", "contact_info", "grade")

# alphabetical codes as a stock label encoder would assign them
_ALPHABETICAL = {"A": 0, "B": 1, "C": 2, "D": 3, "F": 4}


@dataclass(frozen=True)
class AuditRecord:
    url: str
    load_time_s: float
    mobile_ui: bool
    resolution_grade: ResolutionGrade
    contact_info: bool
    grade: UsabilityGrade | None = None

    def __post_init__(self):
        if not math.isfinite(self.load_time_s) or self.load_time_s < 0:
            raise ValueError(f"load_time_s must be finite and >= 0, got {self.load_time_s}")

    def with_grade(self, grade):
        return AuditRecord(self.url, self.load_time_s, self.mobile_ui,
                           self.resolution_grade, self.contact_info, grade)


def encode(record, ordinal=True):
    """Map a record to ``[load_time, resolution, mobile_ui, contact_info]``.

    With ``ordinal`` the resolution grade is coded by quality (A=4 .. F=0);
    otherwise alphabetically (A=0 .. F=4).
    """
    res = record.resolution_grade
    res_code = res.quality if ordinal else _ALPHABETICAL[res.value]
    return np.array([float(record.load_time_s), float(res_code),
                     float(record.mobile_ui), float(record.contact_info)])


def encode_all(records, ordinal=True):
    if not records:
        return np.zeros((0, len(FEATURES)))
    return np.vstack([encode(r, ordinal=ordinal) for r in records])


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, rows):
        """Standardize one row or a 2-D block; zero-variance columns map to 0."""
        rows = np.asarray(rows, dtype=float)
        safe = np.where(self.std > 0, self.std, 1.0)
        out = (rows - self.mean) / safe
        return np.where(self.std > 0, out, 0.0)

    def inverse(self, rows):
        rows = np.asarray(rows, dtype=float)
        return np.where(self.std > 0, rows * self.std + self.mean, self.mean)

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d):
        return cls(mean=np.asarray(d["mean"], dtype=float), std=np.asarray(d["std"], dtype=float))


def fit_scaler(rows):
    """Column means and population standard deviations."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyDataset("cannot fit a scaler on zero rows")
    return ScalerParams(mean=rows.mean(axis=0), std=rows.std(axis=0, ddof=0))


def apply_scaler(params, rows):
    return params.apply(rows)


@dataclass(frozen=True)
class DatasetSplit:
    train_indices: list
    test_indices: list
    seed: int
    stratified: bool = field(default=False)


def _train_count(ratio, n):
    # guard 0.7 * 30 = 20.999... style float error
    return math.floor(ratio * n + 1e-9)


def split(n, ratio=0.7, seed=0, strata=None):
    """Seeded shuffle split of ``range(n)``.

    Without ``strata`` the first ``floor(ratio * n)`` shuffled indices train.
    With ``strata`` (one label per row) each class is split on its own with
    ``floor(ratio * n_c)`` training rows.
    """
    if n < 2:
        raise DegenerateSplit(f"need at least 2 rows to split, got {n}")
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie strictly between 0 and 1, got {ratio}")
    rng = np.random.default_rng(seed)

    if strata is None:
        perm = rng.permutation(n)
        k = _train_count(ratio, n)
        train, test = perm[:k], perm[k:]
        if len(train) == 0 or len(test) == 0:
            raise DegenerateSplit(f"ratio {ratio} leaves one side empty for n={n}")
        return DatasetSplit(sorted(int(i) for i in train), sorted(int(i) for i in test), seed)

    if len(strata) != n:
        raise ValueError(f"{len(strata)} strata labels for {n} rows")
    by_class = {}
    for i, label in enumerate(strata):
        by_class.setdefault(label, []).append(i)
    train, test = [], []
    # iterate classes in first-seen order so the draw sequence is stable
    for label, members in by_class.items():
        if len(members) == 1:
            raise DegenerateSplit(f"class {label!r} has a single row and cannot be split")
        perm = rng.permutation(members)
        k = _train_count(ratio, len(members))
        if k == 0 or k == len(members):
            raise DegenerateSplit(f"class {label!r} ({len(members)} rows) leaves one side empty")
        train.extend(int(i) for i in perm[:k])
        test.extend(int(i) for i in perm[k:])
    return DatasetSplit(sorted(train), sorted(test), seed, stratified=True)


_BOOL_IN = {"yes": True, "no": False}
_BOOL_OUT = {True: "yes", False: "no"}


def _parse_row(rownum, row):
    def need(col):
        value = row.get(col)
        if value is None:
            raise SchemaViolation(rownum, col, "missing")
        return value.strip()

    url = need("url")
    if not url:
        raise SchemaViolation(rownum, "url", "empty")
    raw = need("load_time_s")
    try:
        load = float(raw)
    except ValueError:
        raise SchemaViolation(rownum, "load_time_s", f"not a number: {raw!r}") from None
    if not math.isfinite(load) or load < 0:
        raise SchemaViolation(rownum, "load_time_s", f"must be finite and >= 0, got {raw!r}")
    flags = {}
    for col in ("mobile_ui", "contact_info"):
        v = need(col).lower()
        if v not in _BOOL_IN:
            raise SchemaViolation(rownum, col, f"expected yes/no, got {v!r}")
        flags[col] = _BOOL_IN[v]
    res = need("resolution_grade")
    try:
        res_grade = ResolutionGrade(res.upper())
    except ValueError:
        raise SchemaViolation(rownum, "resolution_grade", f"expected A/B/C/D/F, got {res!r}") from None
    g = need("grade")
    grade = None
    if g:
        try:
            grade = UsabilityGrade(g.lower())
        except ValueError:
            raise SchemaViolation(rownum, "grade", f"unknown grade {g!r}") from None
    return AuditRecord(url, load, flags["mobile_ui"], res_grade, flags["contact_info"], grade)


def read_csv(path):
    """Read audit records; ``SchemaViolation`` names the data row (1-based) and column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in CSV_COLUMNS if c not in header]
            if missing:
                raise SchemaViolation(0, missing[0], "column absent from header")
            return [_parse_row(i, row) for i, row in enumerate(reader, start=1)]
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc


def record_to_row(record):
    return {
        "url": record.url,
        "load_time_s": repr(float(record.load_time_s)),
        "mobile_ui": _BOOL_OUT[bool(record.mobile_ui)],
        "resolution_grade": record.resolution_grade.value,
        "contact_info": _BOOL_OUT[bool(record.contact_info)],
        "grade": record.grade.value if record.grade is not None else "",
    }


def write_csv(records, path, append=False):
    path = Path(path)
    fresh = not append or not path.exists() or path.stat().st_size == 0
    try:
        with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            if fresh:
                writer.writeheader()
            for r in records:
                writer.writerow(record_to_row(r))
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
