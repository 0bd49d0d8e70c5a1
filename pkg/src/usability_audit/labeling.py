"""Grade assignment for both corpora.

Textual rows are clustered with K-means on standardized features and each
cluster is named by how desirable its centroid is. Screenshots are graded
by binning an externally produced 1-10 score.
"""

import csv
import logging
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import split
from .errors import DataError, OutOfRange, RejectedRedRange, StorageError, TooFewRows
from .grades import UsabilityGrade

log = logging.getLogger(__name__)

# questionnaire ranking: load time, image resolution, mobile UI, contact info
DEFAULT_IMPORTANCE = (8.0, 4.0, 2.0, 1.0)
# +1 where larger is better; load time is a cost
FEATURE_DIRECTION = np.array([-1.0, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray
    inertia: float
    seed: int
    iterations_run: int
    inertia_history: tuple = field(default=(), compare=False)

    @property
    def k(self):
        return self.centroids.shape[0]

    def predict(self, rows):
        return assign_all(self, rows)


def _sq_dists(rows, centroids):
    # direct differences rather than the |x|^2 - 2xc + |c|^2 expansion, so the
    # objective is exact enough to be checked for monotone descent
    diff = rows[:, None, :] - centroids[None, :, :]
    return (diff * diff).sum(2)


def _kmeans_pp(rows, k, rng, n_local_trials=None):
    """Greedy k-means++ seeding: keep the best of several D^2 candidates per step."""
    n = rows.shape[0]
    if n_local_trials is None:
        n_local_trials = 2 + int(math.log(k))
    centers = np.empty((k, rows.shape[1]))
    centers[0] = rows[rng.integers(n)]
    closest = _sq_dists(rows, centers[:1])[:, 0]
    pot = closest.sum()
    for c in range(1, k):
        if pot <= 0:
            # every row already coincides with a chosen center
            centers[c] = rows[rng.integers(n)]
            continue
        cum = np.cumsum(closest)
        cand = np.searchsorted(cum, rng.random(n_local_trials) * pot, side="right")
        cand = np.minimum(cand, n - 1)
        cand_d = np.minimum(closest[None, :], _sq_dists(rows, rows[cand]).T)
        cand_pot = cand_d.sum(1)
        best = int(np.argmin(cand_pot))
        centers[c] = rows[cand[best]]
        closest, pot = cand_d[best], cand_pot[best]
    return centers


def _lloyd(rows, centers, max_iter, tol):
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(rows, centers)
        labels = d.argmin(1)
        history.append(float(d[np.arange(len(rows)), labels].sum()))
        new = centers.copy()
        for j in range(centers.shape[0]):
            members = rows[labels == j]
            if len(members):
                new[j] = members.mean(0)
            else:
                # park an empty centroid on the row worst served by the others
                far = int(d[np.arange(len(rows)), labels].argmax())
                new[j] = rows[far]
        shift = np.sqrt(((new - centers) ** 2).sum(1)).max()
        centers = new
        if shift < tol:
            break
    d = _sq_dists(rows, centers)
    inertia = float(d.min(1).sum())
    history.append(inertia)
    return centers, inertia, it, history


def kmeans_fit(rows, k=5, seed=0, max_iter=300, tol=1e-6, n_init=10):
    """Lloyd's algorithm from k-means++ starts; the lowest-inertia run wins.

    ``inertia_history`` of the returned model lists the objective after
    each assignment step plus the final value, and never increases.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < k:
        raise TooFewRows(f"k-means with k={k} needs at least {k} rows, got {len(rows)}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers = _kmeans_pp(rows, k, rng)
        run = _lloyd(rows, centers, max_iter, tol)
        if best is None or run[1] < best[1]:
            best = run
    centers, inertia, iters, history = best
    return KMeansModel(centers, inertia, seed, iters, tuple(history))


def assign(model, row):
    """Nearest centroid by squared distance; ties go to the lower id."""
    row = np.asarray(row, dtype=float)
    d = ((model.centroids - row) ** 2).sum(1)
    return int(np.argmin(d))  # argmin returns the first minimum


def assign_all(model, rows):
    return _sq_dists(np.asarray(rows, dtype=float), model.centroids).argmin(1)


@dataclass(frozen=True)
class GradeMap:
    cluster_to_grade: dict
    importance_weights: tuple
    desirability: tuple

    def grade_of(self, cluster_id):
        return self.cluster_to_grade[int(cluster_id)]


def centroid_desirability(centroids, weights=DEFAULT_IMPORTANCE):
    w = np.asarray(weights, dtype=float)
    return (np.asarray(centroids, dtype=float) * FEATURE_DIRECTION) @ w


def map_clusters_to_grades(model, weights=DEFAULT_IMPORTANCE):
    """Name clusters EXCELLENT..VERY_BAD by descending centroid desirability."""
    w = tuple(float(v) for v in weights)
    if len(w) != model.centroids.shape[1] or any(v <= 0 for v in w):
        raise ValueError("importance weights must be positive, one per feature")
    grades = UsabilityGrade.ordered()
    if model.k != len(grades):
        raise ValueError(f"grade naming needs exactly {len(grades)} clusters, got {model.k}")
    score = centroid_desirability(model.centroids, w)
    # stable sort on -score keeps lower ids first among ties
    order = sorted(range(model.k), key=lambda j: -score[j])
    mapping = {int(j): grades[rank] for rank, j in enumerate(order)}
    return GradeMap(mapping, w, tuple(float(s) for s in score))


def adjusted_rand_index(a, b):
    """Chance-corrected agreement between two labelings of the same items."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("labelings differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return (x * (x - 1) // 2).sum()

    n = len(a)
    sum_ij = comb2(table)
    sum_a = comb2(table.sum(1))
    sum_b = comb2(table.sum(0))
    total = n * (n - 1) // 2
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


# --- screenshot scores ------------------------------------------------------

RED_RANGE_UPPER = 3.60
SCORE_MIN, SCORE_MAX = 1.0, 10.0


@dataclass(frozen=True)
class ScoreBin:
    lower: float
    upper: float
    grade: UsabilityGrade
    lower_closed: bool = True
    upper_closed: bool = False

    def contains(self, x):
        lo = x >= self.lower if self.lower_closed else x > self.lower
        hi = x <= self.upper if self.upper_closed else x < self.upper
        return lo and hi


DEFAULT_SCORE_BINS = (
    ScoreBin(3.60, 4.60, UsabilityGrade.VERY_BAD),
    ScoreBin(4.60, 5.60, UsabilityGrade.BAD),
    ScoreBin(5.60, 7.00, UsabilityGrade.GOOD, upper_closed=True),
    ScoreBin(7.00, 8.60, UsabilityGrade.VERY_GOOD, lower_closed=False),
    ScoreBin(8.60, 10.0, UsabilityGrade.EXCELLENT, upper_closed=True),
)


def bin_webscore(score, bins=DEFAULT_SCORE_BINS, reject_below=RED_RANGE_UPPER):
    """Grade a 1-10 site score. Red-range scores (below 3.60) are rejected."""
    if not math.isfinite(score) or not SCORE_MIN <= score <= SCORE_MAX:
        raise OutOfRange(f"score {score} outside [{SCORE_MIN:g}, {SCORE_MAX:g}]")
    score = round(score, 9)
    if score < reject_below:
        raise RejectedRedRange(f"score {score} is in the excluded red range (< {reject_below})")
    for b in bins:
        if b.contains(score):
            return b.grade
    raise OutOfRange(f"score {score} falls in no bin")


def read_scores(path):
    """Read a ``filename,score`` CSV into a list of ``(filename, float)``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or {"filename", "score"} - set(reader.fieldnames):
                raise DataError(f"{path}: header must contain filename,score")
            out = []
            for i, row in enumerate(reader, start=1):
                try:
                    out.append((row["filename"].strip(), float(row["score"])))
                except (TypeError, ValueError):
                    raise DataError(f"{path}: row {i} has a non-numeric score") from None
            return out
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc


def materialize_screenshot_dataset(scores, image_dir, out_root, ratio=0.7, seed=0, writer=None):
    """Grade scored screenshots and lay them out as ``train/<grade>`` and ``test/<grade>``.

    Rows in the red range or outside 1-10 are skipped and counted. The split
    is stratified by grade. ``writer(src, dst)`` defaults to a file copy.
    Returns a summary dict.
    """
    image_dir = Path(image_dir)
    out_root = Path(out_root)
    writer = writer or shutil.copyfile
    kept, rejected, missing, out_of_range = [], [], [], []
    for name, score in scores:
        src = image_dir / name
        if not src.is_file():
            missing.append(name)
            continue
        try:
            kept.append((src, bin_webscore(score)))
        except RejectedRedRange:
            rejected.append(name)
        except OutOfRange:
            out_of_range.append(name)
    if len(kept) < 2:
        raise DataError(f"only {len(kept)} usable screenshots; nothing to split")
    sp = split(len(kept), ratio=ratio, seed=seed, strata=[g.value for _, g in kept])
    counts = {"train": {}, "test": {}}
    for part, idx in (("train", sp.train_indices), ("test", sp.test_indices)):
        for i in idx:
            src, grade = kept[i]
            dst = out_root / part / grade.value / src.name
            dst.parent.mkdir(parents=True, exist_ok=True)
            writer(src, dst)
            counts[part][grade.value] = counts[part].get(grade.value, 0) + 1
    return {
        "kept": len(kept),
        "train": len(sp.train_indices),
        "test": len(sp.test_indices),
        "per_class": counts,
        "rejected_red_range": rejected,
        "out_of_range": out_of_range,
        "missing": missing,
        "seed": seed,
    }
