"""RBF support vector classification trained with SMO.

The binary solver works on the dual

    min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K_ij

choosing each working pair by maximal violation for ``i`` and second-order
gain for ``j`` (Fan, Chen and Lin, JMLR 2005). Multi-class problems are
decomposed one-vs-one and decided by vote.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import ScalerParams
from .errors import ModelError, SingleClassInput, StorageError, TooFewRowsPerClass
from .grades import UsabilityGrade

log = logging.getLogger(__name__)

TAU = 1e-12
SV_THRESHOLD = 1e-8
DEFAULT_C = 1000.0
DEFAULT_GAMMA = 0.001
MODEL_FORMAT = "usability-audit/svm"
MODEL_VERSION = 1


def rbf_kernel(x, y, gamma):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_gram(A, B, gamma):
    """Kernel matrix ``K[i, j] = exp(-gamma * |A_i - B_j|^2)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sq = (A * A).sum(1)[:, None] - 2.0 * A @ B.T + (B * B).sum(1)[None, :]
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class SvmBinaryModel:
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    gamma: float
    C: float
    converged: bool = True
    iterations: int = 0
    alphas: np.ndarray = field(default=None, repr=False, compare=False)

    def decision(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return rbf_gram(X, self.support_vectors, self.gamma) @ self.dual_coefs + self.bias


def _solve_dual(K, y, C, tol, max_iter):
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient Q a - e at a = 0
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(K).copy()
    pos = y > 0
    converged = False
    it = 0
    while it < max_iter:
        upper = alpha >= C
        lower = alpha <= 0
        # I_up: y=+1 below C, or y=-1 above 0
        in_up = np.where(pos, ~upper, ~lower)
        in_low = np.where(pos, ~lower, ~upper)
        minus_yG = -y * G
        cand_up = np.where(in_up, minus_yG, -np.inf)
        i = int(np.argmax(cand_up))
        gmax = cand_up[i]
        cand_low = np.where(in_low, -minus_yG, -np.inf)
        gmax2 = cand_low.max()
        if gmax + gmax2 < tol:
            converged = True
            break
        grad_diff = gmax - minus_yG
        quad = QD[i] + QD - 2.0 * K[i]
        quad = np.where(quad > 0, quad, TAU)
        ok = in_low & (grad_diff > 0)
        if not ok.any():
            converged = True
            break
        obj = np.where(ok, -(grad_diff ** 2) / quad, np.inf)
        j = int(np.argmin(obj))

        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            qc = QD[i] + QD[j] + 2.0 * Q[i, j]
            qc = qc if qc > 0 else TAU
            delta = (-G[i] - G[j]) / qc
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            qc = QD[i] + QD[j] - 2.0 * Q[i, j]
            qc = qc if qc > 0 else TAU
            delta = (G[i] - G[j]) / qc
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total
        G += Q[i] * (alpha[i] - ai_old) + Q[j] * (alpha[j] - aj_old)
        it += 1

    # bias: mean over free variables, else midpoint of the feasible interval
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yG[free].mean()
    else:
        at_upper = alpha >= C
        ub_mask = (at_upper & ~pos) | (~at_upper & pos)
        lb_mask = (at_upper & pos) | (~at_upper & ~pos)
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2 if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return alpha, -float(rho), converged, it


def smo_train_binary(X, y, C=DEFAULT_C, gamma=DEFAULT_GAMMA, tol=1e-3, max_iter=None, K=None):
    """Train a two-class RBF SVM; ``y`` holds +1/-1.

    ``max_iter`` defaults to ``10 * n**2`` pair updates, i.e. ten sweeps'
    worth of work per training row. Running out of iterations returns the
    current model with ``converged=False``. A precomputed Gram matrix may
    be passed as ``K``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(X) < 2 or len(X) != len(y):
        raise ValueError("need at least two rows with one label each")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValueError("labels must be +1 or -1")
    if len(np.unique(y)) < 2:
        raise SingleClassInput("both classes must be present to train a binary SVM")
    if C <= 0 or gamma <= 0:
        raise ValueError("C and gamma must be positive")
    n = len(y)
    if max_iter is None:
        max_iter = 10 * n * n
    if K is None:
        K = rbf_gram(X, X, gamma)
    alpha, bias, converged, iters = _solve_dual(K, y, float(C), tol, max_iter)
    if not converged:
        log.warning("SMO stopped after %d iterations without meeting tol=%g (C=%g, gamma=%g)",
                    iters, tol, C, gamma)
    sv = alpha > SV_THRESHOLD
    return SvmBinaryModel(
        support_vectors=X[sv].copy(),
        dual_coefs=(alpha * y)[sv],
        bias=bias,
        gamma=float(gamma),
        C=float(C),
        converged=converged,
        iterations=iters,
        alphas=alpha,
    )


def class_order(labels):
    """Distinct labels, best grade first for grades, sorted otherwise."""
    distinct = set(labels)
    if all(isinstance(v, UsabilityGrade) for v in distinct):
        return sorted(distinct, key=lambda g: g.rank)
    return sorted(distinct)


@dataclass
class SvmMultiModel:
    classes: list
    pair_models: dict
    C: float
    gamma: float
    scaler: ScalerParams | None = None
    ordinal_encoding: bool = True

    @property
    def converged(self):
        return all(m.converged for m in self.pair_models.values())

    def pair_decisions(self, X):
        """``{(a, b): decision values}``; positive favours ``a``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return {pair: m.decision(X) for pair, m in self.pair_models.items()}

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.classes) == 1:
            return [self.classes[0]] * len(X)
        decisions = self.pair_decisions(X)
        index = {c: k for k, c in enumerate(self.classes)}
        votes = np.zeros((len(X), len(self.classes)), dtype=int)
        strength = np.zeros((len(X), len(self.classes)))
        for (a, b), d in decisions.items():
            win_a = d > 0
            ia, ib = index[a], index[b]
            votes[win_a, ia] += 1
            votes[~win_a, ib] += 1
            strength[win_a, ia] += np.abs(d[win_a])
            strength[~win_a, ib] += np.abs(d[~win_a])
        out = []
        for v, s in zip(votes, strength):
            top = np.flatnonzero(v == v.max())
            # more votes, then larger summed |decision|, then class order
            best = max(top, key=lambda k: (s[k], -k))
            out.append(self.classes[best])
        return out

    def predict_one(self, x):
        return self.predict(np.asarray(x, dtype=float)[None, :])[0]


def train_multiclass(X, labels, C=DEFAULT_C, gamma=DEFAULT_GAMMA, tol=1e-3, max_iter=None, K=None):
    """One-vs-one ensemble over every pair of classes present in ``labels``."""
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    classes = class_order(labels)
    if K is None:
        K = rbf_gram(X, X, gamma)
    lab = np.array([classes.index(v) for v in labels])
    pairs = {}
    for ia, ib in itertools.combinations(range(len(classes)), 2):
        idx = np.flatnonzero((lab == ia) | (lab == ib))
        y = np.where(lab[idx] == ia, 1.0, -1.0)
        pairs[(classes[ia], classes[ib])] = smo_train_binary(
            X[idx], y, C=C, gamma=gamma, tol=tol, max_iter=max_iter, K=K[np.ix_(idx, idx)])
    return SvmMultiModel(classes=classes, pair_models=pairs, C=float(C), gamma=float(gamma))


def predict(model, x):
    return model.predict_one(x)


@dataclass(frozen=True)
class GridSpec:
    C_values: tuple = (0.1, 1.0, 10.0, 100.0, 1000.0)
    gamma_values: tuple = (1.0, 0.1, 0.01, 0.001, 0.0001)
    folds: int = 3

    def __post_init__(self):
        if not self.C_values or not self.gamma_values:
            raise ValueError("grid axes must be non-empty")
        if min(self.C_values) <= 0 or min(self.gamma_values) <= 0:
            raise ValueError("grid values must be positive")
        if self.folds < 2:
            raise ValueError("need at least two folds")


@dataclass
class GridResult:
    C: float
    gamma: float
    cv_table: np.ndarray  # rows follow C_values, columns gamma_values
    grid: GridSpec
    unconverged_cells: list = field(default_factory=list)

    def to_dict(self):
        return {
            "C": self.C,
            "gamma": self.gamma,
            "C_values": list(self.grid.C_values),
            "gamma_values": list(self.grid.gamma_values),
            "folds": self.grid.folds,
            "cv_accuracy": self.cv_table.tolist(),
            "unconverged_cells": [list(c) for c in self.unconverged_cells],
        }


def stratified_folds(labels, k, seed):
    """Assign each row a fold id in ``range(k)``, dealing every class round-robin."""
    labels = list(labels)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(labels), dtype=int)
    for c in class_order(labels):
        members = np.array([i for i, v in enumerate(labels) if v == c])
        if len(members) < k:
            raise TooFewRowsPerClass(f"class {c!r} has {len(members)} rows, fewer than {k} folds")
        members = rng.permutation(members)
        fold[members] = np.arange(len(members)) % k
    return fold


def grid_search(X, labels, grid=GridSpec(), seed=0, tol=1e-3):
    """Exhaustive stratified k-fold search over ``grid``.

    Each cell's score is the pooled fraction of correctly classified
    held-out rows across folds. Ties go to the larger C, then larger gamma.
    """
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    folds = stratified_folds(labels, grid.folds, seed)
    n = len(labels)
    table = np.zeros((len(grid.C_values), len(grid.gamma_values)))
    unconverged = []
    for gi, gamma in enumerate(grid.gamma_values):
        K = rbf_gram(X, X, gamma)
        for ci, C in enumerate(grid.C_values):
            correct = 0
            for f in range(grid.folds):
                tr = np.flatnonzero(folds != f)
                te = np.flatnonzero(folds == f)
                model = train_multiclass(X[tr], [labels[i] for i in tr], C=C, gamma=gamma,
                                         tol=tol, K=K[np.ix_(tr, tr)])
                if not model.converged:
                    unconverged.append((C, gamma, f))
                pred = model.predict(X[te])
                correct += sum(p == labels[i] for p, i in zip(pred, te))
            table[ci, gi] = correct / n
    best = max(
        itertools.product(range(len(grid.C_values)), range(len(grid.gamma_values))),
        key=lambda cg: (table[cg], grid.C_values[cg[0]], grid.gamma_values[cg[1]]),
    )
    return GridResult(float(grid.C_values[best[0]]), float(grid.gamma_values[best[1]]),
                      table, grid, unconverged)


# --- persistence ---------------------------------------------------------------

def model_to_dict(model):
    def label(v):
        return v.value if isinstance(v, UsabilityGrade) else v

    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "classes": [label(c) for c in model.classes],
        "C": model.C,
        "gamma": model.gamma,
        "encoding": "ordinal" if model.ordinal_encoding else "alphabetical",
        "scaler": model.scaler.to_dict() if model.scaler is not None else None,
        "pairs": [
            {
                "class_a": label(a),
                "class_b": label(b),
                "support_vectors": m.support_vectors.tolist(),
                "dual_coefs": m.dual_coefs.tolist(),
                "bias": m.bias,
                "converged": m.converged,
            }
            for (a, b), m in model.pair_models.items()
        ],
    }


def model_from_dict(doc):
    from .schemas import validate

    validate(doc, "svm_model")
    if doc["format"] != MODEL_FORMAT or doc["version"] != MODEL_VERSION:
        raise ModelError(f"unsupported model format {doc['format']!r} v{doc['version']}")
    try:
        classes = [UsabilityGrade(c) for c in doc["classes"]]
        pairs = {}
        for p in doc["pairs"]:
            sv = np.asarray(p["support_vectors"], dtype=float).reshape(-1, 4)
            coefs = np.asarray(p["dual_coefs"], dtype=float)
            if len(coefs) != len(sv):
                raise ModelError("support vector and coefficient counts differ")
            pairs[(UsabilityGrade(p["class_a"]), UsabilityGrade(p["class_b"]))] = SvmBinaryModel(
                sv, coefs, float(p["bias"]), float(doc["gamma"]), float(doc["C"]),
                converged=bool(p.get("converged", True)))
    except ValueError as exc:
        raise ModelError(f"invalid model content: {exc}") from exc
    expected = len(classes) * (len(classes) - 1) // 2
    if len(pairs) != expected:
        raise ModelError(f"{len(classes)} classes need {expected} pair models, found {len(pairs)}")
    scaler = ScalerParams.from_dict(doc["scaler"]) if doc.get("scaler") else None
    return SvmMultiModel(classes, pairs, float(doc["C"]), float(doc["gamma"]), scaler,
                         doc.get("encoding", "ordinal") == "ordinal")


def save_model(model, path):
    try:
        Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write model {path}: {exc}") from exc


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read model {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc)
