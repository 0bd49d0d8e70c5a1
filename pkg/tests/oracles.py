"""Independent reference computations the tests compare the package against.

Everything here is deliberately naive: explicit loops, no shared helpers
with the code under test.
"""

import json
import re

import numpy as np

from conftest import HTML_DIR


# --- extraction ---------------------------------------------------------------------

def _phone_key(p):
    return ("+" if p.strip().startswith("+") else "") + re.sub(r"\D", "", p)


def extraction_items(emails, phones, social):
    return ({f"email:{e.lower()}" for e in emails}
            | {f"phone:{_phone_key(p)}" for p in phones}
            | {f"social:{s.lower()}" for s in social})


def score_extraction_corpus():
    """Micro precision/recall of mobile-UI and contact extraction over the fixture corpus."""
    from usability_audit.extraction import HtmlDocument, detect_mobile_ui, extract_contacts

    truth = json.loads((HTML_DIR / "truth.json").read_text())
    mob = {"tp": 0, "fp": 0, "fn": 0}
    con = {"tp": 0, "fp": 0, "fn": 0}
    for name, t in truth.items():
        doc = HtmlDocument.from_file(HTML_DIR / name)
        got = detect_mobile_ui(doc)
        mob["tp"] += got and t["mobile_ui"]
        mob["fp"] += got and not t["mobile_ui"]
        mob["fn"] += (not got) and t["mobile_ui"]
        c = extract_contacts(doc)
        found = extraction_items(c.emails, c.phones, c.social_handles)
        expected = extraction_items(t["emails"], t["phones"], t["social"])
        con["tp"] += len(found & expected)
        con["fp"] += len(found - expected)
        con["fn"] += len(expected - found)

    def pr(d):
        p = d["tp"] / (d["tp"] + d["fp"]) if d["tp"] + d["fp"] else 1.0
        r = d["tp"] / (d["tp"] + d["fn"]) if d["tp"] + d["fn"] else 1.0
        return p, r

    return {"documents": len(truth), "mobile": pr(mob), "contacts": pr(con),
            "mobile_counts": mob, "contact_counts": con}


# --- metrics ------------------------------------------------------------------------

def brute_force_metrics(actual, predicted, classes):
    """Per-class one-vs-rest counts by direct enumeration of the label pairs."""
    n = len(actual)
    acc = sum(1 for a, p in zip(actual, predicted) if a == p) / n
    prec, rec, f1 = [], [], []
    for c in classes:
        tp = fp = fn = 0
        for a, p in zip(actual, predicted):
            if p == c and a == c:
                tp += 1
            elif p == c:
                fp += 1
            elif a == c:
                fn += 1
        pi = tp / (tp + fp) if tp + fp else 0.0
        ri = tp / (tp + fn) if tp + fn else 0.0
        prec.append(pi)
        rec.append(ri)
        f1.append(2 * pi * ri / (pi + ri) if pi + ri else 0.0)
    return acc, prec, rec, f1


# --- CNN ----------------------------------------------------------------------------

def naive_conv2d(x, w, b, pad=1):
    """Seven nested loops; ``x`` (N,H,W,C), ``w`` (k,k,C,F), stride 1."""
    n, h, wd, c = x.shape
    k, _, _, f = w.shape
    xp = np.zeros((n, h + 2 * pad, wd + 2 * pad, c))
    xp[:, pad:pad + h, pad:pad + wd] = x
    oh, ow = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    out = np.zeros((n, oh, ow, f))
    for i in range(n):
        for r in range(oh):
            for s in range(ow):
                for o in range(f):
                    acc = b[o]
                    for u in range(k):
                        for v in range(k):
                            for ch in range(c):
                                acc += xp[i, r + u, s + v, ch] * w[u, v, ch, o]
                    out[i, r, s, o] = acc
    return out


def naive_maxpool(x):
    n, h, w, c = x.shape
    out = np.zeros((n, h // 2, w // 2, c))
    for i in range(n):
        for r in range(h // 2):
            for s in range(w // 2):
                for ch in range(c):
                    out[i, r, s, ch] = max(x[i, 2 * r + a, 2 * s + bb, ch] for a in (0, 1) for bb in (0, 1))
    return out


# --- SVM ----------------------------------------------------------------------------

def separable_problem(seed, n=40, d=2, margin=0.5):
    """Two linearly separable Gaussian blobs labelled +1/-1."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    w /= np.linalg.norm(w)
    X = []
    y = []
    while len(X) < n:
        p = rng.normal(scale=2.0, size=d)
        s = p @ w
        if abs(s) < margin:
            continue
        X.append(p)
        y.append(1.0 if s > 0 else -1.0)
    y = np.array(y)
    if len(set(y)) < 2:
        y[0] = -y[0]
        X[0] = -X[0]
    return np.array(X), y


def kkt_violations(model, X, y, C, tol=1e-2, bound_eps=1e-8):
    """Largest KKT violation on free, zero and bound multipliers separately."""
    f = model.decision(X)
    margin = y * f
    a = model.alphas
    free = (a > bound_eps) & (a < C - bound_eps)
    at_zero = a <= bound_eps
    at_c = a >= C - bound_eps
    return {
        "free": float(np.abs(margin[free] - 1).max()) if free.any() else 0.0,
        "zero": float(np.maximum(0, 1 - margin[at_zero]).max()) if at_zero.any() else 0.0,
        "bound": float(np.maximum(0, margin[at_c] - 1).max()) if at_c.any() else 0.0,
        "n_free": int(free.sum()),
    }


XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([-1.0, 1.0, 1.0, -1.0])
