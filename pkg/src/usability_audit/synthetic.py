"""Synthetic audit corpora with planted structure, for tests and demos.

Rows are drawn around five archetypes, one per grade. Only load time is
continuous, so it carries all of the within-archetype spread; its standard
deviation is expressed as a fraction of the smallest distance between two
archetypes.
"""

import itertools

import numpy as np

from .dataset import AuditRecord, encode
from .grades import ResolutionGrade, UsabilityGrade

# (load seconds, resolution, mobile UI, contact info), best first
ARCHETYPES = (
    (1.0, ResolutionGrade.A, True, True),
    (3.0, ResolutionGrade.B, True, True),
    (5.0, ResolutionGrade.C, True, False),
    (7.0, ResolutionGrade.D, False, True),
    (9.0, ResolutionGrade.F, False, False),
)


def _record(url, load, res, mobile, contact):
    return AuditRecord(url, load, mobile_ui=mobile, resolution_grade=res, contact_info=contact)


def archetype_min_distance(archetypes=ARCHETYPES):
    vecs = [encode(_record("x", *a)) for a in archetypes]
    return min(float(np.linalg.norm(u - v)) for u, v in itertools.combinations(vecs, 2))


def planted_corpus(n=422, seed=0, spread=0.12, archetypes=ARCHETYPES):
    """``n`` records and their planted archetype index (0 = best).

    ``spread`` is the load-time standard deviation as a fraction of the
    minimum inter-archetype distance in encoded space. Archetypes are
    assigned round-robin, then shuffled.
    """
    rng = np.random.default_rng(seed)
    sigma = spread * archetype_min_distance(archetypes)
    planted = rng.permutation(np.arange(n) % len(archetypes))
    records = []
    for i, k in enumerate(planted):
        load, res, mobile, contact = archetypes[k]
        t = max(0.05, load + rng.normal(0.0, sigma))
        records.append(_record(f"https://shop{i:04d}.example", round(t, 4), res, mobile, contact))
    return records, planted


def planted_grades(planted):
    grades = UsabilityGrade.ordered()
    return [grades[k] for k in planted]
