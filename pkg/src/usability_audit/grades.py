"""Ordinal label types shared by the textual and screenshot pipelines."""

import enum


class UsabilityGrade(enum.Enum):
    """Five-level usability label, best first."""

    EXCELLENT = "excellent"
    VERY_GOOD = "very_good"
    GOOD = "good"
    BAD = "bad"
    VERY_BAD = "very_bad"

    @property
    def rank(self):
        """0 for EXCELLENT up to 4 for VERY_BAD."""
        return _GRADE_ORDER.index(self)

    @classmethod
    def ordered(cls):
        return list(_GRADE_ORDER)

    def __lt__(self, other):
        # "less" means worse, so sorted() runs VERY_BAD .. EXCELLENT
        if not isinstance(other, UsabilityGrade):
            return NotImplemented
        return self.rank > other.rank


_GRADE_ORDER = [
    UsabilityGrade.EXCELLENT,
    UsabilityGrade.VERY_GOOD,
    UsabilityGrade.GOOD,
    UsabilityGrade.BAD,
    UsabilityGrade.VERY_BAD,
]


class ResolutionGrade(enum.Enum):
    """Image-quality bucket. The scale has no E."""

    A = "A"
    B = "B"
    C = "C"
    D = "D"
    F = "F"

    @property
    def quality(self):
        """Ordinal quality, A=4 down to F=0."""
        return {"A": 4, "B": 3, "C": 2, "D": 1, "F": 0}[self.value]
