"""Threshold rules that turn an audit record into advice for developers."""

import enum
from dataclasses import dataclass

from .grades import ResolutionGrade


class Feature(enum.Enum):
    LOAD_TIME = "load_time"
    MOBILE_UI = "mobile_ui"
    RESOLUTION = "resolution"
    CONTACT_INFO = "contact_info"


class Severity(enum.Enum):
    INFO = "info"
    WARN = "warn"
    CRITICAL = "critical"


MESSAGES = {
    (Feature.LOAD_TIME, Severity.WARN):
        "Pages take a while to load. Trim heavy scripts and images, enable compression "
        "and caching so visitors are not kept waiting.",
    (Feature.LOAD_TIME, Severity.CRITICAL):
        "Pages load very slowly and many visitors will give up before they appear. "
        "Cut page weight and server response time as a priority.",
    (Feature.MOBILE_UI, Severity.CRITICAL):
        "No mobile rendering hints were found. Add a viewport meta tag "
        "(width=device-width) and a responsive layout so the site works on phones.",
    (Feature.RESOLUTION, Severity.WARN):
        "Images are poorly optimized. Re-encode them at display size and prefer modern "
        "formats such as WebP or AVIF.",
    (Feature.RESOLUTION, Severity.CRITICAL):
        "Images are badly optimized for the web. Serve them compressed, at display size "
        "and in modern formats such as WebP or AVIF.",
    (Feature.CONTACT_INFO, Severity.WARN):
        "No email address, phone number or social media handle was found. Give visitors "
        "a visible way to reach you.",
}


@dataclass(frozen=True)
class Recommendation:
    feature: Feature
    severity: Severity
    message: str

    def __post_init__(self):
        if not self.message:
            raise ValueError("recommendation message must not be empty")

    def to_dict(self):
        return {"feature": self.feature.value, "severity": self.severity.value, "message": self.message}


def _make(feature, severity):
    return Recommendation(feature, severity, MESSAGES[(feature, severity)])


def recommend(record, config):
    """At most one recommendation per failing feature, in feature order.

    A load time strictly above ``load_time_warn`` warns and one at or above
    ``load_time_critical`` is critical; a resolution grade at or below the
    configured warn/critical grade does the same. A missing mobile UI is
    always critical and missing contact details warn.
    """
    out = []
    load = record.load_time_s
    if load >= config.load_time_critical:
        out.append(_make(Feature.LOAD_TIME, Severity.CRITICAL))
    elif load > config.load_time_warn:
        out.append(_make(Feature.LOAD_TIME, Severity.WARN))
    if not record.mobile_ui:
        out.append(_make(Feature.MOBILE_UI, Severity.CRITICAL))
    quality = ResolutionGrade(record.resolution_grade).quality
    if quality <= ResolutionGrade(config.resolution_critical).quality:
        out.append(_make(Feature.RESOLUTION, Severity.CRITICAL))
    elif quality <= ResolutionGrade(config.resolution_warn).quality:
        out.append(_make(Feature.RESOLUTION, Severity.WARN))
    if not record.contact_info:
        out.append(_make(Feature.CONTACT_INFO, Severity.WARN))
    return out


def build_audit_report(record, predicted_grade, recommendations, model_version, timestamp,
                       details=None):
    doc = {
        "url": record.url,
        "features": {
            "load_time_s": float(record.load_time_s),
            "mobile_ui": bool(record.mobile_ui),
            "resolution_grade": record.resolution_grade.value,
            "contact_info": bool(record.contact_info),
        },
        "predicted_grade": predicted_grade.value,
        "recommendations": [r.to_dict() for r in recommendations],
        "model_version": model_version,
        "timestamp": timestamp,
    }
    if details:
        doc["details"] = details
    return doc
