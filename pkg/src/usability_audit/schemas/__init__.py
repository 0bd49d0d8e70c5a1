"""JSON Schemas for every document the tool reads or writes."""

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from ..errors import ModelError

NAMES = (
    "svm_model", "cnn_model_meta", "metrics_report", "audit_report",
    "probe_result", "svm_train_report", "cnn_train_report", "ingest_summary",
    "label_summary", "predict_summary",
)


@lru_cache(maxsize=None)
def load_schema(name):
    if name not in NAMES:
        raise KeyError(name)
    text = resources.files(__package__).joinpath(f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(doc, name, error=ModelError):
    """Validate ``doc`` against schema ``name``; failures raise ``error``."""
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise error(f"{name} document invalid at {where}: {exc.message}") from exc
