"""Application settings.

Sources, lowest precedence first: built-in defaults, a ``key = value``
file (``--config`` or ``$AUDIT_CONFIG``), ``AUDIT_<KEY>`` environment
variables (plus ``PAGESPEED_API_KEY``), command-line flags.
"""

import configparser
import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError
from .extraction import DEFAULT_MOBILE_PHRASES
from .grades import ResolutionGrade
from .probe import FORMAT_AUDIT, OPTIMIZATION_AUDIT, PAGESPEED_ENDPOINT


class ConfigError(UsageError):
    pass


@dataclass(frozen=True)
class AppConfig:
    timeout: float = 30.0
    parallelism: int = 4
    pagespeed_endpoint: str = PAGESPEED_ENDPOINT
    pagespeed_api_key: str | None = None
    pagespeed_timeout: float = 120.0
    optimization_audit: str = OPTIMIZATION_AUDIT
    format_audit: str = FORMAT_AUDIT
    resolution_source: str = "pagespeed"
    load_backend: str = "simple_fetch"
    mobile_phrases: tuple = DEFAULT_MOBILE_PHRASES
    seed: int = 0
    ordinal_encoding: bool = True
    svm_model: str | None = None
    cnn_model: str | None = None
    load_time_warn: float = 3.0
    load_time_critical: float = 8.0
    resolution_warn: str = "D"
    resolution_critical: str = "F"

    def validate(self):
        if self.timeout <= 0 or self.pagespeed_timeout <= 0:
            raise ConfigError("timeouts must be positive")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.resolution_source not in ("pagespeed", "local"):
            raise ConfigError("resolution_source must be 'pagespeed' or 'local'")
        if self.load_backend not in ("simple_fetch", "browser_timing"):
            raise ConfigError("load_backend must be 'simple_fetch' or 'browser_timing'")
        if not self.mobile_phrases:
            raise ConfigError("mobile_phrases must not be empty")
        if not 0 <= self.load_time_warn <= self.load_time_critical:
            raise ConfigError("need 0 <= load_time_warn <= load_time_critical")
        try:
            warn = ResolutionGrade(self.resolution_warn)
            crit = ResolutionGrade(self.resolution_critical)
        except ValueError as exc:
            raise ConfigError(f"bad resolution threshold: {exc}") from None
        if crit.quality > warn.quality:
            raise ConfigError("resolution_critical must not be a better grade than resolution_warn")
        return self


FIELDS = {f.name: f for f in dataclasses.fields(AppConfig)}


def _coerce(key, raw):
    default = FIELDS[key].default
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if key == "mobile_phrases":
            if isinstance(raw, str):
                return tuple(p.strip() for p in raw.split(",") if p.strip())
            return tuple(raw)
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return None if raw in ("", None) else str(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None


def read_config_file(path):
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[audit]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return dict(parser["audit"])


def load_config(path=None, env=None, overrides=None):
    env = os.environ if env is None else env
    values = {}
    path = path or env.get("AUDIT_CONFIG")
    if path:
        try:
            raw = read_config_file(path)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        unknown = sorted(set(raw) - set(FIELDS))
        if unknown:
            raise ConfigError(f"unknown config keys in {path}: {', '.join(unknown)}")
        values.update({k: _coerce(k, v) for k, v in raw.items()})
    for key in FIELDS:
        env_value = env.get(f"AUDIT_{key.upper()}")
        if env_value is not None:
            values[key] = _coerce(key, env_value)
    if env.get("PAGESPEED_API_KEY"):
        values["pagespeed_api_key"] = env["PAGESPEED_API_KEY"]
    for key, value in (overrides or {}).items():
        if key not in FIELDS:
            raise ConfigError(f"unknown setting {key!r}")
        if value is not None:
            values[key] = _coerce(key, value)
    return AppConfig(**values).validate()
