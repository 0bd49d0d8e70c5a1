"""Network-facing measurements and screenshot ingestion.

Load time comes from either a plain HTTP fetch of the root document or a
browser's navigation timing. Image resolution is scored through the
PageSpeed Insights v5 API (or an offline heuristic with the same
interface) and bucketed into A/B/C/D/F.
"""

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from html.parser import HTMLParser
from io import BytesIO
from pathlib import Path
from typing import Protocol
from urllib.parse import urljoin, urlparse

import numpy as np
import requests
from PIL import Image, UnidentifiedImageError

from .errors import (
    AccessDenied,
    BackendUnavailable,
    MalformedResponse,
    MissingFile,
    ServiceUnavailable,
    Timeout,
    UndecodableImage,
    UnreachableHost,
    UsageError,
)
from .grades import ResolutionGrade

log = logging.getLogger(__name__)

PAGESPEED_ENDPOINT = "https://www.googleapis.com/pagespeedonline/v5/runPagespeed"
OPTIMIZATION_AUDIT = "uses-optimized-images"
FORMAT_AUDIT = "modern-image-formats"
DEFAULT_TIMEOUT = 30.0
DEFAULT_PARALLELISM = 4

# lower bound of each grade's half-open interval on the averaged score
RESOLUTION_BINS = (
    (0.8, ResolutionGrade.A),
    (0.6, ResolutionGrade.B),
    (0.4, ResolutionGrade.C),
    (0.2, ResolutionGrade.D),
    (0.0, ResolutionGrade.F),
)


class LoadBackend(enum.Enum):
    SIMPLE_FETCH = "simple_fetch"
    BROWSER_TIMING = "browser_timing"


@dataclass(frozen=True)
class LoadTimeSample:
    url: str
    seconds: float
    backend: LoadBackend

    def __post_init__(self):
        if not math.isfinite(self.seconds) or self.seconds < 0:
            raise ValueError(f"load time must be finite and >= 0, got {self.seconds}")


@dataclass(frozen=True)
class PageSpeedScores:
    optimization: float
    format: float

    def __post_init__(self):
        for name in ("optimization", "format"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} score must lie in [0, 1], got {v}")

    @property
    def average(self):
        return (self.optimization + self.format) / 2


class InvalidUrl(UsageError):
    pass


def check_url(url):
    parts = urlparse(url)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise InvalidUrl(f"not an http(s) URL: {url!r}")
    return url


def _session():
    s = requests.Session()
    s.headers["User-Agent"] = "usability-audit/0.1 (+load-time probe)"
    return s


def fetch_document(url, timeout=DEFAULT_TIMEOUT, session=None):
    """GET ``url`` and return ``(body_bytes, elapsed_seconds)``.

    The clock starts before the request is issued and stops once the last
    byte of the body has arrived. ``timeout`` bounds the whole exchange.
    """
    check_url(url)
    session = session or _session()
    start = time.perf_counter()
    try:
        with session.get(url, stream=True, timeout=(timeout, timeout)) as resp:
            chunks = []
            for chunk in resp.iter_content(chunk_size=64 * 1024):
                chunks.append(chunk)
                if time.perf_counter() - start > timeout:
                    raise Timeout(f"{url}: no complete response within {timeout:g} s")
            body = b"".join(chunks)
    except (requests.exceptions.ConnectTimeout, requests.exceptions.ReadTimeout) as exc:
        raise Timeout(f"{url}: timed out after {timeout:g} s") from exc
    except requests.exceptions.ConnectionError as exc:
        raise UnreachableHost(f"{url}: {exc}") from exc
    except requests.exceptions.RequestException as exc:
        raise UnreachableHost(f"{url}: {exc}") from exc
    return body, time.perf_counter() - start


class BrowserTimingAdapter(Protocol):
    def navigation_timing(self, url: str, timeout: float) -> dict:
        """Load ``url`` and return ``window.performance.timing`` as a dict."""


def seconds_from_timing(timing):
    """Seconds between ``navigationStart`` and ``domComplete`` (both in ms)."""
    try:
        start = float(timing["navigationStart"])
        done = float(timing["domComplete"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"navigation timing lacks a field: {exc}") from exc
    if done < start:
        raise MalformedResponse("domComplete precedes navigationStart")
    return (done - start) / 1000.0


class WebDriverTimingAdapter:
    """Navigation timing through Selenium, when it is installed."""

    def __init__(self, browser="chrome"):
        self.browser = browser

    def navigation_timing(self, url, timeout):
        try:
            from selenium import webdriver
        except ImportError as exc:
            raise BackendUnavailable("browser timing needs selenium, which is not installed") from exc
        factory = {"chrome": webdriver.Chrome, "firefox": webdriver.Firefox}[self.browser]
        try:
            driver = factory()
        except Exception as exc:  # driver binaries missing, no display, ...
            raise BackendUnavailable(f"could not start {self.browser}: {exc}") from exc
        try:
            driver.set_page_load_timeout(timeout)
            driver.get(url)
            return driver.execute_script("return window.performance.timing.toJSON()")
        finally:
            driver.quit()


def measure_load_time(url, backend=LoadBackend.SIMPLE_FETCH, timeout=DEFAULT_TIMEOUT,
                      adapter=None, session=None):
    check_url(url)
    backend = LoadBackend(backend)
    if backend is LoadBackend.SIMPLE_FETCH:
        _, seconds = fetch_document(url, timeout=timeout, session=session)
    else:
        if adapter is None:
            raise BackendUnavailable("browser timing requested without a browser adapter")
        seconds = seconds_from_timing(adapter.navigation_timing(url, timeout))
    return LoadTimeSample(url=url, seconds=seconds, backend=backend)


def probe_many(func, urls, parallelism=DEFAULT_PARALLELISM):
    """Apply ``func`` to every URL with bounded parallelism.

    Results come back in input order. Exceptions are returned in place of
    results so one bad host does not sink the batch.
    """
    def guarded(u):
        try:
            return func(u)
        except Exception as exc:  # noqa: BLE001 - reported per URL
            return exc

    if parallelism <= 1 or len(urls) <= 1:
        return [guarded(u) for u in urls]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(guarded, urls))


class PageSpeedClient:
    """Minimal client for the PageSpeed Insights ``runPagespeed`` endpoint."""

    def __init__(self, endpoint=PAGESPEED_ENDPOINT, api_key=None, timeout=120.0,
                 optimization_audit=OPTIMIZATION_AUDIT, format_audit=FORMAT_AUDIT,
                 strategy=None, session=None):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.optimization_audit = optimization_audit
        self.format_audit = format_audit
        self.strategy = strategy
        self.session = session or _session()

    def fetch(self, url):
        params = {"url": url}
        if self.api_key:
            params["key"] = self.api_key
        if self.strategy:
            params["strategy"] = self.strategy
        try:
            resp = self.session.get(self.endpoint, params=params, timeout=self.timeout)
        except requests.exceptions.Timeout as exc:
            raise Timeout(f"page-speed service timed out after {self.timeout:g} s") from exc
        except requests.exceptions.RequestException as exc:
            raise ServiceUnavailable(f"page-speed service unreachable: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AccessDenied(f"page-speed service refused the request ({resp.status_code})")
        if resp.status_code != 200:
            raise ServiceUnavailable(f"page-speed service answered {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponse("page-speed response is not JSON") from exc

    def _audit_score(self, payload, audit_id):
        try:
            audit = payload["lighthouseResult"]["audits"][audit_id]
        except (KeyError, TypeError) as exc:
            raise MalformedResponse(f"response has no {audit_id!r} audit") from exc
        score = audit.get("score") if isinstance(audit, dict) else None
        if score is None:
            # nothing to optimize on pages without qualifying images
            if isinstance(audit, dict) and audit.get("scoreDisplayMode") == "notApplicable":
                return 1.0
            raise MalformedResponse(f"audit {audit_id!r} carries no score")
        try:
            score = float(score)
        except (TypeError, ValueError) as exc:
            raise MalformedResponse(f"audit {audit_id!r} score is not numeric") from exc
        if not 0.0 <= score <= 1.0:
            raise MalformedResponse(f"audit {audit_id!r} score {score} outside [0, 1]")
        return score

    def parse(self, payload):
        return PageSpeedScores(
            optimization=self._audit_score(payload, self.optimization_audit),
            format=self._audit_score(payload, self.format_audit),
        )

    def scores(self, url):
        check_url(url)
        return self.parse(self.fetch(url))


class _ImageSources(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.sources = []

    def handle_starttag(self, tag, attrs):
        if tag != "img":
            return
        a = dict(attrs)
        src = a.get("src") or a.get("data-src")
        if not src and a.get("srcset"):
            src = a["srcset"].split(",")[0].split()[0]
        if src and not src.startswith("data:"):
            self.sources.append(src)

    handle_startendtag = handle_starttag


MODERN_EXTENSIONS = (".webp", ".avif", ".jxl")


class LocalResolutionScorer:
    """Offline stand-in for the page-speed service.

    The format score is the share of ``<img>`` sources in a modern format.
    The optimization score maps each image's stored bytes per pixel onto
    [0, 1]: ``good_bpp`` or less scores 1, ``bad_bpp`` or more scores 0.
    A page without images scores (1, 1).
    """

    def __init__(self, timeout=DEFAULT_TIMEOUT, max_images=8, good_bpp=0.25, bad_bpp=1.0,
                 session=None):
        self.timeout = timeout
        self.max_images = max_images
        self.good_bpp = good_bpp
        self.bad_bpp = bad_bpp
        self.session = session or _session()

    def image_sources(self, html, base_url):
        parser = _ImageSources()
        parser.feed(html)
        parser.close()
        seen = []
        for src in parser.sources:
            full = urljoin(base_url, src)
            if full not in seen:
                seen.append(full)
        return seen

    def _bpp_score(self, data):
        try:
            with Image.open(BytesIO(data)) as img:
                w, h = img.size
        except (UnidentifiedImageError, OSError):
            return None
        if w * h == 0:
            return None
        bpp = len(data) / (w * h)
        span = self.bad_bpp - self.good_bpp
        return float(min(1.0, max(0.0, (self.bad_bpp - bpp) / span)))

    def scores_from_html(self, html, base_url):
        sources = self.image_sources(html, base_url)
        if not sources:
            return PageSpeedScores(1.0, 1.0)
        modern = sum(urlparse(s).path.lower().endswith(MODERN_EXTENSIONS) for s in sources)
        per_image = []
        for src in sources[: self.max_images]:
            try:
                data, _ = fetch_document(src, timeout=self.timeout, session=self.session)
            except Exception as exc:  # noqa: BLE001 - a broken image is skipped
                log.warning("skipping image %s: %s", src, exc)
                continue
            s = self._bpp_score(data)
            if s is not None:
                per_image.append(s)
        optimization = float(np.mean(per_image)) if per_image else 1.0
        return PageSpeedScores(optimization=optimization, format=modern / len(sources))

    def scores(self, url):
        body, _ = fetch_document(url, timeout=self.timeout, session=self.session)
        return self.scores_from_html(body.decode("utf-8", errors="replace"), url)


def score_resolution(url, client):
    return client.scores(url)


def grade_from_average(avg):
    """Bucket an averaged [0, 1] score: A >= 0.8 > B >= 0.6 > C >= 0.4 > D >= 0.2 > F."""
    if not 0.0 <= avg <= 1.0:
        raise ValueError(f"average score {avg} outside [0, 1]")
    # two-decimal inputs must not land a hair under a boundary
    avg = round(avg, 9)
    for lower, grade in RESOLUTION_BINS:
        if avg >= lower:
            return grade
    raise AssertionError("unreachable")


def grade_resolution(scores):
    return grade_from_average(scores.average)


def ingest_screenshot(path, target_side=224):
    """Load an image as a ``target_side`` x ``target_side`` x 3 float array in [0, 1].

    Resizing is bilinear and ignores the aspect ratio, which is what a
    full-page screenshot squeezed into a square model input needs.
    """
    if target_side <= 0:
        raise ValueError("target_side must be positive")
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such image: {path}")
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if img.size != (target_side, target_side):
                img = img.resize((target_side, target_side), Image.Resampling.BILINEAR)
            arr = np.asarray(img, dtype=np.float64)
    except (UnidentifiedImageError, OSError) as exc:
        raise UndecodableImage(f"cannot decode {path}: {exc}") from exc
    return arr / 255.0
