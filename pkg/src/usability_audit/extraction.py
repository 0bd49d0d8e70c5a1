"""HTML feature extraction: the mobile-UI marker and contact information.

Scanning is pattern based so minified or broken markup is handled the same
way as tidy markup. Nothing here executes scripts or renders the page.
"""

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path

DEFAULT_MOBILE_PHRASES = ("device-width", "apple-mobile-web", "inmobile-site-verification")

EMAIL_PATTERN = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}")

# at least 7 digits; optional leading +, spaces, dots, dashes, parentheses
PHONE_PATTERN = re.compile(r"(?<![\w+])\+?\(?\d[\d\s().-]{5,22}\d(?![\w])")
TEL_HREF_PATTERN = re.compile(r"""href\s*=\s*["']?\s*tel:([+\d\s().-]+)""", re.IGNORECASE)
PHONE_MIN_DIGITS = 7
PHONE_MAX_DIGITS = 15

SOCIAL_PATTERN = re.compile(
    r"(?:https?:)?(?://)?(?:www\.|mobile\.|m\.)?(?:twitter|instagram|facebook)\.com/"
    r"(?:#!/)?@?([A-Za-z0-9_](?:[A-Za-z0-9_.]*[A-Za-z0-9_])?)",
    re.IGNORECASE,
)
HANDLE_PATTERN = re.compile(r"[A-Za-z0-9_](?:[A-Za-z0-9_.]*[A-Za-z0-9_])?")

# path segments on the social hosts that are site features, not accounts
_SOCIAL_RESERVED = frozenset({
    "share", "sharer", "sharer.php", "intent", "home", "login", "signup",
    "dialog", "plugins", "tr", "hashtag", "explore", "p", "reel", "reels",
    "search", "i", "privacy", "policies", "help", "about", "legal", "tos",
    "watch", "groups", "events", "pages", "profile.php", "stories",
})

_SCRIPT_STYLE = re.compile(r"<(script|style)\b.*?</\1\s*>", re.IGNORECASE | re.DOTALL)
_COMMENT = re.compile(r"<!--.*?-->", re.DOTALL)
_TAG = re.compile(r"<[^>]*>")


@dataclass(frozen=True)
class HtmlDocument:
    body: str
    source_url: str | None = None

    @classmethod
    def from_file(cls, path, source_url=None):
        text = Path(path).read_bytes().decode("utf-8", errors="replace")
        return cls(body=text, source_url=source_url)


@dataclass(frozen=True)
class ContactInfo:
    emails: list = field(default_factory=list)
    phones: list = field(default_factory=list)
    social_handles: list = field(default_factory=list)

    @property
    def any_present(self):
        return bool(self.emails or self.phones or self.social_handles)

    def to_dict(self):
        return {
            "emails": list(self.emails),
            "phones": list(self.phones),
            "social_handles": list(self.social_handles),
            "any_present": self.any_present,
        }


class _MetaCollector(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.values = []

    def handle_starttag(self, tag, attrs):
        if tag != "meta":
            return
        for name, value in attrs:
            if name in ("content", "name") and value:
                self.values.append(value)

    handle_startendtag = handle_starttag


def meta_attribute_values(doc):
    """Return the ``name`` and ``content`` values of every ``<meta>`` tag."""
    collector = _MetaCollector()
    collector.feed(doc.body)
    collector.close()
    return collector.values


def detect_mobile_ui(doc, phrases=DEFAULT_MOBILE_PHRASES):
    """True when a meta ``name``/``content`` attribute contains a marker phrase.

    Comparison is case-insensitive substring containment. Text outside
    meta attributes is ignored.
    """
    needles = [p.lower() for p in phrases if p]
    if not needles:
        raise ValueError("at least one mobile-UI phrase is required")
    for value in meta_attribute_values(doc):
        low = value.lower()
        if any(n in low for n in needles):
            return True
    return False


def _dedupe(items, key):
    seen = set()
    out = []
    for item in items:
        k = key(item)
        if k not in seen:
            seen.add(k)
            out.append(item)
    return out


def _visible_text(body):
    # "|" is outside the phone alphabet, so matches never span markup
    body = _COMMENT.sub(" | ", body)
    body = _SCRIPT_STYLE.sub(" | ", body)
    return _TAG.sub(" | ", body)


def _phone_key(phone):
    digits = re.sub(r"\D", "", phone)
    return ("+" if phone.startswith("+") else "") + digits


def _normalize_phone(raw):
    # keep the number as written, minus surrounding whitespace
    return " ".join(raw.split())


def _valid_phone(candidate):
    n = sum(ch.isdigit() for ch in candidate)
    if not PHONE_MIN_DIGITS <= n <= PHONE_MAX_DIGITS:
        return False
    # reject unbalanced parentheses and things like 2024.01.15 dates
    if candidate.count("(") != candidate.count(")"):
        return False
    # long separator runs join unrelated numbers, e.g. price ranges
    if re.search(r"\D{3,}", candidate):
        return False
    if re.fullmatch(r"\d{4}[.-]\d{1,2}[.-]\d{1,2}", candidate):
        return False
    # year spans such as a copyright line's 1998-2024
    return not re.fullmatch(r"(?:19|20)\d\d\s?-\s?(?:19|20)\d\d", candidate)


def find_emails(text):
    return _dedupe(EMAIL_PATTERN.findall(text), key=str.lower)


def find_phones(body):
    found = []
    for m in TEL_HREF_PATTERN.finditer(body):
        candidate = _normalize_phone(m.group(1).strip())
        if _valid_phone(candidate):
            found.append((m.start(), candidate))
    text = _visible_text(body)
    # positions from the stripped text are not comparable with raw offsets;
    # tel: links come first, then visible numbers in document order
    offset = len(body)
    for m in PHONE_PATTERN.finditer(text):
        candidate = _normalize_phone(m.group(0).strip())
        if _valid_phone(candidate):
            found.append((offset + m.start(), candidate))
    found.sort(key=lambda t: t[0])
    return _dedupe([p for _, p in found], key=_phone_key)


def find_social_handles(text):
    handles = []
    for m in SOCIAL_PATTERN.finditer(text):
        handle = m.group(1)
        if handle.lower() in _SOCIAL_RESERVED:
            continue
        handles.append(handle)
    return _dedupe(handles, key=str.lower)


def extract_contacts(doc):
    """Harvest emails, phone numbers and social handles from one document."""
    body = doc.body
    return ContactInfo(
        emails=find_emails(body),
        phones=find_phones(body),
        social_handles=find_social_handles(body),
    )
