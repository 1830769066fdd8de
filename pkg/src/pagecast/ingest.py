"""Corpus discovery and decoding.

Book ids are filename stems ("pg100.html" -> "pg100"); duplicate stems
anywhere under the corpus root are a hard error so downstream manifests
stay unambiguous.
"""

from __future__ import annotations

import html as html_entities
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateBookId, InvalidBookId, UndecodableBytes

_BOOK_ID = re.compile(r"^[A-Za-z0-9_-]+$")
_META_CHARSET = re.compile(rb"""<meta\s+charset\s*=\s*["']?([A-Za-z0-9_+.:-]+)""", re.I)
_META_CONTENT = re.compile(
    rb"""<meta[^>]+content\s*=\s*["'][^"']*charset=([A-Za-z0-9_+.:-]+)""", re.I
)
_TITLE = re.compile(r"<title[^>]*>(.*?)</title>", re.I | re.S)
_HTML_LANG = re.compile(r"""<html\b[^>]*\blang\s*=\s*["']?([A-Za-z-]+)""", re.I)
_WS = re.compile(r"\s+")

_ENCODING_ALIASES = {
    "utf-8": "utf-8",
    "utf8": "utf-8",
    "latin-1": "latin-1",
    "latin1": "latin-1",
    "iso-8859-1": "latin-1",
    "iso8859-1": "latin-1",
    "windows-1252": "windows-1252",
    "cp1252": "windows-1252",
}


@dataclass(frozen=True)
class EbookRef:
    book_id: str
    path: Path
    size_bytes: int


@dataclass
class EbookDocument:
    book_id: str
    raw_html: str
    source_encoding: str
    metadata: dict[str, str] = field(
        default_factory=lambda: {"title": "", "author": "", "language": ""}
    )


def scan_corpus(root: Path | str) -> list[EbookRef]:
    """List every *.html / *.htm file under root, sorted by book id."""
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(str(root))
    refs: dict[str, EbookRef] = {}
    paths = sorted(p for pattern in ("*.html", "*.htm") for p in root.rglob(pattern))
    for path in paths:
        if not path.is_file():
            continue
        book_id = path.stem
        if not _BOOK_ID.match(book_id):
            raise InvalidBookId(f"{path}: stem must match [A-Za-z0-9_-]+")
        if book_id in refs:
            raise DuplicateBookId(f"{book_id}: {refs[book_id].path} and {path}")
        refs[book_id] = EbookRef(book_id=book_id, path=path, size_bytes=path.stat().st_size)
    return [refs[k] for k in sorted(refs)]


def detect_encoding(data: bytes) -> str:
    """Best-effort charset label: declared meta tag, else utf-8, else cp1252."""
    head = data[:4096]
    for pattern in (_META_CHARSET, _META_CONTENT):
        m = pattern.search(head)
        if m:
            label = _ENCODING_ALIASES.get(m.group(1).decode("ascii").lower())
            if label:
                return label
    try:
        data.decode("utf-8")
        return "utf-8"
    except UnicodeDecodeError:
        return "windows-1252"


def _parse_title(raw_html: str) -> tuple[str, str]:
    m = _TITLE.search(raw_html)
    if not m:
        return "", ""
    text = _WS.sub(" ", html_entities.unescape(m.group(1))).strip()
    if text.count(" by ") == 1:
        title, author = text.split(" by ")
        return title.strip(), author.strip()
    return text, ""


def load_ebook(ref: EbookRef) -> EbookDocument:
    """Read and decode one e-book, extracting best-effort metadata."""
    data = ref.path.read_bytes()
    encoding = detect_encoding(data)
    try:
        raw_html = data.decode(encoding)
    except UnicodeDecodeError:
        if encoding == "windows-1252":
            raise UndecodableBytes(ref.book_id)
        encoding = "windows-1252"
        try:
            raw_html = data.decode(encoding)
        except UnicodeDecodeError:
            raise UndecodableBytes(ref.book_id)
    title, author = _parse_title(raw_html)
    lang_match = _HTML_LANG.search(raw_html)
    language = lang_match.group(1) if lang_match else ""
    return EbookDocument(
        book_id=ref.book_id,
        raw_html=raw_html,
        source_encoding=encoding,
        metadata={"title": title, "author": author, "language": language},
    )
