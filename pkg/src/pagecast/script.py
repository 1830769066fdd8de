"""Narration scripts: chapters, dialogue segmentation, speakers, SSML.

The segmentation state machine scans configured quote pairs (curly
U+201C/U+201D plus the toggling straight double quote by default).  A
paragraph that ends inside an open quote keeps ``quote_close=False`` and,
per the continued-quote convention, hands its speaker to the next
paragraph's opening dialogue when that one has no attribution of its own.

Joining a paragraph's segment texts with single spaces and re-inserting
quote characters where the open/close flags say so reproduces the original
paragraph text; ``reconstruct_paragraph`` is that rule.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import dom
from .errors import EmptyBook, EmptyVoicePool, UnmappedVoice
from .hashing import fnv1a_64_str
from .normalize import NormalizedBook

EMOTIONS = ("neutral", "happy", "sad", "angry", "fearful", "surprised")

DEFAULT_QUOTE_PAIRS = (("“", "”"), ('"', '"'))

SPEECH_VERBS = frozenset({
    "said", "asked", "replied", "cried", "whispered", "shouted", "answered",
    "exclaimed", "muttered", "called", "continued", "added", "observed",
    "returned", "inquired",
})

HEADING_TAGS = ("h1", "h2", "h3")

_SENTENCE_END = re.compile(r"[.!?][\"”']*$")


def _load_data_lines(name: str) -> list[str]:
    from importlib.resources import files

    text = files("pagecast").joinpath(f"data/{name}").read_text("utf-8")
    return [ln for ln in (raw.strip() for raw in text.splitlines())
            if ln and not ln.startswith("#")]


def _load_lexicon() -> dict[str, tuple[re.Pattern, ...]]:
    lexicon: dict[str, tuple[re.Pattern, ...]] = {}
    for line in _load_data_lines("emotion_lexicon.txt"):
        label, _, stems = line.partition(":")
        patterns = tuple(
            re.compile(r"\b" + re.escape(stem)) for stem in stems.split()
        )
        lexicon[label.strip()] = patterns
    return lexicon


EMOTION_LEXICON = _load_lexicon()
NAME_STOPWORDS = frozenset(w.lower() for w in _load_data_lines("name_stopwords.txt"))


@dataclass
class Segment:
    kind: str  # "narration" | "dialogue"
    text: str
    speaker: str = "narrator"
    emotion: str = "neutral"
    quote_open: bool = False
    quote_close: bool = False
    quote_chars: Optional[tuple[str, str]] = None


@dataclass
class Paragraph:
    segments: list[Segment]


@dataclass
class Chapter:
    index: int
    heading: str
    paragraphs: list[Paragraph]


@dataclass
class VoiceSpec:
    voice_id: str
    rate: float = 1.0
    pitch: float = 0.0


@dataclass
class NarrationScript:
    book_id: str
    title: str
    author: str
    chapters: list[Chapter]
    cast: dict[str, VoiceSpec] = field(default_factory=dict)


# --- chapter extraction -----------------------------------------------------

def _is_paragraph_block(node: dom.DomNode) -> bool:
    if node.tag in ("p", "blockquote", "li"):
        return True
    if node.tag == "div":
        return not any(
            child.kind == "element" and child.tag in dom.BLOCK_TAGS
            for child in node.children
        )
    return False


def extract_chapters(
    book: NormalizedBook, metadata: Optional[dict[str, str]] = None
) -> tuple[str, str, list[tuple[str, list[str]]]]:
    """Split the normalized tree into (title, author, chapter blocks).

    h1–h3 headings open chapters; p/blockquote/li and leaf divs contribute
    paragraphs; anything before the first heading becomes an unnamed
    chapter.  Chapters that end up without paragraphs are dropped.
    """
    blocks: list[tuple[str, str]] = []

    def walk(node: dom.DomNode) -> None:
        for child in node.children:
            if child.kind != "element":
                continue
            if child.tag in HEADING_TAGS:
                blocks.append(("heading", dom.text_content(child)))
                continue
            if _is_paragraph_block(child):
                blocks.append(("para", dom.text_content(child)))
                continue
            walk(child)

    walk(book.tree.root)

    chapters: list[tuple[str, list[str]]] = []
    current: Optional[tuple[str, list[str]]] = None
    for kind, text in blocks:
        if kind == "heading":
            current = (text, [])
            chapters.append(current)
        else:
            if not text:
                continue
            if current is None:
                current = ("", [])
                chapters.append(current)
            current[1].append(text)
    chapters = [c for c in chapters if c[1]]
    if not chapters:
        raise EmptyBook(book.book_id)

    meta = metadata or {}
    title = meta.get("title", "")
    author = meta.get("author", "")
    return title, author, chapters


# --- dialogue segmentation ----------------------------------------------------

def segment_dialogue(
    paragraph: str,
    quote_pairs: Sequence[tuple[str, str]] = DEFAULT_QUOTE_PAIRS,
) -> list[Segment]:
    """Split one paragraph into narration and dialogue segments."""
    open_map = {pair[0]: pair for pair in quote_pairs}
    segments: list[Segment] = []
    buf: list[str] = []
    active: Optional[tuple[str, str]] = None

    def flush(kind: str, pair: Optional[tuple[str, str]], closed: bool) -> None:
        text = "".join(buf).strip()
        buf.clear()
        if not text:
            return
        if kind == "dialogue":
            segments.append(Segment(
                kind="dialogue", text=text, speaker="unknown",
                quote_open=True, quote_close=closed, quote_chars=pair,
            ))
        else:
            segments.append(Segment(kind="narration", text=text))

    for ch in paragraph:
        if active is None:
            pair = open_map.get(ch)
            if pair is not None:
                flush("narration", None, False)
                active = pair
            else:
                buf.append(ch)
        else:
            if ch == active[1]:
                flush("dialogue", active, True)
                active = None
            else:
                buf.append(ch)
    if active is not None:
        flush("dialogue", active, False)
    else:
        flush("narration", None, False)
    return segments


def reconstruct_paragraph(segments: Iterable[Segment]) -> str:
    """Inverse of segmentation under the documented joining rule."""
    parts: list[str] = []
    for seg in segments:
        if seg.kind == "dialogue":
            pair = seg.quote_chars or DEFAULT_QUOTE_PAIRS[0]
            opener = pair[0] if seg.quote_open else ""
            closer = pair[1] if seg.quote_close else ""
            parts.append(f"{opener}{seg.text}{closer}")
        else:
            parts.append(seg.text)
    return " ".join(parts)


# --- speaker attribution -----------------------------------------------------

_TOKEN_TRIM = ",.;:!?\"'“”‘’()[]"


def _clean_token(raw: str) -> str:
    return raw.strip(_TOKEN_TRIM)


def _is_capitalized(token: str) -> bool:
    return bool(token) and token[0].isalpha() and token[0].isupper()


def find_pattern_speaker(narration: str) -> Optional[str]:
    """First "<Name> <verb>" or "<verb> <Name>" hit in a narration span."""
    raw_tokens = narration.split()
    tokens = [_clean_token(t) for t in raw_tokens]
    sentence_initial = [True] + [
        bool(_SENTENCE_END.search(raw_tokens[i - 1])) for i in range(1, len(raw_tokens))
    ]

    def name_token_ok(idx: int) -> bool:
        tok = tokens[idx]
        if not _is_capitalized(tok):
            return False
        if sentence_initial[idx] and tok.lower() in NAME_STOPWORDS:
            return False
        return True

    for i, tok in enumerate(tokens):
        if tok.lower() not in SPEECH_VERBS:
            continue
        # verb followed by a name
        j = i + 1
        name: list[str] = []
        while j < len(tokens) and len(name) < 3 and name_token_ok(j):
            name.append(tokens[j])
            j += 1
        if name:
            return " ".join(name)
        # name immediately before the verb
        j = i - 1
        rev: list[str] = []
        while j >= 0 and len(rev) < 3 and name_token_ok(j):
            rev.append(tokens[j])
            j -= 1
        if rev:
            return " ".join(reversed(rev))
    return None


def attribute_speakers(paragraphs: list[Paragraph]) -> None:
    """Assign speakers to dialogue segments of one chapter, in place.

    Order of evidence: pattern in the adjacent narration (following first,
    then preceding, same paragraph), continuation from an unterminated
    quote in the previous paragraph, then two-speaker alternation.
    """
    history: list[str] = []
    carry: Optional[str] = None  # speaker of an unterminated trailing quote
    for para in paragraphs:
        segs = para.segments
        for idx, seg in enumerate(segs):
            if seg.kind != "dialogue":
                continue
            speaker: Optional[str] = None
            if idx + 1 < len(segs) and segs[idx + 1].kind == "narration":
                speaker = find_pattern_speaker(segs[idx + 1].text)
            if speaker is None and idx > 0 and segs[idx - 1].kind == "narration":
                speaker = find_pattern_speaker(segs[idx - 1].text)
            if speaker is None and idx == 0 and carry is not None:
                speaker = carry
            if speaker is None:
                if len(history) >= 2 and history[-1] != history[-2]:
                    speaker = history[-2]
                else:
                    speaker = "unknown"
            seg.speaker = speaker
            if speaker != "unknown":
                history.append(speaker)
        last = segs[-1] if segs else None
        if (
            last is not None
            and last.kind == "dialogue"
            and not last.quote_close
            and last.speaker != "unknown"
        ):
            carry = last.speaker
        else:
            carry = None


# --- emotion tagging ----------------------------------------------------------

def tag_emotion(text: str) -> str:
    """Lexicon-scored emotion label; ties and all-zero scores are neutral."""
    lowered = text.lower()
    scores: dict[str, int] = {}
    for label, patterns in EMOTION_LEXICON.items():
        scores[label] = sum(1 for p in patterns if p.search(lowered))
    trimmed = text.rstrip()
    if trimmed.endswith("!"):
        for label in ("angry", "surprised", "happy"):
            if scores.get(label, 0) >= 1:
                scores[label] += 1
    if trimmed.endswith("?") and scores.get("surprised", 0) >= 1:
        scores["surprised"] += 1
    best = max(scores.values(), default=0)
    if best == 0:
        return "neutral"
    winners = [label for label in EMOTIONS if scores.get(label, 0) == best]
    return winners[0] if len(winners) == 1 else "neutral"


def tag_emotions(paragraphs: list[Paragraph]) -> None:
    for para in paragraphs:
        for seg in para.segments:
            if seg.kind == "dialogue":
                seg.emotion = tag_emotion(seg.text)


# --- voice casting --------------------------------------------------------------

def assign_voices(
    script: NarrationScript,
    voice_pool: Sequence[str],
    narrator_voice: str,
) -> dict[str, VoiceSpec]:
    """Stable speaker→voice map: FNV-1a of the name modulo the pool size."""
    if not voice_pool:
        raise EmptyVoicePool("voice pool must not be empty")
    cast: dict[str, VoiceSpec] = {"narrator": VoiceSpec(narrator_voice)}
    for chapter in script.chapters:
        for para in chapter.paragraphs:
            for seg in para.segments:
                if seg.kind != "dialogue" or seg.speaker in cast:
                    continue
                idx = fnv1a_64_str(seg.speaker) % len(voice_pool)
                cast[seg.speaker] = VoiceSpec(voice_pool[idx])
    script.cast = cast
    return cast


# --- SSML export -----------------------------------------------------------------

DEFAULT_EMOTION_STYLES = {
    "happy": "cheerful",
    "sad": "sad",
    "angry": "angry",
    "fearful": "terrified",
    "surprised": "excited",
}

PARAGRAPH_BREAK_MS = 500
SEGMENT_BREAK_MS = 200


def _xml_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _xml_attr(value: str) -> str:
    return value.replace("&", "&amp;").replace("<", "&lt;").replace('"', "&quot;")


def _format_rate(multiplier: float) -> str:
    return f"{(multiplier - 1.0) * 100.0:+g}%"


def _format_pitch(semitones: float) -> str:
    return f"{semitones:+g}st"


def export_ssml(
    script: NarrationScript,
    rate: float = 1.0,
    pitch: float = 0.0,
    emotion_style_map: Optional[dict[str, str]] = None,
    style_element: str = "express-as",
) -> list[str]:
    """One compact SSML document per chapter, byte-deterministic."""
    styles = DEFAULT_EMOTION_STYLES if emotion_style_map is None else emotion_style_map
    docs: list[str] = []
    for chapter in script.chapters:
        parts: list[str] = ['<?xml version="1.0" encoding="UTF-8"?>', '<speak version="1.0">']
        emitted_any = False

        def emit_segment(seg: Segment) -> None:
            spec = script.cast.get(seg.speaker)
            if spec is None:
                raise UnmappedVoice(seg.speaker)
            body = _xml_escape(seg.text)
            style = styles.get(seg.emotion) if seg.kind == "dialogue" else None
            if style:
                body = (
                    f'<{style_element} style="{_xml_attr(style)}">{body}</{style_element}>'
                )
            parts.append(
                f'<voice name="{_xml_attr(spec.voice_id)}">'
                f'<prosody rate="{_format_rate(spec.rate * rate)}" '
                f'pitch="{_format_pitch(spec.pitch + pitch)}">{body}</prosody></voice>'
            )

        if chapter.heading:
            emit_segment(Segment(kind="narration", text=chapter.heading))
            emitted_any = True
        for para in chapter.paragraphs:
            if emitted_any:
                parts.append(f'<break time="{PARAGRAPH_BREAK_MS}ms"/>')
            for s_idx, seg in enumerate(para.segments):
                if s_idx > 0:
                    parts.append(f'<break time="{SEGMENT_BREAK_MS}ms"/>')
                emit_segment(seg)
            emitted_any = True
        parts.append("</speak>")
        docs.append("".join(parts))
    return docs


# --- end-to-end builder ------------------------------------------------------------

def build_script(
    book: NormalizedBook,
    metadata: Optional[dict[str, str]] = None,
    voice_pool: Sequence[str] = ("voice-1",),
    narrator_voice: str = "narrator-1",
    quote_pairs: Sequence[tuple[str, str]] = DEFAULT_QUOTE_PAIRS,
) -> NarrationScript:
    """Normalized tree → fully annotated NarrationScript."""
    title, author, raw_chapters = extract_chapters(book, metadata)
    chapters: list[Chapter] = []
    for i, (heading, paragraph_texts) in enumerate(raw_chapters, start=1):
        paragraphs = [
            Paragraph(segments=segment_dialogue(text, quote_pairs))
            for text in paragraph_texts
        ]
        attribute_speakers(paragraphs)
        tag_emotions(paragraphs)
        chapters.append(Chapter(index=i, heading=heading, paragraphs=paragraphs))
    script = NarrationScript(
        book_id=book.book_id, title=title, author=author, chapters=chapters
    )
    assign_voices(script, voice_pool, narrator_voice)
    return script


# --- script file ----------------------------------------------------------------
# "script v1": tab-separated, one record per line.  Segment lines carry
# kind, speaker, emotion, open/close flags, the quote pair, then the text.

def save_script(script: NarrationScript, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("script v1\n")
        fh.write(f"book\t{script.book_id}\n")
        fh.write(f"title\t{script.title}\n")
        fh.write(f"author\t{script.author}\n")
        for speaker in sorted(script.cast):
            spec = script.cast[speaker]
            fh.write(
                f"cast\t{speaker}\t{spec.voice_id}\t{spec.rate!r}\t{spec.pitch!r}\n"
            )
        for chapter in script.chapters:
            fh.write(f"chapter\t{chapter.index}\t{chapter.heading}\n")
            for para in chapter.paragraphs:
                fh.write("para\n")
                for seg in para.segments:
                    qo, qc = seg.quote_chars or ("", "")
                    fh.write(
                        "seg\t"
                        f"{seg.kind}\t{seg.speaker}\t{seg.emotion}\t"
                        f"{int(seg.quote_open)}\t{int(seg.quote_close)}\t"
                        f"{qo}\t{qc}\t{seg.text}\n"
                    )


def load_script(path: Path | str) -> NarrationScript:
    script = NarrationScript(book_id="", title="", author="", chapters=[])
    chapter: Optional[Chapter] = None
    para: Optional[Paragraph] = None
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "script v1":
        raise ValueError(f"not a script v1 file: {path}")
    for line in lines[1:]:
        fields = line.split("\t")
        tag = fields[0]
        if tag == "book":
            script.book_id = fields[1]
        elif tag == "title":
            script.title = fields[1] if len(fields) > 1 else ""
        elif tag == "author":
            script.author = fields[1] if len(fields) > 1 else ""
        elif tag == "cast":
            script.cast[fields[1]] = VoiceSpec(
                voice_id=fields[2], rate=float(fields[3]), pitch=float(fields[4])
            )
        elif tag == "chapter":
            chapter = Chapter(index=int(fields[1]), heading=fields[2], paragraphs=[])
            script.chapters.append(chapter)
            para = None
        elif tag == "para":
            assert chapter is not None
            para = Paragraph(segments=[])
            chapter.paragraphs.append(para)
        elif tag == "seg":
            assert para is not None
            kind, speaker, emotion, q_open, q_close, qo, qc = fields[1:8]
            text = "\t".join(fields[8:])
            para.segments.append(Segment(
                kind=kind, text=text, speaker=speaker, emotion=emotion,
                quote_open=q_open == "1", quote_close=q_close == "1",
                quote_chars=(qo, qc) if (qo or qc) else None,
            ))
    return script
