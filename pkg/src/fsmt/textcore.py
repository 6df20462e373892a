"""Shared domain types, tokenization, and corpus I/O.

Tokenization follows the WMT "13a" scheme: ASCII punctuation is padded
with spaces (periods/commas kept attached to digits), then the line is
split on whitespace. Non-ASCII punctuation is left attached to its word,
matching the reference behaviour of the mteval-v13a script.
"""
from __future__ import annotations

import json
import unicodedata
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional


class FormalityLabel(Enum):
    FORMAL = "formal"
    INFORMAL = "informal"
    NEUTRAL = "neutral"
    UNKNOWN = "unknown"
    CONFLICT = "conflict"


#: Labels that may be persisted into training sets.
TRAINABLE_LABELS = frozenset(
    {FormalityLabel.FORMAL, FormalityLabel.INFORMAL, FormalityLabel.NEUTRAL}
)


class CorpusError(Exception):
    """Base class for corpus-level errors."""


class MissingField(CorpusError):
    pass


class BadEncoding(CorpusError):
    pass


class UnknownLanguage(CorpusError):
    pass


@dataclass(frozen=True)
class Segment:
    """One side of a translation unit. Text is NFC-normalized on construction."""

    text: str
    lang: str
    domain_tag: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "text", unicodedata.normalize("NFC", self.text))

    def tokens(self) -> list[str]:
        return tokenize_13a(self.text)


@dataclass(frozen=True)
class LabeledTriplet:
    """(source, target, formality) finetuning unit."""

    source: Segment
    target: Segment
    label: FormalityLabel
    provenance: str = "gold"  # rule | classifier | gold

    def __post_init__(self):
        if self.label not in TRAINABLE_LABELS:
            raise ValueError(f"label {self.label} may not be persisted into a triplet")


@dataclass(frozen=True)
class PairedContrastiveExample:
    """One source with a formal and an informal reference."""

    source: Segment
    formal_ref: "AnnotatedReference"
    informal_ref: "AnnotatedReference"
    domain_tag: str = ""

    def __post_init__(self):
        if not self.formal_ref.text or not self.informal_ref.text:
            raise ValueError("references must be non-empty")


@dataclass(frozen=True)
class AnnotatedReference:
    """Reference text with byte-offset spans marking formality phrases.

    Wire format is inline ``[F]...[/F]`` markup; see :func:`parse_annotated`.
    """

    text: str
    contrastive_spans: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        prev_end = 0
        for start, end in self.contrastive_spans:
            if not (0 <= start < end <= len(self.text)):
                raise ValueError(f"span ({start}, {end}) out of bounds")
            if start < prev_end:
                raise ValueError("spans must be non-overlapping and ordered")
            prev_end = end

    def phrases(self) -> list[str]:
        return [self.text[s:e] for s, e in self.contrastive_spans]


_MARKUP_RE = re.compile(r"\[F\](.*?)\[/F\]", re.DOTALL)


def parse_annotated(marked: str) -> AnnotatedReference:
    """Parse ``[F]...[/F]`` inline markup into an AnnotatedReference."""
    spans = []
    out = []
    pos = 0
    length = 0
    for m in _MARKUP_RE.finditer(marked):
        out.append(marked[pos : m.start()])
        length += m.start() - pos
        phrase = m.group(1)
        spans.append((length, length + len(phrase)))
        out.append(phrase)
        length += len(phrase)
        pos = m.end()
    out.append(marked[pos:])
    return AnnotatedReference(text="".join(out), contrastive_spans=tuple(spans))


def render_annotated(ref: AnnotatedReference) -> str:
    """Inverse of :func:`parse_annotated`."""
    out = []
    pos = 0
    for s, e in ref.contrastive_spans:
        out.append(ref.text[pos:s])
        out.append("[F]" + ref.text[s:e] + "[/F]")
        pos = e
    out.append(ref.text[pos:])
    return "".join(out)


# 13a tokenization. Rules, in order:
#   1. normalize unicode spaces (incl. NBSP) to plain space
#   2. pad ASCII punctuation (except . , -) with spaces
#   3. pad . and , unless attached to a digit on that side
#   4. pad - when preceded by a digit
#   5. split on whitespace
_SPACE_NORM = re.compile(r"\s+")
_PUNCT = re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])")
_PERIOD_BEFORE = re.compile(r"([^0-9])([\.,])")
_PERIOD_AFTER = re.compile(r"([\.,])([^0-9])")
_DIGIT_DASH = re.compile(r"([0-9])(\-)")


def tokenize_13a(text: str) -> list[str]:
    if not text:
        return []
    line = _SPACE_NORM.sub(" ", text)
    line = _PUNCT.sub(r" \1 ", line)
    line = _PERIOD_BEFORE.sub(r"\1 \2 ", line)
    line = _PERIOD_AFTER.sub(r" \1 \2", line)
    line = _DIGIT_DASH.sub(r"\1 \2 ", line)
    return line.split()


def whitespace_tokenize(text: str) -> list[str]:
    """Fallback tokenizer: split on Unicode whitespace, collapse runs."""
    return text.split()


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


@dataclass(frozen=True)
class CorpusRecord:
    """One bitext record: en source, target, optional formality/domain.

    Unknown JSONL fields are preserved in ``extra`` for round-tripping.
    """

    source: str
    target: str
    lang: str
    formality: Optional[str] = None
    domain: Optional[str] = None
    extra: tuple[tuple[str, object], ...] = ()

    def to_json(self) -> str:
        d = {"source": self.source, "target": self.target, "lang": self.lang}
        if self.formality is not None:
            d["formality"] = self.formality
        if self.domain is not None:
            d["domain"] = self.domain
        d.update(dict(self.extra))
        return json.dumps(d, ensure_ascii=False)


@dataclass(frozen=True)
class LineError:
    """A recoverable per-line read error with its 1-based line number."""

    lineno: int
    reason: str
    line: str


_KNOWN_FIELDS = ("source", "target", "lang", "formality", "domain")


def read_jsonl_corpus(
    path, languages: Optional[frozenset[str]] = None
) -> Iterator[CorpusRecord | LineError]:
    """Lazily yield CorpusRecords; malformed lines yield LineErrors in place.

    Yielded records plus errors always account for every input line.
    """
    with open(path, "r", encoding="utf-8", errors="strict") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                yield LineError(lineno, f"bad json: {e.msg}", line)
                continue
            if not isinstance(raw, dict):
                yield LineError(lineno, "record is not an object", line)
                continue
            missing = [k for k in ("source", "target", "lang") if k not in raw]
            if missing:
                yield LineError(lineno, f"missing field(s): {', '.join(missing)}", line)
                continue
            if languages is not None and raw["lang"] not in languages:
                yield LineError(lineno, f"unknown language: {raw['lang']}", line)
                continue
            extra = tuple(
                sorted((k, v) for k, v in raw.items() if k not in _KNOWN_FIELDS)
            )
            yield CorpusRecord(
                source=unicodedata.normalize("NFC", str(raw["source"])),
                target=unicodedata.normalize("NFC", str(raw["target"])),
                lang=str(raw["lang"]),
                formality=raw.get("formality"),
                domain=raw.get("domain"),
                extra=extra,
            )


def read_tsv_bitext(path, lang: str) -> Iterator[CorpusRecord | LineError]:
    """Read raw bitext as source<TAB>target lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                yield LineError(lineno, f"expected 2 tab-separated fields, got {len(parts)}", line)
                continue
            yield CorpusRecord(
                source=unicodedata.normalize("NFC", parts[0]),
                target=unicodedata.normalize("NFC", parts[1]),
                lang=lang,
            )


def write_jsonl(records: Iterable[CorpusRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
            n += 1
    return n
