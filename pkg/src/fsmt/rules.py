"""Rule-based grammatical-formality labeler for de/es/it/ru.

Rule files are plain text, one declarative rule per line:

    CLASS KIND PATTERN [ARG] [key=value ...]

CLASS is FORMAL, INFORMAL, or AMBIG (ambiguously formal; resolved to
Formal). KIND is one of

    LEX <token>            pronoun lexicon entry, case-sensitive token match
    SUFFIX <suffix>        any token ending in <suffix>
    AGREE <suffix> <tok>   token ending in <suffix> adjacent to <tok>

key=value pairs are either the engine option ``initial=ambiguous`` (a
match at sentence-initial position is routed to the ambiguous bucket,
used for German "Sie") or morphological feature annotations drawn from
the closed vocabulary {Person, Number, Form, PronType}.

A segment labels Formal when a formal or ambiguous rule fires and no
informal rule does, Informal in the symmetric case, Conflict when both
sides fire, Unknown when neither does.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterable, Iterator, Optional, Sequence

from .textcore import (
    CorpusRecord,
    FormalityLabel,
    LineError,
    Segment,
    tokenize_13a,
)

FEATURE_VOCABULARY = frozenset({"Person", "Number", "Form", "PronType"})

BUILTIN_LANGUAGES = ("de", "es", "it", "ru")

_SENTENCE_FINAL = frozenset({".", "!", "?"})


class RuleError(Exception):
    pass


class ParseError(RuleError):
    def __init__(self, message: str, lineno: int, column: int = 0):
        super().__init__(f"line {lineno}, col {column}: {message}")
        self.lineno = lineno
        self.column = column


class UnknownFeature(ParseError):
    pass


class UnsupportedLanguage(RuleError):
    pass


class RuleKind(Enum):
    PRONOUN_LEXICON = "LEX"
    SUFFIX_PATTERN = "SUFFIX"
    VERB_AGREEMENT_PATTERN = "AGREE"


class RuleClass(Enum):
    FORMAL = "FORMAL"
    INFORMAL = "INFORMAL"
    AMBIG = "AMBIG"


@dataclass(frozen=True)
class MarkerRule:
    rule_class: RuleClass
    kind: RuleKind
    pattern: str
    adjacent: Optional[str] = None  # AGREE only
    initial_ambiguous: bool = False
    morpho_features: tuple[tuple[str, str], ...] = ()

    def matches(self, tokens: Sequence[str], initial_positions: frozenset[int]) -> Optional[str]:
        """Return the bucket this rule fires into ("formal"/"informal"/
        "ambig") or None."""
        hit_initial = False
        hit_other = False
        for i, tok in enumerate(tokens):
            if self.kind is RuleKind.PRONOUN_LEXICON:
                ok = tok == self.pattern
            elif self.kind is RuleKind.SUFFIX_PATTERN:
                ok = len(tok) > len(self.pattern) and tok.endswith(self.pattern)
            else:  # AGREE: suffix token next to the given word
                ok = (
                    len(tok) > len(self.pattern)
                    and tok.endswith(self.pattern)
                    and (
                        (i > 0 and tokens[i - 1] == self.adjacent)
                        or (i + 1 < len(tokens) and tokens[i + 1] == self.adjacent)
                    )
                )
            if ok:
                if i in initial_positions:
                    hit_initial = True
                else:
                    hit_other = True
        if not (hit_initial or hit_other):
            return None
        if self.rule_class is RuleClass.AMBIG:
            return "ambig"
        if self.rule_class is RuleClass.INFORMAL:
            return "informal"
        # FORMAL: sentence-initial matches may be demoted to ambiguous
        if self.initial_ambiguous and not hit_other:
            return "ambig"
        return "formal"


@dataclass(frozen=True)
class RuleSet:
    lang: str
    rules: tuple[MarkerRule, ...]

    def __post_init__(self):
        classes = {r.rule_class for r in self.rules}
        if RuleClass.FORMAL not in classes or RuleClass.INFORMAL not in classes:
            raise RuleError(
                f"ruleset for {self.lang} needs at least one FORMAL and one INFORMAL rule"
            )

    @property
    def formal_rules(self) -> tuple[MarkerRule, ...]:
        return tuple(r for r in self.rules if r.rule_class is RuleClass.FORMAL)

    @property
    def informal_rules(self) -> tuple[MarkerRule, ...]:
        return tuple(r for r in self.rules if r.rule_class is RuleClass.INFORMAL)

    @property
    def ambiguous_rules(self) -> tuple[MarkerRule, ...]:
        return tuple(r for r in self.rules if r.rule_class is RuleClass.AMBIG)


def _parse_rule_line(line: str, lineno: int) -> MarkerRule:
    parts = line.split()
    if len(parts) < 3:
        raise ParseError("expected: CLASS KIND PATTERN [ARG] [key=value ...]", lineno)
    try:
        rule_class = RuleClass(parts[0])
    except ValueError:
        raise ParseError(f"unknown class {parts[0]!r}", lineno, line.find(parts[0]))
    try:
        kind = RuleKind(parts[1])
    except ValueError:
        raise ParseError(f"unknown kind {parts[1]!r}", lineno, line.find(parts[1]))
    pattern = parts[2]
    rest = parts[3:]
    adjacent = None
    if kind is RuleKind.VERB_AGREEMENT_PATTERN:
        if not rest or "=" in rest[0]:
            raise ParseError("AGREE needs an adjacent token argument", lineno)
        adjacent = rest[0]
        rest = rest[1:]
    initial_ambiguous = False
    features = []
    for item in rest:
        if "=" not in item:
            raise ParseError(f"unexpected token {item!r}", lineno, line.find(item))
        key, value = item.split("=", 1)
        if key == "initial":
            if value != "ambiguous":
                raise ParseError(f"initial={value!r} not understood", lineno)
            initial_ambiguous = True
        elif key in FEATURE_VOCABULARY:
            features.append((key, value))
        else:
            raise UnknownFeature(f"feature {key!r} not in closed vocabulary", lineno, line.find(item))
    return MarkerRule(
        rule_class=rule_class,
        kind=kind,
        pattern=pattern,
        adjacent=adjacent,
        initial_ambiguous=initial_ambiguous,
        morpho_features=tuple(features),
    )


def parse_rules(text: str, lang: str) -> RuleSet:
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        rules.append(_parse_rule_line(stripped, lineno))
    return RuleSet(lang=lang, rules=tuple(rules))


def load_rules(path, lang: str) -> RuleSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_rules(fh.read(), lang)


def load_builtin_rules(lang: str) -> RuleSet:
    """Load the shipped ruleset for one of de/es/it/ru."""
    if lang not in BUILTIN_LANGUAGES:
        raise UnsupportedLanguage(f"no built-in ruleset for language {lang!r}")
    text = resources.files("fsmt.data").joinpath(f"{lang}.rules").read_text("utf-8")
    return parse_rules(text, lang)


def _strip_punct(token: str) -> str:
    """Trim Unicode punctuation 13a leaves attached (e.g. Spanish ¿ ¡)."""
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def _initial_positions(tokens: Sequence[str]) -> frozenset[int]:
    pos = {0}
    for i, tok in enumerate(tokens):
        if tok in _SENTENCE_FINAL:
            pos.add(i + 1)
    return frozenset(pos)


def label_formality(segment: Segment, ruleset: RuleSet) -> FormalityLabel:
    if segment.lang != ruleset.lang:
        raise UnsupportedLanguage(
            f"segment language {segment.lang!r} does not match ruleset {ruleset.lang!r}"
        )
    raw = tokenize_13a(segment.text)
    initial = _initial_positions(raw)
    tokens = [_strip_punct(t) for t in raw]
    formal_side = False
    informal_side = False
    for rule in ruleset.rules:
        bucket = rule.matches(tokens, initial)
        if bucket in ("formal", "ambig"):  # ambiguous resolves to formal
            formal_side = True
        elif bucket == "informal":
            informal_side = True
    if formal_side and informal_side:
        return FormalityLabel.CONFLICT
    if formal_side:
        return FormalityLabel.FORMAL
    if informal_side:
        return FormalityLabel.INFORMAL
    return FormalityLabel.UNKNOWN


@dataclass
class LabelSummary:
    counts: dict = field(
        default_factory=lambda: {
            "formal": 0,
            "informal": 0,
            "unknown": 0,
            "conflict": 0,
        }
    )
    errors: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def batch_label(
    stream: Iterable[CorpusRecord | LineError],
    ruleset: RuleSet,
    summary: Optional[LabelSummary] = None,
) -> Iterator[tuple[CorpusRecord, FormalityLabel] | LineError]:
    """Label a corpus stream, preserving order; read errors pass through.

    Pass a LabelSummary to collect per-class counts (filled as the stream
    is consumed).
    """
    if summary is None:
        summary = LabelSummary()
    for item in stream:
        if isinstance(item, LineError):
            summary.errors += 1
            yield item
            continue
        label = label_formality(
            Segment(item.target, item.lang, item.domain), ruleset
        )
        summary.counts[label.value] += 1
        yield item, label
