"""Scorers: phrase-contrastive formality accuracy, TER-noshift, corpus BLEU.

Phrase matching is case-sensitive and token-boundary anchored on
13a-tokenized text, so e.g. the phrase "du" never matches inside
"dunkel". One concession to sentence position: for multi-token phrases
the initial character of the first word matches case-insensitively, so
"Mögen Sie" is found in "..., mögen Sie Legos?". Hypothesis verdicts:

  FORMAL    some formal phrase matches, no informal phrase does
  INFORMAL  some informal phrase matches, no formal phrase does
  OTHER     phrases from both sides match
  NEUTRAL   neither side matches

Accuracy is computed over realized matches only (NEUTRAL and OTHER
hypotheses are excluded from the denominator).

TER here is word-level edit distance (insert/delete/substitute, unit
costs) divided by reference length, without block shifts; it is reported
as "TER-noshift" everywhere.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

from .textcore import AnnotatedReference, tokenize_13a


class MetricError(Exception):
    pass


class LengthMismatch(MetricError):
    pass


class EmptyReference(MetricError):
    pass


class DegenerateDenominator(MetricError):
    """Raised when no hypothesis realized a match on either side."""


class HypothesisVerdict(Enum):
    FORMAL = "FORMAL"
    INFORMAL = "INFORMAL"
    NEUTRAL = "NEUTRAL"
    OTHER = "OTHER"


@dataclass(frozen=True)
class AccuracyReport:
    match_f: int
    match_i: int
    n_neutral: int
    n_other: int
    acc_formal: float
    acc_informal: float
    corpus_size: int

    def to_dict(self) -> dict:
        return {
            "match_f": self.match_f,
            "match_i": self.match_i,
            "n_neutral": self.n_neutral,
            "n_other": self.n_other,
            "acc_formal": self.acc_formal,
            "acc_informal": self.acc_informal,
            "corpus_size": self.corpus_size,
        }


def phi(ref: AnnotatedReference) -> list[str]:
    """Extract the contrastive phrase strings of a reference, in text order."""
    return ref.phrases()


def _tok_eq(hyp_tok: str, phrase_tok: str, fold_initial: bool) -> bool:
    if hyp_tok == phrase_tok:
        return True
    # Sentence position can recapitalize the first word of a phrase
    # ("Mögen Sie" vs "... mögen Sie"); fold only that initial character.
    if fold_initial and len(hyp_tok) == len(phrase_tok) and hyp_tok[1:] == phrase_tok[1:]:
        return hyp_tok[0].casefold() == phrase_tok[0].casefold()
    return False


def _contains_phrase(hyp_tokens: Sequence[str], phrase: str) -> bool:
    ptoks = tokenize_13a(phrase)
    if not ptoks:
        return False
    n = len(ptoks)
    return any(
        all(
            _tok_eq(hyp_tokens[i + j], ptoks[j], fold_initial=(j == 0 and n > 1))
            for j in range(n)
        )
        for i in range(len(hyp_tokens) - n + 1)
    )


def classify_hypothesis(
    hypothesis: str, formal_phrases: Iterable[str], informal_phrases: Iterable[str]
) -> HypothesisVerdict:
    htoks = tokenize_13a(hypothesis)
    f_hit = any(_contains_phrase(htoks, p) for p in formal_phrases)
    i_hit = any(_contains_phrase(htoks, p) for p in informal_phrases)
    if f_hit and i_hit:
        return HypothesisVerdict.OTHER
    if f_hit:
        return HypothesisVerdict.FORMAL
    if i_hit:
        return HypothesisVerdict.INFORMAL
    return HypothesisVerdict.NEUTRAL


def formality_accuracy(
    hypotheses: Sequence[str],
    formal_refs: Sequence[AnnotatedReference],
    informal_refs: Sequence[AnnotatedReference],
    target_level: str = "formal",
) -> AccuracyReport:
    """Score hypotheses against phrase-annotated contrastive references.

    The report carries both directions; target_level only validates the
    caller's intent. Raises DegenerateDenominator when no hypothesis
    matched either side; class counts are attached to the exception.
    """
    if target_level not in ("formal", "informal"):
        raise ValueError(f"target_level must be formal or informal, got {target_level}")
    if not hypotheses:
        raise LengthMismatch("empty hypothesis list")
    if not (len(hypotheses) == len(formal_refs) == len(informal_refs)):
        raise LengthMismatch(
            f"{len(hypotheses)} hypotheses vs {len(formal_refs)} formal / "
            f"{len(informal_refs)} informal references"
        )
    counts = Counter(
        classify_hypothesis(h, phi(f), phi(i))
        for h, f, i in zip(hypotheses, formal_refs, informal_refs)
    )
    match_f = counts[HypothesisVerdict.FORMAL]
    match_i = counts[HypothesisVerdict.INFORMAL]
    denom = match_f + match_i
    if denom == 0:
        exc = DegenerateDenominator("no realized matches on either side")
        exc.counts = dict(counts)  # type: ignore[attr-defined]
        raise exc
    return AccuracyReport(
        match_f=match_f,
        match_i=match_i,
        n_neutral=counts[HypothesisVerdict.NEUTRAL],
        n_other=counts[HypothesisVerdict.OTHER],
        acc_formal=match_f / denom,
        acc_informal=match_i / denom,
        corpus_size=len(hypotheses),
    )


def ter(hyp_tokens: Sequence[str], ref_tokens: Sequence[str]) -> float:
    """Word edit distance / reference length, no block shifts."""
    if not ref_tokens:
        raise EmptyReference("reference must be non-empty")
    m, n = len(hyp_tokens), len(ref_tokens)
    prev = list(range(n + 1))
    for i in range(1, m + 1):
        cur = [i] + [0] * n
        hi = hyp_tokens[i - 1]
        for j in range(1, n + 1):
            sub = prev[j - 1] + (hi != ref_tokens[j - 1])
            cur[j] = min(sub, prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[n] / n


def contrastiveness(
    formal_outputs: Sequence[str],
    informal_outputs: Sequence[str],
    tokenizer: Callable[[str], list[str]] = tokenize_13a,
) -> float:
    """Mean pairwise TER-noshift between formal and informal decodes."""
    if len(formal_outputs) != len(informal_outputs):
        raise LengthMismatch(
            f"{len(formal_outputs)} formal vs {len(informal_outputs)} informal outputs"
        )
    if not formal_outputs:
        return 0.0
    return sum(
        ter(tokenizer(i), tokenizer(f))
        for f, i in zip(formal_outputs, informal_outputs)
    ) / len(formal_outputs)


#: Precision floor substituted for zero n-gram counts (documented smoothing).
BLEU_EPSILON = 1e-9

MAX_NGRAM_ORDER = 4


def _ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
    )


def corpus_bleu(
    hypotheses: Sequence[str],
    references: Sequence[str],
    tokenizer: Callable[[str], list[str]] = tokenize_13a,
) -> float:
    """Corpus BLEU on 0-100 scale, single reference, up-to-4-gram.

    Modified n-gram precision, geometric mean, brevity penalty; a zero
    clipped count at any order is replaced by BLEU_EPSILON.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    matched = [0] * MAX_NGRAM_ORDER
    total = [0] * MAX_NGRAM_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        htoks = tokenizer(hyp)
        rtoks = tokenizer(ref)
        hyp_len += len(htoks)
        ref_len += len(rtoks)
        for k in range(MAX_NGRAM_ORDER):
            hcounts = _ngram_counts(htoks, k + 1)
            rcounts = _ngram_counts(rtoks, k + 1)
            total[k] += sum(hcounts.values())
            matched[k] += sum(min(c, rcounts[g]) for g, c in hcounts.items())
    if hyp_len == 0:
        return 0.0
    log_prec = 0.0
    for k in range(MAX_NGRAM_ORDER):
        if total[k] == 0:
            continue  # corpus too short for this order; nothing to score
        p = matched[k] / total[k]
        if p == 0.0:
            p = BLEU_EPSILON
        log_prec += math.log(p)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_prec / MAX_NGRAM_ORDER)


def score_report(
    hypotheses: Sequence[str],
    formal_refs: Sequence[AnnotatedReference],
    informal_refs: Sequence[AnnotatedReference],
    target_level: str,
) -> dict:
    """Combined JSON-ready report: BLEU vs target-level refs plus accuracy."""
    if target_level not in ("formal", "informal"):
        raise ValueError(f"target_level must be formal or informal, got {target_level}")
    refs = formal_refs if target_level == "formal" else informal_refs
    bleu = corpus_bleu(hypotheses, [r.text for r in refs])
    try:
        acc = formality_accuracy(hypotheses, formal_refs, informal_refs)
        acc_dict = acc.to_dict()
        degenerate = False
    except DegenerateDenominator as e:
        acc_dict = {"class_counts": {k.value: v for k, v in e.counts.items()}}
        degenerate = True
    return {
        "target_level": target_level,
        "bleu": bleu,
        "degenerate_denominator": degenerate,
        **acc_dict,
    }
