"""Synthetic-supervision curation: label bitext, cap, split.

The curate pass is streaming: each record is labeled, deduplicated on
exact source text, and accepted first-come until the per-(language,
level) cap (7500 by default) is reached. Unknown/Conflict labels and
dead-zone classifier scores are dropped with a recorded reason, so
every input record is accounted for in the report. A seeded reservoir
sampler is available instead of first-N acceptance.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

from .textcore import (
    CorpusRecord,
    FormalityLabel,
    LabeledTriplet,
    LineError,
    PairedContrastiveExample,
    Segment,
)


class CurationError(Exception):
    pass


class InsufficientExamples(CurationError):
    def __init__(self, domain: str, have: int, need: int):
        super().__init__(f"domain {domain!r} has {have} examples, need {need}")
        self.domain = domain


#: Labeler: record -> FormalityLabel (may return Unknown/Conflict/Neutral).
Labeler = Callable[[CorpusRecord], FormalityLabel]


@dataclass(frozen=True)
class CurationConfig:
    cap_per_level: int = 7500
    languages: tuple[str, ...] = ("de", "es", "it", "ru")
    seed: int = 0
    dev_per_domain: int = 50
    reservoir: bool = False
    dedupe: bool = True

    def __post_init__(self):
        if self.cap_per_level <= 0:
            raise ValueError("cap_per_level must be positive")
        if self.dev_per_domain < 0:
            raise ValueError("dev_per_domain must be >= 0")


DROP_REASONS = ("dead_zone", "conflict", "cap", "duplicate", "read_error", "unsupported_language")


@dataclass
class CurationCell:
    seen: int = 0
    accepted: int = 0
    dropped: dict = field(default_factory=lambda: {r: 0 for r in DROP_REASONS})

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped.values())


@dataclass
class CurationReport:
    cells: dict = field(default_factory=dict)  # (lang, level) -> CurationCell

    def cell(self, lang: str, level: str) -> CurationCell:
        return self.cells.setdefault((lang, level), CurationCell())

    def to_dict(self) -> dict:
        return {
            f"{lang}/{level}": {
                "seen": c.seen,
                "accepted": c.accepted,
                "dropped": dict(c.dropped),
            }
            for (lang, level), c in sorted(self.cells.items())
        }


_LEVEL_FOR_LABEL = {
    FormalityLabel.FORMAL: "formal",
    FormalityLabel.INFORMAL: "informal",
    FormalityLabel.NEUTRAL: "neutral",
}


def curate(
    stream: Iterable[CorpusRecord | LineError],
    labeler: Labeler,
    config: CurationConfig = CurationConfig(),
    provenance: str = "rule",
) -> tuple[list[LabeledTriplet], CurationReport]:
    """Label a bitext stream and build a capped triplet corpus.

    Unknown and dead-zone (labeler returned None-equivalent Unknown)
    records are counted under "dead_zone"; Conflict under "conflict".
    With config.reservoir a seeded reservoir sampler replaces first-N
    acceptance; outputs stay deterministic given (seed, input order).
    """
    report = CurationReport()
    rng = random.Random(config.seed)
    accepted: dict[tuple[str, str], list[LabeledTriplet]] = {}
    seen_cells: dict[tuple[str, str], int] = {}
    seen_sources: dict[str, set[str]] = {}

    for item in stream:
        if isinstance(item, LineError):
            report.cell("*", "*").seen += 1
            report.cell("*", "*").dropped["read_error"] += 1
            continue
        lang = item.lang
        if lang not in config.languages:
            cell = report.cell(lang, "*")
            cell.seen += 1
            cell.dropped["unsupported_language"] += 1
            continue
        label = labeler(item)
        level = _LEVEL_FOR_LABEL.get(label)
        cell = report.cell(lang, level if level is not None else label.value)
        cell.seen += 1
        if label is FormalityLabel.CONFLICT:
            cell.dropped["conflict"] += 1
            continue
        if level is None:  # Unknown / dead zone
            cell.dropped["dead_zone"] += 1
            continue
        if config.dedupe:
            pool = seen_sources.setdefault(lang, set())
            if item.source in pool:
                cell.dropped["duplicate"] += 1
                continue
            pool.add(item.source)
        triplet = LabeledTriplet(
            source=Segment(item.source, "en", item.domain),
            target=Segment(item.target, lang, item.domain),
            label=label,
            provenance=provenance,
        )
        key = (lang, level)
        bucket = accepted.setdefault(key, [])
        k = seen_cells.get(key, 0)
        seen_cells[key] = k + 1
        if len(bucket) < config.cap_per_level:
            bucket.append(triplet)
            cell.accepted += 1
        elif config.reservoir:
            j = rng.randrange(k + 1)
            if j < config.cap_per_level:
                # replacement: the evicted triplet becomes a cap drop
                bucket[j] = triplet
                cell.dropped["cap"] += 1
            else:
                cell.dropped["cap"] += 1
        else:
            cell.dropped["cap"] += 1

    triplets = [t for key in sorted(accepted) for t in accepted[key]]
    return triplets, report


def dead_zone_labeler(
    predict: Callable[[CorpusRecord], float], policy
) -> Labeler:
    """Wrap a probability predictor and a SilverPolicy into a Labeler."""
    from .classifier import silver_label

    def _label(record: CorpusRecord) -> FormalityLabel:
        lab = silver_label(predict(record), policy)
        return lab if lab is not None else FormalityLabel.UNKNOWN

    return _label


def make_unpaired(
    paired: list[PairedContrastiveExample], seed: int
) -> list[LabeledTriplet]:
    """One triplet per source, level picked by a seeded fair coin."""
    rng = random.Random(seed)
    out = []
    for ex in paired:
        formal = rng.random() < 0.5
        ref = ex.formal_ref if formal else ex.informal_ref
        out.append(
            LabeledTriplet(
                source=ex.source,
                target=Segment(ref.text, ex.source.lang, ex.domain_tag or None),
                label=FormalityLabel.FORMAL if formal else FormalityLabel.INFORMAL,
                provenance="gold",
            )
        )
    return out


def subsample_paired(
    paired: list[PairedContrastiveExample], fraction: float, seed: int
) -> list[PairedContrastiveExample]:
    """Keep floor(fraction * N) whole pairs, deterministically under seed."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    if fraction == 1.0:
        return list(paired)
    k = int(fraction * len(paired))
    rng = random.Random(seed)
    keep = sorted(rng.sample(range(len(paired)), k))
    return [paired[i] for i in keep]


def dev_split(
    paired: list[PairedContrastiveExample], k: int
) -> tuple[list[PairedContrastiveExample], list[PairedContrastiveExample]]:
    """Hold out the last k examples of each domain (corpus order) as dev."""
    by_domain: dict[str, list[int]] = {}
    for i, ex in enumerate(paired):
        by_domain.setdefault(ex.domain_tag, []).append(i)
    dev_idx = set()
    for domain, idxs in by_domain.items():
        if len(idxs) < k:
            raise InsufficientExamples(domain, len(idxs), k)
        dev_idx.update(idxs[len(idxs) - k :])
    train = [ex for i, ex in enumerate(paired) if i not in dev_idx]
    dev = [ex for i, ex in enumerate(paired) if i in dev_idx]
    return train, dev
