import random

import pytest

from fsmt.classifier import SilverPolicy
from fsmt.curation import (
    CurationConfig,
    InsufficientExamples,
    curate,
    dead_zone_labeler,
    dev_split,
    make_unpaired,
    subsample_paired,
)
from fsmt.rules import load_builtin_rules, label_formality
from fsmt.textcore import (
    AnnotatedReference,
    CorpusRecord,
    FormalityLabel,
    LineError,
    PairedContrastiveExample,
    Segment,
)

F, I = FormalityLabel.FORMAL, FormalityLabel.INFORMAL


def const_labeler(label):
    return lambda rec: label


def keyword_labeler(rec):
    if "Sie" in rec.target:
        return F
    if "du" in rec.target:
        return I
    if "beide" in rec.target:
        return FormalityLabel.CONFLICT
    return FormalityLabel.UNKNOWN


class TestCurate:
    def test_cap_enforced(self):
        stream = [CorpusRecord(f"s{i}", "Haben Sie Zeit?", "de") for i in range(20000)]
        config = CurationConfig(cap_per_level=7500, languages=("de",), dedupe=False)
        triplets, report = curate(stream, const_labeler(F), config)
        assert len(triplets) == 7500
        cell = report.cell("de", "formal")
        assert cell.accepted == 7500
        assert cell.dropped["cap"] == 12500
        assert cell.seen == 20000

    def test_under_cap_passthrough(self):
        stream = [CorpusRecord(f"s{i}", "Haben Sie Zeit?", "de") for i in range(100)]
        triplets, _ = curate(stream, const_labeler(F), CurationConfig(languages=("de",)))
        assert len(triplets) == 100

    def test_mixed_fixture_counts(self):
        targets = (
            ["Haben Sie Zeit?"] * 4 + ["Magst du das?"] * 3 + ["Hallo Welt"] * 2 + ["beide hier"]
        )
        stream = [CorpusRecord(f"s{i}", t, "de") for i, t in enumerate(targets)]
        triplets, report = curate(stream, keyword_labeler, CurationConfig(languages=("de",)))
        assert sum(1 for t in triplets if t.label is F) == 4
        assert sum(1 for t in triplets if t.label is I) == 3
        assert report.cell("de", "formal").accepted == 4
        assert report.cell("de", "informal").accepted == 3
        assert report.cell("de", "unknown").dropped["dead_zone"] == 2
        assert report.cell("de", "conflict").dropped["conflict"] == 1

    def test_conservation(self):
        rng = random.Random(5)
        targets = ["Haben Sie Zeit?", "Magst du das?", "Hallo", "beide hier"]
        stream = [
            CorpusRecord(f"s{rng.randrange(200)}", rng.choice(targets), "de")
            for _ in range(1000)
        ]
        _, report = curate(stream, keyword_labeler, CurationConfig(languages=("de",)))
        seen = sum(c.seen for c in report.cells.values())
        accepted = sum(c.accepted for c in report.cells.values())
        dropped = sum(c.total_dropped for c in report.cells.values())
        assert seen == 1000
        assert accepted + dropped == seen

    def test_unsupported_language_counted(self):
        stream = [CorpusRecord("s", "こんにちは", "ja")]
        _, report = curate(stream, const_labeler(F), CurationConfig(languages=("de",)))
        assert report.cell("ja", "*").dropped["unsupported_language"] == 1

    def test_read_errors_counted(self):
        stream = [LineError(3, "bad", "{"), CorpusRecord("s", "Haben Sie Zeit?", "de")]
        triplets, report = curate(stream, const_labeler(F), CurationConfig(languages=("de",)))
        assert len(triplets) == 1
        assert report.cell("*", "*").dropped["read_error"] == 1

    def test_dedupe_on_source(self):
        stream = [CorpusRecord("same source", "Haben Sie Zeit?", "de") for _ in range(5)]
        triplets, report = curate(stream, const_labeler(F), CurationConfig(languages=("de",)))
        assert len(triplets) == 1
        assert report.cell("de", "formal").dropped["duplicate"] == 4

    def test_determinism_under_seed(self):
        stream = [CorpusRecord(f"s{i}", "Haben Sie Zeit?", "de") for i in range(500)]
        cfg = CurationConfig(cap_per_level=100, languages=("de",), seed=9, reservoir=True)
        t1, _ = curate(list(stream), const_labeler(F), cfg)
        t2, _ = curate(list(stream), const_labeler(F), cfg)
        assert [t.source.text for t in t1] == [t.source.text for t in t2]

    def test_reservoir_respects_cap(self):
        stream = [CorpusRecord(f"s{i}", "Haben Sie Zeit?", "de") for i in range(5000)]
        cfg = CurationConfig(cap_per_level=100, languages=("de",), reservoir=True)
        triplets, report = curate(stream, const_labeler(F), cfg)
        assert len(triplets) == 100
        cell = report.cell("de", "formal")
        assert cell.accepted + cell.total_dropped == cell.seen == 5000

    def test_rules_labeler_end_to_end(self):
        ruleset = load_builtin_rules("de")
        labeler = lambda rec: label_formality(Segment(rec.target, rec.lang), ruleset)
        stream = [
            CorpusRecord("s1", "Woher kommen Sie?", "de"),
            CorpusRecord("s2", "Woher kommst du?", "de"),
        ]
        triplets, _ = curate(stream, labeler, CurationConfig(languages=("de",)))
        assert [t.label for t in triplets] == [F, I]

    def test_dead_zone_labeler(self):
        policy = SilverPolicy()
        scores = {"a": 0.9, "b": 0.1, "c": 0.5}
        labeler = dead_zone_labeler(lambda rec: scores[rec.source], policy)
        stream = [CorpusRecord(k, "x", "de") for k in "abc"]
        triplets, report = curate(stream, labeler, CurationConfig(languages=("de",)), "classifier")
        assert [t.label for t in triplets] == [F, I]
        assert report.cell("de", "unknown").dropped["dead_zone"] == 1
        assert all(t.provenance == "classifier" for t in triplets)


def make_pairs(n, domain_fn=lambda i: "d0"):
    pairs = []
    for i in range(n):
        pairs.append(
            PairedContrastiveExample(
                source=Segment(f"src {i}", "en"),
                formal_ref=AnnotatedReference(f"formal {i}"),
                informal_ref=AnnotatedReference(f"informal {i}"),
                domain_tag=domain_fn(i),
            )
        )
    return pairs


class TestMakeUnpaired:
    def test_single_pair(self):
        out = make_unpaired(make_pairs(1), seed=0)
        assert len(out) == 1
        assert out[0].label in (F, I)

    def test_one_triplet_per_source(self):
        out = make_unpaired(make_pairs(100), seed=1)
        assert len(out) == 100
        assert len({t.source.text for t in out}) == 100

    def test_deterministic(self):
        a = make_unpaired(make_pairs(1000), seed=7)
        b = make_unpaired(make_pairs(1000), seed=7)
        assert [t.label for t in a] == [t.label for t in b]

    def test_fair_coin(self):
        # binomial 3-sigma bound at n=10000: 0.5 +/- 0.015, widened to 0.03
        out = make_unpaired(make_pairs(10000), seed=2)
        frac = sum(1 for t in out if t.label is F) / len(out)
        assert 0.47 <= frac <= 0.53

    def test_level_matches_reference(self):
        for t in make_unpaired(make_pairs(50), seed=3):
            expected = "formal" if t.label is F else "informal"
            assert t.target.text.startswith(expected)


class TestSubsamplePaired:
    def test_identity_at_one(self):
        pairs = make_pairs(10)
        assert subsample_paired(pairs, 1.0, seed=0) == pairs

    def test_half_of_400(self):
        out = subsample_paired(make_pairs(400), 0.5, seed=0)
        assert len(out) == 200
        # whole pairs kept: both references present for every kept source
        assert all(ex.formal_ref.text and ex.informal_ref.text for ex in out)

    def test_deterministic(self):
        pairs = make_pairs(100)
        assert subsample_paired(pairs, 0.5, seed=4) == subsample_paired(pairs, 0.5, seed=4)

    def test_floor_semantics(self):
        assert len(subsample_paired(make_pairs(5), 0.5, seed=0)) == 2

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            subsample_paired(make_pairs(5), 0.0, seed=0)


class TestDevSplit:
    def test_two_domains(self):
        pairs = make_pairs(400, lambda i: "telephony" if i < 200 else "topical")
        train, dev = dev_split(pairs, 50)
        assert len(dev) == 100
        assert len(train) == 300
        assert not {id(x) for x in train} & {id(x) for x in dev}

    def test_dev_is_last_k_in_order(self):
        pairs = make_pairs(100)
        train, dev = dev_split(pairs, 10)
        assert dev == pairs[-10:]
        assert train == pairs[:-10]

    def test_k_zero(self):
        pairs = make_pairs(10)
        train, dev = dev_split(pairs, 0)
        assert dev == []
        assert train == pairs

    def test_insufficient(self):
        with pytest.raises(InsufficientExamples):
            dev_split(make_pairs(30), 50)
