"""Rule-based formality labeling and corpus curation, step by step.

We label a handful of German sentences with the shipped T-V ruleset,
then run the same sentences through the curation pipeline and look at
its bookkeeping.
"""
from fsmt.curation import CurationConfig, curate
from fsmt.rules import label_formality, load_builtin_rules
from fsmt.textcore import CorpusRecord, Segment

# --- 1. Labeling single sentences ------------------------------------

ruleset = load_builtin_rules("de")

sentences = [
    "Woher kommen Sie?",        # polite V-form pronoun
    "Woher kommst du?",         # informal T-form pronoun + -st agreement
    "Hallo Welt",               # no second-person marker at all
    "Sie kommen, und du auch",  # both registers in one sentence
    "Sie hat das Buch gelesen",  # sentence-initial "Sie" may mean "she"
]

for text in sentences:
    label = label_formality(Segment(text, "de"), ruleset)
    print(f"{label.value:>9}  {text}")

# The fourth sentence mixes V- and T-forms, so it comes back "conflict".
# The last one is genuinely ambiguous -- sentence-initial "Sie" can be
# the polite pronoun or "she" -- and ambiguous evidence deliberately
# leans formal, the safer register to fall back on.

# --- 2. Curating a stream --------------------------------------------

print("\nCuration:")
stream = [
    CorpusRecord(f"src {i}", text, "de")
    for i, text in enumerate(sentences * 3)  # duplicated targets, distinct ids
]
labeler = lambda rec: label_formality(Segment(rec.target, rec.lang), ruleset)
triplets, report = curate(stream, labeler, CurationConfig(languages=("de",)))

print(f"kept {len(triplets)} of {len(stream)} records")
for key, cell in sorted(report.cells.items()):
    print(f"  {key}: seen={cell.seen} accepted={cell.accepted} dropped={dict(cell.dropped)}")

# Every record is accounted for: seen = accepted + dropped in each cell.
# Unknown/conflict sentences are dropped (dead_zone / conflict), and the
# duplicated sources beyond the first copy are dropped as duplicates.
