"""Scoring formality control with contrastive references.

A hypothesis is judged against a *pair* of references for the same
source: a formal one and an informal one, each with its register-marking
phrases annotated. The hypothesis counts as formal if it contains a
formal phrase and no informal phrase (and vice versa).
"""
from fsmt.metrics import classify_hypothesis, corpus_bleu, score_report, ter
from fsmt.textcore import parse_annotated, tokenize_13a

# --- 1. One sentence, four possible verdicts -------------------------

formal_ref = parse_annotated("Haben [F]Sie[/F] heute Zeit?")
informal_ref = parse_annotated("[F]Hast du[/F] heute Zeit?")

for hyp in [
    "Haben Sie heute Zeit?",          # formal phrase only -> FORMAL
    "Hast du heute Zeit?",            # informal phrase only -> INFORMAL
    "Ist heute noch Zeit?",           # neither phrase -> NEUTRAL
    "Hast du Zeit, haben Sie Zeit?",  # both phrases -> OTHER
]:
    verdict = classify_hypothesis(hyp, formal_ref.phrases(), informal_ref.phrases())
    print(f"{verdict.name:>8}  {hyp}")

# --- 2. Corpus-level accuracy ----------------------------------------

hyps = ["Haben Sie heute Zeit?", "Wo wohnen Sie?", "Hast du Hunger?"]
frefs = [formal_ref,
         parse_annotated("Wo wohnen [F]Sie[/F]?"),
         parse_annotated("Haben [F]Sie[/F] Hunger?")]
irefs = [informal_ref,
         parse_annotated("Wo [F]wohnst du[/F]?"),
         parse_annotated("[F]Hast du[/F] Hunger?")]

report = score_report(hyps, frefs, irefs, "formal")
print(f"\nacc_formal={report['acc_formal']:.3f}  "
      f"(match_f={report['match_f']}, match_i={report['match_i']})")

# Two hypotheses hit the formal phrase, one the informal phrase, so
# targeting "formal" scores 2/3.

# --- 3. Surface metrics ----------------------------------------------

h = tokenize_13a("Haben Sie heute noch Zeit?")
r = tokenize_13a("Haben Sie heute Zeit?")
print(f"\nTER-noshift: {ter(h, r):.3f}  (one insertion / 5 reference tokens)")
print(f"BLEU (identity): {corpus_bleu(hyps, hyps):.1f}")
