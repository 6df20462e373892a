"""Command-line entry point: label / curate / train / score workflows.

Every artifact-producing run writes a manifest (<output>.manifest.json)
recording the subcommand, effective configuration, input/output sha256
digests, seed, and wall-clock, so deterministic runs are digest-
reproducible. Exit codes: 0 success, 1 domain error (machine-readable
JSON on stderr), 2 usage error.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import __version__
from . import classifier as clf
from . import curation, intervention, metrics, rules
from .textcore import (
    CorpusRecord,
    FormalityLabel,
    LineError,
    Segment,
    parse_annotated,
    read_jsonl_corpus,
    read_tsv_bitext,
    render_annotated,
    tokenize_13a,
)

log = logging.getLogger("fsmt")

DOMAIN_ERRORS = (
    metrics.MetricError,
    rules.RuleError,
    clf.ClassifierError,
    curation.CurationError,
    intervention.InterventionError,
    FileNotFoundError,
    ValueError,
)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _emit_manifest(subcommand: str, config: dict, inputs: list, outputs: list, seed, t0: float):
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "input_digests": {str(p): _sha256(p) for p in inputs if Path(p).exists()},
        "output_digests": {str(p): _sha256(p) for p in outputs if Path(p).exists()},
        "wall_clock_s": round(time.monotonic() - t0, 3),
    }
    target = Path(outputs[0]).with_suffix(Path(outputs[0]).suffix + ".manifest.json") if outputs else Path("run.manifest.json")
    target.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def _fail(kind: str, message: str):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    sys.exit(1)


def _load_config_file(path) -> dict:
    """key = value file; values stay strings, flags override."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in stripped.split("=", 1))
        cfg[key] = value
    return cfg


def _read_stream(path, lang):
    if str(path).endswith(".tsv"):
        return read_tsv_bitext(path, lang)
    return read_jsonl_corpus(path)


class _Cli(click.Group):
    def main(self, *args, **kwargs):
        kwargs.setdefault("standalone_mode", False)
        try:
            return super().main(*args, **kwargs)
        except click.UsageError as e:
            sys.stderr.write(e.format_message() + "\n")
            ctx = e.ctx
            if ctx is not None:
                sys.stderr.write(ctx.get_help() + "\n")
            sys.exit(2)
        except click.ClickException as e:
            _fail(type(e).__name__, e.format_message())
        except click.exceptions.Abort:
            sys.exit(2)
        except DOMAIN_ERRORS as e:
            _fail(type(e).__name__, str(e))


@click.group(cls=_Cli)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="key = value defaults file; explicit flags win.")
@click.pass_context
def cli(ctx, config_file):
    logging.basicConfig(level=os.environ.get("FSMT_LOG", "WARNING").upper())
    ctx.obj = _load_config_file(config_file) if config_file else {}
    if ctx.obj:
        # Config keys are written as flag names; click's default_map is
        # keyed by parameter names, so translate per command.
        default_map = {}
        for name, cmd in cli.commands.items():
            translated = {}
            for param in cmd.params:
                for key, value in ctx.obj.items():
                    if f"--{key}" in param.opts:
                        translated[param.name] = value
            if translated:
                default_map[name] = translated
        ctx.default_map = default_map


def _labeled_stream(stream, ruleset, workers):
    if workers <= 1:
        summary = rules.LabelSummary()
        yield from rules.batch_label(stream, ruleset, summary)
        return

    def one(item):
        if isinstance(item, LineError):
            return item
        lab = rules.label_formality(Segment(item.target, item.lang, item.domain), ruleset)
        return item, lab

    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(one, stream)  # map preserves input order


@cli.command()
@click.option("--lang", required=True)
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None,
              help="Rule file; defaults to the shipped ruleset for --lang.")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--workers", default=1, show_default=True)
def label(lang, rules_path, in_path, out_path, workers):
    """Rule-label a JSONL/TSV corpus; adds a formality field per record."""
    t0 = time.monotonic()
    ruleset = rules.load_rules(rules_path, lang) if rules_path else rules.load_builtin_rules(lang)
    counts = {"formal": 0, "informal": 0, "unknown": 0, "conflict": 0}
    n_errors = 0
    with open(out_path, "w", encoding="utf-8") as out:
        for item in _labeled_stream(_read_stream(in_path, lang), ruleset, workers):
            if isinstance(item, LineError):
                n_errors += 1
                log.warning("line %d: %s", item.lineno, item.reason)
                continue
            rec, lab = item
            counts[lab.value] += 1
            row = json.loads(rec.to_json())
            row["formality"] = lab.value
            out.write(json.dumps(row, ensure_ascii=False) + "\n")
    _emit_manifest("label", {"lang": lang, "rules": rules_path, "workers": workers},
                   [in_path], [out_path], None, t0)
    click.echo(json.dumps({"counts": counts, "read_errors": n_errors}))


@cli.command()
@click.option("--lang", required=True)
@click.option("--labeler", type=click.Choice(["rules", "classifier", "external"]), default="rules",
              show_default=True)
@click.option("--model", "model_path", type=click.Path(exists=True), default=None,
              help="Classifier model (labeler=classifier).")
@click.option("--scores", "scores_path", type=click.Path(exists=True), default=None,
              help="External p_formal JSONL keyed by line number (labeler=external).")
@click.option("--cap", default=7500, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--reservoir", is_flag=True, help="Seeded reservoir sampling instead of first-N.")
@click.option("--formal-threshold", default=0.85, show_default=True)
@click.option("--informal-threshold", default=0.15, show_default=True)
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--workers", default=1, show_default=True)
def curate(lang, labeler, model_path, scores_path, cap, seed, reservoir,
           formal_threshold, informal_threshold, in_path, out_path, report_path, workers):
    """Build a capped silver-labeled triplet corpus from raw bitext."""
    t0 = time.monotonic()
    policy = clf.SilverPolicy(formal_threshold, informal_threshold)
    if labeler == "rules":
        ruleset = rules.load_builtin_rules(lang)
        label_fn = lambda rec: rules.label_formality(Segment(rec.target, rec.lang, rec.domain), ruleset)
    elif labeler == "classifier":
        if not model_path:
            raise click.UsageError("--model is required with --labeler classifier")
        model = clf.LinearNGramModel.load(model_path)
        label_fn = curation.dead_zone_labeler(
            lambda rec: clf.predict_proba(model, Segment(rec.target, rec.lang)), policy
        )
    else:
        if not scores_path:
            raise click.UsageError("--scores is required with --labeler external")
        scores = clf.read_external_scores(scores_path)
        counter = iter(range(1, 1 << 62))
        label_fn = curation.dead_zone_labeler(
            lambda rec: scores.get(str(next(counter)), 0.5), policy
        )
    config = curation.CurationConfig(
        cap_per_level=cap, languages=(lang,), seed=seed, reservoir=reservoir
    )
    provenance = "rule" if labeler == "rules" else "classifier"
    triplets, report = curation.curate(_read_stream(in_path, lang), label_fn, config, provenance)
    with open(out_path, "w", encoding="utf-8") as out:
        for t in triplets:
            out.write(json.dumps({
                "source": t.source.text, "target": t.target.text, "lang": t.target.lang,
                "formality": t.label.value, "provenance": t.provenance,
            }, ensure_ascii=False) + "\n")
    report_json = json.dumps(report.to_dict(), indent=2)
    if report_path:
        Path(report_path).write_text(report_json + "\n", encoding="utf-8")
    _emit_manifest("curate", {
        "lang": lang, "labeler": labeler, "cap": cap, "reservoir": reservoir,
        "formal_threshold": formal_threshold, "informal_threshold": informal_threshold,
        "workers": workers,
    }, [in_path], [out_path] + ([report_path] if report_path else []), seed, t0)
    click.echo(report_json)


@cli.command("train-classifier")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Labeled JSONL (records with a formality field).")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=200, show_default=True)
@click.option("--learning-rate", default=0.5, show_default=True)
@click.option("--hash-bits", default=18, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_classifier_cmd(in_path, out_path, epochs, learning_rate, hash_bits, seed):
    """Train the character n-gram formality classifier."""
    t0 = time.monotonic()
    examples = []
    for item in read_jsonl_corpus(in_path):
        if isinstance(item, LineError):
            continue
        if item.formality not in ("formal", "informal", "neutral"):
            continue
        examples.append((Segment(item.target, item.lang), FormalityLabel(item.formality)))
    settings = clf.TrainSettings(
        vocab_hash_bits=hash_bits, learning_rate=learning_rate, epochs=epochs, seed=seed
    )
    model, losses = clf.train_classifier(examples, settings)
    model.save(out_path)
    _emit_manifest("train-classifier", {
        "epochs": epochs, "learning_rate": learning_rate, "hash_bits": hash_bits,
    }, [in_path], [out_path], seed, t0)
    click.echo(json.dumps({"examples": len(examples), "final_loss": losses[-1]}))


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def predict(model_path, in_path, out_path):
    """Emit {id, p_formal} JSONL for each record's target."""
    t0 = time.monotonic()
    model = clf.LinearNGramModel.load(model_path)
    with open(out_path, "w", encoding="utf-8") as out:
        i = 0
        for item in read_jsonl_corpus(in_path):
            if isinstance(item, LineError):
                continue
            i += 1
            p = clf.predict_proba(model, Segment(item.target, item.lang))
            out.write(json.dumps({"id": str(i), "p_formal": p}) + "\n")
    _emit_manifest("predict", {"model": model_path}, [in_path, model_path], [out_path], None, t0)


def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


@cli.command()
@click.option("--hyp", "hyp_path", required=True, type=click.Path(exists=True))
@click.option("--formal-ref", required=True, type=click.Path(exists=True),
              help="References with [F]...[/F] phrase markup, one per line.")
@click.option("--informal-ref", required=True, type=click.Path(exists=True))
@click.option("--target", type=click.Choice(["formal", "informal"]), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def score(hyp_path, formal_ref, informal_ref, target, out_path):
    """Formality accuracy + BLEU against annotated contrastive references."""
    t0 = time.monotonic()
    hyps = _read_lines(hyp_path)
    frefs = [parse_annotated(l) for l in _read_lines(formal_ref)]
    irefs = [parse_annotated(l) for l in _read_lines(informal_ref)]
    report = metrics.score_report(hyps, frefs, irefs, target)
    payload = json.dumps(report, indent=2)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
        _emit_manifest("score", {"target": target},
                       [hyp_path, formal_ref, informal_ref], [out_path], None, t0)
    click.echo(payload)


@cli.command()
@click.option("--hyp", "hyp_path", required=True, type=click.Path(exists=True))
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True))
def ter(hyp_path, ref_path):
    """Mean per-line TER-noshift (13a tokens)."""
    hyps, refs = _read_lines(hyp_path), _read_lines(ref_path)
    if len(hyps) != len(refs):
        raise metrics.LengthMismatch(f"{len(hyps)} hypotheses vs {len(refs)} references")
    vals = [metrics.ter(tokenize_13a(h), tokenize_13a(r)) for h, r in zip(hyps, refs)]
    click.echo(json.dumps({"mean_ter_noshift": sum(vals) / len(vals) if vals else 0.0,
                           "segments": len(vals)}))


@cli.command()
@click.option("--hyp", "hyp_path", required=True, type=click.Path(exists=True))
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True))
def bleu(hyp_path, ref_path):
    """Corpus BLEU (13a tokens, single reference)."""
    score_val = metrics.corpus_bleu(_read_lines(hyp_path), _read_lines(ref_path))
    click.echo(json.dumps({"bleu": score_val}))


def _write_pairs(pairs, path):
    with open(path, "w", encoding="utf-8") as out:
        for ex in pairs:
            out.write(json.dumps({
                "source": ex.source.text,
                "formal_ref": render_annotated(ex.formal_ref),
                "informal_ref": render_annotated(ex.informal_ref),
                "domain": ex.domain_tag,
            }, ensure_ascii=False) + "\n")


def read_pairs(path):
    pairs = []
    for line in _read_lines(path):
        if not line.strip():
            continue
        row = json.loads(line)
        pairs.append(
            curation.PairedContrastiveExample(
                source=Segment(row["source"], "en", row.get("domain")),
                formal_ref=parse_annotated(row["formal_ref"]),
                informal_ref=parse_annotated(row["informal_ref"]),
                domain_tag=row.get("domain", ""),
            )
        )
    return pairs


@cli.command("toy-gen")
@click.option("--n", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--neutral-fraction", default=0.1, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def toy_gen(n, seed, neutral_fraction, out_path):
    """Generate the paired contrastive toy corpus."""
    t0 = time.monotonic()
    pairs = intervention.gen_toylang(n, seed, neutral_fraction)
    _write_pairs(pairs, out_path)
    _emit_manifest("toy-gen", {"n": n, "neutral_fraction": neutral_fraction},
                   [], [out_path], seed, t0)
    click.echo(json.dumps({"pairs": len(pairs)}))


@cli.command("toy-train")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["paired", "unpaired"]), default="paired",
              show_default=True)
@click.option("--epochs", default=30, show_default=True)
@click.option("--mask-prob", default=0.2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--metrics-out", "metrics_path", type=click.Path(), default=None,
              help="Per-epoch metrics JSONL.")
def toy_train(pairs_path, out_path, mode, epochs, mask_prob, seed, metrics_path):
    """Train the toy intervention model on a generated pair corpus."""
    t0 = time.monotonic()
    pairs = read_pairs(pairs_path)
    if mode == "paired":
        triplets = intervention.pairs_to_triplets(pairs)
    else:
        triplets = curation.make_unpaired(pairs, seed)
    config = intervention.TrainConfig(epochs=epochs, mask_prob=mask_prob, seed=seed)
    import torch

    torch.manual_seed(seed)
    model = intervention.ToyInterventionModel(intervention.Vocab.from_corpus(triplets), config)
    history = intervention.train(model, triplets, config)
    intervention.save_checkpoint(model, out_path)
    if metrics_path:
        Path(metrics_path).write_text(
            "".join(m.to_json() + "\n" for m in history), encoding="utf-8"
        )
    _emit_manifest("toy-train", {"mode": mode, "epochs": epochs, "mask_prob": mask_prob},
                   [pairs_path], [out_path] + ([metrics_path] if metrics_path else []), seed, t0)
    click.echo(json.dumps({"triplets": len(triplets), "final_loss": history[-1].loss}))


@cli.command("toy-eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True))
@click.option("--target", type=click.Choice(["formal", "informal"]), default="formal",
              show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def toy_eval(model_path, pairs_path, target, out_path):
    """Decode a pair corpus at the target level and score it."""
    t0 = time.monotonic()
    model = intervention.load_checkpoint(model_path)
    pairs = read_pairs(pairs_path)
    hyps = [
        " ".join(intervention.decode(model, ex.source.text.split(), target))
        for ex in pairs
    ]
    report = metrics.score_report(
        hyps, [ex.formal_ref for ex in pairs], [ex.informal_ref for ex in pairs], target
    )
    payload = json.dumps(report, indent=2)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
        _emit_manifest("toy-eval", {"target": target}, [model_path, pairs_path], [out_path], None, t0)
    click.echo(payload)


@cli.command()
@click.argument("inputs", nargs=-1, type=click.Path(exists=True))
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), default=None,
              help="Pair corpus for data statistics.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def report(inputs, pairs_path, out_path):
    """Markdown summary of score JSONs, manifests, and corpus statistics."""
    lines = ["# Run report", ""]
    if pairs_path:
        pairs = read_pairs(pairs_path)
        n_neutral = sum(1 for ex in pairs if ex.formal_ref.text == ex.informal_ref.text)
        if pairs:
            mean_src = sum(len(tokenize_13a(ex.source.text)) for ex in pairs) / len(pairs)
            mean_f = sum(len(tokenize_13a(ex.formal_ref.text)) for ex in pairs) / len(pairs)
            mean_i = sum(len(tokenize_13a(ex.informal_ref.text)) for ex in pairs) / len(pairs)
            avg_ter = metrics.contrastiveness(
                [ex.formal_ref.text for ex in pairs], [ex.informal_ref.text for ex in pairs]
            )
        else:
            mean_src = mean_f = mean_i = avg_ter = 0.0
        lines += [
            "## Corpus statistics", "",
            "| Size | Source len | Formal len | Informal len | Avg. TER-noshift | # Neutral |",
            "|---:|---:|---:|---:|---:|---:|",
            f"| {len(pairs)} | {mean_src:.2f} | {mean_f:.2f} | {mean_i:.2f} "
            f"| {avg_ter:.3f} | {n_neutral} |",
            "",
        ]
    scores = []
    for path in inputs:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: {e.msg}")
        if "subcommand" in payload:
            lines += [f"## Manifest: {path}", "", "```json", json.dumps(payload, indent=2), "```", ""]
        else:
            scores.append((path, payload))
    if scores:
        lines += ["## Scores", "",
                  "| File | Target | BLEU | Acc. formal | Acc. informal | FORMAL | INFORMAL | NEUTRAL | OTHER |",
                  "|---|---|---:|---:|---:|---:|---:|---:|---:|"]
        for path, s in scores:
            lines.append(
                f"| {path} | {s.get('target_level', '?')} | {s.get('bleu', float('nan')):.2f} "
                f"| {s.get('acc_formal', 0):.3f} | {s.get('acc_informal', 0):.3f} "
                f"| {s.get('match_f', 0)} | {s.get('match_i', 0)} "
                f"| {s.get('n_neutral', 0)} | {s.get('n_other', 0)} |"
            )
        lines.append("")
    text = "\n".join(lines)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    click.echo(text)


def main():
    cli()


if __name__ == "__main__":
    main()
