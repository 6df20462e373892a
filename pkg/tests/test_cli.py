import json
import subprocess
import sys


def run_cli(*args, cwd=None):
    return subprocess.run(
        ["fsmt", *args], capture_output=True, text=True, cwd=cwd
    )


def write_jsonl(path, rows):
    path.write_text(
        "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8"
    )


DE_ROWS = [
    {"source": "Where are you from?", "target": "Woher kommen Sie?", "lang": "de"},
    {"source": "Where are you from?", "target": "Woher kommst du?", "lang": "de"},
    {"source": "Hello world", "target": "Hallo Welt", "lang": "de"},
]


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self):
        proc = run_cli()
        assert proc.returncode == 2

    def test_unknown_option_is_usage_error(self):
        proc = run_cli("ter", "--no-such-flag")
        assert proc.returncode == 2
        assert "no-such-flag" in proc.stderr

    def test_missing_file_is_usage_error(self, tmp_path):
        proc = run_cli("ter", "--hyp", str(tmp_path / "nope"), "--ref", str(tmp_path / "nope"))
        assert proc.returncode == 2

    def test_domain_error_is_exit_one_with_json(self, tmp_path):
        hyp = tmp_path / "hyp.txt"
        ref = tmp_path / "ref.txt"
        hyp.write_text("a\nb\n", encoding="utf-8")
        ref.write_text("a\n", encoding="utf-8")
        proc = run_cli("ter", "--hyp", str(hyp), "--ref", str(ref))
        assert proc.returncode == 1
        err = json.loads(proc.stderr)
        assert err["error"] == "LengthMismatch"
        assert "message" in err


class TestLabel:
    def test_labels_and_manifest(self, tmp_path):
        src = tmp_path / "in.jsonl"
        out = tmp_path / "out.jsonl"
        write_jsonl(src, DE_ROWS)
        proc = run_cli("label", "--lang", "de", "--in", str(src), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        rows = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
        assert [r["formality"] for r in rows] == ["formal", "informal", "unknown"]
        summary = json.loads(proc.stdout)
        assert summary["counts"] == {"formal": 1, "informal": 1, "unknown": 1, "conflict": 0}

        manifest = json.loads((tmp_path / "out.jsonl.manifest.json").read_text(encoding="utf-8"))
        assert manifest["subcommand"] == "label"
        assert str(src) in manifest["input_digests"]
        assert str(out) in manifest["output_digests"]
        assert len(manifest["output_digests"][str(out)]) == 64

    def test_worker_count_does_not_change_output(self, tmp_path):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, DE_ROWS * 30)
        out1, out4 = tmp_path / "o1.jsonl", tmp_path / "o4.jsonl"
        assert run_cli("label", "--lang", "de", "--in", str(src), "--out", str(out1)).returncode == 0
        assert run_cli("label", "--lang", "de", "--in", str(src), "--out", str(out4),
                       "--workers", "4").returncode == 0
        assert out1.read_text(encoding="utf-8") == out4.read_text(encoding="utf-8")

    def test_config_file_supplies_defaults(self, tmp_path):
        src = tmp_path / "in.jsonl"
        out = tmp_path / "out.jsonl"
        write_jsonl(src, DE_ROWS)
        cfg = tmp_path / "fsmt.cfg"
        cfg.write_text(f"lang = de\nin = {src}\nout = {out}\n", encoding="utf-8")
        proc = run_cli("--config", str(cfg), "label")
        assert proc.returncode == 0, proc.stderr
        assert out.exists()


class TestScoreTerBleu:
    def test_ter_value(self, tmp_path):
        hyp = tmp_path / "hyp.txt"
        ref = tmp_path / "ref.txt"
        hyp.write_text("the cat sat on a mat\n", encoding="utf-8")
        ref.write_text("the cat sat on the mat\n", encoding="utf-8")
        proc = run_cli("ter", "--hyp", str(hyp), "--ref", str(ref))
        assert proc.returncode == 0
        payload = json.loads(proc.stdout)
        assert abs(payload["mean_ter_noshift"] - 1 / 6) < 1e-12
        assert payload["segments"] == 1

    def test_bleu_identity(self, tmp_path):
        hyp = tmp_path / "hyp.txt"
        hyp.write_text("the quick brown fox jumps over the lazy dog\n", encoding="utf-8")
        proc = run_cli("bleu", "--hyp", str(hyp), "--ref", str(hyp))
        assert json.loads(proc.stdout)["bleu"] == 100.0

    def test_score_report(self, tmp_path):
        hyp = tmp_path / "hyp.txt"
        fref = tmp_path / "f.txt"
        iref = tmp_path / "i.txt"
        hyp.write_text("Haben Sie Zeit?\nHast du Zeit?\n", encoding="utf-8")
        fref.write_text("Haben [F]Sie[/F] Zeit?\nHaben [F]Sie[/F] Geld?\n", encoding="utf-8")
        iref.write_text("Hast [F]du[/F] Zeit?\nHast [F]du[/F] Geld?\n", encoding="utf-8")
        out = tmp_path / "score.json"
        proc = run_cli("score", "--hyp", str(hyp), "--formal-ref", str(fref),
                       "--informal-ref", str(iref), "--target", "formal", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["match_f"] == 1
        assert report["match_i"] == 1
        assert report["acc_formal"] == 0.5
        assert (tmp_path / "score.json.manifest.json").exists()


class TestClassifierCommands:
    def test_train_predict_round_trip(self, tmp_path):
        rows = []
        for i in range(30):
            rows.append({"source": f"s{i}", "target": "Haben Sie heute Zeit?", "lang": "de",
                         "formality": "formal"})
            rows.append({"source": f"t{i}", "target": "Hast du heute Zeit?", "lang": "de",
                         "formality": "informal"})
        train_in = tmp_path / "train.jsonl"
        write_jsonl(train_in, rows)
        model = tmp_path / "model.json"
        proc = run_cli("train-classifier", "--in", str(train_in), "--out", str(model),
                       "--epochs", "50")
        assert proc.returncode == 0, proc.stderr

        test_in = tmp_path / "test.jsonl"
        write_jsonl(test_in, DE_ROWS[:2])
        scores = tmp_path / "scores.jsonl"
        assert run_cli("predict", "--model", str(model), "--in", str(test_in),
                       "--out", str(scores)).returncode == 0
        out_rows = [json.loads(l) for l in scores.read_text(encoding="utf-8").splitlines()]
        assert out_rows[0]["p_formal"] > 0.5 > out_rows[1]["p_formal"]

    def test_curate_with_rules(self, tmp_path):
        src = tmp_path / "in.jsonl"
        write_jsonl(src, [
            {"source": "Where are you from?", "target": "Woher kommen Sie?", "lang": "de"},
            {"source": "Where are you really from?", "target": "Woher kommst du?", "lang": "de"},
            {"source": "Hello world", "target": "Hallo Welt", "lang": "de"},
        ])
        out = tmp_path / "curated.jsonl"
        report = tmp_path / "report.json"
        proc = run_cli("curate", "--lang", "de", "--in", str(src), "--out", str(out),
                       "--report", str(report))
        assert proc.returncode == 0, proc.stderr
        kept = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
        assert [r["formality"] for r in kept] == ["formal", "informal"]
        assert all(r["provenance"] == "rule" for r in kept)
        payload = json.loads(report.read_text(encoding="utf-8"))
        assert sum(cell["seen"] for cell in payload.values()) == 3


class TestToyPipeline:
    def test_gen_train_eval_score_report(self, tmp_path):
        pairs = tmp_path / "pairs.jsonl"
        proc = run_cli("toy-gen", "--n", "24", "--seed", "1", "--out", str(pairs))
        assert proc.returncode == 0, proc.stderr
        assert len(pairs.read_text(encoding="utf-8").splitlines()) == 24

        model = tmp_path / "toy.pt"
        hist = tmp_path / "metrics.jsonl"
        proc = run_cli("toy-train", "--pairs", str(pairs), "--out", str(model),
                       "--epochs", "2", "--seed", "1", "--metrics-out", str(hist))
        assert proc.returncode == 0, proc.stderr
        assert model.exists()
        epochs = [json.loads(l) for l in hist.read_text(encoding="utf-8").splitlines()]
        assert [e["epoch"] for e in epochs] == [1, 2]

        score_json = tmp_path / "score.json"
        proc = run_cli("toy-eval", "--model", str(model), "--pairs", str(pairs),
                       "--target", "formal", "--out", str(score_json))
        assert proc.returncode == 0, proc.stderr
        report = json.loads(score_json.read_text(encoding="utf-8"))
        assert report["target_level"] == "formal"
        assert report["corpus_size"] == 24

        md = tmp_path / "report.md"
        proc = run_cli("report", str(score_json),
                       str(tmp_path / "toy.pt.manifest.json"),
                       "--pairs", str(pairs), "--out", str(md))
        assert proc.returncode == 0, proc.stderr
        text = md.read_text(encoding="utf-8")
        assert "# Neutral" in text
        assert "Avg. TER-noshift" in text
        assert "## Scores" in text
        assert "## Manifest" in text

    def test_unpaired_mode_trains(self, tmp_path):
        pairs = tmp_path / "pairs.jsonl"
        assert run_cli("toy-gen", "--n", "12", "--seed", "0", "--out", str(pairs)).returncode == 0
        model = tmp_path / "toy.pt"
        proc = run_cli("toy-train", "--pairs", str(pairs), "--out", str(model),
                       "--mode", "unpaired", "--epochs", "1", "--seed", "0")
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout.splitlines()[-1])["triplets"] == 12
