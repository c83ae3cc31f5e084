import json

from specforge.cli import main
from specforge.harness import load_run
from specforge.mock_server import MockInferenceServer

from test_pipeline import corpus_responder
from test_harness import graded_responder


def make_config(tmp_path, server, extra=""):
    text = f"""
[endpoints.mock]
base_url = "{server.base_url}"
model_name = "mock-model"
max_retries = 0

[pipeline]
summary_endpoint = "mock"
generator_endpoint = "mock"
qc_endpoint = "mock"
concurrency = 2
n_pairs = 3

[eval]
candidate_endpoint = "mock"
judge_endpoint = "mock"

[bench]
endpoint = "mock"
prompt_tokens = 32
gen_tokens = 8
trials = 1
warmup_trials = 0

[runs]
dir = "{tmp_path / 'runs'}"
{extra}
"""
    path = tmp_path / "config.toml"
    path.write_text(text)
    return path


def write_corpus(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "alpha.md").write_text("doc alpha body text. more alpha prose.\n")
    (corpus / "bravo.md").write_text("doc bravo body text. more bravo prose.\n")
    return corpus


class TestUsageErrors:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_subcommand_exits_2(self):
        assert main([]) == 2

    def test_unknown_flag_exits_2(self):
        assert main(["cost", "--frobnicate"]) == 2

    def test_help_exits_0(self):
        assert main(["--help"]) == 0

    def test_version_exits_0(self, capsys):
        assert main(["--version"]) == 0
        assert "specforge" in capsys.readouterr().out


class TestCostCommand:
    def test_builtin_prints_all_five_figures(self, capsys):
        assert main(["cost", "--builtin"]) == 0
        out = capsys.readouterr().out
        for figure in ("$240", "$2,400", "$249", "$6,273", "$14,454"):
            assert figure in out

    def test_csv_output(self, tmp_path, capsys):
        csv_path = tmp_path / "costs.csv"
        assert main(["cost", "--builtin", "--csv", str(csv_path)]) == 0
        assert "249.140625" in csv_path.read_text()

    def test_custom_scenarios_from_config(self, tmp_path, capsys):
        config = tmp_path / "c.toml"
        config.write_text(
            """
[[cost.scenarios]]
name = "tiny"
kind = "flat_monthly"
monthly_usd = 1
assumptions = "$1/month"
"""
        )
        assert main(["cost", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "tiny" in out and "$12" in out


class TestGenerateCommand:
    def test_missing_config_exits_1_naming_file(self, capsys):
        assert main(["generate", "--config", "missing.toml"]) == 1
        assert "missing.toml" in capsys.readouterr().err

    def test_end_to_end_against_mock(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        corpus = write_corpus(tmp_path)
        with MockInferenceServer(corpus_responder()) as server:
            config = make_config(tmp_path, server, extra=f'[corpus]\nroot = "{corpus}"\n')
            assert main(["generate", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "records" in out
        run_dirs = list((tmp_path / "runs").iterdir())
        assert len(run_dirs) == 1
        run_dir = run_dirs[0]
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["status"] == "complete"
        assert manifest["subcommand"] == "generate"
        dataset = (run_dir / "dataset.jsonl").read_text().splitlines()
        assert len(dataset) == 4  # 2 docs x (1 pass + 1 fixed)
        report = json.loads((run_dir / "report.json").read_text())
        assert report["records_out"] == report["n_pass"] + report["fix_success"]

    def test_unconfigured_pipeline_endpoint_exits_1(self, tmp_path, capsys):
        config = tmp_path / "c.toml"
        config.write_text("[corpus]\nroot = \".\"\n")
        assert main(["generate", "--config", str(config)]) == 1
        assert "pipeline.summary_endpoint" in capsys.readouterr().err


class TestEvalAndStatsCommands:
    def run_eval_cli(self, tmp_path, out_name, responder=None, epochs="2"):
        task = tmp_path / "task.jsonl"
        rows = [
            {"question": f"sample-{i:02d} question?", "answer": f"gold {i}", "category": "c"}
            for i in range(6)
        ]
        task.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        with MockInferenceServer(responder or graded_responder()) as server:
            config = make_config(tmp_path, server)
            code = main(
                [
                    "eval",
                    "--config",
                    str(config),
                    "--task",
                    str(task),
                    "--epochs",
                    epochs,
                    "--out-dir",
                    str(tmp_path / out_name),
                ]
            )
        assert code == 0
        return next((tmp_path / out_name).iterdir())

    def test_eval_writes_run_dir(self, tmp_path, capsys):
        run_dir = self.run_eval_cli(tmp_path, "runsA")
        run = load_run(run_dir)
        assert len(run.samples) == 12
        assert len(run.reduced_scores) == 6
        assert "accuracy" in capsys.readouterr().out

    def test_stats_compares_two_runs(self, tmp_path, capsys):
        run_a = self.run_eval_cli(tmp_path, "runsA")
        run_b = self.run_eval_cli(tmp_path, "runsB")
        assert main(["stats", "--candidate", str(run_a), "--reference", str(run_b)]) == 0
        out = capsys.readouterr().out
        assert "verdict" in out and "Tie" in out  # identical mock runs tie

    def test_report_emits_svg_and_csv(self, tmp_path, capsys):
        run_a = self.run_eval_cli(tmp_path, "runsA")
        run_b = self.run_eval_cli(tmp_path, "runsB")
        out_dir = tmp_path / "report"
        code = main(
            [
                "report",
                "--reference",
                str(run_b),
                "--candidate",
                str(run_a),
                "--out-dir",
                str(out_dir),
            ]
        )
        assert code == 0
        assert (out_dir / "stats.json").exists()
        assert (out_dir / "stats.csv").exists()
        assert (out_dir / "relative_error.svg").exists()


class TestDecontaminateCommand:
    def test_end_to_end(self, tmp_path, capsys):
        train = tmp_path / "train.jsonl"
        rows = [
            {"record_id": f"r{i}", "question": f"train question {i}?", "answer": f"long answer {i}",
             "doc_id": "d", "chunk_id": "d#0", "qc_status": "Pass"}
            for i in range(5)
        ]
        rows.append(
            {"record_id": "dup", "question": "planted duplicate question?", "answer": "dup answer",
             "doc_id": "d", "chunk_id": "d#0", "qc_status": "Pass"}
        )
        train.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        eval_set = tmp_path / "eval.jsonl"
        eval_set.write_text(json.dumps({"question": "planted duplicate question?", "answer": "other"}) + "\n")
        code = main(
            [
                "decontaminate",
                "--train",
                str(train),
                "--eval-set",
                f"bench={eval_set}",
                "--out-dir",
                str(tmp_path / "runs"),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "6 -> 5" in out
        run_dir = next((tmp_path / "runs").iterdir())
        cleaned = (run_dir / "train_cleaned.jsonl").read_text().splitlines()
        assert len(cleaned) == 5
        hits = [json.loads(l) for l in (run_dir / "hits.jsonl").read_text().splitlines()]
        assert hits[0]["train_record_id"] == "dup"

    def test_malformed_eval_set_arg(self, tmp_path, capsys):
        train = tmp_path / "train.jsonl"
        train.write_text("")
        assert main(["decontaminate", "--train", str(train), "--eval-set", "nopath"]) == 1


class TestExportCommand:
    def test_round_trip(self, tmp_path, capsys):
        records = tmp_path / "records.jsonl"
        records.write_text(
            json.dumps(
                {"record_id": "r0", "question": "q?", "answer": "a sufficiently long answer",
                 "doc_id": "d", "chunk_id": "d#0", "qc_status": "Pass"}
            )
            + "\n"
        )
        out = tmp_path / "train.jsonl"
        assert main(["export", "--records", str(records), "--out", str(out)]) == 0
        obj = json.loads(out.read_text().splitlines()[0])
        assert obj["text"].startswith("SYSTEM: Below is an instruction")
        assert (tmp_path / "train.jsonl.manifest.json").exists()


class TestThroughputCommand:
    def test_end_to_end(self, tmp_path, capsys):
        with MockInferenceServer(stream_ttft_s=0.02, stream_tokens_per_s=400.0) as server:
            config = make_config(tmp_path, server)
            assert main(["throughput", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "Prompt tok/s" in out
        run_dir = next((tmp_path / "runs").iterdir())
        report = json.loads((run_dir / "throughput.json").read_text())
        assert report["config"]["prompt_tokens"] == 32
