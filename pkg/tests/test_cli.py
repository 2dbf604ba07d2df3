from __future__ import annotations

import json
import shutil
import subprocess
import sys

import pytest

from factfilter import FilterManifest, load_corpus
from factfilter.cli import main
from factfilter.corpus import toy_corpus_path
from factfilter.validation import CATEGORIES


@pytest.fixture()
def toy(tmp_path):
    """Toy corpus copied into a scratch dir so the CLI names it 'toy'."""
    corpus_file = tmp_path / "toy.jsonl"
    shutil.copy(toy_corpus_path(), corpus_file)
    return corpus_file


def _score(tmp_path, toy, extra=()):
    scores = tmp_path / "scores.jsonl"
    code = main(["score", "--in", str(toy), "--out", str(scores),
                 "--scorers", "greedy,condll,dae", "--backend", "mock", *extra])
    assert code == 0
    return scores


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_subcommand_is_usage_error(self):
        assert main([]) == 1

    def test_missing_required_flag_is_usage_error(self, tmp_path, capsys):
        assert main(["filter", "--out", str(tmp_path / "m.json")]) == 1
        assert "--scores" in capsys.readouterr().err

    def test_data_error_exits_two(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        record = {"id": "a", "document": "doc text", "summary": "sum text",
                  "split": "train", "meta": {}}
        bad.write_text(json.dumps(record) + "\n" + json.dumps(record) + "\n")
        assert main(["ingest", "--in", str(bad), "--out", str(tmp_path / "o.jsonl")]) == 2

    def test_backend_error_exits_three(self, tmp_path, toy):
        code = main(["score", "--in", str(toy), "--out", str(tmp_path / "s.jsonl"),
                     "--scorers", "greedy", "--backend", "remote",
                     "--remote-command", f"{sys.executable} -c pass"])
        assert code == 3

    def test_unknown_backend_is_configuration_error(self, tmp_path, toy):
        code = main(["score", "--in", str(toy), "--out", str(tmp_path / "s.jsonl"),
                     "--scorers", "greedy", "--backend", "nope"])
        assert code == 1


class TestIngest:
    def test_canonicalizes(self, tmp_path, toy):
        out = tmp_path / "canonical.jsonl"
        assert main(["ingest", "--in", str(toy), "--out", str(out)]) == 0
        assert load_corpus(out).ids() == load_corpus(toy).ids()

    def test_writes_config_echo(self, tmp_path, toy):
        out = tmp_path / "c.jsonl"
        main(["ingest", "--in", str(toy), "--out", str(out)])
        echo = json.loads((tmp_path / "c.jsonl.config.json").read_text())
        assert echo["command"] == "ingest"
        assert echo["in_path"] == str(toy)


class TestScore:
    def test_toy_corpus_yields_150_rows(self, tmp_path, toy):
        scores = _score(tmp_path, toy)
        rows = [json.loads(line) for line in scores.read_text().splitlines()]
        assert len(rows) == 150
        assert {row["scorer"] for row in rows} == {"greedy", "condll", "dae"}

    def test_rerun_is_resumable_and_byte_stable(self, tmp_path, toy):
        scores = _score(tmp_path, toy)
        before = scores.read_bytes()
        assert main(["score", "--in", str(toy), "--out", str(scores),
                     "--scorers", "greedy,condll,dae", "--backend", "mock"]) == 0
        assert scores.read_bytes() == before

    def test_parallel_matches_serial_bytes(self, tmp_path, toy):
        serial = _score(tmp_path, toy)
        parallel_dir = tmp_path / "par"
        parallel_dir.mkdir()
        parallel = _score(parallel_dir, toy, extra=("--parallelism", "4"))
        assert parallel.read_bytes() == serial.read_bytes()

    def test_remote_backend_matches_local(self, tmp_path, toy):
        local = _score(tmp_path, toy)
        remote_dir = tmp_path / "remote"
        remote_dir.mkdir()
        remote_out = remote_dir / "scores.jsonl"
        code = main(["score", "--in", str(toy), "--out", str(remote_out),
                     "--scorers", "greedy,condll,dae", "--backend", "remote",
                     "--remote-command",
                     f"{sys.executable} -m factfilter.remote --backend mock"])
        assert code == 0
        local_rows = [json.loads(l) for l in local.read_text().splitlines()]
        remote_rows = [json.loads(l) for l in remote_out.read_text().splitlines()]
        for row in local_rows + remote_rows:
            row["backend_name"] = "x"  # provenance differs; values must not
        assert remote_rows == local_rows

    def test_env_registered_backend(self, tmp_path, toy, monkeypatch):
        registry = tmp_path / "extra_backends.py"
        registry.write_text(
            "from factfilter.backend import MockBackend, register_backend\n"
            "register_backend('mock-wide', lambda: MockBackend(dim=8))\n")
        monkeypatch.setenv("FACTFILTER_BACKENDS", str(registry))
        out = tmp_path / "scores.jsonl"
        assert main(["score", "--in", str(toy), "--out", str(out),
                     "--scorers", "greedy", "--backend", "mock-wide"]) == 0
        assert len(out.read_text().splitlines()) == 50


class TestFilterCommand:
    def test_filter_and_refilter_identical_manifest(self, tmp_path, toy):
        scores = _score(tmp_path, toy)
        manifest_path = tmp_path / "manifest.json"
        args = ["filter", "--q", "0.25", "--scorers", "greedy,condll,dae",
                "--scores", str(scores), "--out", str(manifest_path),
                "--corpus-name", "toy"]
        assert main(args) == 0
        first = manifest_path.read_bytes()
        first_hash = FilterManifest.load(manifest_path).content_hash()
        assert main(args) == 0
        assert manifest_path.read_bytes() == first
        assert FilterManifest.load(manifest_path).content_hash() == first_hash

    def test_default_q_is_quarter(self, tmp_path, toy):
        scores = _score(tmp_path, toy)
        manifest_path = tmp_path / "manifest.json"
        assert main(["filter", "--scores", str(scores), "--out", str(manifest_path),
                     "--corpus-name", "toy"]) == 0
        assert FilterManifest.load(manifest_path).q == 0.25


class TestStatsCommand:
    def test_full_and_selection_rows(self, tmp_path, toy):
        scores = _score(tmp_path, toy)
        manifest_path = tmp_path / "manifest.json"
        main(["filter", "--scores", str(scores), "--out", str(manifest_path),
              "--corpus-name", "toy"])
        out = tmp_path / "stats.csv"
        assert main(["stats", "--in", str(toy), "--manifest", str(manifest_path),
                     "--scores", str(scores), "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("record,corpus,n_pairs")
        assert lines[1].startswith("full,toy,50")
        assert lines[2].startswith("selection,toy,")
        dist = tmp_path / "stats_distributions.csv"
        assert dist.exists()
        assert len(dist.read_text().splitlines()) == 1 + 3 * (5 + 10)


class TestEvaluateAndCompare:
    def _generated(self, toy, tmp_path, jitter=False):
        corpus = load_corpus(toy, name="toy")
        path = tmp_path / ("gen_b.jsonl" if jitter else "gen_a.jsonl")
        with path.open("w") as handle:
            for pair in corpus.split_pairs("test"):
                summary = pair.summary + " extra trailing words" if jitter else pair.summary
                handle.write(json.dumps({"id": pair.id, "summary": summary}) + "\n")
        return path

    def test_evaluate_and_compare_pipeline(self, tmp_path, toy):
        gen_a = self._generated(toy, tmp_path)
        gen_b = self._generated(toy, tmp_path, jitter=True)
        report_a = tmp_path / "report_a.csv"
        report_b = tmp_path / "report_b.csv"
        for gen, out in ((gen_a, report_a), (gen_b, report_b)):
            assert main(["evaluate", "--in", str(toy), "--generated", str(gen),
                         "--out", str(out), "--backend", "mock"]) == 0
        comparison = tmp_path / "comparison.csv"
        assert main(["compare", "--report-a", str(report_a),
                     "--report-b", str(report_b), "--out", str(comparison)]) == 0
        lines = comparison.read_text().strip().splitlines()
        assert lines[0].startswith("metric,mean_a,mean_b")
        assert len(lines) == 6  # five metrics

    def test_missing_generated_id_exits_two(self, tmp_path, toy):
        gen = tmp_path / "gen.jsonl"
        gen.write_text(json.dumps({"id": "toy-0041", "summary": "only one"}) + "\n")
        assert main(["evaluate", "--in", str(toy), "--generated", str(gen),
                     "--out", str(tmp_path / "r.csv"), "--backend", "mock"]) == 2


class TestAnnotationCommands:
    @pytest.fixture()
    def annotation_setup(self, tmp_path):
        import numpy as np

        from factfilter.scorers import FactualityScore, write_scores

        rng = np.random.default_rng(21)
        ann_path = tmp_path / "annotations.jsonl"
        cells = []
        with ann_path.open("w") as handle:
            for i in range(80):
                flags = {c: bool(rng.random() < 0.3) for c in CATEGORIES}
                factuality = 1.0 if not any(flags.values()) else float(rng.uniform(0, 0.8))
                summary_id = f"s{i:04d}"
                handle.write(json.dumps({
                    "summary_id": summary_id,
                    "dataset": ("cnndm", "xsum")[i % 2],
                    "system": ("sysA", "sysB")[i % 2 == 0],
                    "factuality": factuality,
                    "errors": flags,
                }) + "\n")
                noisy = min(1.0, max(-1.0, factuality + 0.05 * float(rng.normal())))
                cells.append(FactualityScore(
                    pair_id=summary_id, scorer="greedy", backend_name="mock",
                    backend_version="1", value=noisy, truncated=False))
        scores_path = tmp_path / "annotation_scores.jsonl"
        write_scores(cells, scores_path)
        return ann_path, scores_path

    def test_validate_frank_csv(self, tmp_path, annotation_setup):
        ann_path, scores_path = annotation_setup
        out = tmp_path / "validation.csv"
        assert main(["validate-frank", "--annotations", str(ann_path),
                     "--scores", str(scores_path), "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "scorer,dataset,r,n,n_covariates"
        # one scorer x (cnndm, xsum, all)
        assert len(lines) == 4

    def test_flip_analysis_csv(self, tmp_path, annotation_setup):
        ann_path, scores_path = annotation_setup
        out = tmp_path / "flips.csv"
        assert main(["flip-analysis", "--annotations", str(ann_path),
                     "--scores", str(scores_path), "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1 + 1 * 2 * 3  # scorer x datasets x categories


class TestSweepCommand:
    def test_sweep_csv(self, tmp_path, toy):
        scores = _score(tmp_path, toy)
        out = tmp_path / "sweep.csv"
        args = ["sweep", "--in", str(toy), "--scores", str(scores),
                "--out", str(out), "--thresholds", "0.1,0.25",
                "--strategies", "combined,random,single:greedy",
                "--seed", "7", "--backend", "mock"]
        assert main(args) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1 + 3 * 2
        assert lines[0].startswith("strategy,threshold,n_selected,ratio,status")
        first = out.read_bytes()
        assert main(args) == 0
        assert out.read_bytes() == first


class TestConfigFile:
    def test_config_supplies_defaults(self, tmp_path, toy):
        config = tmp_path / "run.json"
        scores = tmp_path / "scores.jsonl"
        config.write_text(json.dumps({
            "in": str(toy), "out": str(scores),
            "scorers": "greedy", "backend": "mock"}).replace('"in"', '"in_path"'))
        assert main(["score", "--config", str(config)]) == 0
        assert scores.exists()

    def test_cli_flags_override_config(self, tmp_path, toy):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"in_path": str(toy), "scorers": "greedy,condll"}))
        out = tmp_path / "scores.jsonl"
        assert main(["score", "--config", str(config), "--out", str(out),
                     "--scorers", "greedy"]) == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert {row["scorer"] for row in rows} == {"greedy"}

    def test_unknown_config_key_rejected(self, tmp_path, toy):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"frobnicate": 1}))
        assert main(["score", "--config", str(config)]) == 1


def test_console_entry_point_runs():
    result = subprocess.run([sys.executable, "-m", "factfilter.cli", "--help"],
                            capture_output=True, text=True)
    assert result.returncode == 0
    assert "factfilter" in result.stdout
