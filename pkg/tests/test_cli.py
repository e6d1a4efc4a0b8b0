from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from abnormality.cli import RunConfig, main
from abnormality.corpus import ingest_file
from abnormality.featurize import build_matrix, fit_density
from abnormality.mahalanobis import fit_moments, read_scores_csv, regularized_factorize, score_all


def write_jsonl_fixture(path: Path, n: int = 12, seed: int = 3) -> Path:
    rng = np.random.default_rng(seed)
    vocab = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta"]
    with open(path, "w", encoding="utf-8") as f:
        for i in range(n):
            words = [vocab[int(j)] for j in rng.integers(0, len(vocab), size=int(rng.integers(4, 11)))]
            rec = {"context": " ".join(words), "title": f"T{i % 3}", "id": f"doc-{i}"}
            f.write(json.dumps(rec) + "\n")
    return path


def run_score(tmp_path: Path, corpus_path: Path, *extra: str) -> Path:
    out = tmp_path / "out"
    code = main([
        "score", "--input", str(corpus_path), "--format", "jsonl",
        "--out-dir", str(out), "--threads", "1", *extra,
    ])
    assert code == 0
    return out


class TestScoreCommand:
    def test_missing_input_exits_1(self, tmp_path, capsys):
        code = main(["score", "--input", str(tmp_path / "nope.jsonl"), "--out-dir", str(tmp_path / "o")])
        assert code == 1
        assert "not found" in capsys.readouterr().err

    def test_three_example_fixture_matches_library(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        corpus_path.write_text(
            '{"context":"a b a"}\n{"context":"b c d"}\n{"context":"a c"}\n', encoding="utf-8"
        )
        out = run_score(tmp_path, corpus_path)
        columns = read_scores_csv(out / "scores.csv")
        assert len(columns["score"]) == 3

        corpus = ingest_file(corpus_path, "jsonl")
        table = fit_density(corpus, 1)
        matrix = build_matrix(corpus, table)
        model = regularized_factorize(fit_moments(matrix))
        expected = score_all(model, matrix).scores
        assert columns["score"].tobytes() == expected.tobytes()

    def test_rerun_byte_identical(self, tmp_path):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out1 = run_score(tmp_path, corpus_path)
        snapshot = {p.name: p.read_bytes() for p in out1.iterdir()}
        out2 = tmp_path / "out2"
        code = main(["score", "--input", str(corpus_path), "--format", "jsonl",
                     "--out-dir", str(out2), "--threads", "2"])
        assert code == 0
        for name, data in snapshot.items():
            assert (out2 / name).read_bytes() == data, name

    def test_parse_error_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("not json\n", encoding="utf-8")
        code = main(["score", "--input", str(bad), "--format", "jsonl", "--out-dir", str(tmp_path / "o")])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_singular_corpus_exits_3(self, tmp_path, capsys):
        bad = tmp_path / "flat.jsonl"
        bad.write_text('{"context":"a b a"}\n' * 4, encoding="utf-8")
        code = main(["score", "--input", str(bad), "--format", "jsonl", "--out-dir", str(tmp_path / "o")])
        assert code == 3
        assert "numerical error" in capsys.readouterr().err

    def test_partial_artifacts_removed_on_failure(self, tmp_path):
        bad = tmp_path / "flat.jsonl"
        bad.write_text('{"context":"a b a"}\n' * 4, encoding="utf-8")
        out = tmp_path / "o"
        main(["score", "--input", str(bad), "--format", "jsonl", "--out-dir", str(out)])
        assert not out.exists() or not any(out.iterdir())

    def test_mid_write_failure_cleans_earlier_artifacts(self, tmp_path):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out = tmp_path / "o"
        (out / "model.bin").mkdir(parents=True)  # forces the model write to fail
        code = main(["score", "--input", str(corpus_path), "--format", "jsonl",
                     "--out-dir", str(out), "--threads", "1"])
        assert code == 1
        leftovers = {p.name for p in out.iterdir() if p.is_file()}
        assert leftovers == set()

    def test_expected_artifacts(self, tmp_path):
        out = run_score(tmp_path, write_jsonl_fixture(tmp_path / "c.jsonl"))
        names = {p.name for p in out.iterdir()}
        assert names == {"scores.csv", "scores.meta.json", "density.csv", "density.json", "model.bin", "model.json"}
        meta = json.loads((out / "scores.meta.json").read_text())
        assert meta["n"] == 12
        assert "hash" in meta["input"]


class TestSampleCommand:
    def test_capacity_exceeded_exits_1(self, tmp_path, capsys):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out = run_score(tmp_path, corpus_path)
        code = main(["sample", "--scores", str(out / "scores.csv"), "--out-dir", str(out)])
        assert code == 1  # default k totals 10500 exceed n=12
        assert "12" in capsys.readouterr().err

    def test_sample_writes_subset_and_manifest(self, tmp_path):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out = run_score(tmp_path, corpus_path)
        code = main([
            "sample", "--scores", str(out / "scores.csv"), "--out-dir", str(out),
            "--k-low", "2", "--k-high", "2", "--k-mean", "2",
        ])
        assert code == 0
        lines = (out / "subset.jsonl").read_text().splitlines()
        assert len(lines) == 6
        recs = [json.loads(l) for l in lines]
        assert all("score" in r and r["category"] in ("low", "mutual", "high") for r in recs)
        manifest = json.loads((out / "selection_manifest.json").read_text())
        assert manifest["counts"]["written"] == 6
        assert manifest["policy_echo"]["spec"]["k_low"] == 2

    def test_bucketed_strategy_echoed(self, tmp_path):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out = run_score(tmp_path, corpus_path)
        code = main([
            "sample", "--scores", str(out / "scores.csv"), "--out-dir", str(out),
            "--k-low", "1", "--k-high", "1", "--k-mean", "1",
            "--strategy", "bucketed", "--bucket-width", "250",
        ])
        assert code == 0
        manifest = json.loads((out / "selection_manifest.json").read_text())
        assert manifest["policy_echo"]["strategy"] == "bucketed"
        assert manifest["policy_echo"]["bucket_width"] == 250

    def test_stale_corpus_exits_2(self, tmp_path, capsys):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out = run_score(tmp_path, corpus_path)
        with open(corpus_path, "a", encoding="utf-8") as f:
            f.write('{"context":"late addition"}\n')
        code = main([
            "sample", "--scores", str(out / "scores.csv"), "--out-dir", str(out),
            "--k-low", "1", "--k-high", "1", "--k-mean", "1",
        ])
        assert code == 2
        assert "does not match" in capsys.readouterr().err

    def test_tampered_scores_exit_2(self, tmp_path):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out = run_score(tmp_path, corpus_path)
        scores_path = out / "scores.csv"
        scores_path.write_text(scores_path.read_text().replace("doc-0", "doc-X"), encoding="utf-8")
        code = main(["sample", "--scores", str(scores_path), "--out-dir", str(out),
                     "--k-low", "1", "--k-high", "1", "--k-mean", "1"])
        assert code == 2

    def test_squad_subset_format(self, tmp_path):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out = run_score(tmp_path, corpus_path)
        code = main([
            "sample", "--scores", str(out / "scores.csv"), "--out-dir", str(out),
            "--k-low", "1", "--k-high", "1", "--k-mean", "1", "--subset-format", "squad",
        ])
        assert code == 0
        doc = json.loads((out / "subset.json").read_text())
        assert sum(len(p["qas"]) for a in doc["data"] for p in a["paragraphs"]) == 3


class TestAnalyzeCommand:
    def test_report_fields(self, tmp_path):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out = run_score(tmp_path, corpus_path)
        code = main(["analyze", "--scores", str(out / "scores.csv"), "--out-dir", str(out)])
        assert code == 0
        summary = json.loads((out / "report" / "summary.json").read_text())
        assert "excess_kurtosis" in summary["score_stats"]
        assert summary["n"] == 12
        assert summary["dimension"] == json.loads((out / "scores.meta.json").read_text())["d"]

    def test_multiple_orders(self, tmp_path):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl", n=15, seed=5)
        out = run_score(tmp_path, corpus_path)
        code = main(["analyze", "--scores", str(out / "scores.csv"), "--out-dir", str(out),
                     "--orders", "1,3"])
        assert code == 0
        summary = json.loads((out / "report" / "summary.json").read_text())
        assert set(summary["pearson_by_order"]) == {"1", "3"}

    def test_degenerate_lengths_pearson_null_exit_0(self, tmp_path):
        # equal char lengths (pearson degenerate) but distinct word densities
        corpus_path = tmp_path / "same.jsonl"
        corpus_path.write_text(
            '{"context":"a b a"}\n{"context":"b c a"}\n{"context":"c c c"}\n{"context":"a b c"}\n',
            encoding="utf-8",
        )
        out = run_score(tmp_path, corpus_path)
        code = main(["analyze", "--scores", str(out / "scores.csv"), "--out-dir", str(out)])
        assert code == 0
        summary = json.loads((out / "report" / "summary.json").read_text())
        assert summary["pearson_by_order"]["1"] is None


class TestRunConfig:
    def test_json_round_trip(self):
        cfg = RunConfig(input="x.json", ngram=3, orders=(1, 3), l_cap=500, disjoint=False)
        back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config"):
            RunConfig.from_dict({"no_such_key": 1})

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        out = tmp_path / "out"
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "input": str(corpus_path), "format": "jsonl",
            "out_dir": str(tmp_path / "ignored"), "ngram": 1, "threads": 1,
        }), encoding="utf-8")
        code = main(["score", "--config", str(cfg_path), "--out-dir", str(out)])
        assert code == 0
        assert (out / "scores.csv").is_file()
        assert not (tmp_path / "ignored").exists()

    def test_invalid_config_value_exits_1(self, tmp_path, capsys):
        corpus_path = write_jsonl_fixture(tmp_path / "c.jsonl")
        code = main(["score", "--input", str(corpus_path), "--format", "jsonl",
                     "--out-dir", str(tmp_path / "o"), "--ngram", "0"])
        assert code == 1

    def test_validation_catches_bad_orders(self):
        cfg = RunConfig(orders=())
        with pytest.raises(ValueError):
            cfg.validate()

    def test_usage_error_exit_code(self):
        assert main([]) == 1
        assert main(["sample"]) == 1  # missing required --scores
