import csv
import json
import os
import subprocess
import sys
from dataclasses import asdict

import pytest

from commitprio.cli import COMMANDS, build_parser, main
from conftest import SMALL_SYNTH

SMALL_CONFIG = {
    "reps": 100, "ci_reps": 200,
    "gbdt": {"rounds": 15},
    "mlp": {"rounds": 10, "learning_rate": 0.001, "patience": 5},
    "synth": asdict(SMALL_SYNTH),
}


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return str(path)


@pytest.fixture
def corpus_dir(tmp_path, cfg_file):
    out = tmp_path / "corpus"
    assert main(["synthgen", "--config", cfg_file, "--out", str(out)]) == 0
    return str(out)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parser_knows_every_command():
    sub = next(a for a in build_parser()._actions if a.dest == "command")
    assert set(sub.choices) == set(COMMANDS)


def test_ingest_summary(corpus_dir, tmp_path, capsys):
    assert main(["ingest", "--corpus", corpus_dir, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert len(summary) == SMALL_SYNTH.projects
    assert json.loads((tmp_path / "o" / "ingest.json").read_text()) == summary


def test_features_csv(corpus_dir, tmp_path):
    assert main(["features", "--corpus", corpus_dir, "--out", str(tmp_path / "f")]) == 0
    rows = read_rows(tmp_path / "f" / "features.csv")
    assert rows and "cov_diff_signal" in rows[0] and rows[0]["fold"] == rows[0]["project"]


def test_prioritize_commit_c17(tmp_path, cfg_file):
    corpus = tmp_path / "c"
    cfg = dict(SMALL_CONFIG, synth=dict(SMALL_CONFIG["synth"], commits=20))
    (tmp_path / "c20.json").write_text(json.dumps(cfg))
    assert main(["synthgen", "--config", str(tmp_path / "c20.json"), "--out", str(corpus)]) == 0
    out = tmp_path / "p"
    code = main(["prioritize", "--corpus", str(corpus), "--commit", "c17", "--model", "gbdt",
                 "--config", cfg_file, "--out", str(out)])
    assert code == 0
    rows = read_rows(out / "ranking.csv")
    assert list(rows[0]) == ["position", "suite", "score", "strategy"]
    assert [int(r["position"]) for r in rows] == list(range(1, SMALL_SYNTH.suites + 1))
    scores = [float(r["score"]) for r in rows]
    assert scores == sorted(scores, reverse=True) and {r["strategy"] for r in rows} == {"gbdt"}


def test_train_then_prioritize_with_saved_model(corpus_dir, tmp_path, cfg_file):
    project = "Atlas"
    assert main(["train", "--corpus", corpus_dir, "--project", project, "--model", "gbdt",
                 "--config", cfg_file, "--out", str(tmp_path / "t")]) == 0
    model = tmp_path / "t" / "models" / "gbdt.json"
    imp = json.loads((tmp_path / "t" / "feature_importance.json").read_text())
    assert sum(r["importance"] for r in imp) == pytest.approx(1.0)
    common = ["--corpus", corpus_dir, "--commit", "c5", "--project", project, "--config", cfg_file]
    assert main(["prioritize", *common, "--model-file", str(model), "--out", str(tmp_path / "a")]) == 0
    assert main(["prioritize", *common, "--model", "gbdt", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "ranking.csv").read_bytes() == (tmp_path / "b" / "ranking.csv").read_bytes()


def test_evaluate(corpus_dir, tmp_path, cfg_file, capsys):
    assert main(["evaluate", "--corpus", corpus_dir, "--project", "Atlas", "--model", "gbdt",
                 "--config", cfg_file, "--out", str(tmp_path / "e")]) == 0
    cells = json.loads((tmp_path / "e" / "metrics.json").read_text())
    assert {c["scenario"] for c in cells} == {"with_diff", "without_diff"}
    assert "PR-AUC" in capsys.readouterr().out


def test_experiment_twice_identical(tmp_path, cfg_file):
    trees = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main(["experiment", "--config", cfg_file, "--seed", "7", "--out", str(out)]) == 0
        tree = {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        # the recorded config names its own output directory; everything else must match byte for byte
        recorded = json.loads(tree.pop("config.json"))
        assert recorded.pop("out") == str(out) and recorded.pop("corpus") == str(out / "corpus")
        trees.append((tree, recorded))
    assert trees[0] == trees[1]
    assert {"metrics.json", "stats.json", "feature_importance.csv", "summary.md"} <= set(trees[0][0])


def test_experiment_ablate_runs_without_only(tmp_path, cfg_file, corpus_dir):
    out = tmp_path / "x"
    assert main(["experiment", "--corpus", corpus_dir, "--config", cfg_file, "--ablate", "diff",
                 "--model", "gbdt", "--out", str(out)]) == 0
    cells = json.loads((out / "metrics.json").read_text())["cells"]
    assert {c["scenario"] for c in cells} == {"without_diff"}
    assert json.loads((out / "stats.json").read_text()) == []


def test_missing_executions_exit_1(corpus_dir, tmp_path, capsys):
    os.remove(f"{corpus_dir}/Borealis/executions.csv")
    assert main(["ingest", "--corpus", corpus_dir]) == 1
    assert "Borealis/executions.csv" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus"], ["ingest", "--nope"], [], ["evaluate", "--corpus", "x"],
                                  ["experiment", "--reps", "0"], ["experiment", "--model", "svm"]])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_unknown_commit_exit_1(corpus_dir, capsys):
    assert main(["prioritize", "--corpus", corpus_dir, "--commit", "nope"]) == 1
    assert "nope" in capsys.readouterr().err


def test_bad_config_exit_1(tmp_path):
    (tmp_path / "bad.json").write_text('{"reps": 10, "typo": 1}')
    assert main(["experiment", "--config", str(tmp_path / "bad.json")]) == 1


def test_internal_error_exit_2(monkeypatch, corpus_dir, capsys):
    import commitprio.cli as cli

    def boom(*_):
        raise RuntimeError("kaboom")
    monkeypatch.setitem(cli.HANDLERS, "ingest", boom)
    assert main(["ingest", "--corpus", corpus_dir]) == 2
    assert "kaboom" in capsys.readouterr().err


def test_help_exit_0():
    assert main(["--help"]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "commitprio", "ingest", "--corpus", str(tmp_path / "none")],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and "none" in proc.stderr and proc.stdout == ""
