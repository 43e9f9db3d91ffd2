import json
import os

import pytest

from rashomon_quartet.cli import main, write_atomic


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _run(*argv):
    return main(list(argv))


def test_generate_is_reproducible(workdir):
    assert _run("generate", "--n-train", "50", "--n-test", "60", "--out-dir", "a") == 0
    assert _run("generate", "--n-train", "50", "--n-test", "60", "--out-dir", "b") == 0
    for name in ("rq_train.csv", "rq_test.csv"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()
    m = json.loads((workdir / "a" / "generate.manifest.json").read_text())
    assert m["seed"] == 1568 and m["subcommand"] == "generate"
    assert m["config"]["config"]["theta2"] == pytest.approx(1 / 3)
    assert sorted(os.path.basename(p) for p in m["outputs"]) == ["rq_test.csv", "rq_train.csv"]


def test_pipeline(workdir, capsys):
    assert _run("generate", "--n-train", "300", "--n-test", "200", "--out-dir", "d") == 0
    assert _run("train", "--train", "d/rq_train.csv", "--n-trees", "5", "--max-epochs", "300", "--min-split", "50", "--out-dir", "m") == 0
    models = sorted(str(p) for p in (workdir / "m").glob("*.json"))  # includes the manifest, which is skipped
    assert _run("eval", "--models", *models, "--test", "d/rq_test.csv", "--out", "perf.json") == 0
    perf = json.loads((workdir / "perf.json").read_text())
    assert set(perf["models"]) == {"linear regression", "decision tree", "random forest", "neural network"}
    assert _run("pdp", "--models", "m/linear.json", "--data", "d/rq_test.csv", "--n-boot", "3", "--out", "pdp.csv", "--svg", "pdp.svg") == 0
    assert _run("importance", "--models", "m/tree.json", "--test", "d/rq_test.csv", "--out", "imp.csv") == 0
    assert _run("residuals", "--models", "m/linear.json", "m/tree.json", "--test", "d/rq_test.csv", "--out", "res.csv", "--svg", "res.svg") == 0
    assert _run("plot", "residual_parcoord", "res.csv", "--out", "res2.svg") == 0
    assert (workdir / "res.svg").read_bytes() == (workdir / "res2.svg").read_bytes()
    assert _run("plot", "pdp_grid", "pdp.csv", "--out", "pdp2.svg") == 0
    assert _run("plot", "pairs_matrix", "d/rq_train.csv", "d/rq_test.csv", "--out", "pairs.svg") == 0
    assert (workdir / "pdp.manifest.json").exists()
    out = capsys.readouterr().out
    assert "R2" in out and "residual correlation" in out


def test_rerun_reproduces_outputs(workdir):
    assert _run("generate", "--n-train", "20", "--n-test", "20", "--seed", "4", "--out-dir", "d") == 0
    first = (workdir / "d" / "rq_train.csv").read_bytes()
    (workdir / "d" / "rq_train.csv").unlink()
    assert _run("rerun", "d/generate.manifest.json") == 0
    assert (workdir / "d" / "rq_train.csv").read_bytes() == first


def test_forge_and_resume(workdir):
    args = ["forge", "--seed-stop", "2", "--budget", "2", "--n-train", "200", "--n-test", "200", "--n-inits", "1", "--prune-above", "1e-9", "--out", "f/runs.jsonl"]
    assert _run(*args) == 0
    lines = (workdir / "f" / "runs.jsonl").read_text().splitlines()
    assert len(lines) == 2 and all(json.loads(l)["status"] == "pruned" for l in lines)
    assert _run(*args, "--resume") == 0
    assert len((workdir / "f" / "runs.jsonl").read_text().splitlines()) == 2
    assert (workdir / "f" / "runs.summary.json").exists()


def test_couple(workdir, capsys):
    assert _run("couple", "--svg", "c.svg") == 0
    assert "0.366025403784" in capsys.readouterr().out
    assert (workdir / "c.svg").read_text().startswith("<?xml")


def test_exit_codes(workdir, capsys):
    with pytest.raises(SystemExit) as e:
        _run("no-such-command")
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        _run("eval", "--test", "x.csv")  # --models missing
    assert e.value.code == 2
    assert _run("eval", "--models", "missing.json", "--test", "missing.csv") == 2
    (workdir / "bad.csv").write_text("y;x1\n1;oops\n")
    (workdir / "m.json").write_text("{}")
    assert _run("eval", "--models", "m.json", "--test", "bad.csv") == 1
    assert "error:" in capsys.readouterr().err
    assert _run("generate", "--rho", "1.5", "--out-dir", "g") == 1
    assert not (workdir / "g").exists()  # nothing written on failure


def test_write_atomic_leaves_no_temp_files(tmp_path):
    write_atomic(tmp_path / "sub" / "f.txt", "hello\n")
    assert os.listdir(tmp_path / "sub") == ["f.txt"]
    assert (tmp_path / "sub" / "f.txt").read_text() == "hello\n"


def test_number_lists():
    from rashomon_quartet.cli import UsageError, _floats

    assert _floats("0.4:0.6:0.1") == [0.4, 0.5, 0.6]
    assert _floats("1/3, 0.5") == [1 / 3, 0.5]
    for bad in ("a", "0:1:0", ","):
        with pytest.raises(UsageError):
            _floats(bad)


def test_select_without_a_passing_candidate(workdir):
    args = ["forge", "--seed-stop", "2", "--budget", "2", "--n-train", "200", "--n-test", "300", "--n-inits", "1", "--out", "r.jsonl"]
    assert _run(*args) == 0
    assert _run("select", "--runs", "r.jsonl", "--out", "s.json") == 1
    assert not (workdir / "s.json").exists()


def test_select_reproduces_shipped_choice(tmp_path):
    from pathlib import Path

    shipped = Path(__file__).resolve().parent.parent / "quartet"
    out = tmp_path / "selection.json"
    assert _run("select", "--runs", str(shipped / "sweep.jsonl"), "--out", str(out)) == 0
    assert out.read_bytes() == (shipped / "selection.json").read_bytes()
