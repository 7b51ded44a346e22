import json

import pytest

from spgc.cli import format_stats_row, main

MOLS = "CCO\nCC=O\nC1CC1\nCC(C)O\nCCN\nC=CC\nOCCO\nCC#N\nCN(C)C\nCOC\n" * 3


@pytest.fixture
def corpus(tmp_path):
    path = tmp_path / "mols.smi"
    path.write_text(MOLS)
    return path


@pytest.fixture
def ckpt(tmp_path, corpus, capsys):
    out = tmp_path / "m.npz"
    assert main(["train", str(corpus), "-o", str(out), "--epochs", "3", "--n-S", "2", "--n-I", "2", "--n-c", "2"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["epochs"] == 3 and summary["val_nll"] is None
    return out


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_ingest_and_stats(tmp_path, corpus, capsys):
    ds = tmp_path / "d.jsonl"
    code, out, _ = run(["ingest", corpus, "-o", ds], capsys)
    assert code == 0 and json.loads(out)["graphs"] == 30
    code, out, _ = run(["stats", ds, "--name", "toy"], capsys)
    assert out == "toy      & 30 & 4 & 3 & 3 & 3\\\\\n"
    code, out, _ = run(["stats", corpus, "--format", "json"], capsys)
    assert json.loads(out)["n_max"] == 4


def test_stats_row_format():
    row = format_stats_row("QM9", {"size": 133885, "n_max": 9, "m_max": 12, "n_V": 4, "n_E": 3})
    assert row == "QM9      & 133,885 & 9 & 12 & 4 & 3\\\\"


def test_train_eval_sample_metrics(tmp_path, corpus, ckpt, capsys):
    code, out, _ = run(["eval-nll", ckpt, corpus], capsys)
    assert code == 0 and json.loads(out)["n"] == 30
    samples = tmp_path / "s.smi"
    code, _, err = run(["sample", ckpt, "--count", "25", "--format", "smiles", "-o", samples], capsys)
    assert code == 0 and "fallbacks" in err
    assert len(samples.read_text().splitlines()) == 25
    code, out, _ = run(["sample", ckpt, "--count", "7"], capsys)
    assert len(out.splitlines()) == 7 and all("nodes" in json.loads(line) for line in out.splitlines())
    code, out, _ = run(["metrics", tmp_path / "s.smi", "--train", corpus, "--model", ckpt], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["n_samples"] == 25 and 0 <= rep["validity"] <= 1


def test_cond_sample_contains_evidence(ckpt, capsys):
    code, out, _ = run(["cond-sample", ckpt, "--smiles", "CO", "--count", "10", "--format", "smiles"], capsys)
    assert code == 0 and len(out.splitlines()) == 10
    assert all("O" in line for line in out.splitlines())


def test_sample_is_deterministic(ckpt, capsys):
    outs = [run(["sample", ckpt, "--count", "30", "--seed", "5"], capsys)[1] for _ in range(2)]
    assert outs[0] == outs[1]
    assert run(["--seed", "6", "sample", ckpt, "--count", "30"], capsys)[1] != outs[0]


def test_checkpoint_bytes_deterministic(tmp_path, corpus):
    paths = [tmp_path / f"m{i}.npz" for i in range(2)]
    for p in paths:
        assert main(["train", str(corpus), "-o", str(p), "--epochs", "2", "--n-S", "2", "--n-I", "2", "--n-c", "2"]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_grad_check_and_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 3\ncircuit: {n_L: 1, n_S: 2, n_I: 2, n_c: 2}\n")
    code, out, _ = run(["grad-check", "--models", "3", "--config", cfg], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and rep["checked"] == 3 and "max_abs_error" in rep
    code, _, err = run(["grad-check", "--models", "2", "--tol", "0", "--config", cfg], capsys)
    assert code == 3 and err.startswith("spgc: numerical error:")


def test_grid(tmp_path, corpus, capsys):
    cfg = tmp_path / "g.yaml"
    cfg.write_text("circuit: {n_L: 1, n_S: 2, n_I: 2, n_c: 2}\noptimizer: {epochs: 1}\ngrid: {n_I: [2, 3], n_L: [1, 9]}\n")
    code, out, _ = run(["grid", corpus, "--config", cfg, "--validity-samples", "20"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "rank,params,val_nll,validity,error" and len(lines) == 5
    assert "ConfigurationError" in lines[-1] and "ConfigurationError" not in lines[1]


def test_bench_small(capsys):
    code, out, _ = run(["bench", "--schemas", "qm9", "--batch-size", "4", "--n-S", "2", "--n-I", "2", "--n-c", "2"], capsys)
    assert code == 0 and len(out.splitlines()) == 3


@pytest.mark.parametrize(
    "argv,code,prefix",
    [
        (["frobnicate"], 1, "spgc: usage error:"),
        (["sample"], 1, "spgc: usage error:"),
        (["bench", "--repetitions", "2"], 1, "spgc: usage error:"),
        (["bench", "--schemas", "nope"], 1, "spgc: usage error:"),
        (["stats", "/nonexistent/file.smi"], 2, "spgc: data error:"),
        (["train", "{bad}", "-o", "x.npz", "--n-L", "0"], 2, "spgc: data error:"),
    ],
)
def test_exit_codes(argv, code, prefix, capsys):
    got, _, err = run(argv, capsys)
    assert got == code and err.startswith(prefix)


def test_bad_smiles_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.smi"
    path.write_text("CCO\nC(\n")
    code, _, err = run(["ingest", path, "-o", tmp_path / "o.jsonl"], capsys)
    assert code == 2 and ":2:" in err
    code, out, err = run(["ingest", path, "-o", tmp_path / "o.jsonl", "--skip-invalid"], capsys)
    assert code == 0 and "warning" in err


def test_bad_config(tmp_path, corpus, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("optimizer: {learning_rate: -1}\n")
    code, _, err = run(["train", corpus, "-o", tmp_path / "m.npz", "--config", cfg], capsys)
    assert code == 1 and err.startswith("spgc: usage error:")
    cfg.write_text("- just a list\n")
    assert run(["grad-check", "--config", cfg], capsys)[0] == 1
