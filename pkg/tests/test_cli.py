import csv
import json

import pytest

from kae.cli import main, parse_grid
from kae.harness.presets import tiny_config
from kae.harness.train import read_csv_body


def body(path):
    return [row for row in csv.reader(ln for ln in path.read_text().splitlines() if not ln.startswith("#"))]


@pytest.fixture(scope="module")
def run(tmp_path_factory, corpus_path):
    root = tmp_path_factory.mktemp("cli")
    cfg = tiny_config(str(corpus_path), str(root / "run"), epochs=1)
    cfg.save(root / "cfg.json")
    assert main(["train", "--config", str(root / "cfg.json")]) == 0
    return root, root / "run" / "epoch_0001.ckpt"


def test_parse_grid():
    assert parse_grid("0:1:0.5") == [0.0, 0.5, 1.0]
    assert parse_grid("1,2.5") == [1.0, 2.5]
    assert len(parse_grid("-10:10:0.1")) == 201


def test_train_writes_logs_and_config(run):
    root, ck = run
    out = root / "run"
    assert ck.exists() and (out / "config.json").exists()
    assert (out / "train_log.csv").read_text().startswith("# seed=0 config_digest=")


def test_epoch_metrics_reproduce_training_row(run, tmp_path):
    root, ck = run
    assert main(["metrics", "--checkpoint", str(ck), "--protocol", "epoch", "--out-dir", str(tmp_path)]) == 0
    got = read_csv_body(tmp_path / "metrics.csv")[0]
    want = read_csv_body(root / "run" / "epoch_metrics.csv")[0]
    for k in want:
        if k != "mean_loss":
            assert got[k] == want[k], k


def test_sample_and_reconstruct(run, tmp_path, corpus_path):
    _, ck = run
    assert main(["sample", "--checkpoint", str(ck), "--n", "4", "--beam", "2", "--out-dir", str(tmp_path)]) == 0
    rows = body(tmp_path / "samples.csv")
    assert rows[0] == ["index", "smiles"] and len(rows) == 5
    inp = tmp_path / "in.txt"
    inp.write_text("CCO\nCC[Xe]\n")
    assert main(["reconstruct", "--checkpoint", str(ck), "--input", str(inp), "--out-dir", str(tmp_path)]) == 0
    statuses = [r[1] for r in body(tmp_path / "reconstruction.csv")[1:]]
    assert statuses[1] == "untokenizable"


def test_build_vocab(run, tmp_path):
    root, _ = run
    assert main(["build-vocab", "--config", str(root / "cfg.json"), "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "vocab.json").read_text())
    assert doc["size"] == len(doc["characters"]) + 3


def test_latent_pca_and_dataset_baseline(run, tmp_path):
    root, ck = run
    assert main(["latent-pca", "--checkpoint", str(ck), "--n", "8", "--n-gaussian", "64", "--out-dir", str(tmp_path)]) == 0
    sets = {r[0] for r in body(tmp_path / "latent_pca.csv")[1:]}
    assert sets == {"gaussian", "latent", "latent+noise"}
    assert main(["baseline-search", "--config", str(root / "cfg.json"), "--n-targets", "2",
                 "--out-dir", str(tmp_path)]) == 0
    assert len(body(tmp_path / "baseline_dataset.csv")) == 3


def test_errors_exit_nonzero(run, tmp_path, capsys):
    _, ck = run
    assert main(["sample", "--checkpoint", str(tmp_path / "missing.ckpt"), "--out-dir", str(tmp_path)]) == 1
    assert "kae sample: error:" in capsys.readouterr().err
    assert main(["sample", "--checkpoint", str(ck), "--condition", "2", "--out-dir", str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        main(["ses", "--out-dir", str(tmp_path)])
