import csv
import json

import numpy as np
import pytest

from mcoco.cli import main, pca_2d
from mcoco.config import ConfigError, parse_config
from mcoco.data import MultiViewDataset, load_dataset, save_dataset

TOY = """
# toy run
hidden_dims = 16
latent_dim = 3
generator_hidden = 8
batch_size = 32
pretrain_epochs = 3
train_epochs = 2
"""


def test_parse_config_round_trip():
    cfg = parse_config(TOY + "view_hidden_dims = 8,4; 6\nuse_se = no\ndataset = d\n")
    assert cfg.training.hidden_dims == [16]
    assert cfg.training.view_hidden_dims == [[8, 4], [6]]
    assert cfg.training.use_se is False
    assert cfg.dataset == "d"
    again = parse_config(cfg.dumps())
    assert again.training == cfg.training and again.dataset == "d"


@pytest.mark.parametrize("text, msg", [
    ("bogus = 1", "unknown key"),
    ("k = 1", "k must be"),
    ("tau = -0.5", "tau"),
    ("k 3", "expected"),
    ("k = three", "bad value"),
    ("k = 3\nk = 4", "duplicate"),
])
def test_parse_config_rejects(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "d"
    assert main(["synth", "--n", "300", "--k", "3", "--views", "2", "--seed", "7", "--out", str(out)]) == 0
    return out


@pytest.fixture
def config(tmp_path, dataset):
    path = tmp_path / "run.cfg"
    path.write_text(TOY + f"dataset = {dataset}\n")
    return path


def test_synth(tmp_path, dataset):
    names = sorted(p.name for p in dataset.iterdir())
    assert names == ["labels.bin", "manifest.json", "view_0.bin", "view_1.bin"]
    again = tmp_path / "again"
    main(["synth", "--n", "300", "--k", "3", "--views", "2", "--seed", "7", "--out", str(again)])
    for name in names:
        assert (dataset / name).read_bytes() == (again / name).read_bytes()


def test_synth_rejects_single_view(tmp_path, capsys):
    assert main(["synth", "--views", "1", "--out", str(tmp_path / "x")]) == 1
    assert "n_views" in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    assert main(["train"]) == 1
    assert main(["nonsense"]) == 1


def test_train_eval_project(tmp_path, dataset, config):
    before = {p.name: p.read_bytes() for p in dataset.iterdir()}
    run = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(run)]) == 0
    records = [json.loads(line) for line in (run / "trace.jsonl").read_text().splitlines()]
    assert len(records) == 2
    metrics = json.loads((run / "metrics.json").read_text())
    assert set(metrics) == {"acc", "nmi", "rand_index", "fscore", "n", "k", "m", "seed"}

    ev = tmp_path / "eval"
    assert main(["eval", "--checkpoint", str(run / "checkpoint.mcoco"), "--dataset", str(dataset),
                 "--out", str(ev)]) == 0
    report = json.loads((ev / "metrics.json").read_text())
    for key in ("acc", "nmi", "rand_index", "fscore"):
        assert report[key] == records[-1][key]
    labels = np.loadtxt(ev / "labels.txt", dtype=int)
    assert labels.shape == (300,)

    proj = tmp_path / "proj.csv"
    assert main(["project", "--checkpoint", str(run / "checkpoint.mcoco"), "--dataset", str(dataset),
                 "--view", "1", "--out", str(proj)]) == 0
    rows = list(csv.reader(proj.open()))
    assert rows[0] == ["x", "y", "fused_label", "true_label"]
    assert len(rows) == 301
    assert main(["project", "--checkpoint", str(run / "checkpoint.mcoco"), "--dataset", str(dataset),
                 "--view", "2", "--out", str(proj)]) == 1

    tsne_a, tsne_b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (tsne_a, tsne_b):
        assert main(["project", "--checkpoint", str(run / "checkpoint.mcoco"), "--dataset", str(dataset),
                     "--method", "tsne", "--seed", "3", "--out", str(out)]) == 0
    assert tsne_a.read_bytes() == tsne_b.read_bytes()

    assert {p.name: p.read_bytes() for p in dataset.iterdir()} == before


def test_train_deterministic_and_ablation(tmp_path, config):
    outs = []
    for name in ("a", "b"):
        assert main(["train", "--config", str(config), "--out", str(tmp_path / name)]) == 0
        outs.append(json.loads((tmp_path / name / "metrics.json").read_text()))
    assert outs[0] == outs[1]

    assert main(["train", "--config", str(config), "--out", str(tmp_path / "nose"), "--ablation", "no-se"]) == 0
    records = [json.loads(line) for line in (tmp_path / "nose" / "trace.jsonl").read_text().splitlines()]
    assert all(r["semantic"] == 0.0 for r in records)


def test_resume_continues_trace(tmp_path, config):
    run = tmp_path / "run"
    main(["train", "--config", str(config), "--out", str(run)])
    more = tmp_path / "more"
    assert main(["train", "--config", str(config), "--out", str(more),
                 "--resume", str(run / "checkpoint.mcoco")]) == 0
    epochs = [json.loads(line)["epoch"] for line in (more / "trace.jsonl").read_text().splitlines()]
    assert epochs == [1, 2, 3, 4]


def test_eval_without_labels_and_wrong_dims(tmp_path, dataset, config):
    run = tmp_path / "run"
    main(["train", "--config", str(config), "--out", str(run)])
    ds = load_dataset(dataset)
    save_dataset(MultiViewDataset(ds.views), tmp_path / "nolabels")
    ev = tmp_path / "ev"
    assert main(["eval", "--checkpoint", str(run / "checkpoint.mcoco"),
                 "--dataset", str(tmp_path / "nolabels"), "--out", str(ev)]) == 0
    report = json.loads((ev / "metrics.json").read_text())
    assert report["acc"] is None and report["fscore"] is None
    assert (ev / "labels.txt").exists()

    save_dataset(MultiViewDataset([ds.views[0][:, :5], ds.views[1]]), tmp_path / "narrow")
    bad = tmp_path / "bad"
    assert main(["eval", "--checkpoint", str(run / "checkpoint.mcoco"),
                 "--dataset", str(tmp_path / "narrow"), "--out", str(bad)]) == 1
    assert not bad.exists()


def test_pca_on_2d_latent_is_rotation(rng):
    z = rng.normal(size=(50, 2)) @ np.array([[3.0, 1.0], [0.0, 0.5]])
    xy = pca_2d(z)
    centered = z - z.mean(0)
    rot, *_ = np.linalg.lstsq(centered, xy, rcond=None)
    np.testing.assert_allclose(rot.T @ rot, np.eye(2), atol=1e-10)
    np.testing.assert_allclose(centered @ rot, xy, atol=1e-10)
