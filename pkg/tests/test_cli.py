import json

import numpy as np
import pytest

from xferbench import imageprep as ip
from xferbench.cli import main
from xferbench.dataset import Dataset, save_tabular


@pytest.fixture
def workspace(tmp_path):
    rng = np.random.default_rng(0)
    cfg = {
        "protocol": "cross_domain",
        "datasets": {
            "generator": {"kind": "covariate_shift", "n_per_class": 25, "d": 3, "shift": 0.5}
        },
        "algorithms": [
            {"name": "knn", "params": {"k": 3}},
            {"name": "dm_knn", "params": {"m": 4}},
        ],
        "iterations": 2,
        "master_seed": 1,
        "split": {"test_fraction": 0.3},
        "output_dir": str(tmp_path / "out"),
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(cfg))

    imgs = tmp_path / "imgs"
    imgs.mkdir()
    for i in range(2):
        ip.save_image(ip.ImageChip(rng.uniform(0, 1, (24, 20, 3))), imgs / f"i{i}.png")
    ip.save_image(ip.ImageChip(rng.uniform(0, 1, (16, 16, 1))), imgs / "g.pgm")

    feats = rng.normal(size=(40, 3))
    labels = np.repeat([0, 1], 20)
    feats[labels == 1] += 3.0
    ds = Dataset(features=feats, labels=labels, domains=np.zeros(40, int), class_names=("neg", "pos"))
    save_tabular(ds, tmp_path / "train.csv", label_column="cls")
    return tmp_path, config_path


class TestRun:
    def test_run_writes_report_files(self, workspace, capsys):
        tmp_path, config = workspace
        rc = main(["run", "--config", str(config)])
        assert rc == 0
        out = tmp_path / "out"
        assert (out / "report.json").exists()
        assert (out / "iterations.csv").exists()
        assert (out / "accuracy.svg").exists()

    def test_missing_config_exit_code_1(self, workspace, capsys):
        assert main(["run", "--config", "/nonexistent/c.json"]) == 1

    def test_bad_algorithm_exit_code_1(self, workspace, tmp_path):
        _, config = workspace
        raw = json.loads(config.read_text())
        raw["algorithms"] = [{"name": "nope"}]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(raw))
        assert main(["run", "--config", str(bad)]) == 1

    def test_runtime_loss_exit_code_2(self, workspace, tmp_path):
        _, config = workspace
        raw = json.loads(config.read_text())
        raw["algorithms"] = [{"name": "dm_knn", "params": {"m": 4, "k_graph": 10_000}}]
        raw["output_dir"] = str(tmp_path / "out2")
        bad = tmp_path / "lossy.json"
        bad.write_text(json.dumps(raw))
        assert main(["run", "--config", str(bad)]) == 2

    def test_seed_override_changes_results(self, workspace, tmp_path):
        _, config = workspace
        rc = main(["run", "--config", str(config), "--out", str(tmp_path / "a"), "--seed", "99"])
        assert rc == 0
        rc = main(["run", "--config", str(config), "--out", str(tmp_path / "b")])
        assert rc == 0
        a = json.loads((tmp_path / "a" / "report.json").read_text())
        b = json.loads((tmp_path / "b" / "report.json").read_text())
        assert a["config"]["master_seed"] == 99
        assert a["iterations"] != b["iterations"]


class TestDegrade:
    def test_degrades_directory(self, workspace, tmp_path):
        ws, _ = workspace
        out = tmp_path / "deg"
        rc = main(["degrade", "--in", str(ws / "imgs"), "--out", str(out), "--final", "14x14"])
        assert rc == 0
        produced = sorted(p.name for p in out.iterdir())
        assert produced == ["g.pgm", "i0.png", "i1.png"]
        chip = ip.load_image(out / "i0.png")
        assert (chip.width, chip.height) == (14, 14)

    def test_empty_directory_is_config_error(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = main(["degrade", "--in", str(empty), "--out", str(tmp_path / "o"), "--final", "10x10"])
        assert rc == 1

    def test_bad_size_spec(self, workspace, tmp_path, capsys):
        ws, _ = workspace
        with pytest.raises(SystemExit):
            main(["degrade", "--in", str(ws / "imgs"), "--out", str(tmp_path / "o"), "--final", "14"])


class TestEmbedAndReport:
    def test_embed_dumps_csv(self, workspace, tmp_path):
        _, config = workspace
        rc = main(["embed", "--config", str(config), "--out", str(tmp_path / "emb")])
        assert rc == 0
        lines = (tmp_path / "emb" / "embedding.csv").read_text().strip().splitlines()
        assert lines[0].startswith("id,domain,c0")
        assert len(lines) > 1

    def test_report_rerenders_svg(self, workspace, tmp_path):
        ws, config = workspace
        assert main(["run", "--config", str(config)]) == 0
        svg = tmp_path / "again.svg"
        rc = main(["report", "--in", str(ws / "out" / "report.json"), "--svg", str(svg)])
        assert rc == 0
        assert "bar-knn" in svg.read_text()


class TestTrainPredict:
    @pytest.mark.parametrize("algo", ["knn", "svm_linear", "svm_rbf", "mlp"])
    def test_train_then_predict(self, workspace, tmp_path, algo):
        ws, _ = workspace
        model_path = tmp_path / f"{algo}.bin"
        rc = main([
            "train", "--data", str(ws / "train.csv"), "--label-column", "cls",
            "--algo", algo, "--out", str(model_path),
            "--epochs", "80", "--learn-rate", "0.05",
        ])
        assert rc == 0 and model_path.exists()
        preds = tmp_path / f"{algo}_preds.csv"
        rc = main([
            "predict", "--model", str(model_path), "--data", str(ws / "train.csv"),
            "--label-column", "cls", "--out", str(preds),
        ])
        assert rc == 0
        lines = preds.read_text().strip().splitlines()
        assert lines[0] == "prediction"
        assert len(lines) == 41
        # the task is trivially separable: training-set predictions match
        truth = ["neg"] * 20 + ["pos"] * 20
        assert sum(p == t for p, t in zip(lines[1:], truth)) >= 38
