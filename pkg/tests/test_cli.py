import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from ral.cli import main, output_lock
from ral.config import ExperimentConfig
from ral.experiment import run_experiment
from ral.nn import Network, build_classifier, save_checkpoint


def tiny_config(tmp_path, **ral_overrides):
    ral = {"iterations": 1, "max_epochs": 2, "finetune_epochs": 1,
           "learning_rate": 0.002, "batch_size": 32}
    ral.update(ral_overrides)
    cfg = {
        "seed": 9,
        "dataset_path": str(tmp_path / "data"),
        "output_dir": str(tmp_path / "run"),
        "tiling": {"window": 16, "stride": 16},
        "network": {"channel_plan": [2, 4, 2]},
        "ral": ral,
        "synthetic": {"slide_size": [32, 32], "window": 16, "stride": 16,
                      "slides_per_class": 5, "contamination_rho": 0.25},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path, cfg


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestConfig:
    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ValueError, match="unknown experiment config keys"):
            ExperimentConfig.from_dict({"sed": 1})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ValueError, match="unknown ral config keys"):
            ExperimentConfig.from_dict({"ral": {"tau": 0.5, "taus": 0.4}})

    def test_round_trips_through_dict(self):
        cfg = ExperimentConfig.from_dict({"seed": 3, "tiling": {"window": 64}})
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_window_must_fit_network_pools(self):
        with pytest.raises(ValueError, match="divisible by 8"):
            ExperimentConfig.from_dict({"tiling": {"window": 20}})


class TestCommands:
    def test_generate_then_ral_writes_all_artifacts(self, tmp_path):
        cfg_path, cfg = tiny_config(tmp_path)
        assert main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]]) == 0
        assert main(["ral", "--config", str(cfg_path)]) == 0
        out = Path(cfg["output_dir"])
        for name in ("report.json", "table1.csv", "table3.csv", "audit.csv",
                     "checkpoint.ralw", "checkpoint.json"):
            assert (out / name).exists(), name
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["seed"] == 9
        assert report["oracle_metrics"] is not None
        assert len(report["iterations"]) <= 2

    def test_ral_is_byte_deterministic(self, tmp_path):
        cfg_path, cfg = tiny_config(tmp_path)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        out = Path(cfg["output_dir"])
        assert main(["ral", "--config", str(cfg_path)]) == 0
        first = {n: (out / n).read_bytes() for n in ("report.json", "audit.csv")}
        assert main(["ral", "--config", str(cfg_path)]) == 0
        for name, blob in first.items():
            assert (out / name).read_bytes() == blob, name

    def test_k_zero_single_row_with_full_count(self, tmp_path):
        cfg_path, cfg = tiny_config(tmp_path, iterations=0)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        assert main(["ral", "--config", str(cfg_path)]) == 0
        report = json.loads((Path(cfg["output_dir"]) / "report.json").read_text())
        assert len(report["iterations"]) == 1
        row = report["iterations"][0]
        # 16 train slides x 4 cells x 8 variants
        assert row["active_before"] == row["active_after"] == 16 * 4 * 8
        table1 = (Path(cfg["output_dir"]) / "table1.csv").read_text().splitlines()
        assert table1 == ["iteration,active_count", f"0,{row['active_after']}"]

    def test_dataset_directory_never_mutated(self, tmp_path):
        cfg_path, cfg = tiny_config(tmp_path)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        before = tree_digest(cfg["dataset_path"])
        main(["ral", "--config", str(cfg_path)])
        main(["tile", "--config", str(cfg_path), "--out", str(tmp_path / "tiles")])
        assert tree_digest(cfg["dataset_path"]) == before

    def test_tile_manifest_is_flat_record_array(self, tmp_path):
        cfg_path, cfg = tiny_config(tmp_path)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        assert main(["tile", "--config", str(cfg_path), "--out", str(tmp_path / "tiles")]) == 0
        manifest = json.loads((tmp_path / "tiles" / "manifest.json").read_text())
        assert isinstance(manifest, list)
        # 16 train slides x 4 grid cells x 8 variants
        assert len(manifest) == 16 * 4 * 8
        rec = manifest[0]
        assert set(rec) == {"patch_id", "slide_id", "grid_xy", "variant",
                            "group_id", "label", "active"}
        assert all(r["active"] for r in manifest)

    def test_csv_rows_reconcile_with_report(self, tmp_path):
        cfg_path, cfg = tiny_config(tmp_path, iterations=2)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        main(["ral", "--config", str(cfg_path)])
        out = Path(cfg["output_dir"])
        report = json.loads((out / "report.json").read_text())
        rows = (out / "table1.csv").read_text().splitlines()[1:]
        assert len(rows) == len(report["iterations"])
        for line, it in zip(rows, report["iterations"]):
            k, active = line.split(",")
            assert int(k) == it["k"] and int(active) == it["active_after"]
        audit_rows = (out / "audit.csv").read_text().splitlines()[1:]
        removed_in_report = sum(it["removed_by_confidence"] + it["removed_by_group"]
                                for it in report["iterations"])
        assert len(audit_rows) == removed_in_report

    def test_eval_chance_level_on_uniform_net(self, tmp_path):
        cfg_path, cfg = tiny_config(tmp_path)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        net = Network(build_classifier(16, (2, 4, 2)), seed=0)
        for p in net.parameters():
            p[:] = 0
        ckpt = tmp_path / "uniform.ralw"
        save_checkpoint(ckpt, net)
        assert main(["eval", "--config", str(cfg_path), "--checkpoint", str(ckpt),
                     "--out", str(tmp_path / "ev")]) == 0
        summary = json.loads((tmp_path / "ev" / "eval.json").read_text())
        # uniform probabilities -> argmax is always class 0 -> macro ACA = 25%
        assert summary["val"]["patch_acc"] == pytest.approx(25.0)
        assert summary["val"]["slice_acc"] == pytest.approx(25.0)

    def test_predict_slide_writes_class_map(self, tmp_path):
        cfg_path, cfg = tiny_config(tmp_path)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        net = Network(build_classifier(16, (2, 4, 2)), seed=0)
        ckpt = tmp_path / "m.ralw"
        save_checkpoint(ckpt, net)
        image = next((Path(cfg["dataset_path"]) / "val").rglob("*.ppm"))
        assert main(["predict-slide", "--config", str(cfg_path),
                     "--checkpoint", str(ckpt), "--image", str(image),
                     "--out", str(tmp_path / "pred")]) == 0
        maps = list((tmp_path / "pred").glob("classmap_*.ppm"))
        assert len(maps) == 1

    def test_missing_dataset_is_single_line_error(self, tmp_path, capsys):
        cfg_path, _ = tiny_config(tmp_path)
        code = main(["ral", "--config", str(cfg_path)])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("ral: error:")

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg_path, cfg = tiny_config(tmp_path)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        main(["ral", "--config", str(cfg_path), "--seed", "77"])
        report = json.loads((Path(cfg["output_dir"]) / "report.json").read_text())
        assert report["config"]["seed"] == 77


class TestLock:
    def test_concurrent_lock_rejected(self, tmp_path):
        out = tmp_path / "out"
        with output_lock(out):
            with pytest.raises(RuntimeError, match="locked"):
                with output_lock(out):
                    pass
        # released: can lock again
        with output_lock(out):
            pass

    def test_locked_output_dir_fails_command(self, tmp_path, capsys):
        cfg_path, cfg = tiny_config(tmp_path)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        out = Path(cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / ".lock").touch()
        assert main(["ral", "--config", str(cfg_path)]) == 1
        assert "locked" in capsys.readouterr().err


class TestRunExperiment:
    def test_empty_set_halt_reported(self, tmp_path):
        # zero learning rate keeps the net uniform: everything gets pruned
        cfg_path, cfg = tiny_config(tmp_path, learning_rate=0.0, max_epochs=1)
        main(["generate", "--config", str(cfg_path), "--out", cfg["dataset_path"]])
        config = ExperimentConfig.load(cfg_path)
        output = run_experiment(config, tmp_path / "halt")
        assert output.result.status == "empty_refined_set"
        report = json.loads((tmp_path / "halt" / "report.json").read_text())
        assert report["status"] == "empty_refined_set"
        assert report["iterations"][-1]["active_after"] == 0
        assert report["iterations"][-1]["train_patch_acc"] is None
