import json
import subprocess
import sys

import numpy as np
import pytest

from fimkit import config as cfgmod
from fimkit.cli import FAILED_MARKER, TIMINGS_FILE, main
from fimkit.config import ConfigError, RunConfig
from fimkit.data import load_csv
from fimkit.diffusion import load_matrix
from fimkit.nn import load_mlp

SMALL = ["data.n_branches=3", "data.per_branch=20", "data.dim=3", "network.arch=[12,6]",
         "training.epochs=4", "training.batch_size=10", "training.pairs_per_batch=32",
         "kernel.knn=5", "diffusion.t=10", "mds.max_iters=50"]


def run(args, overrides=()):
    argv = list(args)
    for o in overrides:
        argv += ["--set", o]
    return main(argv)


def error_line(capsys):
    lines = [l for l in capsys.readouterr().err.splitlines() if l]
    assert len(lines) == 1
    return lines[0]


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = RunConfig()
        assert cfgmod.from_dict(json.loads(cfg.dumps())).to_dict() == cfg.to_dict()

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="kernel.bandwidth"):
            cfgmod.from_dict({"kernel": {"bandwidth": 3}})
        with pytest.raises(ConfigError, match="extra"):
            cfgmod.from_dict({"extra": {}})

    def test_version_checked(self):
        with pytest.raises(ConfigError, match="version"):
            cfgmod.from_dict({"version": 99})

    def test_override_parsing(self):
        cfg = RunConfig()
        cfgmod.set_value(cfg, "network.arch=[8,4]")
        cfgmod.set_value(cfg, "kernel.kind=fixed-gaussian")
        cfgmod.set_value(cfg, "diffusion.t=12.5")
        assert cfg.network.arch == [8, 4] and cfg.kernel.kind == "fixed-gaussian" and cfg.diffusion.t == 12.5
        with pytest.raises(ConfigError):
            cfgmod.set_value(cfg, "arch=[1]")
        with pytest.raises(ConfigError):
            cfgmod.set_value(cfg, "nosection.x=1")

    def test_override_beats_file(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps({"diffusion": {"t": 5.0}, "training": {"epochs": 7}}))
        cfg = cfgmod.load(str(f), ["diffusion.t=9"])
        assert cfg.diffusion.t == 9 and cfg.training.epochs == 7

    def test_env_directory(self, tmp_path, monkeypatch):
        (tmp_path / "default.json").write_text(json.dumps({"training": {"epochs": 3}}))
        (tmp_path / "other.json").write_text(json.dumps({"training": {"epochs": 5}}))
        monkeypatch.setenv(cfgmod.CONFIG_DIR_ENV, str(tmp_path))
        assert cfgmod.load().training.epochs == 3
        assert cfgmod.load("other.json").training.epochs == 5
        monkeypatch.delenv(cfgmod.CONFIG_DIR_ENV)
        assert cfgmod.load().training.epochs == RunConfig().training.epochs

    def test_validation(self):
        cfg = RunConfig()
        cfg.training.epochs = "ten"
        with pytest.raises(ConfigError, match="training.epochs"):
            cfgmod.validate(cfg)
        cfg = RunConfig()
        cfg.network.fim_mode = "other"
        with pytest.raises(ConfigError, match="fim_mode"):
            cfgmod.validate(cfg)

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            cfgmod.load("/nonexistent/x.json")


class TestGen:
    def test_tree(self, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["gen", "tree", "--branches", "4", "--per-branch", "25", "--dim", "6",
                     "--seed", "1", "--out", str(out)]) == 0
        pc = load_csv(out, has_header=True, label_column="label", intrinsic_columns=["z0", "z1"])
        assert pc.points.shape == (100, 6)
        assert json.loads(out.with_suffix(".json").read_text())["rows"] == 100

    def test_swiss_roll(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["gen", "swiss-roll", "--n", "1000", "--out", str(out)]) == 0
        pc = load_csv(out, has_header=True, intrinsic_columns=["z0", "z1"])
        assert pc.points.shape == (1000, 3) and pc.intrinsic.shape == (1000, 2)

    def test_usage_error(self, capsys):
        assert main([]) == 2
        assert main(["pipeline"]) == 2


class TestPipeline:
    def test_outputs_and_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["pipeline", "--out", str(a)], SMALL) == 0
        assert run(["pipeline", "--out", str(b)], SMALL) == 0
        files = sorted(p.name for p in a.iterdir())
        assert files == sorted(["config.json", "fim_field.csv", "loss.csv", "model.json", "summary.json",
                                "targets.csv", TIMINGS_FILE])
        for name in files:
            if name != TIMINGS_FILE:
                assert (a / name).read_bytes() == (b / name).read_bytes(), name
        field = load_matrix(a / "fim_field.csv", has_header=True)
        assert field.shape == (60, 1 + 3 + 2 + 3)
        assert load_matrix(a / "targets.csv", has_header=True).shape == (60, 6)
        assert load_matrix(a / "loss.csv", has_header=True).shape == (4, 2)
        assert load_mlp(a / "model.json").layer_dims == [3, 12, 6]
        echoed = json.loads((a / "config.json").read_text())
        assert echoed["network"]["arch"] == [12, 6] and echoed["training"]["epochs"] == 4

    def test_csv_input(self, tmp_path):
        data = tmp_path / "t.csv"
        main(["gen", "tree", "--branches", "3", "--per-branch", "20", "--dim", "3", "--out", str(data)])
        out = tmp_path / "o"
        assert run(["pipeline", "--input", str(data), "--epochs", "2", "--out", str(out)],
                   SMALL + ['data.label_column="label"', 'data.intrinsic_columns=["z0","z1"]']) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_points"] == 60 and summary["dim"] == 3

    def test_unknown_key(self, tmp_path, capsys):
        assert run(["pipeline", "--out", str(tmp_path / "o")], ["kernel.bandwidth=3"]) == 1
        assert error_line(capsys).startswith("fimkit: error[config]:")

    def test_bad_value(self, tmp_path, capsys):
        assert run(["pipeline", "--out", str(tmp_path / "o")], ["training.learning_rate=-1"]) == 1
        assert "error[config]" in error_line(capsys)

    def test_corrupt_input(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x0,x1\n1.0,2.0\n3.0,oops\n")
        out = tmp_path / "o"
        assert run(["pipeline", "--input", str(bad), "--out", str(out)]) == 1
        assert error_line(capsys).startswith("fimkit: error[input]:")
        assert (out / FAILED_MARKER).exists() and (out / "config.json").exists()

    def test_stage_failure(self, tmp_path, capsys):
        out = tmp_path / "o"
        # knn larger than the cloud fails inside the diffusion stage
        assert run(["pipeline", "--out", str(out)], SMALL + ["kernel.knn=100"]) == 1
        line = error_line(capsys)
        assert line.startswith("fimkit: error[stage]:") and "diffuse" in line
        assert (out / FAILED_MARKER).read_text().startswith("diffuse")

    def test_marker_cleared_on_success(self, tmp_path):
        out = tmp_path / "o"
        out.mkdir()
        (out / FAILED_MARKER).write_text("old")
        assert run(["pipeline", "--out", str(out)], SMALL) == 0
        assert not (out / FAILED_MARKER).exists()


class TestGeodesicCommand:
    def test_euclidean_preset(self, tmp_path):
        out = tmp_path / "g"
        assert run(["geodesic", "--preset", "euclidean", "--epochs", "300", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["length"] == pytest.approx(1.0, rel=0.02)
        path = load_matrix(out / "path.csv", has_header=True)
        assert path.shape == (21, 3) and path[0, 0] == 0.0

    def test_learned_fim_needs_checkpoint(self, tmp_path, capsys):
        assert run(["geodesic", "--preset", "learned-fim", "--out", str(tmp_path / "g")]) == 1
        assert "error[config]" in error_line(capsys)

    def test_learned_fim_from_checkpoint(self, tmp_path):
        pipe = tmp_path / "p"
        assert run(["pipeline", "--out", str(pipe)], SMALL) == 0
        out = tmp_path / "g"
        assert run(["geodesic", "--preset", "learned-fim", "--checkpoint", str(pipe / "model.json"),
                    "--epochs", "5", "--out", str(out)],
                   ["geodesic.start=[0,0,0]", "geodesic.target=[0.1,0.1,0]"]) == 0
        assert json.loads((out / "summary.json").read_text())["epochs"] == 5

    def test_swiss_roll_preset_small(self, tmp_path):
        out = tmp_path / "s"
        assert run(["geodesic", "--preset", "swiss-roll", "--out", str(out)],
                   ["geodesic.metric=euclidean", "geodesic.pair_epochs=3", "geodesic.n_pairs=3",
                    "data.n=100"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["learned_lengths"]) == 3 and summary["correlation_type"] == "pearson"
        assert (out / "path_2.csv").exists()


class TestScanAndSensitivity:
    def test_param_scan(self, tmp_path):
        out = tmp_path / "s"
        assert run(["param-scan", "--out", str(out)],
                   ["scan.t_steps=3", "scan.sigma_steps=2", "scan.subsample=20"]) == 0
        table = load_matrix(out / "volume.csv")
        assert table.shape == (4, 3) and np.isnan(table[0, 0])
        np.testing.assert_allclose(table[0, 1:], [50.0, 150.0])
        np.testing.assert_allclose(table[1:, 0], [1.0, 8.0, 15.0])
        assert np.all(np.isfinite(table[1:, 1:]))
        assert json.loads((out / "scan.json").read_text())["subsample"] == 20

    def test_param_scan_cell_failure(self, tmp_path, capsys):
        out = tmp_path / "s"
        assert run(["param-scan", "--out", str(out)],
                   ["scan.t_range=[0.005,1]", "scan.t_steps=2", "scan.sigma_steps=1",
                    "scan.subsample=10"]) == 1
        assert "error[stage]" in error_line(capsys)
        assert (out / "volume.csv").exists() and (out / FAILED_MARKER).exists()

    def test_sensitivity_tables(self, tmp_path):
        out = tmp_path / "v"
        assert run(["sensitivity", "--out", str(out)],
                   SMALL + ["sensitivity.knn_values=[4,5,6]", "sensitivity.arch_values=[[12,6],[10,6]]"]) == 0
        for name, size in (("knn", 3), ("noise", 3), ("arch", 2)):
            T = load_matrix(out / f"sensitivity_{name}.csv", has_header=True)
            assert T.shape == (size, size)
            np.testing.assert_array_equal(np.diag(T), 1.0)
            np.testing.assert_allclose(T, T.T, atol=1e-12)
        meta = json.loads((out / "sensitivity.json").read_text())
        assert meta["correlation_type"] == "pearson" and meta["failures"] == []


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fimkit", "pipeline", "--out", str(tmp_path / "o"),
                           "--set", "kernel.nope=1"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert proc.stderr.strip().startswith("fimkit: error[config]:")
