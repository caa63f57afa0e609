import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from convarrange.cli import main
from conftest import DATA_DIR

FIXTURE_NPZ = DATA_DIR / "toy2_model.npz"
FIXTURE_JSON = DATA_DIR / "toy2_model.json"


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def cli_run_dir(tmp_path_factory):
    """A finished `track` run produced through the CLI itself."""
    from convarrange.harness import RunConfig

    root = tmp_path_factory.mktemp("cli_track")
    config = RunConfig(
        dataset={"kind": "synth_shapes", "n": 120, "classes": 2, "test_n": 40},
        model={
            "input_shape": [1, 16, 16],
            "layers": [
                {"kind": "conv", "filters": 4, "kernel": 3, "padding": 1},
                {"kind": "relu"},
                {"kind": "maxpool"},
                {"kind": "flatten"},
                {"kind": "dense", "out": 2},
            ],
        },
        epochs=2,
        seed=5,
        batch_size=32,
        run_id="clitrack",
    )
    (root / "config.json").write_text(config.to_json())
    code = main(["track", "--config", str(root / "config.json"),
                 "--out", str(root / "run")])
    assert code == 0
    return root / "run"


class TestExitCodes:
    def test_no_command(self, capsys):
        code, _, err = run_cli(capsys)
        assert code == 1
        assert "usage error" in err

    def test_unknown_command(self, capsys):
        code, _, _ = run_cli(capsys, "frobnicate")
        assert code == 1

    def test_missing_required_argument(self, capsys):
        code, _, _ = run_cli(capsys, "analyze")
        assert code == 1

    def test_missing_checkpoint_file(self, capsys):
        code, _, err = run_cli(capsys, "analyze", "/nonexistent/model.npz")
        assert code == 2

    def test_checkpoint_not_an_archive(self, capsys, tmp_path):
        bad = tmp_path / "model.npz"
        bad.write_bytes(b"plain text, not a zip")
        (tmp_path / "model.json").write_text(FIXTURE_JSON.read_text())
        code, _, _ = run_cli(capsys, "analyze", str(bad))
        assert code == 2

    def test_checkpoint_without_manifest(self, capsys, tmp_path):
        orphan = tmp_path / "model.npz"
        orphan.write_bytes(FIXTURE_NPZ.read_bytes())
        code, _, _ = run_cli(capsys, "analyze", str(orphan))
        assert code == 2

    def test_bad_bins(self, capsys):
        code, _, _ = run_cli(capsys, "analyze", str(FIXTURE_NPZ), "--bins", "0")
        assert code == 2

    def test_bad_corruption_choice(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "track", "--config", "x", "--out",
                             str(tmp_path), "--corruption", "blur")
        assert code == 1

    def test_bad_seed_list(self, capsys, tmp_path, cli_run_dir):
        code, _, _ = run_cli(
            capsys, "track",
            "--config", str(cli_run_dir / "config.json"),
            "--out", str(tmp_path), "--seeds", "1,two",
        )
        assert code == 1

    def test_verify_ok(self, capsys):
        code, out, _ = run_cli(capsys, "verify")
        assert code == 0
        assert "all" in out and "passed" in out


class TestAnalyze:
    def test_table_output(self, capsys):
        code, out, _ = run_cli(capsys, "analyze", str(FIXTURE_NPZ))
        assert code == 0
        assert "run 'toy2' epoch 0" in out
        lines = out.strip().splitlines()
        assert lines[1].split() == ["layer", "filters", "negatives", "n_l", "p_value"]
        assert len(lines) == 4  # header x2 + one row per conv layer

    def test_report_files(self, capsys, tmp_path):
        out_dir = tmp_path / "reports"
        code, _, _ = run_cli(capsys, "analyze", str(FIXTURE_NPZ),
                             "--out", str(out_dir), "--svg")
        assert code == 0
        names = {p.name for p in out_dir.iterdir()}
        assert names == {"cosines.csv", "layers.json", "hist_layer01.svg",
                         "hist_layer02.svg", "report_manifest.json"}

    def test_outputs_match_library(self, capsys, tmp_path):
        from convarrange.checkpoints import CheckpointManifest
        from convarrange.npyio import read_npz
        from convarrange.projections import layer_cosines

        out_dir = tmp_path / "reports"
        run_cli(capsys, "analyze", str(FIXTURE_NPZ), "--out", str(out_dir))

        manifest = CheckpointManifest.from_json(FIXTURE_JSON.read_text())
        arrays = {r.name: r.as_array() for r in read_npz(FIXTURE_NPZ.read_bytes())}
        want = {}
        for entry in manifest.layers:
            cs = layer_cosines(arrays[entry.weight], entry.geometry)
            for i, c in enumerate(cs):
                want[(entry.layer_id, i)] = float(c)

        rows = (out_dir / "cosines.csv").read_text().strip().splitlines()
        assert rows[0] == "layer_id,filter_index,cosine"
        got = {}
        for row in rows[1:]:
            lid, idx, cosine = row.split(",")
            got[(int(lid), int(idx))] = float(cosine)
        assert got == want  # repr round trip keeps doubles exact

    def test_rerun_is_byte_identical(self, capsys, tmp_path):
        dirs = []
        for i in range(2):
            out_dir = tmp_path / f"r{i}"
            run_cli(capsys, "analyze", str(FIXTURE_NPZ), "--out", str(out_dir), "--svg")
            dirs.append(out_dir)
        for name in ("cosines.csv", "layers.json", "hist_layer01.svg",
                     "report_manifest.json"):
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()

    def test_explicit_manifest_path(self, capsys, tmp_path):
        npz = tmp_path / "weights_only.npz"
        npz.write_bytes(FIXTURE_NPZ.read_bytes())
        code, out, _ = run_cli(capsys, "analyze", str(npz),
                               "--manifest", str(FIXTURE_JSON))
        assert code == 0
        assert "toy2" in out

    def test_snapshot_directory_latest_and_epoch(self, capsys, tiny_run):
        code, out, _ = run_cli(capsys, "analyze", str(tiny_run.work_dir))
        assert code == 0
        assert "epoch 3" in out
        code, out, _ = run_cli(capsys, "analyze", str(tiny_run.work_dir),
                               "--epoch", "0")
        assert code == 0
        assert "epoch 0" in out
        code, _, _ = run_cli(capsys, "analyze", str(tiny_run.work_dir),
                             "--epoch", "99")
        assert code == 2


class TestTrainAndTrack:
    def test_train_writes_artifacts(self, capsys, tmp_path, cli_run_dir):
        out = tmp_path / "trained"
        code, stdout, _ = run_cli(
            capsys, "train",
            "--config", str(cli_run_dir / "config.json"),
            "--out", str(out),
        )
        assert code == 0
        assert "clitrack" in stdout
        assert (out / "metrics.csv").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["epochs"] == 2
        assert 0.0 <= summary["final_train_acc"] <= 1.0
        assert (out / "snapshots" / "epoch_00002.npz").exists()

    def test_track_artifacts(self, cli_run_dir):
        names = {p.name for p in cli_run_dir.iterdir()}
        assert {"config.json", "metrics.csv", "trajectories.csv",
                "trajectories.svg", "layers.json", "snapshots",
                "report_manifest.json"} <= names
        rows = (cli_run_dir / "trajectories.csv").read_text().strip().splitlines()
        assert rows[0] == "epoch,layer_id,negative_fraction,filter_count"
        # one conv layer tracked over epochs 0..2
        assert len(rows) == 1 + 3

    def test_track_matches_harness(self, cli_run_dir, tmp_path):
        from convarrange.harness import RunConfig, run_bias_tracking

        config = RunConfig.from_json((cli_run_dir / "config.json").read_text())
        result = run_bias_tracking(config, tmp_path / "twin")
        cli_bytes = (cli_run_dir / "snapshots" / "epoch_00002.npz").read_bytes()
        twin_bytes = (tmp_path / "twin" / "snapshots" / "epoch_00002.npz").read_bytes()
        assert cli_bytes == twin_bytes

    def test_track_multi_seed(self, capsys, tmp_path, cli_run_dir):
        out = tmp_path / "multi"
        code, stdout, _ = run_cli(
            capsys, "track",
            "--config", str(cli_run_dir / "config.json"),
            "--out", str(out), "--seeds", "1,2",
        )
        assert code == 0
        assert "2 runs" in stdout
        assert (out / "seed_1" / "trajectories.csv").exists()
        assert (out / "seed_2" / "trajectories.csv").exists()
        bands = (out / "trajectory_bands.csv").read_text().strip().splitlines()
        assert bands[0] == "layer_id,epoch,mean_negative_fraction,std_negative_fraction"
        assert len(bands) == 1 + 3  # layer 1 at epochs 0..2


class TestReinit:
    def test_heatmap_outputs(self, capsys, tmp_path, cli_run_dir):
        out = tmp_path / "grid"
        code, stdout, _ = run_cli(
            capsys, "reinit", str(cli_run_dir),
            "--out", str(out), "--epochs", "0,2",
        )
        assert code == 0
        assert "full accuracy" in stdout
        rows = (out / "heatmap.csv").read_text().strip().splitlines()
        assert rows[0] == "layer_id,epoch,accuracy_drop"
        drops = {}
        for row in rows[1:]:
            lid, epoch, drop = row.split(",")
            drops[(int(lid), int(epoch))] = float(drop)
        # resetting to the final epoch is a no-op by construction
        assert drops[(1, 2)] == 0.0
        assert (out / "heatmap.svg").read_text().startswith("<svg")

    def test_final_token(self, capsys, tmp_path, cli_run_dir):
        # "final" resolves to the last snapshot epoch, here 2
        code, _, _ = run_cli(capsys, "reinit", str(cli_run_dir),
                             "--out", str(tmp_path / "tok"), "--epochs", "0,final")
        assert code == 0
        code, _, _ = run_cli(capsys, "reinit", str(cli_run_dir),
                             "--out", str(tmp_path / "num"), "--epochs", "0,2")
        assert code == 0
        assert (tmp_path / "tok" / "heatmap.csv").read_text() == \
            (tmp_path / "num" / "heatmap.csv").read_text()

    def test_bad_epoch_token(self, capsys, tmp_path, cli_run_dir):
        code, _, stderr = run_cli(capsys, "reinit", str(cli_run_dir),
                                  "--out", str(tmp_path / "x"), "--epochs", "0,last")
        assert code == 1
        assert "final" in stderr

    def test_bad_layer(self, capsys, tmp_path, cli_run_dir):
        code, _, _ = run_cli(capsys, "reinit", str(cli_run_dir),
                             "--out", str(tmp_path / "x"), "--layers", "9")
        assert code == 2

    def test_missing_run_dir(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "reinit", str(tmp_path / "nothing"))
        assert code == 2


class TestSubprocess:
    def test_console_script_verify(self):
        exe = shutil.which("convarrange")
        assert exe, "console script not installed"
        proc = subprocess.run([exe, "verify"], capture_output=True, text=True,
                              timeout=120)
        assert proc.returncode == 0
        assert "passed" in proc.stdout

    def test_thread_cap_applies_before_numpy(self):
        # importing any part of the package must set the caps first
        code = (
            "import convarrange.cli\n"
            "import os\n"
            "print(os.environ.get('OMP_NUM_THREADS'))\n"
            "print(os.environ.get('OPENBLAS_NUM_THREADS'))\n"
        )
        env = dict(os.environ, CONVARRANGE_THREADS="3")
        env.pop("OMP_NUM_THREADS", None)
        env.pop("OPENBLAS_NUM_THREADS", None)
        proc = subprocess.run([sys.executable, "-c", code], env=env,
                              capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0
        assert proc.stdout.split() == ["3", "3"]

    def test_thread_cap_respects_existing_setting(self):
        code = (
            "import convarrange.cli\n"
            "import os\n"
            "print(os.environ['OMP_NUM_THREADS'])\n"
        )
        env = dict(os.environ, CONVARRANGE_THREADS="3", OMP_NUM_THREADS="7")
        proc = subprocess.run([sys.executable, "-c", code], env=env,
                              capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0
        assert proc.stdout.strip() == "7"
