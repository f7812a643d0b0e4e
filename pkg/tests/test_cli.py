import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from binpose import binsim
from binpose.binsim import PoseClass
from binpose.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from binpose.transforms import RigidTransform, parse_transform_line

FIXTURES = Path(__file__).resolve().parent.parent / "demos" / "fixtures"

SMALL = """[experiment]
pick_trials = 1
place_trials = 1
objects_per_scene = 2
[sampling]
n_views = 8
n_inplane = 4
n_queries = 10
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def test_identity_chain_gives_identity(tmp_path, capsys):
    assert main(["calib-demo", str(FIXTURES / "identity_chain.txt"), "--out", str(tmp_path)]) == EXIT_OK
    parent, child, t = parse_transform_line((tmp_path / "calibration.txt").read_text())
    assert (parent, child) == ("base", "camera")
    assert np.abs(t.matrix() - np.eye(4)).max() <= 1e-10
    assert "distance from identity" in capsys.readouterr().out


def test_random_calibration_chain_agrees_with_tree(tmp_path, capsys):
    assert main(["calib-demo", "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    gap = float(out.split("max abs difference")[1].split()[0])
    assert gap < 1e-12


@pytest.mark.parametrize("argv", [
    [],
    ["fly"],
    ["pick-bench", "--turbo"],
    ["pick-bench", "--seed", "-4"],
    ["pick-bench", "--seed", "lots"],
    ["pick-bench", "--config", "/nonexistent/binpose.ini"],
    ["place-bench", "--codebook", "/nonexistent/codebook.txt"],
    ["estimate"],
    ["estimate", "/nonexistent/scene.txt"],
    ["calib-demo", "/nonexistent/chain.txt"],
])
def test_usage_and_validation_errors_exit_1(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv else argv) == EXIT_USAGE
    assert capsys.readouterr().err


def test_bad_config_value_exits_1(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[experiment]\npick_trials = 0\n")
    assert main(["pick-bench", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE


def test_chain_missing_a_frame_exits_1(tmp_path):
    chain = tmp_path / "chain.txt"
    chain.write_text("base wrist 1 0 0 0 0 0 0\n")
    assert main(["calib-demo", str(chain), "--out", str(tmp_path)]) == EXIT_USAGE


def test_runtime_failure_exits_2(tmp_path, capsys):
    # an object behind the camera cannot be rendered
    scene = binsim.generate_scene(1, {PoseClass.BREAST_UP: 1.0}, np.random.default_rng(0))
    o = scene.objects[0]
    o.pose = RigidTransform(o.pose.rotation, (0.0, 0.0, -1.0))
    binsim.write_scene(scene, tmp_path / "scene.txt")
    (tmp_path / "c.ini").write_text(SMALL)
    code = main(["estimate", str(tmp_path / "scene.txt"), "--config", str(tmp_path / "c.ini"), "--out", str(tmp_path)])
    assert code == EXIT_RUNTIME
    assert "BehindCamera" in capsys.readouterr().err


def test_help_lists_every_default(capsys):
    with pytest.raises(SystemExit) as info:
        main(["pick-bench", "--help"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    for key in ("pick_trials = 25", "place_trials = 30", "n_views = 162", "n_inplane = 12",
                "flatness_threshold_deg = 25", "tolerance_deg = 20", "background_mode", "slip_margin = 0.8"):
        assert key in out


def test_pick_bench_twice_gives_identical_csv(tmp_path, small_config):
    for d in ("a", "b"):
        assert main(["pick-bench", "--seed", "7", "--config", str(small_config), "--out", str(tmp_path / d)]) == 0
    for name in ("pick_bench.csv", "pick_bench.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_the_run(tmp_path, small_config):
    for s in ("1", "2"):
        main(["codebook-report", "--seed", s, "--config", str(small_config), "--out", str(tmp_path / s)])
    assert (tmp_path / "1" / "codebook_report.json").read_bytes() != (tmp_path / "2" / "codebook_report.json").read_bytes()


def test_build_then_estimate(tmp_path, small_config, capsys):
    assert main(["build-codebook", "--config", str(small_config), "--out", str(tmp_path)]) == EXIT_OK
    scene = binsim.generate_scene(2, {PoseClass.BREAST_SIDE: 1.0}, np.random.default_rng(1))
    binsim.write_scene(scene, tmp_path / "scene.txt")
    code = main(["estimate", str(tmp_path / "scene.txt"), "--codebook", str(tmp_path / "codebook.txt"),
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    lines = (tmp_path / "estimates.txt").read_text().splitlines()
    assert 1 <= len(lines) <= 2
    for ln in lines:
        assert parse_transform_line(ln)[0] == "camera"


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "binpose", "calib-demo", str(FIXTURES / "identity_chain.txt"),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.splitlines()[0].split()[:2] == ["base", "camera"]
    r = subprocess.run([sys.executable, "-m", "binpose", "nope"], capture_output=True, text=True)
    assert r.returncode == 1 and "usage" in r.stderr
