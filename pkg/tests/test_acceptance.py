"""Acceptance suite: one test per numbered criterion, run at the stated tolerances.

The terminal summary prints a PASS/FAIL line for each criterion (see conftest).
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from binpose import binsim
from binpose import codebook as cbm
from binpose import harness
from binpose import rotations as rot
from binpose.binsim import POSE_CLASSES
from binpose.camera import CameraIntrinsics, deproject, project
from binpose.cli import main
from binpose.descriptor import AugmentationConfig
from binpose.rotations import UnitQuaternion
from binpose.transforms import RigidTransform, calibrate_camera, label_object_pose, random_transform

K = CameraIntrinsics()


def _random_q(rng, n):
    return [UnitQuaternion.from_array(v) for v in rot.sample_uniform_array(rng, n)]


def _h(t: RigidTransform) -> np.ndarray:
    """Homogeneous matrix built directly from the quaternion formula."""
    w, x, y, z = t.rotation.as_array()
    m = np.eye(4)
    m[:3, :3] = [[1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                 [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                 [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]]
    m[:3, 3] = t.t
    return m


@pytest.mark.criterion(1, "geodesic metric axioms on 10^4 pairs, 90 deg anchor, under 5 s")
def test_geodesic_metric_suite(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    n = 10_000
    a, b, c, r = (_random_q(rng, n) for _ in range(4))
    worst = 0.0
    for i in range(n):
        d_ab = rot.geodesic_distance(a[i], b[i])
        worst = max(worst, abs(d_ab - rot.geodesic_distance(b[i], a[i])))
        worst = max(worst, abs(d_ab - rot.geodesic_distance(-a[i].as_array(), b[i])))
        worst = max(worst, abs(d_ab - rot.geodesic_distance(r[i] * a[i], r[i] * b[i])))
        slack = rot.geodesic_distance(a[i], c[i]) + rot.geodesic_distance(c[i], b[i]) - d_ab
        worst = max(worst, -slack)
    anchor = rot.geodesic_distance(UnitQuaternion.identity(), UnitQuaternion.from_axis_angle((0, 0, 1), math.pi / 2))
    elapsed = time.perf_counter() - start
    record_property("criterion_note", (1, f"worst violation {worst:.1e}, anchor error "
                                          f"{abs(anchor - math.pi / 2):.1e}, {elapsed:.2f} s"))
    assert worst <= 1e-9
    assert abs(anchor - math.pi / 2) <= 1e-12
    assert elapsed < 5.0


@pytest.mark.criterion(2, "loss anchor at ln(1e-6) and loss ordering matches geodesic ordering")
def test_loss_anchor_and_ordering(record_property):
    q = UnitQuaternion.from_axis_angle((1, 2, 3), 0.7)
    anchor = rot.pose_loss(q, q, 1e-6)
    rng = np.random.default_rng(202)
    a, b = _random_q(rng, 1000), _random_q(rng, 1000)
    geo = np.array([rot.geodesic_distance(x, y) for x, y in zip(a, b)])
    loss = np.array([rot.pose_loss(x, y) for x, y in zip(a, b)])
    order = np.argsort(geo, kind="stable")
    inversions = int(np.sum(np.diff(loss[order]) < -1e-12))
    record_property("criterion_note", (2, f"anchor error {abs(anchor - math.log(1e-6)):.1e}, {inversions} inversions"))
    assert abs(anchor - math.log(1e-6)) <= 1e-9
    assert inversions == 0


@pytest.mark.criterion(3, "calibration and auto-label chains match the homogeneous oracle, identities cancel")
def test_transform_chains(record_property):
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(1000):
        bw, wa, ac, bc, wo = (random_transform(rng, 1.0) for _ in range(5))
        worst = max(worst, np.abs(_h(calibrate_camera(bw, wa, ac)) - _h(bw) @ _h(wa) @ _h(ac)).max())
        oracle = np.linalg.inv(_h(bc)) @ _h(bw) @ _h(wo)
        worst = max(worst, np.abs(_h(label_object_pose(bc, bw, wo)) - oracle).max())
    ident = RigidTransform.identity()
    t = random_transform(rng, 1.0)
    assert np.array_equal(calibrate_camera(ident, ident, ident).matrix(), np.eye(4))
    assert np.array_equal(label_object_pose(ident, ident, ident).matrix(), np.eye(4))
    assert calibrate_camera(t, ident, ident) == t
    assert label_object_pose(ident, t, ident) == t
    record_property("criterion_note", (3, f"worst oracle gap {worst:.1e}"))
    assert worst <= 1e-10


@pytest.mark.criterion(4, "project after deproject within 1e-6 px on 10^4 samples, principal ray exact")
def test_deprojection(record_property):
    rng = np.random.default_rng(404)
    worst = 0.0
    for u, v, d in zip(rng.uniform(-0.5, K.width - 0.5, 10_000), rng.uniform(-0.5, K.height - 0.5, 10_000),
                       rng.uniform(0.05, 10.0, 10_000)):
        pu, pv = project(deproject((u, v), d, K), K)
        worst = max(worst, abs(pu - u), abs(pv - v))
    principal = deproject((K.cx, K.cy), 1.7, K)
    record_property("criterion_note", (4, f"worst round trip {worst:.1e} px"))
    assert worst <= 1e-6
    assert np.array_equal(principal, [0.0, 0.0, 1.7])


@pytest.mark.slow
@pytest.mark.criterion(5, "every codebook entry retrieves itself, lookup equals a linear scan")
def test_codebook_self_retrieval(default_codebook, record_property):
    cb = default_codebook
    e = cb.embeddings
    rng = np.random.default_rng(505)
    random_queries = rng.standard_normal((200, cb.dim))
    random_queries /= np.linalg.norm(random_queries, axis=1, keepdims=True)
    queries = np.vstack([e, random_queries])
    self_hits = 0
    mismatches = 0
    for j, q in enumerate(queries):
        m = cbm.lookup(q, cb)
        scores = [float(np.dot(row, q)) for row in e]
        best = max(range(len(scores)), key=lambda i: (scores[i], -i))
        mismatches += int(m.index != best)
        if j < len(cb):
            self_hits += int(m.index == j and abs(m.similarity - 1.0) <= 1e-12)
    record_property("criterion_note", (5, f"{self_hits}/{len(cb)} self hits, {mismatches} scan mismatches"))
    assert self_hits == len(cb)
    assert mismatches == 0


@pytest.fixture(scope="module")
def retrieval(default_codebook, default_object):
    cb = default_codebook
    delta = cbm.coverage_radius(cb.rotation_array(), np.random.default_rng(606))
    queries = _random_q(np.random.default_rng(607), 500)
    start = time.perf_counter()
    clean, aug = cbm.retrieval_errors(default_object, cb, queries, augment_cfg=AugmentationConfig(),
                                      rng=np.random.default_rng(608), both=True)
    return delta, clean, aug, time.perf_counter() - start


@pytest.mark.slow
@pytest.mark.criterion(6, "500 clean renders all retrieve within the coverage bound")
def test_clean_retrieval(retrieval, record_property):
    delta, clean, _, _ = retrieval
    rate = float(np.mean(clean <= delta))
    record_property("criterion_note", (6, f"coverage bound {math.degrees(delta):.3f} deg, {100 * rate:.1f}% within, "
                                          f"mean {math.degrees(clean.mean()):.2f} deg, "
                                          f"max {math.degrees(clean.max()):.1f} deg"))
    assert rate == 1.0


@pytest.mark.slow
@pytest.mark.criterion(7, "90% of 500 augmented queries within twice the bound, build plus queries under 2 min")
def test_augmented_retrieval(built_codebook, retrieval, record_property):
    _, build_seconds = built_codebook
    delta, _, aug, query_seconds = retrieval
    rate = float(np.mean(aug <= 2 * delta))
    # the timed loop also embeds a clean copy of every view, so this overstates query time
    total = build_seconds + query_seconds
    record_property("criterion_note", (7, f"{100 * rate:.1f}% within 2x bound, build {build_seconds:.0f} s "
                                          f"+ queries {query_seconds:.0f} s"))
    assert rate >= 0.9
    assert total < 120.0


def _class_counts(report):
    return [report.tallies[c].attempted for c in POSE_CLASSES] + [report.total.attempted]


@pytest.mark.slow
@pytest.mark.criterion(8, "pick bench 25/25/25/75 layout, idealized config succeeds, byte-identical CSV")
def test_pick_bench(tmp_path, record_property):
    cfg = harness.ExperimentConfig(seed=7)
    a = harness.run_pick_bench(cfg)
    b = harness.run_pick_bench(cfg)
    harness.write_report(a, tmp_path / "a", "pick")
    harness.write_report(b, tmp_path / "b", "pick")
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in ("pick.csv", "pick.json"))
    ideal_cfg = replace(cfg, protrusions=False, suction=replace(cfg.suction, flatness_threshold=math.pi))
    ideal = harness.run_pick_bench(ideal_cfg)
    record_property("criterion_note", (8, f"default {a.total.succeeded}/75, idealized {ideal.total.succeeded}/75"))
    assert _class_counts(a) == [25, 25, 25, 75]
    assert ideal.total.succeeded == ideal.total.attempted == 75
    assert same


@pytest.mark.slow
@pytest.mark.criterion(9, "place bench 30/30/30/90 layout, oracle succeeds, error transfer within 1e-9")
def test_place_bench(default_codebook, record_property):
    cfg = harness.ExperimentConfig(seed=11)
    est = harness.run_place_bench(cfg, codebook=default_codebook)
    oracle = harness.run_place_bench(replace(cfg, oracle=True))
    gap = max(est.extra["max_transfer_gap_rad"], oracle.extra["max_transfer_gap_rad"])
    record_property("criterion_note", (9, f"codebook {est.total.succeeded}/90, oracle {oracle.total.succeeded}/90, "
                                          f"transfer gap {gap:.1e}"))
    assert _class_counts(est) == [30, 30, 30, 90]
    assert oracle.total.succeeded == oracle.total.attempted == 90
    assert gap <= 1e-9


SMALL = """[experiment]
pick_trials = 2
place_trials = 2
objects_per_scene = 2
[sampling]
n_views = 12
n_inplane = 4
n_queries = 20
"""


def _snapshot(out_dir: Path, stdout: str) -> dict:
    files = {p.name: p.read_bytes() for p in sorted(out_dir.iterdir()) if p.is_file()}
    return {"stdout": stdout, **files}


@pytest.mark.slow
@pytest.mark.criterion(10, "every subcommand run twice with one seed gives byte-identical outputs")
def test_cli_determinism(tmp_path, codebook_file, capsys, record_property):
    cfg = tmp_path / "small.ini"
    cfg.write_text(SMALL)
    scene = binsim.generate_scene(3, {c: 1.0 for c in POSE_CLASSES}, np.random.default_rng(9))
    binsim.write_scene(scene, tmp_path / "scene.txt")
    common = ["--seed", "13", "--config", str(cfg)]
    commands = {
        "build-codebook": ["build-codebook"],
        "estimate": ["estimate", str(tmp_path / "scene.txt"), "--codebook", str(codebook_file)],
        "pick-bench": ["pick-bench"],
        "place-bench": ["place-bench", "--codebook", str(codebook_file)],
        "codebook-report": ["codebook-report", "--codebook", str(codebook_file)],
        "calib-demo": ["calib-demo"],
    }
    differing = []
    for name, argv in commands.items():
        snaps = []
        for run in range(2):
            out = tmp_path / name
            code = main(argv + common + ["--out", str(out)])
            assert code == 0, name
            snaps.append(_snapshot(out, capsys.readouterr().out))
        if snaps[0] != snaps[1]:
            differing.append(name)
    record_property("criterion_note", (10, f"{len(commands) - len(differing)}/{len(commands)} subcommands identical"))
    assert not differing

