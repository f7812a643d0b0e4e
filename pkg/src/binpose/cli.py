"""Command-line entry point.

Exit status: 0 on success, 1 for usage or validation errors (bad flags,
missing or malformed config and input files), 2 when a run fails.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import binsim
from . import codebook as cbm
from . import harness
from . import rotations as rot
from .errors import BinposeError, ConfigError
from .transforms import (
    RigidTransform,
    calibrate_camera,
    format_transform_line,
    invert,
    random_transform,
    read_transforms,
    tree_from_edges,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; that code is reserved for run failures here
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file (defaults listed below)")
    common.add_argument("--seed", type=_seed, metavar="U64", help="master seed, overrides [experiment] seed")
    common.add_argument("--out", metavar="DIR", help="output directory, overrides [experiment] out")
    common.add_argument("--codebook", metavar="PATH", help="load this codebook file instead of building one")

    epilog = "config defaults:\n" + harness.default_config_text()
    p = _Parser(prog="binpose", description="Bin-picking and view-codebook pose estimation experiments.",
                epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    kw = dict(parents=[common], epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub.add_parser("build-codebook", help="render and embed the view codebook, write codebook.txt", **kw)
    e = sub.add_parser("estimate", help="estimate the pose of every object in a scene file", **kw)
    e.add_argument("scene", metavar="scene-file")
    sub.add_parser("pick-bench", help="run the bin-picking benchmark", **kw)
    sub.add_parser("place-bench", help="run the canonical placement benchmark", **kw)
    sub.add_parser("codebook-report", help="retrieval accuracy of the codebook on random views", **kw)
    c = sub.add_parser("calib-demo", help="camera extrinsics from a base/wrist/tag/camera chain", **kw)
    c.add_argument("chain", nargs="?", metavar="chain-file",
                   help="transform lines linking base, wrist, aruco and camera (random chain if omitted)")
    return p


def load_config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.from_ini(args.config) if args.config else harness.ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if args.codebook is not None:
        if not Path(args.codebook).is_file():
            raise ConfigError(f"codebook file not found: {args.codebook}")
        cfg = replace(cfg, codebook_path=args.codebook)
    return cfg


def _out(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build_codebook(cfg, args) -> int:
    cb = harness.build_codebook(cfg)
    path = _out(cfg) / "codebook.txt"
    cbm.save(cb, path)
    delta = cbm.coverage_radius(cb.rotation_array(), harness.trial_rng(cfg.seed, harness.PHASE_REPORT, 0, 0))
    print("\n".join(cb.header_lines()))
    print(f"entries: {len(cb)}")
    print(f"coverage bound: {math.degrees(delta):.3f} deg")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_estimate(cfg, args) -> int:
    try:
        scene = binsim.read_scene(args.scene)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read scene {args.scene}: {exc}") from exc
    cb = harness.build_codebook(cfg)
    k = binsim.BIN_CAMERA
    depth = scene.render(k)
    labels, n = ndimage.label(depth.valid)
    lines = []
    for i in range(1, n + 1):
        mask = labels == i
        if mask.sum() < 16:
            continue
        vs, us = np.nonzero(mask)
        centroid = (float(us.mean()), float(vs.mean()))
        j = int(np.argmin((us - centroid[0]) ** 2 + (vs - centroid[1]) ** 2))
        est = cbm.estimate_pose(depth, centroid, float(depth.data[vs[j], us[j]]), cb, k, mask=mask)
        # report against the true object nearest to the estimated position
        truth = min(scene.objects, key=lambda o: float(np.linalg.norm(o.pose.t - est.t)))
        err = math.degrees(rot.geodesic_distance(est.rotation, truth.pose.rotation))
        lines.append(format_transform_line(binsim.CAMERA_FRAME, f"estimate{i - 1}", est))
        print(f"component {i - 1} at pixel ({centroid[0]:.1f}, {centroid[1]:.1f}): nearest {truth.name}, "
              f"rotation error {err:.3f} deg")
    path = _out(cfg) / "estimates.txt"
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_pick_bench(cfg, args) -> int:
    report = harness.run_pick_bench(cfg)
    harness.write_report(report, cfg.out_dir, "pick_bench")
    print(harness.format_table(report, harness.REFERENCE["pick"]))
    print(f"runtime {report.runtime:.1f} s", file=sys.stderr)
    return EXIT_OK


def cmd_place_bench(cfg, args) -> int:
    report = harness.run_place_bench(cfg)
    harness.write_report(report, cfg.out_dir, "place_bench")
    print(harness.format_table(report, harness.REFERENCE["place"]))
    print("tolerance sweep (deg: success rate): " + ", ".join(
        f"{t}: {100 * r:.0f}%" for t, r in report.extra["tolerance_sweep"].items()))
    print(f"runtime {report.runtime:.1f} s", file=sys.stderr)
    return EXIT_OK


def cmd_codebook_report(cfg, args) -> int:
    summary = harness.run_codebook_report(cfg)
    harness.write_json(_out(cfg) / "codebook_report.json", summary.to_dict())
    print(harness.format_codebook_summary(summary))
    print(f"runtime {summary.runtime:.1f} s", file=sys.stderr)
    return EXIT_OK


def cmd_calib_demo(cfg, args) -> int:
    if args.chain:
        try:
            edges = read_transforms(args.chain)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read chain {args.chain}: {exc}") from exc
    else:
        rng = np.random.default_rng([cfg.seed, 4])
        t_camera_aruco = random_transform(rng, 1.0)  # the tag detection
        edges = [("base", "wrist", random_transform(rng, 0.5)),
                 ("wrist", "aruco", random_transform(rng, 0.1)),
                 ("aruco", "camera", invert(t_camera_aruco))]
    tree = tree_from_edges(edges)
    for frame in ("base", "wrist", "aruco", "camera"):
        if frame not in tree:
            raise ConfigError(f"chain has no {frame!r} frame")
    t_base_camera = tree.lookup("base", "camera")
    direct = calibrate_camera(tree.lookup("base", "wrist"), tree.lookup("wrist", "aruco"),
                              tree.lookup("aruco", "camera"))
    gap = float(np.abs(t_base_camera.matrix() - direct.matrix()).max())
    line = format_transform_line("base", "camera", t_base_camera)
    (_out(cfg) / "calibration.txt").write_text(line + "\n", encoding="utf-8")
    print(line)
    print("matrix:")
    print(np.array2string(t_base_camera.matrix(), precision=10, suppress_small=True))
    print(f"tree lookup vs explicit chain: max abs difference {gap:.3e}")
    ident = float(np.abs(t_base_camera.matrix() - RigidTransform.identity().matrix()).max())
    print(f"distance from identity: {ident:.3e}")
    return EXIT_OK


COMMANDS = {
    "build-codebook": cmd_build_codebook,
    "estimate": cmd_estimate,
    "pick-bench": cmd_pick_bench,
    "place-bench": cmd_place_bench,
    "codebook-report": cmd_codebook_report,
    "calib-demo": cmd_calib_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"binpose: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"binpose: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BinposeError as exc:
        print(f"binpose: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
