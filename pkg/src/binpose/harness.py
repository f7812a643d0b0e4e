"""Experiment runner: pick bench, placement bench, codebook accuracy report.

All randomness flows from ``ExperimentConfig.seed``. Each trial draws from
its own generator, ``default_rng([seed, phase, class, trial])``, so trials
are independent of execution order and of each other.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import binsim
from . import codebook as cbm
from . import rotations as rot
from .binsim import BIN_CAMERA, CANONICAL, POSE_CLASSES, BinBounds, Cause, PoseClass, SuctionModel
from .camera import CameraIntrinsics, deproject
from .descriptor import AugmentationConfig
from .errors import ConfigError, NoCandidates
from .objects import chicken
from .transforms import RigidTransform, invert

PHASE_PICK = 1
PHASE_PLACE = 2
PHASE_REPORT = 3

# singulated objects for the placement bench sit near the middle of the bin
PICKING_AREA = BinBounds(x=(-0.28, 0.28), y=(-0.28, 0.28))

# figures from the reference experiment on real birds, printed for context only
REFERENCE = {
    "pick": {"attempted": (25, 25, 25, 75), "succeeded": (23, 22, 19, 64)},
    "place": {"attempted": (30, 30, 30, 90), "succeeded": (25, 28, 20, 73)},
}
REFERENCE_MEAN_ERROR_DEG = 6.582


@dataclass
class ExperimentConfig:
    seed: int = 0
    pick_trials: int = 25
    place_trials: int = 30
    objects_per_scene: int = 3
    alpha: float = 0.1
    protrusions: bool = True
    sampling: cbm.ViewSampling = field(default_factory=cbm.ViewSampling)
    view_distance: float = cbm.DEFAULT_VIEW_DISTANCE
    augment: AugmentationConfig = field(default_factory=AugmentationConfig)
    suction: SuctionModel = field(default_factory=SuctionModel)
    tolerance: float = math.radians(20.0)
    sweep_deg: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0)
    oracle: bool = False
    n_queries: int = 500
    codebook_path: str | None = None
    out_dir: str = "results"

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if min(self.pick_trials, self.place_trials, self.objects_per_scene, self.n_queries) < 1:
            raise ConfigError("trial, object and query counts must be >= 1")
        if not 0.0 <= self.alpha <= 0.3:
            raise ConfigError("alpha must lie in [0, 0.3]")
        if not self.tolerance > 0:
            raise ConfigError("placement tolerance must be positive")
        if self.view_distance <= 0:
            raise ConfigError("view_distance must be positive")

    @classmethod
    def from_ini(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as f:
                parser.read_file(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser) -> "ExperimentConfig":
        known = {name for name, _ in _SCHEMA}
        for section in parser.sections():
            if section not in known:
                raise ConfigError(f"unknown config section [{section}]")
        try:
            kw = {}
            for section, keys in _SCHEMA:
                if not parser.has_section(section):
                    continue
                sec = parser[section]
                for key in sec:
                    if key not in keys:
                        raise ConfigError(f"unknown key {key!r} in [{section}]")
                kw[section] = {key: keys[key](sec[key]) for key in sec}
            return cls._from_sections(kw)
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _from_sections(cls, kw: dict) -> "ExperimentConfig":
        base = cls()
        exp = kw.get("experiment", {})
        samp = kw.get("sampling", {})
        place = kw.get("placement", {})
        obj = kw.get("object", {})
        suction = dict(kw.get("suction", {}))
        if "flatness_threshold_deg" in suction:
            suction["flatness_threshold"] = math.radians(suction.pop("flatness_threshold_deg"))
        aug = dict(kw.get("augment", {}))
        if "scale_min" in aug or "scale_max" in aug:
            lo, hi = base.augment.scale_range
            aug["scale_range"] = (aug.pop("scale_min", lo), aug.pop("scale_max", hi))
        return cls(
            seed=exp.get("seed", base.seed),
            pick_trials=exp.get("pick_trials", base.pick_trials),
            place_trials=exp.get("place_trials", base.place_trials),
            objects_per_scene=exp.get("objects_per_scene", base.objects_per_scene),
            out_dir=exp.get("out", base.out_dir),
            alpha=obj.get("alpha", base.alpha),
            protrusions=obj.get("protrusions", base.protrusions),
            sampling=cbm.ViewSampling(samp.get("n_views", base.sampling.n_views),
                                      samp.get("n_inplane", base.sampling.n_inplane)),
            view_distance=samp.get("view_distance", base.view_distance),
            n_queries=samp.get("n_queries", base.n_queries),
            codebook_path=samp.get("codebook", base.codebook_path),
            augment=replace(base.augment, **aug),
            suction=replace(base.suction, **suction),
            tolerance=math.radians(place.get("tolerance_deg", math.degrees(base.tolerance))),
            sweep_deg=place.get("sweep_deg", base.sweep_deg),
            oracle=place.get("oracle", base.oracle),
        )

    def to_dict(self) -> dict:
        """Config echo for reports. The output directory is left out so reruns elsewhere match."""
        d = asdict(self)
        del d["out_dir"]
        d["tolerance_deg"] = math.degrees(d.pop("tolerance"))
        d["suction"]["flatness_threshold_deg"] = math.degrees(d["suction"].pop("flatness_threshold"))
        d["augment"]["scale_range"] = list(d["augment"]["scale_range"])
        d["sweep_deg"] = list(self.sweep_deg)
        return d


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


_SCHEMA = (
    ("experiment", {"seed": int, "pick_trials": int, "place_trials": int, "objects_per_scene": int, "out": str}),
    ("object", {"alpha": float, "protrusions": _bool}),
    ("sampling", {"n_views": int, "n_inplane": int, "view_distance": float, "n_queries": int, "codebook": str}),
    ("augment", {"translation_jitter": int, "scale_min": float, "scale_max": float, "occlusion_patches": int,
                 "occlusion_max_side": int, "occlusion_min_side": int, "depth_noise_sigma": float,
                 "background_mode": str}),
    ("suction", {"cup_radius": float, "flatness_threshold_deg": float, "v0": float, "k": float,
                 "voltage_threshold": float, "step": float, "approach": float, "obstruction": float,
                 "slip_margin": float}),
    ("placement", {"tolerance_deg": float, "sweep_deg": _floats, "oracle": _bool}),
)


def default_config_text() -> str:
    """The full default configuration as INI text (used for ``--help``)."""
    c = ExperimentConfig()
    s, a = c.suction, c.augment
    values = {
        "experiment": {"seed": c.seed, "pick_trials": c.pick_trials, "place_trials": c.place_trials,
                       "objects_per_scene": c.objects_per_scene, "out": c.out_dir},
        "object": {"alpha": c.alpha, "protrusions": str(c.protrusions).lower()},
        "sampling": {"n_views": c.sampling.n_views, "n_inplane": c.sampling.n_inplane,
                     "view_distance": c.view_distance, "n_queries": c.n_queries, "codebook": "(build on the fly)"},
        "augment": {"translation_jitter": a.translation_jitter, "scale_min": a.scale_range[0],
                    "scale_max": a.scale_range[1], "occlusion_patches": a.occlusion_patches,
                    "occlusion_max_side": a.occlusion_max_side, "occlusion_min_side": a.occlusion_min_side,
                    "depth_noise_sigma": a.depth_noise_sigma, "background_mode": a.background_mode},
        "suction": {"cup_radius": s.cup_radius, "flatness_threshold_deg": round(math.degrees(s.flatness_threshold), 6),
                    "v0": s.v0, "k": s.k, "voltage_threshold": s.voltage_threshold, "step": s.step,
                    "approach": s.approach, "obstruction": s.obstruction, "slip_margin": s.slip_margin},
        "placement": {"tolerance_deg": round(math.degrees(c.tolerance), 6),
                      "sweep_deg": " ".join(f"{v:g}" for v in c.sweep_deg), "oracle": str(c.oracle).lower()},
    }
    lines = []
    for section, kv in values.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in kv.items())
    return "\n".join(lines)


def trial_rng(seed: int, phase: int, cls_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, phase, cls_index, trial])


@dataclass
class TrialRow:
    trial: int
    pose_class: str
    phase: str
    success: bool
    cause: str
    geodesic_error_deg: float | None = None


@dataclass
class Tally:
    attempted: int = 0
    succeeded: int = 0

    @property
    def rate(self) -> float:
        return self.succeeded / self.attempted if self.attempted else 0.0


@dataclass
class ExperimentReport:
    name: str
    tallies: dict[PoseClass, Tally]
    rows: list[TrialRow]
    config: dict
    runtime: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def total(self) -> Tally:
        return Tally(sum(t.attempted for t in self.tallies.values()),
                     sum(t.succeeded for t in self.tallies.values()))

    def to_dict(self) -> dict:
        """JSON summary. Runtime is left out so reruns are byte-identical."""
        per_class = {c.value: {"attempted": t.attempted, "succeeded": t.succeeded, "rate": t.rate}
                     for c, t in self.tallies.items()}
        tot = self.total
        per_class["Total"] = {"attempted": tot.attempted, "succeeded": tot.succeeded, "rate": tot.rate}
        return {"name": self.name, "results": per_class, "config": self.config, **self.extra}


def format_table(report: ExperimentReport, reference: dict | None = None) -> str:
    cols = [c.label for c in POSE_CLASSES] + ["Total"]
    tallies = [report.tallies[c] for c in POSE_CLASSES] + [report.total]
    width = max(len(c) for c in cols) + 2
    head = f"{'Pose':<14}" + "".join(f"{c:>{width}}" for c in cols)
    lines = [head, "-" * len(head)]
    lines.append(f"{'Attempted':<14}" + "".join(f"{t.attempted:>{width}}" for t in tallies))
    lines.append(f"{'Succeeded':<14}" + "".join(f"{t.succeeded:>{width}}" for t in tallies))
    lines.append(f"{'Success Rate':<14}" + "".join(f"{100 * t.rate:>{width - 1}.0f}%" for t in tallies))
    if reference:
        att, suc = reference["attempted"], reference["succeeded"]
        rates = "".join(f"{100 * s / a:>{width - 1}.0f}%" for a, s in zip(att, suc))
        lines.append("")
        lines.append("reference run on real birds (context only, not a target):")
        lines.append(f"{'Succeeded':<14}" + "".join(f"{s:>{width}}" for s in suc))
        lines.append(f"{'Success Rate':<14}" + rates)
    return "\n".join(lines)


def write_csv(path, rows: Sequence[TrialRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial", "class", "phase", "success", "cause", "geodesic_error_deg"])
        for r in rows:
            err = "" if r.geodesic_error_deg is None else f"{r.geodesic_error_deg:.6f}"
            w.writerow([r.trial, r.pose_class, r.phase, int(r.success), r.cause, err])


def write_json(path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


# pick bench

def run_pick_bench(cfg: ExperimentConfig) -> ExperimentReport:
    start = time.perf_counter()
    tallies = {c: Tally() for c in POSE_CLASSES}
    rows = []
    for ci, cls in enumerate(POSE_CLASSES):
        for trial in range(cfg.pick_trials):
            rng = trial_rng(cfg.seed, PHASE_PICK, ci, trial)
            scene = binsim.generate_scene(cfg.objects_per_scene, {cls: 1.0}, rng,
                                          alpha=cfg.alpha, protrusions=cfg.protrusions)
            depth = scene.render(BIN_CAMERA)
            try:
                kps = binsim.detect_keypoints(depth, BIN_CAMERA, cfg.suction)
            except NoCandidates:
                success, cause = False, Cause.NOT_FLAT
            else:
                attempt = binsim.execute_pick(scene, kps, cfg.suction, BIN_CAMERA, depth=depth)
                success, cause = attempt.success, attempt.cause
            tallies[cls].attempted += 1
            tallies[cls].succeeded += int(success)
            rows.append(TrialRow(trial, cls.value, "pick", success, cause.value))
    return ExperimentReport("pick-bench", tallies, rows, cfg.to_dict(), time.perf_counter() - start)


# placement bench

def build_codebook(cfg: ExperimentConfig) -> cbm.PoseCodebook:
    if cfg.codebook_path:
        return cbm.load(cfg.codebook_path)
    return cbm.build(chicken(alpha=cfg.alpha, protrusions=cfg.protrusions), CameraIntrinsics(),
                     cfg.sampling, cfg.view_distance)


def _grasp(scene: binsim.BinScene, depth, kps, cup: SuctionModel):
    """Try keypoints in rank order until one holds. Returns the attempt and the
    true cup-from-object transform; if nothing holds, the object is taken as
    held at the top keypoint so the placement stage can still be scored."""
    target = scene.objects[0]
    for kp in kps:
        trial_scene = binsim.BinScene(list(scene.objects), scene.bounds)
        attempt = binsim.execute_pick(trial_scene, [kp], cup, BIN_CAMERA, depth=depth)
        if attempt.success:
            return attempt, attempt.t_cup_object
    top = kps[0]
    u, v = top.pixel
    point = deproject((u, v), float(depth.data[v, u]), BIN_CAMERA)
    first = binsim.execute_pick(binsim.BinScene(list(scene.objects), scene.bounds), [top], cup, BIN_CAMERA,
                                depth=depth)
    return first, invert(RigidTransform.from_translation(point)) @ target.pose


def run_place_bench(cfg: ExperimentConfig, codebook: cbm.PoseCodebook | None = None) -> ExperimentReport:
    start = time.perf_counter()
    if codebook is None and not cfg.oracle:
        codebook = build_codebook(cfg)
    tallies = {c: Tally() for c in POSE_CLASSES}
    rows = []
    errors = []
    transfer_gap = 0.0
    for ci, cls in enumerate(POSE_CLASSES):
        for trial in range(cfg.place_trials):
            rng = trial_rng(cfg.seed, PHASE_PLACE, ci, trial)
            scene = binsim.generate_scene(1, {cls: 1.0}, rng, bounds=PICKING_AREA,
                                          alpha=cfg.alpha, protrusions=cfg.protrusions)
            true_pose = scene.objects[0].pose
            depth = scene.render(BIN_CAMERA)
            kps = binsim.detect_keypoints(depth, BIN_CAMERA, cfg.suction)
            attempt, t_cup_object = _grasp(scene, depth, kps, cfg.suction)
            rows.append(TrialRow(trial, cls.value, "pick", attempt.success, attempt.cause.value))
            if cfg.oracle:
                estimated = true_pose
            else:
                estimated, _ = cbm.estimate_from_render(depth, codebook, BIN_CAMERA)
            res = binsim.evaluate_placement(estimated, true_pose, t_cup_object, CANONICAL, cfg.tolerance)
            transfer_gap = max(transfer_gap, abs(res.error - res.estimation_error))
            errors.append(res.error)
            tallies[cls].attempted += 1
            tallies[cls].succeeded += int(res.success)
            rows.append(TrialRow(trial, cls.value, "place", res.success, "none" if res.success else "misaligned",
                                 math.degrees(res.error)))
    errs = np.array(errors)
    sweep = {f"{t:g}": float(np.mean(errs <= math.radians(t))) for t in cfg.sweep_deg}
    extra = {
        "tolerance_sweep": sweep,
        "max_transfer_gap_rad": transfer_gap,
        "mean_error_deg": float(np.degrees(errs.mean())),
        "estimator": "oracle" if cfg.oracle else "codebook",
    }
    if codebook is not None:
        extra["codebook"] = codebook.header_lines()
    return ExperimentReport("place-bench", tallies, rows, cfg.to_dict(), time.perf_counter() - start, extra)


# codebook report

@dataclass
class CodebookSummary:
    header: list[str]
    coverage_deg: float
    clean: dict
    augmented: dict
    runtime: float = 0.0

    def to_dict(self) -> dict:
        return {"codebook": self.header, "coverage_bound_deg": self.coverage_deg,
                "clean": self.clean, "augmented": self.augmented,
                "reference_mean_error_deg": REFERENCE_MEAN_ERROR_DEG}


def _stats(errs: np.ndarray, delta: float) -> dict:
    d = np.degrees(errs)
    return {"n": int(len(d)), "mean_deg": float(d.mean()), "median_deg": float(np.median(d)),
            "max_deg": float(d.max()), "within_delta": float(np.mean(errs <= delta)),
            "within_2delta": float(np.mean(errs <= 2 * delta))}


def run_codebook_report(cfg: ExperimentConfig, codebook: cbm.PoseCodebook | None = None) -> CodebookSummary:
    start = time.perf_counter()
    if codebook is None:
        codebook = build_codebook(cfg)
    obj = chicken(alpha=cfg.alpha, protrusions=cfg.protrusions)
    delta = cbm.coverage_radius(codebook.rotation_array(), trial_rng(cfg.seed, PHASE_REPORT, 0, 0))
    qrng = trial_rng(cfg.seed, PHASE_REPORT, 1, 0)
    queries = [rot.sample_uniform(qrng) for _ in range(cfg.n_queries)]
    clean, aug = cbm.retrieval_errors(obj, codebook, queries, augment_cfg=cfg.augment,
                                      rng=trial_rng(cfg.seed, PHASE_REPORT, 2, 0), both=True)
    return CodebookSummary(codebook.header_lines(), math.degrees(delta), _stats(clean, delta), _stats(aug, delta),
                           time.perf_counter() - start)


def format_codebook_summary(s: CodebookSummary) -> str:
    lines = list(s.header)
    lines.append(f"coverage bound: {s.coverage_deg:.3f} deg")
    for name, st in (("clean", s.clean), ("augmented", s.augmented)):
        lines.append(f"{name:>9}: mean {st['mean_deg']:.3f}  median {st['median_deg']:.3f}  max {st['max_deg']:.3f} deg"
                     f"  within bound {100 * st['within_delta']:.1f}%  within 2x {100 * st['within_2delta']:.1f}%")
    lines.append(f"reference mean error on real birds with a trained encoder: {REFERENCE_MEAN_ERROR_DEG} deg"
                 " (context only)")
    return "\n".join(lines)


def write_report(report: ExperimentReport, out_dir, stem: str) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    write_csv(csv_path, report.rows)
    write_json(json_path, report.to_dict())
    return csv_path, json_path


__all__ = [
    "ExperimentConfig", "ExperimentReport", "Tally", "TrialRow", "default_config_text", "format_table",
    "run_codebook_report", "run_pick_bench", "run_place_bench", "write_csv", "write_json", "write_report",
]
