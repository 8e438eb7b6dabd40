"""Command-line driver: reconstruct, evaluate, demo2d, ablate.

Every run materializes its full configuration into ``manifest.json`` in the
output directory *before* heavy work begins, then finalizes it with output
paths and timestamps.  Config precedence is CLI flags > config file >
noise preset > built-in defaults.

Exit codes: 0 success, 2 configuration problem, 3 I/O problem,
4 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field as dc_field
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                         # Python < 3.11
    import tomli as tomllib

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import (ConfigurationError, EmptyInputError, MlsFieldError,
                     ParseError, TrainingDivergedError)
from .estimator import SdfReconstructor
from .field import save_checkpoint
from .geometry import PointCloud, load_mesh, load_point_cloud, save_mesh
from .isosurface import export_contours_csv, export_contours_svg
from .metrics import (MetricsConfig, SampledSurface, evaluate_surfaces,
                      sample_surface)
from .sampler import NOISE_PRESETS
from .shapes import SHAPES_2D, SHAPES_3D, make_test_cloud, sample_boundary
from .training import KNN_PRESETS

THREADS_ENV = "MLSFIELD_THREADS"

# Flat config-file keys (training side), mirroring the config dataclasses.
TRAIN_KEYS = {
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "seed": int,
    "noise_preset": str,
    "radius_fraction": float,
    "target_neighbor_count": int,
    "sigma_coherence": float,
    "queries_per_point": int,
    "std_nn_rank": int,
    "knn_neighbors": int,
    "grid_resolution": int,
    "grid_margin": float,
}
METRIC_KEYS = {
    "sample_count": int,
    "chamfer_convention": str,
    "fscore_thresholds": tuple,
    "metrics_preset": str,
}
TRAIN_DEFAULTS = {
    "epochs": 200, "batch_size": 100, "learning_rate": 5e-5, "seed": 0,
    "noise_preset": None, "radius_fraction": 0.01,
    "target_neighbor_count": 50, "sigma_coherence": 0.3,
    "queries_per_point": 25, "std_nn_rank": 50, "knn_neighbors": None,
    "grid_resolution": 256, "grid_margin": 0.1,
}


# ---------------------------------------------------------------------------
# Run manifest
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    """Reproducibility record: resolved config, input hashes, outputs."""

    command: str
    config: dict
    inputs: dict
    seed: int
    version: str = __version__
    status: str = "running"
    started_at: str = ""
    finished_at: str | None = None
    outputs: dict = dc_field(default_factory=dict)
    error: str | None = None

    @staticmethod
    def _now() -> str:
        return datetime.now(timezone.utc).isoformat()

    @classmethod
    def start(cls, command: str, config: dict, input_paths: dict,
              seed: int, out_dir: Path) -> "RunManifest":
        manifest = cls(command=command, config=config,
                       inputs={str(p): _sha256(p) for p in input_paths.values()},
                       seed=seed, started_at=cls._now())
        manifest.write(out_dir / "manifest.json")
        return manifest

    def finalize(self, path: Path, outputs: dict, status: str = "complete",
                 error: str | None = None) -> None:
        self.outputs = {k: str(v) for k, v in outputs.items()}
        self.status = status
        self.error = error
        self.finished_at = self._now()
        self.write(path)

    def write(self, path: Path) -> None:
        payload = {
            "command": self.command, "version": self.version,
            "seed": self.seed, "status": self.status,
            "started_at": self.started_at, "finished_at": self.finished_at,
            "config": self.config, "inputs": self.inputs,
            "outputs": self.outputs, "error": self.error,
        }
        path.write_text(json.dumps(payload, indent=2, default=str) + "\n",
                        encoding="utf-8")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

def _load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid TOML ({exc})") from None
    known = {**TRAIN_KEYS, **METRIC_KEYS}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigurationError(
            f"{path}: unknown config keys {unknown}; "
            f"valid keys: {sorted(known)}"
        )
    out = {}
    for key, value in raw.items():
        caster = known[key]
        try:
            out[key] = tuple(float(v) for v in value) if caster is tuple \
                else caster(value)
        except (TypeError, ValueError):
            raise ConfigurationError(
                f"{path}: key {key!r} expects {caster.__name__}"
            ) from None
    return out


def resolve_train_settings(args, file_cfg: dict) -> dict:
    """Materialize training settings: CLI > file > preset > defaults."""
    settings = dict(TRAIN_DEFAULTS)
    cli = {key: getattr(args, key, None) for key in TRAIN_KEYS}
    preset = cli["noise_preset"] or file_cfg.get("noise_preset")
    if preset is not None:
        if preset not in NOISE_PRESETS:
            raise ConfigurationError(
                f"unknown noise preset {preset!r}; "
                f"choose from {sorted(NOISE_PRESETS)}"
            )
        rf, tc = NOISE_PRESETS[preset]
        settings.update(noise_preset=preset, radius_fraction=rf,
                        target_neighbor_count=tc)
    settings.update({k: v for k, v in file_cfg.items() if k in TRAIN_KEYS})
    settings.update({k: v for k, v in cli.items() if v is not None})
    return settings


def _estimator_from(settings: dict, ablation: str = "full") -> SdfReconstructor:
    return SdfReconstructor(
        epochs=settings["epochs"], batch_size=settings["batch_size"],
        learning_rate=settings["learning_rate"],
        radius_fraction=settings["radius_fraction"],
        target_neighbor_count=settings["target_neighbor_count"],
        sigma_coherence=settings["sigma_coherence"],
        queries_per_point=settings["queries_per_point"],
        std_nn_rank=settings["std_nn_rank"],
        knn_neighbors=settings["knn_neighbors"], ablation=ablation,
        grid_resolution=settings["grid_resolution"],
        grid_margin=settings["grid_margin"], seed=settings["seed"],
    )


def _require_file(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def _out_dir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# reconstruct
# ---------------------------------------------------------------------------

def cmd_reconstruct(args) -> int:
    input_path = _require_file(args.input)
    file_cfg = _load_config_file(args.config) if args.config else {}
    settings = resolve_train_settings(args, file_cfg)
    out = _out_dir(args)
    cloud = load_point_cloud(input_path)

    manifest = RunManifest.start("reconstruct", settings,
                                 {"input": input_path}, settings["seed"], out)
    manifest_path = out / "manifest.json"
    log_path = out / "train.csv"
    try:
        est = _estimator_from(settings)
        est.fit(cloud, log_path=log_path, checkpoint_dir=out)
    except TrainingDivergedError as exc:
        manifest.finalize(manifest_path, {"train_log": log_path},
                          status="failed", error=str(exc))
        raise

    checkpoint_path = out / "checkpoint.npz"
    save_checkpoint(checkpoint_path, est.params_, seed=settings["seed"],
                    extra={"normalization": est.transform_.to_dict(),
                           "report": est.report_.to_dict()})

    outputs = {"train_log": log_path, "checkpoint": checkpoint_path}
    if cloud.dim == 3:
        mesh_path = out / f"mesh.{args.format}"
        mesh = est.extract_mesh()
        save_mesh(mesh, mesh_path)
        outputs["mesh"] = mesh_path
        summary = f"mesh: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces"
    else:
        contours = est.extract_contours()
        export_contours_svg(contours, out / "contours.svg")
        export_contours_csv(contours, out / "contours.csv")
        outputs["contours_svg"] = out / "contours.svg"
        outputs["contours_csv"] = out / "contours.csv"
        summary = f"contours: {len(contours)} polylines"

    manifest.finalize(manifest_path, outputs)
    losses = est.report_.epoch_losses
    print(f"reconstruct: {len(cloud)} points, {settings['epochs']} epochs, "
          f"loss {losses[0]:.3e} -> {losses[-1]:.3e}; {summary}")
    print(f"outputs in {out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _load_reference_surface(path: Path, sample_count: int, seed: int):
    """Ground truth: a triangle mesh (sampled) or a point cloud (as-is)."""
    if path.suffix.lower() in (".obj", ".ply"):
        mesh = load_mesh(path)
        if not mesh.is_empty:
            return sample_surface(mesh, sample_count, seed=seed)
    cloud = load_point_cloud(path)
    return SampledSurface.from_cloud(cloud)


def cmd_evaluate(args) -> int:
    pred_path = _require_file(args.prediction)
    gt_path = _require_file(args.ground_truth)
    file_cfg = _load_config_file(args.config) if args.config else {}

    seed = args.seed if args.seed is not None else file_cfg.get("seed", 0)
    preset = args.metrics_preset or file_cfg.get("metrics_preset")
    if preset is not None:
        config = MetricsConfig.for_preset(preset, seed=seed)
        base = {"sample_count": config.sample_count,
                "fscore_thresholds": config.fscore_thresholds,
                "chamfer_convention": config.chamfer_convention}
    else:
        base = {"sample_count": 100_000, "fscore_thresholds": (0.01, 0.02),
                "chamfer_convention": "mean_l2"}
    for key in ("sample_count", "fscore_thresholds", "chamfer_convention"):
        if key in file_cfg:
            base[key] = file_cfg[key]
    if args.sample_count is not None:
        base["sample_count"] = args.sample_count
    if args.tau is not None:
        base["fscore_thresholds"] = tuple(float(t) for t in args.tau.split(","))
    if args.convention is not None:
        base["chamfer_convention"] = args.convention
    config = MetricsConfig(seed=seed, **base)

    out = _out_dir(args)
    manifest = RunManifest.start(
        "evaluate",
        {**base, "seed": config.seed, "metrics_preset": preset},
        {"prediction": pred_path, "ground_truth": gt_path}, config.seed, out)

    pred_mesh = load_mesh(pred_path)
    pred = sample_surface(pred_mesh, config.sample_count, seed=config.seed)
    ground = _load_reference_surface(gt_path, config.sample_count, config.seed)

    report = evaluate_surfaces(ground, pred, config)
    report.save_json(out / "metrics.json")
    report.save_csv(out / "metrics.csv")
    manifest.finalize(out / "manifest.json",
                      {"metrics_json": out / "metrics.json",
                       "metrics_csv": out / "metrics.csv"})

    print(f"cd ({config.chamfer_convention}): {report.cd:.6g}")
    print(f"hd: {report.hd:.6g}")
    if report.nc is not None:
        print(f"nc: {report.nc:.6g}")
    for tau, (fs, precision, recall) in report.fscores.items():
        print(f"fs(tau={tau:g}): {fs:.6g}  precision {precision:.6g}  "
              f"recall {recall:.6g}")
    return 0


# ---------------------------------------------------------------------------
# demo2d
# ---------------------------------------------------------------------------

def _demo_cloud(args, seed: int) -> tuple:
    """Returns (cloud, reference_points) for a shape name or planar file."""
    name = args.shape
    if name in SHAPES_2D:
        cloud, _clean = make_test_cloud(name, args.count,
                                        noise_fraction=args.noise, seed=seed)
        reference = sample_boundary(name, 5000, seed=seed + 1)
        return cloud, reference
    path = Path(name)
    if path.is_file():
        cloud = load_point_cloud(path)
        pts = cloud.points
        if pts.shape[1] == 3:
            if np.ptp(pts[:, 2]) > 0:
                raise ConfigurationError(
                    "demo2d needs planar input (constant z column)")
            pts = pts[:, :2]
        return PointCloud(pts), pts
    raise ConfigurationError(
        f"unknown shape {name!r} (not a built-in {SHAPES_2D} "
        f"and not an existing file)"
    )


def _parse_snapshots(spec: str | None, epochs: int) -> tuple:
    if spec:
        try:
            wanted = sorted({int(s) for s in spec.split(",")})
        except ValueError:
            raise ConfigurationError(
                f"--snapshots expects comma-separated integers, got {spec!r}"
            ) from None
        if any(e < 1 for e in wanted):
            raise ConfigurationError("snapshot epochs must be >= 1")
    else:
        wanted = [e for e in (1, 10, 30, 50, 100) if e <= epochs]
    return tuple(sorted({min(e, epochs) for e in wanted} | {epochs}))


def cmd_demo2d(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    settings = resolve_train_settings(args, file_cfg)
    cloud, reference = _demo_cloud(args, settings["seed"])
    snapshots = _parse_snapshots(args.snapshots, settings["epochs"])
    out = _out_dir(args)

    config = dict(settings, noise=args.noise, count=args.count,
                  shape=args.shape, snapshots=list(snapshots))
    inputs = {}
    if Path(args.shape).is_file():
        inputs["input"] = Path(args.shape)
    manifest = RunManifest.start("demo2d", config, inputs,
                                 settings["seed"], out)

    est = _estimator_from(settings)
    outputs = {}

    def snapshot(epoch, params, mean_loss):
        if epoch not in snapshots:
            return
        # The estimator's params_ are live during training: the callback
        # params object is the one being optimized.
        est.params_ = params
        contours = est.extract_contours()
        svg = out / f"contours_epoch{epoch:04d}.svg"
        export_contours_svg(contours, svg)
        outputs[f"svg_epoch{epoch:04d}"] = svg

    est.fit(cloud, log_path=out / "train.csv", epoch_callback=snapshot)
    outputs["train_log"] = out / "train.csv"

    contours = est.extract_contours()
    export_contours_csv(contours, out / "contours.csv")
    outputs["contours_csv"] = out / "contours.csv"

    contour_points = np.concatenate(contours, axis=0) if contours else None
    if contour_points is None or len(contour_points) < 1:
        manifest.finalize(out / "manifest.json", outputs, status="failed",
                          error="no contour extracted")
        print("demo2d: no contour extracted", file=sys.stderr)
        return 2
    config_m = MetricsConfig(sample_count=len(reference),
                             fscore_thresholds=(0.01, 0.02),
                             seed=settings["seed"])
    report = evaluate_surfaces(SampledSurface(reference),
                               SampledSurface(contour_points), config_m)
    report.save_csv(out / "metrics.csv")
    outputs["metrics_csv"] = out / "metrics.csv"
    manifest.finalize(out / "manifest.json", outputs)

    losses = est.report_.epoch_losses
    print(f"demo2d {args.shape}: loss {losses[0]:.3e} -> {losses[-1]:.3e}; "
          f"chamfer (mean_l2) vs reference: {report.cd:.6g}")
    print(f"outputs in {out}")
    return 0


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

def _parse_modes(spec: str) -> list:
    modes = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if token.startswith("knn:"):
            try:
                k = int(token.split(":", 1)[1])
            except ValueError:
                raise ConfigurationError(f"bad knn mode {token!r}") from None
            modes.append(("knn_neighbors", k))
        elif token in ("full", "no_theta", "no_psi", "no_gni"):
            modes.append((token, None))
        else:
            raise ConfigurationError(
                f"unknown ablation mode {token!r}; expected full, no_theta, "
                f"no_psi, no_gni, or knn:K (typical K: {KNN_PRESETS})"
            )
    if not modes:
        raise ConfigurationError("no ablation modes given")
    return modes


def _ablate_input(args, seed: int) -> tuple:
    """Returns (cloud, reference_points, input_path or None)."""
    name = args.input
    if name in SHAPES_2D + SHAPES_3D:
        cloud, _clean = make_test_cloud(name, args.count,
                                        noise_fraction=args.noise, seed=seed)
        reference = sample_boundary(name, 5000, seed=seed + 1)
        return cloud, reference, None
    path = _require_file(name)
    cloud = load_point_cloud(path)
    return cloud, cloud.points, path


def cmd_ablate(args) -> int:
    file_cfg = _load_config_file(args.config) if args.config else {}
    settings = resolve_train_settings(args, file_cfg)
    modes = _parse_modes(args.modes)
    sweep = []
    if args.sigma_coherence_sweep:
        try:
            sweep = [float(s) for s in args.sigma_coherence_sweep.split(",")]
        except ValueError:
            raise ConfigurationError(
                "--sigma-coherence-sweep expects comma-separated floats"
            ) from None

    cloud, reference, input_path = _ablate_input(args, settings["seed"])
    out = _out_dir(args)
    run_specs = [(f"knn:{k}" if mode == "knn_neighbors" else mode, mode, k,
                  settings["sigma_coherence"]) for mode, k in modes]
    run_specs += [(f"sigma_coherence:{s:g}", "full", None, s) for s in sweep]

    manifest = RunManifest.start(
        "ablate", dict(settings, modes=[r[0] for r in run_specs]),
        {"input": input_path} if input_path else {}, settings["seed"], out)

    rows = []
    for label, mode, k, sigma in run_specs:
        run = dict(settings, sigma_coherence=sigma,
                   knn_neighbors=k if k is not None else settings["knn_neighbors"])
        est = _estimator_from(run, ablation=mode if mode != "knn_neighbors" else "full")
        started = time.perf_counter()
        est.fit(cloud)
        seconds = time.perf_counter() - started

        if cloud.dim == 2:
            pieces = est.extract_contours()
            recon = np.concatenate(pieces, axis=0) if pieces else None
        else:
            mesh = est.extract_mesh()
            recon = (sample_surface(mesh, 10_000, seed=settings["seed"]).points
                     if not mesh.is_empty else None)
        if recon is None:
            cd = hd = float("nan")
        else:
            config_m = MetricsConfig(sample_count=len(reference),
                                     seed=settings["seed"])
            report = evaluate_surfaces(SampledSurface(reference),
                                       SampledSurface(recon), config_m)
            cd, hd = report.cd, report.hd
        rows.append({"mode": label, "chamfer_mean_l2": cd, "hausdorff": hd,
                     "final_loss": est.report_.epoch_losses[-1],
                     "epochs": run["epochs"], "seconds": round(seconds, 2)})
        print(f"{label}: cd={cd:.6g} hd={hd:.6g} "
              f"loss={rows[-1]['final_loss']:.3e} ({seconds:.1f}s)")

    csv_path = out / "ablation.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    manifest.finalize(out / "manifest.json", {"ablation_csv": csv_path})
    print(f"wrote {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--preset", dest="noise_preset",
                       choices=sorted(NOISE_PRESETS),
                       help="noise preset setting radius fraction and "
                            "neighborhood size")
    group.add_argument("--epochs", type=int, default=None)
    group.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    group.add_argument("--learning-rate", dest="learning_rate", type=float,
                       default=None, help="Adam step size (default 5e-05)")
    group.add_argument("--radius-fraction", dest="radius_fraction", type=float,
                       default=None, help="neighborhood radius as a fraction "
                                          "of the bbox diagonal (default 0.01)")
    group.add_argument("--neighbors", dest="target_neighbor_count", type=int,
                       default=None, help="target neighborhood size (default 50)")
    group.add_argument("--sigma-coherence", dest="sigma_coherence", type=float,
                       default=None, help="gradient-coherence kernel width "
                                          "(default 0.3)")
    group.add_argument("--queries-per-point", dest="queries_per_point",
                       type=int, default=None, help="training queries drawn "
                                                    "around each input point "
                                                    "(default 25)")
    group.add_argument("--knn", dest="knn_neighbors", type=int, default=None,
                       help="gather a fixed k nearest neighbors instead of a "
                            "radius ball")
    group.add_argument("--grid", dest="grid_resolution", type=int, default=None,
                       help="extraction grid resolution (default 256; "
                            "common choices 128/256/512)")
    group.add_argument("--margin", dest="grid_margin", type=float, default=None,
                       help="extraction grid margin around the input bbox "
                            "(default 0.1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlsfield",
        description="Surface reconstruction from unoriented point clouds "
                    "via an MLS-regularized neural distance field.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", required=True,
                        help="output directory (created if missing)")
    common.add_argument("--config", help="TOML config file (flat keys)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int,
                        default=os.environ.get(THREADS_ENV),
                        help=f"cap BLAS threads (default ${THREADS_ENV})")

    rec = sub.add_parser("reconstruct", parents=[common],
                         help="train a field on a point cloud and extract "
                              "its zero level set")
    rec.add_argument("input", help="point cloud (xyz/ply/obj)")
    rec.add_argument("--format", choices=("obj", "ply"), default="obj",
                     help="mesh output format (default obj)")
    _add_train_flags(rec)
    rec.set_defaults(func=cmd_reconstruct)

    ev = sub.add_parser("evaluate", parents=[common],
                        help="score a reconstructed mesh against a reference "
                             "mesh or scan")
    ev.add_argument("prediction", help="reconstructed mesh (obj/ply)")
    ev.add_argument("ground_truth", help="reference mesh or point cloud")
    ev.add_argument("--preset", dest="metrics_preset",
                    choices=("srb", "shapenet", "abc", "realscan"),
                    help="sample budget / threshold preset")
    ev.add_argument("--convention", choices=("mean_l2", "sum_l2", "mean_sq"),
                    default=None, help="chamfer convention (default mean_l2)")
    ev.add_argument("--sample-count", dest="sample_count", type=int,
                    default=None)
    ev.add_argument("--tau", help="comma-separated f-score thresholds "
                                  "(default 0.01,0.02)")
    ev.set_defaults(func=cmd_evaluate)

    demo = sub.add_parser("demo2d", parents=[common],
                          help="train on a built-in 2-D shape and write "
                               "contour snapshots")
    demo.add_argument("shape", help=f"built-in shape {SHAPES_2D} or a planar "
                                    f"point file")
    demo.add_argument("--noise", type=float, default=0.01,
                      help="noise std as a fraction of the bbox diagonal "
                           "(default 0.01)")
    demo.add_argument("--count", type=int, default=500,
                      help="boundary sample count (default 500)")
    demo.add_argument("--snapshots", help="comma-separated snapshot epochs "
                                          "(default 1,10,30,50,100 clipped)")
    _add_train_flags(demo)
    demo.set_defaults(func=cmd_demo2d)

    abl = sub.add_parser("ablate", parents=[common],
                         help="train several ablation modes with a shared "
                              "seed and compare")
    abl.add_argument("input", help=f"point cloud file or built-in shape "
                                   f"{SHAPES_2D + SHAPES_3D}")
    abl.add_argument("--modes", default="full,no_theta,no_psi",
                     help="comma list: full,no_theta,no_psi,no_gni,knn:K")
    abl.add_argument("--sigma-coherence-sweep", dest="sigma_coherence_sweep",
                     help="comma-separated widths, each run as a full-mode row")
    abl.add_argument("--noise", type=float, default=0.03,
                     help="noise fraction for built-in shapes (default 0.03)")
    abl.add_argument("--count", type=int, default=2000,
                     help="sample count for built-in shapes (default 2000)")
    _add_train_flags(abl)
    abl.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2

    threads = args.threads
    limiter = None
    try:
        if threads is not None:
            limiter = threadpool_limits(limits=int(threads))
    except ValueError:
        print(f"error: bad thread count {threads!r}", file=sys.stderr)
        return 2

    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 4
    except (ParseError, EmptyInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MlsFieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    finally:
        if limiter is not None:
            limiter.unregister()


if __name__ == "__main__":
    sys.exit(main())
