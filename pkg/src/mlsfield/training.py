"""The training loop: field gradients feed the target generator, targets
feed the field.

Each optimizer step runs in two phases over frozen parameters: first a
read-only phase evaluates the field and its input gradients at the batch's
query points and at every (deduplicated) neighbor point — the normalized
neighbor gradients serve as normals for the plane-distance targets, which
are computed as plain constants.  Then the exclusive phase backpropagates
the squared-error loss to the parameters (residuals attach only to query
rows; nothing flows through the targets) and applies one Adam update.
Everything is seeded and single-order, so a (cloud, config) pair maps to a
bit-reproducible loss trace.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from . import field as mlp
from . import imls as imls_mod
from . import sampler as sampler_mod
from .errors import ConfigurationError, TrainingDivergedError
from .geometry import PointCloud
from .imls import ImlsConfig
from .neighbors import NeighborIndex
from .sampler import SamplerConfig

ABLATION_MODES = ("full", "no_theta", "no_psi", "no_gni", "knn_neighbors")
KNN_PRESETS = (100, 300, 500)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 100
    learning_rate: float = 5e-5
    imls: ImlsConfig = dc_field(default_factory=ImlsConfig)
    sampler: SamplerConfig = dc_field(default_factory=SamplerConfig)
    mlp: mlp.MlpConfig = dc_field(default_factory=mlp.MlpConfig)
    seed: int = 0
    checkpoint_every: int = 0      # epochs; 0 disables periodic checkpoints
    log_every: int = 10            # steps between training-log rows
    early_stop: bool = False       # optional plateau stop, off by default
    early_stop_window: int = 10
    early_stop_rel_tol: float = 1e-5
    knn_neighbors: int | None = None  # fixed-k gathering instead of radius

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        if self.knn_neighbors is not None and self.knn_neighbors < 1:
            raise ConfigurationError("knn_neighbors must be >= 1")

    def resolved_for(self, cloud: PointCloud) -> "TrainConfig":
        """Apply the sampler noise preset and match the MLP input width."""
        cfg = self
        if cfg.sampler.noise_preset is not None:
            rf, tc = sampler_mod.resolve_noise_preset(cfg.sampler.noise_preset)
            cfg = replace(cfg, imls=replace(cfg.imls, radius_fraction=rf,
                                            target_neighbor_count=tc))
        if cfg.mlp.input_dim != cloud.dim:
            cfg = replace(cfg, mlp=replace(cfg.mlp, input_dim=cloud.dim))
        return cfg


@dataclass
class TrainReport:
    epoch_losses: list          # mean batch loss per completed epoch
    epoch_seconds: list         # wall-clock seconds per epoch
    step_count: int
    degenerate_gradient_events: int  # gradient-norm clamp fallbacks
    invalid_query_count: int         # queries dropped for empty balls
    degenerate_weight_fallbacks: int  # underflowed rows given nearest-plane targets
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "epoch_losses": [float(x) for x in self.epoch_losses],
            "epoch_seconds": [float(x) for x in self.epoch_seconds],
            "step_count": self.step_count,
            "degenerate_gradient_events": self.degenerate_gradient_events,
            "invalid_query_count": self.invalid_query_count,
            "degenerate_weight_fallbacks": self.degenerate_weight_fallbacks,
            "stopped_early": self.stopped_early,
        }


def prepare_data(cloud: PointCloud, config: TrainConfig
                 ) -> sampler_mod.NeighborhoodBatch:
    """Generate queries and assemble all valid neighborhoods."""
    index = NeighborIndex(cloud.points)
    queries = sampler_mod.generate_queries(cloud, index, config.sampler)
    sources = sampler_mod.query_source_indices(len(cloud),
                                               config.sampler.queries_per_point)
    radius = config.imls.radius_fraction * cloud.diagonal
    data = sampler_mod.assemble_neighborhoods(
        queries, cloud, index, radius,
        config.imls.target_neighbor_count,
        seed=config.sampler.seed,
        floor_fraction=config.imls.sigma_imls_floor,
        source_indices=sources,
        knn_neighbors=config.knn_neighbors,
    )
    if len(data) == 0:
        raise ConfigurationError(
            f"all {len(queries)} queries were invalid (empty balls at radius "
            f"{radius:.4g}); increase radius_fraction or the noise preset"
        )
    return data


def train(cloud: PointCloud, config: TrainConfig, *,
          log_path=None, checkpoint_dir=None, epoch_callback=None,
          target_hook=None) -> tuple[mlp.MlpParams, TrainReport]:
    """Fit the field to a (normalized) cloud; returns parameters and report.

    ``epoch_callback(epoch, params, mean_loss)`` runs after every epoch
    (snapshots, progress displays).  ``target_hook(values, targets)`` lets
    tests replace the regression targets right before the loss; production
    code leaves it ``None``.
    """
    config = config.resolved_for(cloud)
    data = prepare_data(cloud, config)
    params = mlp.init(config.mlp, config.seed)
    adam = mlp.AdamState.for_params(params, config.learning_rate)

    report = TrainReport([], [], 0, 0, data.invalid_count, 0)
    log_writer, log_file = _open_log(log_path)
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    loss_total = 0.0  # running mean accumulator for the log
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            batches = sampler_mod.make_batches(len(data), config.batch_size,
                                               config.seed, epoch)
            step_losses = []
            for rows in batches:
                params, adam, loss = _train_step(
                    params, adam, rows, data, cloud.points, config, report,
                    target_hook)
                step_losses.append(loss)
                report.step_count += 1
                loss_total += loss
                if log_writer and report.step_count % config.log_every == 0:
                    log_writer.writerow([
                        report.step_count, epoch, f"{loss:.10e}",
                        f"{loss_total / report.step_count:.10e}",
                        report.degenerate_gradient_events,
                    ])

            mean_loss = float(np.mean(step_losses)) if step_losses else float("nan")
            report.epoch_losses.append(mean_loss)
            report.epoch_seconds.append(time.perf_counter() - t0)

            if not np.isfinite(mean_loss):
                snapshot = None
                if checkpoint_dir is not None:
                    snapshot = checkpoint_dir / f"diverged_epoch{epoch:04d}.npz"
                    mlp.save_checkpoint(snapshot, params, adam, seed=config.seed,
                                        extra={"diverged_at_epoch": epoch})
                raise TrainingDivergedError(
                    f"epoch {epoch} mean loss is {mean_loss}; aborting "
                    f"({len(step_losses)} steps this epoch)",
                    snapshot_path=snapshot,
                )

            if (checkpoint_dir is not None and config.checkpoint_every > 0
                    and epoch % config.checkpoint_every == 0):
                mlp.save_checkpoint(checkpoint_dir / f"epoch{epoch:04d}.npz",
                                    params, adam, seed=config.seed,
                                    extra={"epoch": epoch})
            if epoch_callback is not None:
                epoch_callback(epoch, params, mean_loss)

            if config.early_stop and len(report.epoch_losses) > config.early_stop_window:
                prev = report.epoch_losses[-1 - config.early_stop_window]
                if abs(mean_loss - prev) < config.early_stop_rel_tol * max(abs(prev), 1e-12):
                    report.stopped_early = True
                    break
    finally:
        if log_file is not None:
            log_file.close()

    return params, report


def _train_step(params, adam, rows, data, cloud_points, config, report,
                target_hook):
    """One optimizer step; returns (params, adam, loss).

    Phase 1 (parameters frozen): forward + input gradients over the batch
    queries and the deduplicated union of their neighbors; normalized
    neighbor gradients become normals; targets come out as constants.
    Phase 2: squared-error loss against those constants, reverse-mode
    parameter gradients with residuals attached to query rows only, one
    Adam update.
    """
    rows = np.sort(np.asarray(rows))  # canonical reduction order
    n_q = rows.size
    q_pts = data.queries[rows]
    positions = data.positions[rows]
    nb_idx = data.neighbor_indices[rows]
    msk = data.mask[rows]

    # Deduplicated neighbor evaluation: each distinct cloud point's gradient
    # is computed once per step no matter how many neighborhoods contain it.
    uidx = np.unique(nb_idx[msk])
    eval_pts = np.concatenate([q_pts, cloud_points[uidx]], axis=0)
    cache = mlp.forward_with_cache(params, eval_pts.astype(params.config.np_dtype))
    grads = mlp.input_gradient_from_cache(params, cache)
    units, degenerate_dirs = mlp.normalize_directions(grads)
    report.degenerate_gradient_events += int(degenerate_dirs.sum())

    grad_q = units[:n_q]
    safe_idx = np.where(msk, nb_idx, uidx[0])
    normals = units[n_q + np.searchsorted(uidx, safe_idx)]

    targets, degenerate = imls_mod.batched_values(
        q_pts, positions, msk, data.sigma[rows], normals,
        config.imls, grad_q=grad_q,
    )
    if degenerate.any():
        # All weights underflowed (far query, tiny kernel width): fall back
        # to the nearest neighbor's plane distance so the target stays
        # defined everywhere.
        d_rows = np.flatnonzero(degenerate)
        offsets = q_pts[d_rows, None, :] - positions[d_rows]
        dist = np.where(msk[d_rows], np.linalg.norm(offsets, axis=2), np.inf)
        nearest = np.argmin(dist, axis=1)
        pick = np.arange(d_rows.size)
        targets[d_rows] = np.einsum("bd,bd->b", offsets[pick, nearest],
                                    normals[d_rows][pick, nearest])
        report.degenerate_weight_fallbacks += d_rows.size

    values = cache.values[:n_q]
    if target_hook is not None:
        targets = np.asarray(target_hook(values.copy(), targets.copy()),
                             dtype=np.float64)

    residual = values - targets
    loss = float(residual @ residual) / n_q
    upstream = np.zeros(eval_pts.shape[0])
    upstream[:n_q] = (2.0 / n_q) * residual
    param_grads = mlp.param_backward(params, cache, upstream)
    params, adam = mlp.adam_step(params, param_grads, adam)
    return params, adam, loss


def _open_log(log_path):
    if log_path is None:
        return None, None
    fh = open(log_path, "w", newline="", encoding="utf-8")
    writer = csv.writer(fh)
    writer.writerow(["step", "epoch", "batch_loss", "running_mean",
                     "degenerate_gradient_events"])
    return writer, fh


def evaluate_field(params: mlp.MlpParams, points, chunk_size: int = 8192
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Field values and gradient norms at the given points (chunked)."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    values = np.empty(pts.shape[0])
    gnorms = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk_size):
        block = pts[start:start + chunk_size]
        cache = mlp.forward_with_cache(params, block.astype(params.config.np_dtype))
        grad = mlp.input_gradient_from_cache(params, cache)
        values[start:start + chunk_size] = cache.values
        gnorms[start:start + chunk_size] = np.linalg.norm(grad, axis=1)
    if single:
        return values[0], gnorms[0]
    return values, gnorms


def ablation_mode(config: TrainConfig, mode: str,
                  k: int | None = None) -> TrainConfig:
    """Derive a config for one of the ablation switches.

    ``no_theta`` and ``no_psi`` disable a weight factor, ``no_gni`` switches
    to random initialization, ``knn_neighbors`` swaps radius gathering for
    fixed-k gathering (k required, typically one of ``KNN_PRESETS``).
    """
    if mode == "full":
        return config
    if mode == "no_theta":
        return replace(config, imls=replace(config.imls, use_theta=False))
    if mode == "no_psi":
        return replace(config, imls=replace(config.imls, use_psi=False))
    if mode == "no_gni":
        return replace(config, mlp=replace(config.mlp, init_mode="random"))
    if mode == "knn_neighbors":
        if k is None:
            raise ConfigurationError("knn_neighbors mode needs k")
        return replace(config, knn_neighbors=int(k))
    raise ConfigurationError(
        f"unknown ablation mode {mode!r}; choose from {ABLATION_MODES}"
    )
