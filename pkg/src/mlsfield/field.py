"""The learned signed-distance field: a skip-connected SoftPlus MLP in numpy.

The network maps a 2- or 3-vector to a scalar.  Everything needed for
training lives here: geometric ("sphere-like") initialization, batched
forward evaluation, exact reverse-mode gradients with respect to the inputs
and with respect to the parameters, an Adam step, and checkpoint I/O.

Only first-order derivatives are ever required: the regression targets the
trainer feeds in are constants (no derivative flows through them), so the
parameter gradient of the squared-error loss needs a single backward pass.
This is a load-bearing simplification — do not route gradients through the
target computation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, EmptyInputError

_GRAD_NORM_CLAMP = 1e-12


# ---------------------------------------------------------------------------
# Configuration and parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpConfig:
    """Architecture and initialization settings.

    ``depth`` counts hidden (SoftPlus) layers; one linear output layer is
    appended on top.  ``skip_layer`` names the hidden layer whose input is
    the previous activation concatenated with the raw network input (scaled
    by 1/sqrt(2)); the layer feeding it is narrowed to ``width - input_dim``
    so the concatenation restores ``width`` exactly.  ``skip_layer=None``
    disables the skip (used by tiny test networks).
    """

    input_dim: int = 3
    depth: int = 8
    width: int = 512
    skip_layer: int | None = 4
    softplus_beta: float = 1000.0
    init_mode: str = "geometric"          # or "random"
    init_sphere_radius: float = 1.0
    activation: str = "softplus"          # anything else is rejected
    dtype: str = "float64"                # or "float32"

    def __post_init__(self):
        if self.input_dim not in (2, 3):
            raise ConfigurationError(f"input_dim must be 2 or 3, got {self.input_dim}")
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if self.width < self.input_dim + 1:
            raise ConfigurationError(f"width {self.width} too small")
        if self.skip_layer is not None and not (1 < self.skip_layer < self.depth):
            raise ConfigurationError(
                f"skip_layer must satisfy 1 < skip_layer < depth, got {self.skip_layer}"
            )
        if self.softplus_beta <= 0:
            raise ConfigurationError("softplus_beta must be > 0")
        if self.init_mode not in ("geometric", "random"):
            raise ConfigurationError(f"unknown init_mode {self.init_mode!r}")
        if self.activation != "softplus":
            raise ConfigurationError(
                f"activation {self.activation!r} is not supported (only 'softplus')"
            )
        if self.dtype not in ("float64", "float32"):
            raise ConfigurationError(f"dtype must be float64 or float32, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of every linear layer, hidden layers first."""
        dims = []
        for layer in range(self.depth):
            fan_in = self.input_dim if layer == 0 else self.width
            fan_out = self.width
            if self.skip_layer is not None and layer + 1 == self.skip_layer:
                fan_out = self.width - self.input_dim
            dims.append((fan_in, fan_out))
        dims.append((self.width if self.depth > 0 else self.input_dim, 1))
        return dims

    def to_json(self) -> str:
        return json.dumps({
            "input_dim": self.input_dim, "depth": self.depth, "width": self.width,
            "skip_layer": self.skip_layer, "softplus_beta": self.softplus_beta,
            "init_mode": self.init_mode, "init_sphere_radius": self.init_sphere_radius,
            "activation": self.activation, "dtype": self.dtype,
        })

    @classmethod
    def from_json(cls, text: str) -> "MlpConfig":
        return cls(**json.loads(text))


@dataclass
class ParamBlocks:
    """Per-layer arrays shaped like the network parameters.

    Used for the parameters themselves, for gradients, and for Adam moments.
    """

    weights: list  # list of (fan_in, fan_out) arrays
    biases: list   # list of (fan_out,) arrays

    def zeros_like(self) -> "ParamBlocks":
        return ParamBlocks([np.zeros_like(w) for w in self.weights],
                           [np.zeros_like(b) for b in self.biases])

    def check_same_shapes(self, other: "ParamBlocks") -> None:
        ok = (len(self.weights) == len(other.weights)
              and all(a.shape == b.shape for a, b in zip(self.weights, other.weights))
              and all(a.shape == b.shape for a, b in zip(self.biases, other.biases)))
        if not ok:
            raise ValueError("parameter block shapes do not match")


@dataclass
class MlpParams:
    """Network parameters plus the config that fixes their meaning."""

    config: MlpConfig
    blocks: ParamBlocks

    @property
    def weights(self):
        return self.blocks.weights

    @property
    def biases(self):
        return self.blocks.biases

    def num_parameters(self) -> int:
        return int(sum(w.size for w in self.weights) + sum(b.size for b in self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams(self.config,
                         ParamBlocks([w.copy() for w in self.weights],
                                     [b.copy() for b in self.biases]))


@dataclass
class AdamState:
    """Adam moment accumulators and hyperparameters."""

    m: ParamBlocks
    v: ParamBlocks
    step: int = 0
    learning_rate: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, learning_rate: float = 5e-5) -> "AdamState":
        return cls(m=params.blocks.zeros_like(), v=params.blocks.zeros_like(),
                   step=0, learning_rate=learning_rate)


# ---------------------------------------------------------------------------
# Activation
# ---------------------------------------------------------------------------

def softplus(z: np.ndarray, beta: float) -> np.ndarray:
    """(1/beta) * log(1 + exp(beta*z)), overflow-safe for any |beta*z|."""
    return np.logaddexp(0.0, beta * z) / beta


def softplus_prime(z: np.ndarray, beta: float) -> np.ndarray:
    """Derivative of :func:`softplus`: the logistic sigmoid of beta*z."""
    return expit(beta * z)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init(config: MlpConfig, seed: int) -> MlpParams:
    """Draw parameters; deterministic given ``seed``.

    Geometric mode follows the sphere-like recipe used for implicit SDF
    networks: zero-mean Gaussians with std sqrt(2)/sqrt(fan_out) on hidden
    layers (zero biases), and a final layer tightly concentrated at
    mean sqrt(pi)/sqrt(fan_in) with bias ``-init_sphere_radius``, which makes
    the initial field approximate ``|x| - init_sphere_radius``.  Random mode
    uses zero-mean scaled Gaussians everywhere.
    """
    rng = np.random.default_rng(seed)
    dims = config.layer_dims()
    last = len(dims) - 1
    weights, biases = [], []
    for layer, (fan_in, fan_out) in enumerate(dims):
        if config.init_mode == "geometric" and layer == last:
            w = rng.normal(np.sqrt(np.pi) / np.sqrt(fan_in), 1e-5, size=(fan_in, fan_out))
            b = np.full(fan_out, -config.init_sphere_radius)
        elif config.init_mode == "geometric":
            w = rng.normal(0.0, np.sqrt(2.0) / np.sqrt(fan_out), size=(fan_in, fan_out))
            b = np.zeros(fan_out)
        else:
            scale = (1.0 if layer == last else np.sqrt(2.0)) / np.sqrt(fan_in)
            w = rng.normal(0.0, scale, size=(fan_in, fan_out))
            b = np.zeros(fan_out)
        weights.append(w.astype(config.np_dtype))
        biases.append(b.astype(config.np_dtype))
    return MlpParams(config, ParamBlocks(weights, biases))


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _check_points(points, config: MlpConfig) -> tuple[np.ndarray, bool]:
    pts = np.asarray(points, dtype=config.np_dtype)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != config.input_dim:
        raise ValueError(
            f"points must be ({config.input_dim},) or (n, {config.input_dim}), "
            f"got shape {np.asarray(points).shape}"
        )
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite values")
    return pts, single


def forward(params: MlpParams, points) -> np.ndarray | float:
    """Field values; accepts a single d-vector or an (n, d) batch."""
    pts, single = _check_points(points, params.config)
    y = _forward_only(params, pts)
    return float(y[0]) if single else y


def _forward_only(params: MlpParams, pts: np.ndarray) -> np.ndarray:
    cfg = params.config
    inv_sqrt2 = np.asarray(1.0, dtype=cfg.np_dtype) / np.sqrt(np.asarray(2.0, dtype=cfg.np_dtype))
    h = pts
    for layer in range(cfg.depth):
        if cfg.skip_layer is not None and layer == cfg.skip_layer:
            h = np.concatenate([h, pts], axis=1) * inv_sqrt2
        z = h @ params.weights[layer] + params.biases[layer]
        h = softplus(z, cfg.softplus_beta)
    out = h @ params.weights[-1] + params.biases[-1]
    return out[:, 0]


class _ForwardCache:
    """Intermediates needed to run backward passes."""

    __slots__ = ("pts", "inputs", "primes", "values")

    def __init__(self, pts, inputs, primes, values):
        self.pts = pts          # (n, d) raw input
        self.inputs = inputs    # per linear layer: its actual (n, fan_in) input
        self.primes = primes    # per hidden layer: softplus'(z)  (n, fan_out)
        self.values = values    # (n,) output


def forward_with_cache(params: MlpParams, pts: np.ndarray) -> _ForwardCache:
    cfg = params.config
    inv_sqrt2 = np.asarray(1.0, dtype=cfg.np_dtype) / np.sqrt(np.asarray(2.0, dtype=cfg.np_dtype))
    inputs, primes = [], []
    h = pts
    for layer in range(cfg.depth):
        if cfg.skip_layer is not None and layer == cfg.skip_layer:
            h = np.concatenate([h, pts], axis=1) * inv_sqrt2
        inputs.append(h)
        z = h @ params.weights[layer] + params.biases[layer]
        primes.append(softplus_prime(z, cfg.softplus_beta))
        h = softplus(z, cfg.softplus_beta)
    inputs.append(h)
    values = (h @ params.weights[-1] + params.biases[-1])[:, 0]
    return _ForwardCache(pts, inputs, primes, values)


def input_gradient_from_cache(params: MlpParams, cache: _ForwardCache) -> np.ndarray:
    """d(output)/d(input) for every cached row, via reverse mode."""
    cfg = params.config
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    g = np.broadcast_to(params.weights[-1][:, 0], cache.inputs[-1].shape).copy()
    grad_x = np.zeros_like(cache.pts)
    for layer in range(cfg.depth - 1, -1, -1):
        gz = g * cache.primes[layer]
        g = gz @ params.weights[layer].T
        if cfg.skip_layer is not None and layer == cfg.skip_layer:
            g *= inv_sqrt2
            grad_x += g[:, -cfg.input_dim:]
            g = g[:, : -cfg.input_dim]
    grad_x += g
    return grad_x


def input_gradient(params: MlpParams, points) -> np.ndarray:
    """Exact gradient of the field w.r.t. its input (batched)."""
    pts, single = _check_points(points, params.config)
    grad = input_gradient_from_cache(params, forward_with_cache(params, pts))
    return grad[0] if single else grad


def normalized_gradient(params: MlpParams, points) -> tuple[np.ndarray, np.ndarray]:
    """Unit input gradients plus a degeneracy flag per row.

    Rows whose gradient norm falls below 1e-12 get a fixed fallback
    direction (+z in 3-D, +y in 2-D) and ``True`` in the flag array.
    """
    pts, single = _check_points(points, params.config)
    grad = input_gradient_from_cache(params, forward_with_cache(params, pts))
    units, flags = normalize_directions(grad)
    return (units[0], bool(flags[0])) if single else (units, flags)


def normalize_directions(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalize row vectors, substituting the fallback axis when degenerate."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    norms = np.linalg.norm(vectors, axis=1)
    degenerate = norms < _GRAD_NORM_CLAMP
    safe = np.where(degenerate, 1.0, norms)
    units = vectors / safe[:, None]
    if np.any(degenerate):
        fallback = np.zeros(vectors.shape[1])
        fallback[-1] = 1.0  # +z in 3-D, +y in 2-D
        units[degenerate] = fallback
    return units, degenerate


def param_backward(params: MlpParams, cache: _ForwardCache,
                   upstream: np.ndarray) -> ParamBlocks:
    """Gradients of sum_j upstream_j * f(x_j) w.r.t. every parameter."""
    cfg = params.config
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    nw = len(params.weights)
    gw = [None] * nw
    gb = [None] * nw
    g = np.asarray(upstream, dtype=cache.inputs[-1].dtype)[:, None]
    gw[-1] = cache.inputs[-1].T @ g
    gb[-1] = g.sum(axis=0)
    g = g @ params.weights[-1].T
    for layer in range(cfg.depth - 1, -1, -1):
        gz = g * cache.primes[layer]
        gw[layer] = cache.inputs[layer].T @ gz
        gb[layer] = gz.sum(axis=0)
        if layer == 0:
            break
        g = gz @ params.weights[layer].T
        if cfg.skip_layer is not None and layer == cfg.skip_layer:
            g = g[:, : -cfg.input_dim] * inv_sqrt2
    return ParamBlocks(gw, gb)


def loss_and_param_gradients(params: MlpParams, queries, targets) -> tuple[float, ParamBlocks]:
    """Mean squared error against constant targets, with exact gradients.

    loss = (1/n) * sum_j (target_j - f(q_j))^2.  Targets are treated as
    constants; the returned gradients are the exact reverse-mode derivatives
    of this loss with respect to the parameters only.
    """
    pts, _ = _check_points(queries, params.config)
    tgt = np.asarray(targets, dtype=params.config.np_dtype).reshape(-1)
    if pts.shape[0] == 0:
        raise EmptyInputError("empty query batch")
    if tgt.shape[0] != pts.shape[0]:
        raise ValueError(f"{pts.shape[0]} queries but {tgt.shape[0]} targets")
    cache = forward_with_cache(params, pts)
    residual = cache.values - tgt
    loss = float(residual @ residual) / pts.shape[0]
    upstream = (2.0 / pts.shape[0]) * residual
    return loss, param_backward(params, cache, upstream)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def adam_step(params: MlpParams, grads: ParamBlocks,
              state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; returns fresh containers."""
    params.blocks.check_same_shapes(grads)
    state.m.check_same_shapes(grads)
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    lr = state.learning_rate

    new_w, new_b = [], []
    new_mw, new_mb, new_vw, new_vb = [], [], [], []
    for kind, out_p, out_m, out_v in (("weights", new_w, new_mw, new_vw),
                                      ("biases", new_b, new_mb, new_vb)):
        ps = getattr(params.blocks, kind)
        gs = getattr(grads, kind)
        ms = getattr(state.m, kind)
        vs = getattr(state.v, kind)
        for p, gr, m, v in zip(ps, gs, ms, vs):
            m2 = b1 * m + (1.0 - b1) * gr
            v2 = b2 * v + (1.0 - b2) * np.square(gr)
            update = lr * (m2 / bc1) / (np.sqrt(v2 / bc2) + state.epsilon)
            out_p.append(p - update)
            out_m.append(m2)
            out_v.append(v2)

    new_params = MlpParams(params.config, ParamBlocks(new_w, new_b))
    new_state = AdamState(m=ParamBlocks(new_mw, new_mb), v=ParamBlocks(new_vw, new_vb),
                          step=t, learning_rate=state.learning_rate,
                          beta1=b1, beta2=b2, epsilon=state.epsilon)
    return new_params, new_state


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: MlpParams, adam: AdamState | None = None,
                    seed: int | None = None, extra: dict | None = None) -> None:
    """Write a self-describing ``.npz`` container; round-trip exact."""
    meta = {
        "version": _CHECKPOINT_VERSION,
        "config": json.loads(params.config.to_json()),
        "n_layers": len(params.weights),
        "seed": seed,
        "extra": extra or {},
    }
    if adam is not None:
        meta["adam"] = {
            "step": adam.step, "learning_rate": adam.learning_rate,
            "beta1": adam.beta1, "beta2": adam.beta2, "epsilon": adam.epsilon,
        }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    if adam is not None:
        for i in range(len(params.weights)):
            arrays[f"mw{i}"] = adam.m.weights[i]
            arrays[f"mb{i}"] = adam.m.biases[i]
            arrays[f"vw{i}"] = adam.v.weights[i]
            arrays[f"vb{i}"] = adam.v.biases[i]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[MlpParams, AdamState | None, dict]:
    """Read a checkpoint; returns (params, adam or None, meta dict)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("version") != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version in {path}")
        config = MlpConfig(**meta["config"])
        n = meta["n_layers"]
        blocks = ParamBlocks([data[f"w{i}"] for i in range(n)],
                             [data[f"b{i}"] for i in range(n)])
        params = MlpParams(config, blocks)
        adam = None
        if "adam" in meta and "mw0" in data:
            adam = AdamState(
                m=ParamBlocks([data[f"mw{i}"] for i in range(n)],
                              [data[f"mb{i}"] for i in range(n)]),
                v=ParamBlocks([data[f"vw{i}"] for i in range(n)],
                              [data[f"vb{i}"] for i in range(n)]),
                step=int(meta["adam"]["step"]),
                learning_rate=float(meta["adam"]["learning_rate"]),
                beta1=float(meta["adam"]["beta1"]),
                beta2=float(meta["adam"]["beta2"]),
                epsilon=float(meta["adam"]["epsilon"]),
            )
    return params, adam, meta
