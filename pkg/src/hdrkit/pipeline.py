"""End-to-end machinery: dataset construction, patching, training, inference.

Training regresses 64x64 patches with mini-batch SGD.  The data-parallel
step keeps identical parameter replicas on every worker, computes shard
gradients independently, sums them in ascending worker order scaled to the
whole-batch mean, updates worker 0, and broadcasts the result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import (
    Crf,
    ExposureLadder,
    ExposureStack,
    adaptive_stack,
    fixed_stack,
    geometric_ladder,
)
from .errors import ParameterError, ValidationError
from .image_io import RadianceMap
from .imgproc import LabImage, bilateral_filter, lab_to_rgb, luminance, rgb_to_lab
from .nn import LayerSpec, Network, NetworkSpec, mse_loss, sgd_step
from .tmo import OPERATORS, TmqiScore, ToneMap, select_best_tmo

LDR2HDR_CHANNELS = ("R", "G", "B")
TONEMAP_CHANNELS = ("L_base", "L_detail", "a", "b")

# scaled = (value + offset) / divisor, keeping regression targets near [-1, 1]
CHANNEL_SCALINGS: dict[str, tuple[float, float]] = {
    "L_base": (0.0, 100.0),
    "L_detail": (0.0, 20.0),
    "a": (128.0, 255.0),
    "b": (128.0, 255.0),
}

BILATERAL_SIGMA_S = 8.0
BILATERAL_SIGMA_R = 10.0


@dataclass
class TrainConfig:
    lr: float = 1e-2
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 40
    patch: int = 64
    dropout_p: float = 0.4
    seed: int = 0
    workers: int = 1
    dtype: str = "f32"
    target_domain: str = "linear"  # or "log1p"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patch < 8:
            raise ValidationError(f"patch must be >= 8, got {self.patch}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        if self.dtype not in ("f32", "f64"):
            raise ValidationError(f"dtype must be f32 or f64, got {self.dtype!r}")
        if self.target_domain not in ("linear", "log1p"):
            raise ValidationError(f"target_domain must be linear or log1p, got {self.target_domain!r}")

    def numpy_dtype(self):
        return np.float64 if self.dtype == "f64" else np.float32

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Sample:
    """One training pair: (C, p, p) input against a (1, p, p) target."""

    input: np.ndarray
    target: np.ndarray


# ---------------------------------------------------------------------------
# Normalization and network builders
# ---------------------------------------------------------------------------


def normalize_hdr(m: RadianceMap) -> tuple[RadianceMap, float]:
    """Divide by the 99th-percentile luminance; returns the scale for inversion."""
    lum = luminance(m.data)
    scale = float(np.percentile(lum, 99.0))
    if scale <= 0:
        raise ValidationError("cannot normalize: 99th-percentile luminance is zero")
    data = (m.data.astype(np.float64) / scale).astype(np.float32)
    return RadianceMap(width=m.width, height=m.height, data=data), scale


_LDR2HDR_DEPTHS = (60, 40, 20, 20, 20)
_TONEMAP_DEPTHS = (100, 80, 50, 10)


def _chain(in_depth: int, depths: tuple[int, ...], dropout_p: float) -> tuple[LayerSpec, ...]:
    layers = []
    prev = in_depth
    for i, d in enumerate(depths):
        kind = "conv3x3" if i == 0 else "conv1x1"
        layers.append(LayerSpec(kind, prev, d, batchnorm=True, dropout_p=dropout_p))
        prev = d
    layers.append(LayerSpec("output1x1", prev, 1))
    return tuple(layers)


def build_ldr2hdr_net(channel: str, seed: int, dropout_p: float = 0.4) -> NetworkSpec:
    """Stack-to-radiance regressor for one color channel (input depth 5)."""
    if channel not in LDR2HDR_CHANNELS:
        raise ParameterError(f"channel must be one of {LDR2HDR_CHANNELS}, got {channel!r}")
    offset = LDR2HDR_CHANNELS.index(channel)
    return NetworkSpec(layers=_chain(5, _LDR2HDR_DEPTHS, dropout_p), seed=seed + offset)


def build_tonemap_net(channel: str, seed: int, dropout_p: float = 0.4) -> NetworkSpec:
    """Single-plane tone-map regressor for one decomposed channel."""
    if channel not in TONEMAP_CHANNELS:
        raise ParameterError(f"channel must be one of {TONEMAP_CHANNELS}, got {channel!r}")
    offset = TONEMAP_CHANNELS.index(channel)
    return NetworkSpec(layers=_chain(1, _TONEMAP_DEPTHS, dropout_p), seed=seed + offset)


# ---------------------------------------------------------------------------
# Patch tiling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatchGrid:
    height: int
    width: int
    patch: int
    rows: int
    cols: int

    @property
    def count(self) -> int:
        return self.rows * self.cols


def extract_patches(planes: np.ndarray, patch: int) -> tuple[PatchGrid, np.ndarray]:
    """Tile (..., H, W) into non-overlapping (count, ..., patch, patch).

    The right/bottom edges are reflect-padded up to a multiple of the patch
    size; :func:`reassemble` crops back to the source dimensions.
    """
    if patch < 8:
        raise ParameterError(f"patch must be >= 8, got {patch}")
    planes = np.asarray(planes)
    h, w = planes.shape[-2:]
    rows = max(1, math.ceil(h / patch))
    cols = max(1, math.ceil(w / patch))
    pad = [(0, 0)] * (planes.ndim - 2) + [(0, rows * patch - h), (0, cols * patch - w)]
    padded = np.pad(planes, pad, mode="reflect")
    grid = PatchGrid(height=h, width=w, patch=patch, rows=rows, cols=cols)
    out = np.empty((rows * cols, *planes.shape[:-2], patch, patch), dtype=planes.dtype)
    for r in range(rows):
        for c in range(cols):
            out[r * cols + c] = padded[
                ..., r * patch : (r + 1) * patch, c * patch : (c + 1) * patch
            ]
    return grid, out


def reassemble(grid: PatchGrid, patches: np.ndarray) -> np.ndarray:
    """Invert :func:`extract_patches`; bitwise round trip on the valid region."""
    if patches.shape[0] != grid.count:
        raise ValidationError(f"expected {grid.count} patches, got {patches.shape[0]}")
    p = grid.patch
    full = np.empty(
        (*patches.shape[1:-2], grid.rows * p, grid.cols * p), dtype=patches.dtype
    )
    for r in range(grid.rows):
        for c in range(grid.cols):
            full[..., r * p : (r + 1) * p, c * p : (c + 1) * p] = patches[r * grid.cols + c]
    return full[..., : grid.height, : grid.width]


# ---------------------------------------------------------------------------
# Tone-map channel decomposition
# ---------------------------------------------------------------------------


@dataclass
class ChannelPlanes:
    """Matched unscaled input/target planes for one decomposed channel."""

    name: str
    input: np.ndarray
    target: np.ndarray
    offset: float
    divisor: float

    def scaled_input(self) -> np.ndarray:
        return (self.input + self.input.dtype.type(self.offset)) / self.input.dtype.type(self.divisor)

    def scaled_target(self) -> np.ndarray:
        return (self.target + self.target.dtype.type(self.offset)) / self.target.dtype.type(self.divisor)


def split_base_detail(
    L: np.ndarray, sigma_s: float = BILATERAL_SIGMA_S, sigma_r: float = BILATERAL_SIGMA_R
) -> tuple[np.ndarray, np.ndarray]:
    """Bilateral base layer plus residual detail, with base + detail == L exactly.

    The recomputation and the snap mask handle the rare pixels whose float
    split cannot be exact (tiny L beside much larger filtered values).
    """
    base = bilateral_filter(L, sigma_s, sigma_r)
    detail = L - base
    base = L - detail
    bad = (base + detail) != L
    if np.any(bad):
        base = base.copy()
        detail = detail.copy()
        base[bad] = L[bad]
        detail[bad] = 0.0
    return base, detail


def decompose_tonemap_channels(
    m: RadianceMap,
    tm: ToneMap,
    sigma_s: float = BILATERAL_SIGMA_S,
    sigma_r: float = BILATERAL_SIGMA_R,
) -> list[ChannelPlanes]:
    """Lab-split a (normalized HDR, tone map) pair into four regression channels."""
    if (m.width, m.height) != (tm.width, tm.height):
        raise ValidationError("map and tone map dimensions differ")
    lab_in = rgb_to_lab(m.data)
    lab_out = rgb_to_lab(tm.data)
    in_base, in_detail = split_base_detail(lab_in.L, sigma_s, sigma_r)
    out_base, out_detail = split_base_detail(lab_out.L, sigma_s, sigma_r)
    planes = {
        "L_base": (in_base, out_base),
        "L_detail": (in_detail, out_detail),
        "a": (lab_in.a, lab_out.a),
        "b": (lab_in.b, lab_out.b),
    }
    return [
        ChannelPlanes(name, inp, tgt, *CHANNEL_SCALINGS[name])
        for name, (inp, tgt) in planes.items()
    ]


def recompose_tonemap(planes: dict[str, np.ndarray]) -> ToneMap:
    """Rebuild a tone map from unscaled predicted channel planes."""
    missing = set(TONEMAP_CHANNELS) - set(planes)
    if missing:
        raise ValidationError(f"missing channels: {sorted(missing)}")
    L = planes["L_base"] + planes["L_detail"]
    h, w = L.shape
    lab = LabImage(
        width=w,
        height=h,
        L=L.astype(np.float32),
        a=planes["a"].astype(np.float32),
        b=planes["b"].astype(np.float32),
    )
    rgb = lab_to_rgb(lab)
    return ToneMap(width=w, height=h, data=np.clip(rgb.data, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Dataset construction
# ---------------------------------------------------------------------------


def stack_channel_planes(stack: ExposureStack, channel: int) -> np.ndarray:
    """(5, H, W) float32 input planes: one color channel across the stack, /255."""
    return np.stack(
        [img.data[..., channel].astype(np.float32) / np.float32(255.0) for img in stack.images]
    )


def _target_plane(values: np.ndarray, domain: str) -> np.ndarray:
    return np.log1p(values) if domain == "log1p" else values


def invert_target(values: np.ndarray, domain: str) -> np.ndarray:
    return np.expm1(values) if domain == "log1p" else values


def build_ldr2hdr_samples(
    scenes: list[RadianceMap],
    crf: Crf,
    cfg: TrainConfig,
    mode: str = "fixed",
    ladder: ExposureLadder | None = None,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-channel (inputs, targets) patch arrays from synthesized stacks.

    Targets are the normalized radiance channels (optionally log1p).
    """
    if mode not in ("fixed", "adaptive"):
        raise ParameterError(f"mode must be fixed or adaptive, got {mode!r}")
    per_channel: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {
        ch: [] for ch in LDR2HDR_CHANNELS
    }
    for scene in scenes:
        norm, _ = normalize_hdr(scene)
        if mode == "fixed":
            stack = fixed_stack(norm, crf)
        else:
            stack = adaptive_stack(norm, crf, ladder or geometric_ladder())
        for i, ch in enumerate(LDR2HDR_CHANNELS):
            planes = stack_channel_planes(stack, i)
            target = _target_plane(norm.data[..., i], cfg.target_domain)[None]
            _, x = extract_patches(planes, cfg.patch)
            _, y = extract_patches(target.astype(np.float32), cfg.patch)
            per_channel[ch].append((x, y))
    return {
        ch: (
            np.concatenate([x for x, _ in pairs]),
            np.concatenate([y for _, y in pairs]),
        )
        for ch, pairs in per_channel.items()
    }


def build_tonemap_samples(
    scenes: list[RadianceMap],
    cfg: TrainConfig,
    crf: Crf | None = None,
    operators: tuple[str, ...] = OPERATORS,
    sigma_s: float = BILATERAL_SIGMA_S,
    sigma_r: float = BILATERAL_SIGMA_R,
) -> tuple[dict[str, tuple[np.ndarray, np.ndarray]], list[tuple[str, TmqiScore]]]:
    """Per-channel patch arrays targeting each scene's best tone map."""
    per_channel: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {
        ch: [] for ch in TONEMAP_CHANNELS
    }
    selections: list[tuple[str, TmqiScore]] = []
    for scene in scenes:
        norm, _ = normalize_hdr(scene)
        tm, op, score, _ = select_best_tmo(norm, operators=operators, crf=crf)
        selections.append((op, score))
        for planes in decompose_tonemap_channels(norm, tm, sigma_s, sigma_r):
            x = planes.scaled_input().astype(np.float32)[None]
            y = planes.scaled_target().astype(np.float32)[None]
            _, xp = extract_patches(x, cfg.patch)
            _, yp = extract_patches(y, cfg.patch)
            per_channel[planes.name].append((xp, yp))
    return (
        {
            ch: (
                np.concatenate([x for x, _ in pairs]),
                np.concatenate([y for _, y in pairs]),
            )
            for ch, pairs in per_channel.items()
        },
        selections,
    )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    """Optimizer and curve state carried across epochs."""

    velocity: list | None = None
    step: int = 0
    epoch: int = 0
    curve: list[tuple] = field(default_factory=list)


def dropout_stream(seed: int, step: int, worker: int) -> np.random.Generator:
    """The dropout RNG stream for (run seed, global step, worker index)."""
    return np.random.default_rng(np.random.SeedSequence([seed, step, worker]))


def _as_arrays(samples, dtype) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, tuple):
        x, y = samples
    else:
        x = np.stack([s.input for s in samples])
        y = np.stack([s.target for s in samples])
    return x.astype(dtype, copy=False), y.astype(dtype, copy=False)


def _diverged(net: Network, x: np.ndarray) -> ValidationError:
    stats = net.activation_stats(x)
    return ValidationError(
        "training diverged (non-finite loss); activation stats: " + json.dumps(stats)
    )


def train_epoch(
    net: Network,
    samples,
    cfg: TrainConfig,
    rng: np.random.Generator,
    state: TrainState | None = None,
) -> float:
    """One shuffled pass of mini-batch SGD; returns the sample-weighted loss.

    Pass the same ``state`` across epochs to keep momentum, the global step
    counter, and the loss curve.
    """
    if state is None:
        state = TrainState()
    x_all, y_all = _as_arrays(samples, net.dtype)
    n = x_all.shape[0]
    if n < 1:
        raise ParameterError("need at least one sample")
    params = net.params()
    order = rng.permutation(n)
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        xb, yb = x_all[idx], y_all[idx]
        drop_rng = dropout_stream(cfg.seed, state.step, 0)
        pred = net.forward(xb, train=True, rng=drop_rng)
        loss, dpred = mse_loss(pred, yb)
        if not math.isfinite(loss):
            raise _diverged(net, xb)
        net.backward(dpred)
        state.velocity = sgd_step(params, net.grads(), cfg.lr, cfg.momentum, state.velocity)
        total += loss * len(idx)
        state.step += 1
    mean = total / n
    state.epoch += 1
    state.curve.append((state.epoch, mean))
    return mean


def eval_mse(net: Network, samples, batch_size: int = 40) -> float:
    """Sample-weighted mean MSE in eval mode (no dropout, running BN stats)."""
    x_all, y_all = _as_arrays(samples, net.dtype)
    n = x_all.shape[0]
    total = 0.0
    for start in range(0, n, batch_size):
        xb = x_all[start : start + batch_size]
        yb = y_all[start : start + batch_size]
        loss, _ = mse_loss(net.forward(xb, train=False), yb)
        total += loss * xb.shape[0]
    return total / n


class ParallelTrainer:
    """Deterministic in-process data parallelism over K parameter replicas.

    Contract per step: replicas start identical; each computes gradients on
    its shard independently (per-shard BN statistics); worker 0 sums the
    shard gradients in ascending worker order, scaled to the whole-batch
    mean; worker 0 applies the SGD update; the new state is broadcast.
    """

    def __init__(self, net: Network, workers: int, cfg: TrainConfig) -> None:
        if workers < 1:
            raise ParameterError(f"workers must be >= 1, got {workers}")
        self.cfg = cfg
        self.master = net
        self.replicas = [net.clone() for _ in range(workers - 1)]
        self.velocity: list | None = None
        self.step_index = 0

    @property
    def workers(self) -> list[Network]:
        return [self.master, *self.replicas]

    def shard_slices(self, n: int) -> list[slice]:
        size = math.ceil(n / len(self.workers))
        return [slice(min(i * size, n), min((i + 1) * size, n)) for i in range(len(self.workers))]

    def accumulate_gradients(
        self,
        x: np.ndarray,
        y: np.ndarray,
        bn_train: bool = True,
        apply_dropout: bool = True,
    ) -> tuple[float, list[np.ndarray]]:
        """Forward/backward on all shards; returns (batch loss, summed grads)."""
        n = x.shape[0]
        if n < 1:
            raise ParameterError("need at least one sample in the batch")
        loss_total = 0.0
        agg: list[np.ndarray] | None = None
        for w, (worker, sl) in enumerate(zip(self.workers, self.shard_slices(n))):
            if sl.start >= sl.stop:
                continue  # surplus worker idles when K > batch size
            xb, yb = x[sl], y[sl]
            rng = dropout_stream(self.cfg.seed, self.step_index, w)
            pred = worker.forward(
                xb, train=True, rng=rng, bn_train=bn_train, apply_dropout=apply_dropout
            )
            loss, dpred = mse_loss(pred, yb)
            if not math.isfinite(loss):
                raise _diverged(worker, xb)
            worker.backward(dpred)
            factor = (sl.stop - sl.start) / n
            if agg is None:
                agg = [factor * g for g in worker.grads()]
            else:
                for acc, g in zip(agg, worker.grads()):
                    acc += factor * g
            loss_total += factor * loss
        assert agg is not None
        return loss_total, agg

    def step(
        self,
        x: np.ndarray,
        y: np.ndarray,
        bn_train: bool = True,
        apply_dropout: bool = True,
    ) -> float:
        x = x.astype(self.master.dtype, copy=False)
        y = y.astype(self.master.dtype, copy=False)
        loss, grads = self.accumulate_gradients(x, y, bn_train, apply_dropout)
        self.velocity = sgd_step(
            self.master.params(), grads, self.cfg.lr, self.cfg.momentum, self.velocity
        )
        for replica in self.replicas:
            replica.copy_state_from(self.master)
        self.step_index += 1
        return loss


def train(
    net: Network,
    samples,
    cfg: TrainConfig,
    val_samples=None,
    epochs: int | None = None,
) -> TrainState:
    """Full training run; returns the state with one curve row per epoch.

    With cfg.workers > 1, every mini-batch goes through the data-parallel
    step; batch contents and order match the single-worker schedule.
    """
    epochs = cfg.epochs if epochs is None else epochs
    state = TrainState()
    shuffle_rng = np.random.default_rng(cfg.seed)
    x_all, y_all = _as_arrays(samples, net.dtype)
    n = x_all.shape[0]
    trainer = ParallelTrainer(net, cfg.workers, cfg) if cfg.workers > 1 else None

    for _ in range(epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            if trainer is not None:
                loss = trainer.step(xb, yb)
                state.step = trainer.step_index
            else:
                drop_rng = dropout_stream(cfg.seed, state.step, 0)
                pred = net.forward(xb, train=True, rng=drop_rng)
                loss, dpred = mse_loss(pred, yb)
                if not math.isfinite(loss):
                    raise _diverged(net, xb)
                net.backward(dpred)
                state.velocity = sgd_step(
                    net.params(), net.grads(), cfg.lr, cfg.momentum, state.velocity
                )
                state.step += 1
            total += loss * len(idx)
        state.epoch += 1
        mean = total / n
        if val_samples is not None:
            state.curve.append((state.epoch, mean, eval_mse(net, val_samples, cfg.batch_size)))
        else:
            state.curve.append((state.epoch, mean))
    return state


# ---------------------------------------------------------------------------
# Hyperparameter search
# ---------------------------------------------------------------------------


@dataclass
class SearchResult:
    config_id: int
    val_error: float
    curve: list[tuple]


def hyperparam_search(
    configs: list[tuple[NetworkSpec, TrainConfig]], train_samples, val_samples
) -> list[SearchResult]:
    """Train each config for exactly two epochs; rank by validation MSE.

    Ties keep config order (stable sort).
    """
    if not configs:
        raise ParameterError("need at least one config")
    results = []
    for i, (spec, cfg) in enumerate(configs):
        net = Network(spec, dtype=cfg.numpy_dtype())
        state = TrainState()
        rng = np.random.default_rng(cfg.seed)
        for _ in range(2):
            train_epoch(net, train_samples, cfg, rng, state)
        err = eval_mse(net, val_samples, cfg.batch_size)
        results.append(SearchResult(config_id=i, val_error=err, curve=list(state.curve)))
    return sorted(results, key=lambda r: r.val_error)


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def _forward_tiled(net: Network, planes: np.ndarray, patch: int, batch_size: int = 16) -> np.ndarray:
    """Eval-mode forward of (C, H, W) planes through patch tiling."""
    grid, patches = extract_patches(planes.astype(net.dtype, copy=False), patch)
    preds = []
    for start in range(0, patches.shape[0], batch_size):
        out = net.forward(patches[start : start + batch_size], train=False)
        preds.append(out[:, 0])
    return reassemble(grid, np.concatenate(preds))


def infer_ldr2hdr(
    nets: dict[str, Network],
    stack: ExposureStack,
    patch: int = 64,
    scale: float = 1.0,
    target_domain: str = "linear",
) -> RadianceMap:
    """Predict a radiance map from an exposure stack with the R/G/B networks."""
    out = np.empty((stack.height, stack.width, 3), dtype=np.float32)
    for i, ch in enumerate(LDR2HDR_CHANNELS):
        planes = stack_channel_planes(stack, i)
        pred = _forward_tiled(nets[ch], planes, patch).astype(np.float64)
        out[..., i] = (invert_target(pred, target_domain) * scale).astype(np.float32)
    np.maximum(out, 0.0, out=out)  # radiance is non-negative by contract
    return RadianceMap(width=stack.width, height=stack.height, data=out)


def infer_tonemap(
    nets: dict[str, Network],
    m: RadianceMap,
    patch: int = 64,
    sigma_s: float = BILATERAL_SIGMA_S,
    sigma_r: float = BILATERAL_SIGMA_R,
) -> ToneMap:
    """Predict a tone map from a normalized radiance map with the 4 channel nets."""
    lab = rgb_to_lab(m.data)
    base, detail = split_base_detail(lab.L, sigma_s, sigma_r)
    inputs = {"L_base": base, "L_detail": detail, "a": lab.a, "b": lab.b}
    preds: dict[str, np.ndarray] = {}
    for name in TONEMAP_CHANNELS:
        offset, divisor = CHANNEL_SCALINGS[name]
        scaled = (inputs[name].astype(np.float64) + offset) / divisor
        pred = _forward_tiled(nets[name], scaled[None].astype(np.float32), patch)
        preds[name] = pred.astype(np.float64) * divisor - offset
    return recompose_tonemap(preds)


# ---------------------------------------------------------------------------
# Curve CSV
# ---------------------------------------------------------------------------


def curve_csv(curve: list[tuple]) -> str:
    """Render curve rows as ``epoch,mean_loss[,val_loss]`` CSV text."""
    has_val = any(len(row) == 3 for row in curve)
    lines = ["epoch,mean_loss,val_loss" if has_val else "epoch,mean_loss"]
    for row in curve:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"
