"""Tone-mapping operators, the TMQI quality metric, and best-operator selection.

Operators map linear radiance to display-referred [0, 1] color.  TMQI scores
a (radiance map, tone map) pair as Q = a*S^alpha + (1-a)*N^beta, combining a
structural-fidelity term S computed on locally contrast-mapped luminance with
a statistical-naturalness term N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import norm as norm_dist

from .camera import Crf, ExposureStack, fixed_stack, gamma_crf
from .errors import ParameterError, ValidationError
from .image_io import RadianceMap
from .imgproc import luminance

GEOMEAN_GUARD = 1e-6
WEIGHT_GUARD = 1e-12


@dataclass
class ToneMap:
    """Display-referred image with all values in [0, 1]."""

    width: int
    height: int
    data: np.ndarray  # (H, W, 3) float32 in [0, 1]

    @classmethod
    def from_array(cls, data: np.ndarray) -> "ToneMap":
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValidationError(f"tone map data must be (H, W, 3), got {data.shape}")
        h, w = data.shape[:2]
        return cls(width=w, height=h, data=data)

    def validate(self) -> None:
        if np.any(self.data < 0) or np.any(self.data > 1):
            raise ValidationError("tone map values outside [0, 1]")


def _scale_colors(rgb: np.ndarray, lum: np.ndarray, lum_display: np.ndarray) -> np.ndarray:
    """Rescale colors by lum_display/lum, preserving channel ratios."""
    ratio = np.where(lum > 0, lum_display / np.where(lum > 0, lum, 1.0), 0.0)
    return np.clip(rgb * ratio[..., None], 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def reinhard_global(m: RadianceMap, key: float = 0.18, white: float | None = None) -> ToneMap:
    """Global photographic operator with a burn-out white level.

    L_scaled = key * L / geomean(L + guard); the display luminance is
    L_scaled * (1 + L_scaled / white^2) / (1 + L_scaled).
    """
    if key <= 0:
        raise ParameterError(f"key must be > 0, got {key}")
    lum = luminance(m.data).astype(np.float64)
    geomean = math.exp(float(np.mean(np.log(lum + GEOMEAN_GUARD))))
    scaled = key * lum / geomean
    if white is None:
        peak = float(scaled.max())
        white = peak if peak > 0 else 1.0
    display = scaled * (1.0 + scaled / (white * white)) / (1.0 + scaled)
    return ToneMap(m.width, m.height, _scale_colors(m.data.astype(np.float64), lum, display))


def drago(m: RadianceMap, bias: float = 0.85, l_max: float | None = None) -> ToneMap:
    """Adaptive logarithmic mapping with bias-controlled base interpolation."""
    if not 0.0 < bias <= 1.0:
        raise ParameterError(f"bias must be in (0, 1], got {bias}")
    lum = luminance(m.data).astype(np.float64)
    if l_max is None:
        l_max = float(lum.max())
    if l_max <= 0:
        return ToneMap(m.width, m.height, np.zeros_like(m.data, dtype=np.float32))
    exponent = math.log(bias) / math.log(0.5)
    denom = np.log(2.0 + 8.0 * (lum / l_max) ** exponent)
    display = (np.log1p(lum) / math.log1p(l_max)) * (math.log(10.0) / denom)
    return ToneMap(m.width, m.height, _scale_colors(m.data.astype(np.float64), lum, display))


def mertens_weights(
    stack: ExposureStack,
    w_contrast: float = 1.0,
    w_saturation: float = 1.0,
    w_exposedness: float = 1.0,
) -> np.ndarray:
    """Normalized per-image fusion weights, shape (len(stack), H, W).

    Per image: contrast = |3x3 Laplacian of luma|, saturation = per-pixel RGB
    standard deviation, exposedness = product over channels of a Gaussian
    around 0.5 (sigma 0.2).  A tiny additive guard keeps the per-pixel
    normalization well defined, so the maps sum to one everywhere.
    """
    raw = []
    for img in stack.images:
        rgb = img.data.astype(np.float64) / 255.0
        luma = luminance(rgb)
        padded = np.pad(luma, 1, mode="reflect")
        lap = (
            padded[:-2, 1:-1]
            + padded[2:, 1:-1]
            + padded[1:-1, :-2]
            + padded[1:-1, 2:]
            - 4.0 * luma
        )
        contrast = np.abs(lap)
        saturation = rgb.std(axis=2)
        exposedness = np.exp(-((rgb - 0.5) ** 2) / (2.0 * 0.2**2)).prod(axis=2)
        raw.append(
            contrast**w_contrast * saturation**w_saturation * exposedness**w_exposedness
            + WEIGHT_GUARD
        )
    stacked = np.stack(raw)
    return stacked / stacked.sum(axis=0, keepdims=True)


def mertens_fuse(
    stack: ExposureStack,
    w_contrast: float = 1.0,
    w_saturation: float = 1.0,
    w_exposedness: float = 1.0,
) -> ToneMap:
    """Single-scale exposure fusion: weighted per-pixel average of the stack."""
    weights = mertens_weights(stack, w_contrast, w_saturation, w_exposedness)
    fused = np.zeros((stack.height, stack.width, 3), dtype=np.float64)
    for wgt, img in zip(weights, stack.images):
        fused += wgt[..., None] * (img.data.astype(np.float64) / 255.0)
    return ToneMap(stack.width, stack.height, np.clip(fused, 0.0, 1.0).astype(np.float32))


# ---------------------------------------------------------------------------
# TMQI
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TmqiConstants:
    """Metric constants; the naturalness set follows the published reference."""

    a: float = 0.8012
    alpha: float = 0.3046
    beta: float = 0.7088
    c1: float = 0.01
    c2: float = 10.0
    spatial_freq: float = 16.0  # cycles/degree fed to the contrast threshold
    window_size: int = 11
    window_sigma: float = 1.5
    nat_mean_mu: float = 115.94
    nat_mean_sigma: float = 27.99
    nat_std_shape1: float = 4.4
    nat_std_shape2: float = 10.1
    nat_std_scale: float = 64.29


DEFAULT_TMQI = TmqiConstants()


@dataclass
class TmqiScore:
    S: float
    N: float
    Q: float


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    g = np.exp(-0.5 * ((np.arange(size) - half) / sigma) ** 2)
    win = np.outer(g, g)
    return win / win.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """2-D 'valid' correlation with a small separable-size window."""
    k = window.shape[0]
    h, w = img.shape
    out = np.zeros((h - k + 1, w - k + 1), dtype=np.float64)
    for di in range(k):
        for dj in range(k):
            out += window[di, dj] * img[di : di + h - k + 1, dj : dj + w - k + 1]
    return out


def _rescale_255(plane: np.ndarray) -> np.ndarray:
    lo, hi = float(plane.min()), float(plane.max())
    if hi - lo <= 0:
        return np.zeros_like(plane)
    return 255.0 * (plane - lo) / (hi - lo)


def structural_fidelity(
    lum_hdr: np.ndarray, lum_tm: np.ndarray, constants: TmqiConstants = DEFAULT_TMQI
) -> float:
    """Single-scale structural fidelity between two luminance planes.

    Both planes are rescaled to a common [0, 255] range; local standard
    deviations pass through a visual-sensitivity normal CDF before the
    SSIM-style comparison, making the term contrast- and scale-tolerant.
    """
    k = constants.window_size
    if lum_hdr.shape != lum_tm.shape:
        raise ValidationError("luminance planes must share dimensions")
    if min(lum_hdr.shape) < k:
        raise ParameterError(f"images must be at least {k}x{k} for TMQI")
    x = _rescale_255(lum_hdr.astype(np.float64))
    y = _rescale_255(lum_tm.astype(np.float64))
    window = _gaussian_window(k, constants.window_sigma)

    mu_x = _filter_valid(x, window)
    mu_y = _filter_valid(y, window)
    sig_x = np.sqrt(np.maximum(_filter_valid(x * x, window) - mu_x * mu_x, 0.0))
    sig_y = np.sqrt(np.maximum(_filter_valid(y * y, window) - mu_y * mu_y, 0.0))
    sig_xy = _filter_valid(x * y, window) - mu_x * mu_y

    # Contrast sensitivity at the working spatial frequency; local stds are
    # mapped through a normal CDF centered on the modulation threshold.
    sf = constants.spatial_freq
    csf = 100.0 * 2.6 * (0.0192 + 0.114 * sf) * math.exp(-((0.114 * sf) ** 1.1))
    thresh = 128.0 / (1.4 * csf)
    spread = thresh / 3.0
    sig_x_p = norm_dist.cdf(sig_x, loc=thresh, scale=spread)
    sig_y_p = norm_dist.cdf(sig_y, loc=thresh, scale=spread)

    c1, c2 = constants.c1, constants.c2
    s_map = ((2.0 * sig_x_p * sig_y_p + c1) / (sig_x_p**2 + sig_y_p**2 + c1)) * (
        (sig_xy + c2) / (sig_x * sig_y + c2)
    )
    return float(np.clip(np.mean(s_map), 0.0, 1.0))


def statistical_naturalness(
    lum_tm_255: np.ndarray, constants: TmqiConstants = DEFAULT_TMQI
) -> float:
    """Brightness/contrast naturalness of a tone-mapped luminance (0..255 scale).

    Gaussian prior on the global mean, Beta prior on the average local
    (11x11 block) standard deviation; both normalized by their modes so the
    product lies in [0, 1].
    """
    c = constants
    u = float(np.mean(lum_tm_255))
    k = c.window_size
    h, w = lum_tm_255.shape
    if h >= k and w >= k:
        rows, cols = h // k, w // k
        blocks = lum_tm_255[: rows * k, : cols * k].reshape(rows, k, cols, k)
        sig = float(blocks.std(axis=(1, 3)).mean())
    else:
        sig = float(lum_tm_255.std())

    p_mean = norm_dist.pdf(u, loc=c.nat_mean_mu, scale=c.nat_mean_sigma)
    p_mean_max = norm_dist.pdf(c.nat_mean_mu, loc=c.nat_mean_mu, scale=c.nat_mean_sigma)
    mode = (c.nat_std_shape1 - 1.0) / (c.nat_std_shape1 + c.nat_std_shape2 - 2.0)
    p_std = beta_dist.pdf(sig / c.nat_std_scale, c.nat_std_shape1, c.nat_std_shape2)
    p_std_max = beta_dist.pdf(mode, c.nat_std_shape1, c.nat_std_shape2)
    return float(np.clip((p_mean / p_mean_max) * (p_std / p_std_max), 0.0, 1.0))


def tmqi(
    m: RadianceMap, tm: ToneMap, constants: TmqiConstants = DEFAULT_TMQI
) -> TmqiScore:
    """Score a tone map against its source radiance map."""
    if (m.width, m.height) != (tm.width, tm.height):
        raise ValidationError(
            f"dimension mismatch: map {m.width}x{m.height}, tone map {tm.width}x{tm.height}"
        )
    lum_hdr = luminance(m.data).astype(np.float64)
    lum_tm = luminance(tm.data).astype(np.float64) * 255.0
    s = structural_fidelity(lum_hdr, lum_tm, constants)
    n = statistical_naturalness(lum_tm, constants)
    q = constants.a * s**constants.alpha + (1.0 - constants.a) * n**constants.beta
    return TmqiScore(S=s, N=n, Q=float(np.clip(q, 0.0, 1.0)))


# ---------------------------------------------------------------------------
# Best-operator selection
# ---------------------------------------------------------------------------

OPERATORS = ("reinhard", "drago", "mertens")


def apply_operator(
    m: RadianceMap, operator: str, params: dict | None = None, crf: Crf | None = None
) -> ToneMap:
    """Apply one named operator; mertens runs on a synthesized fixed stack."""
    params = dict(params or {})
    if operator == "reinhard":
        return reinhard_global(m, **params)
    if operator == "drago":
        return drago(m, **params)
    if operator == "mertens":
        if crf is None:
            crf = gamma_crf(2.2)
        return mertens_fuse(fixed_stack(m, crf), **params)
    raise ParameterError(f"unknown operator {operator!r}")


def select_best_tmo(
    m: RadianceMap,
    operators: tuple[str, ...] = OPERATORS,
    params: dict[str, dict] | None = None,
    crf: Crf | None = None,
    constants: TmqiConstants = DEFAULT_TMQI,
) -> tuple[ToneMap, str, TmqiScore, list[tuple[str, TmqiScore]]]:
    """Score every operator with TMQI and return the argmax (ties: list order).

    Returns (best tone map, operator id, its score, all scores in list order).
    """
    if not operators:
        raise ParameterError("need at least one operator")
    params = params or {}
    scored: list[tuple[str, ToneMap, TmqiScore]] = []
    for op in operators:
        tm = apply_operator(m, op, params.get(op), crf=crf)
        scored.append((op, tm, tmqi(m, tm, constants)))
    # max() keeps the first of equal keys, which is the documented tie rule
    op, tm, score = max(scored, key=lambda item: item[2].Q)
    return tm, op, score, [(s[0], s[2]) for s in scored]
