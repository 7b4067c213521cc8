"""Faithful port of the published TMQI implementation, used as a test oracle.

Multi-scale structural fidelity (5 levels, original level weights), original
constants, HDR luminance stretched to the 32-bit range; naturalness from
non-overlapping 11x11 block statistics.
"""

import numpy as np
from scipy.signal import convolve2d
from scipy.stats import beta as beta_dist
from scipy.stats import norm as norm_dist

from hdrkit.imgproc import luminance


def _window():
    g = np.exp(-0.5 * ((np.arange(11) - 5) / 1.5) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def _slocal(img1, img2, window, sf, c1=0.01, c2=10.0):
    mu1 = convolve2d(img1, window, mode="valid")
    mu2 = convolve2d(img2, window, mode="valid")
    sigma1 = np.sqrt(np.maximum(convolve2d(img1 * img1, window, "valid") - mu1 * mu1, 0))
    sigma2 = np.sqrt(np.maximum(convolve2d(img2 * img2, window, "valid") - mu2 * mu2, 0))
    sigma12 = convolve2d(img1 * img2, window, "valid") - mu1 * mu2
    csf = 100.0 * 2.6 * (0.0192 + 0.114 * sf) * np.exp(-((0.114 * sf) ** 1.1))
    u = 128.0 / (1.4 * csf)
    sig = u / 3.0
    s1p = norm_dist.cdf(sigma1, loc=u, scale=sig)
    s2p = norm_dist.cdf(sigma2, loc=u, scale=sig)
    smap = ((2 * s1p * s2p + c1) / (s1p**2 + s2p**2 + c1)) * (
        (sigma12 + c2) / (sigma1 * sigma2 + c2)
    )
    return smap.mean()


def reference_tmqi(hdr_rgb, ldr_rgb01):
    """Returns (Q, S, N) for a linear-RGB map and a [0,1] tone map."""
    lum_hdr = luminance(hdr_rgb).astype(np.float64)
    lum_ldr = luminance(ldr_rgb01).astype(np.float64) * 255.0

    u = lum_ldr.mean()
    h, w = lum_ldr.shape
    blocks = lum_ldr[: h // 11 * 11, : w // 11 * 11].reshape(h // 11, 11, w // 11, 11)
    sig = blocks.std(axis=(1, 3)).mean()
    pc = beta_dist.pdf(sig / 64.29, 4.4, 10.1) / beta_dist.pdf(3.4 / 12.5, 4.4, 10.1)
    pb = norm_dist.pdf(u, 115.94, 27.99) / norm_dist.pdf(115.94, 115.94, 27.99)
    n = pb * pc

    factor = 2.0**32 - 1.0
    span = max(lum_hdr.max() - lum_hdr.min(), 1e-30)
    x = factor * (lum_hdr - lum_hdr.min()) / span
    y = lum_ldr
    window = _window()
    weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]
    kernel = np.ones((2, 2)) / 4.0
    f = 32
    vals = []
    for _ in range(5):
        f = f / 2
        vals.append(_slocal(x, y, window, f))
        x = convolve2d(x, kernel, "valid")[::2, ::2]
        y = convolve2d(y, kernel, "valid")[::2, ::2]
    s = float(np.prod(np.power(vals, weights)))
    q = 0.8012 * s**0.3046 + (1 - 0.8012) * n**0.7088
    return q, s, n
