"""Brute-force reference implementations used to pin down the fast code paths.

Nothing here imports the package's filtering code: windows are summed
directly (no separable convolutions, no torch).
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

MS_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def gauss2d(size: int, sigma: float) -> np.ndarray:
    c = (size - 1) / 2
    g = np.array([[math.exp(-((i - c) ** 2 + (j - c) ** 2) / (2 * sigma**2)) for j in range(size)]
                  for i in range(size)])
    return g / g.sum()


# ------------------------------------------------------------------ pointwise

def mse_loop(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    for idx in np.ndindex(a.shape):
        d = float(a[idx]) - float(b[idx])
        total += d * d
    return total / a.size


def l1_loop(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    for idx in np.ndindex(a.shape):
        total += abs(float(a[idx]) - float(b[idx]))
    return total / a.size


def psnr_ref(a, b, data_range=1.0) -> float:
    m = mse_loop(np.asarray(a), np.asarray(b))
    return math.inf if m == 0 else 10 * math.log10(data_range**2 / m)


# ----------------------------------------------------------------------- SSIM

def _local_stats(x, y, win):
    """Window-weighted moments at every valid position via explicit 2D window sums."""
    k = win.shape[0]
    wx = sliding_window_view(x, (k, k))
    wy = sliding_window_view(y, (k, k))
    mx = np.einsum("ijab,ab->ij", wx, win)
    my = np.einsum("ijab,ab->ij", wy, win)
    sxx = np.einsum("ijab,ab->ij", wx * wx, win) - mx * mx
    syy = np.einsum("ijab,ab->ij", wy * wy, win) - my * my
    sxy = np.einsum("ijab,ab->ij", wx * wy, win) - mx * my
    return mx, my, sxx, syy, sxy


def ssim_maps_ref(x, y, size=11, sigma=1.5, L=1.0, k1=0.01, k2=0.03):
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    mx, my, sxx, syy, sxy = _local_stats(np.asarray(x, float), np.asarray(y, float), gauss2d(size, sigma))
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mx * my + c1) / (mx**2 + my**2 + c1)
    return lum * cs, cs


def ssim_ref(x, y, **kw) -> float:
    return float(ssim_maps_ref(x, y, **kw)[0].mean())


def ssim_loop(x, y, size=11, sigma=1.5, L=1.0, k1=0.01, k2=0.03) -> float:
    """Per-pixel double loop; slow, used to validate :func:`ssim_ref` itself."""
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    win = gauss2d(size, sigma)
    h, w = x.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            px, py = x[i : i + size, j : j + size], y[i : i + size, j : j + size]
            mx, my = (win * px).sum(), (win * py).sum()
            vx = (win * (px - mx) ** 2).sum()
            vy = (win * (py - my) ** 2).sum()
            cxy = (win * (px - mx) * (py - my)).sum()
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


PLANES = {"axial": 0, "coronal": 1, "sagittal": 2}


def plane_means_ref(a, b, size=11, planes=("axial", "coronal", "sagittal")) -> dict:
    out = {}
    for plane in planes:
        ax = PLANES[plane]
        n = a.shape[ax]
        sl = [ssim_ref(np.take(a, i, axis=ax), np.take(b, i, axis=ax), size=size) for i in range(n)]
        out[plane] = float(np.mean(sl))
    return out


def perceptual_ref(a, b) -> float:
    return sum(1 - v for v in plane_means_ref(a, b).values())


def ssim_volume_ref(a, b) -> float:
    m = plane_means_ref(a, b)
    return sum(m.values()) / len(m)


# -------------------------------------------------------------------- MS-SSIM

def halve(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[0] // 2 * 2, x.shape[1] // 2 * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim_ref(x, y, size=11) -> tuple[float, int]:
    x, y = np.asarray(x, float), np.asarray(y, float)
    levels = 0
    while levels < 5 and min(x.shape) >= size * 2**levels:
        levels += 1
    w = np.array(MS_WEIGHTS[:levels])
    w = w / w.sum()
    val = 1.0
    for j in range(levels):
        s, cs = ssim_maps_ref(x, y, size=size)
        if j == levels - 1:
            val *= max(s.mean(), 0.0) ** w[j]
        else:
            val *= max(cs.mean(), 0.0) ** w[j]
            x, y = halve(x), halve(y)
    return float(val), levels


def ms_ssim_volume_ref(a, b) -> float:
    means = []
    for ax in range(3):
        vals = [ms_ssim_ref(np.take(a, i, axis=ax), np.take(b, i, axis=ax))[0] for i in range(a.shape[ax])]
        means.append(np.mean(vals))
    return float(np.mean(means))


# ------------------------------------------------------------------------ VIF

def _filter_valid(x, win):
    return np.einsum("ijab,ab->ij", sliding_window_view(x, win.shape), win)


def vif_sums_ref(ref2d, dist2d, sigma_n2=2.0, eps=1e-10, scales=4, peak=255.0):
    x, y = np.asarray(ref2d, float) * peak, np.asarray(dist2d, float) * peak
    num = den = 0.0
    for j in range(scales):
        k = 2 ** (scales - j) + 1
        win = gauss2d(k, k / 5.0)
        if j > 0:
            x = _filter_valid(x, win)[::2, ::2]
            y = _filter_valid(y, win)[::2, ::2]
        mx, my = _filter_valid(x, win), _filter_valid(y, win)
        vx = np.maximum(_filter_valid(x * x, win) - mx * mx, 0)
        vy = np.maximum(_filter_valid(y * y, win) - my * my, 0)
        cov = _filter_valid(x * y, win) - mx * my
        g = np.maximum(cov / (vx + eps), 0)
        sv = np.maximum(vy - g * cov, 0)
        num += np.log2(1 + g * g * vx / (sv + sigma_n2)).sum()
        den += np.log2(1 + vx / sigma_n2).sum()
    return float(num), float(den)


def vif_ref(ref, dist) -> float:
    ref, dist = np.asarray(ref, float), np.asarray(dist, float)
    if ref.ndim == 2:
        ref, dist = ref[None], dist[None]
    num = den = 0.0
    for r, d in zip(ref, dist):
        n, m = vif_sums_ref(r, d)
        num, den = num + n, den + m
    return num / den


# --------------------------------------------------------------- resampling

def trilinear_ref(a: np.ndarray, out_shape) -> np.ndarray:
    """Evaluate the half-voxel-aligned trilinear interpolant voxel by voxel."""
    out = np.empty(out_shape)
    n_in = a.shape

    def coord(i, ax):
        s = (i + 0.5) * n_in[ax] / out_shape[ax] - 0.5
        s = min(max(s, 0.0), n_in[ax] - 1)
        i0 = int(math.floor(s))
        return i0, min(i0 + 1, n_in[ax] - 1), s - i0

    for idx in np.ndindex(*out_shape):
        (z0, z1, fz), (y0, y1, fy), (x0, x1, fx) = (coord(i, ax) for ax, i in enumerate(idx))
        acc = 0.0
        for zz, wz in ((z0, 1 - fz), (z1, fz)):
            for yy, wy in ((y0, 1 - fy), (y1, fy)):
                for xx, wx in ((x0, 1 - fx), (x1, fx)):
                    acc += wz * wy * wx * a[zz, yy, xx]
        out[idx] = acc
    return out


# ---------------------------------------------------------------------- Adam

def adam_scalar_loop(p0: list[float], grads: list[list[float]], lr, b1=0.9, b2=0.999, eps=1e-8) -> list[float]:
    p, m, v = list(p0), [0.0] * len(p0), [0.0] * len(p0)
    for t, g in enumerate(grads, start=1):
        for i in range(len(p)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
            mh = m[i] / (1 - b1**t)
            vh = v[i] / (1 - b2**t)
            p[i] -= lr * mh / (math.sqrt(vh) + eps)
    return p


# ---------------------------------------------------------------- RaD losses

def _softplus(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def rad_g_ref(cr: list[float], cf: list[float]) -> float:
    mr, mf = sum(cr) / len(cr), sum(cf) / len(cf)
    a = sum(_softplus(c - mf) for c in cr) / len(cr)
    b = sum(_softplus(-(c - mr)) for c in cf) / len(cf)
    return a + b


def rad_d_ref(cr: list[float], cf: list[float]) -> float:
    mr, mf = sum(cr) / len(cr), sum(cf) / len(cf)
    a = sum(_softplus(-(c - mf)) for c in cr) / len(cr)
    b = sum(_softplus(c - mr) for c in cf) / len(cf)
    return a + b
