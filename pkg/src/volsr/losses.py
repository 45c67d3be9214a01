"""Generator/discriminator objectives.

The SSIM core here is also what :mod:`volsr.metrics` evaluates, so the
perceptual loss and the reported SSIM column are the same quantity.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .errors import AllPlanesTooSmall, EmptyBatch, ShapeMismatch, SliceTooSmall

PLANE_AXES = {"axial": 0, "coronal": 1, "sagittal": 2}


@dataclass(frozen=True)
class LossWeights:
    lambda_pixel: float = 1.0
    lambda_perc: float = 0.8
    lambda_adv: float = 0.8

    def __post_init__(self):
        if min(self.lambda_pixel, self.lambda_perc, self.lambda_adv) < 0:
            raise ValueError("loss weights must be non-negative")

    @classmethod
    def pixel_only(cls) -> "LossWeights":
        return cls(1.0, 0.0, 0.0)


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0
    planes: tuple[str, ...] = ("axial", "coronal", "sagittal")

    def __post_init__(self):
        object.__setattr__(self, "planes", tuple(self.planes))
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and >= 3")
        if self.data_range <= 0 or self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("data_range, k1 and k2 must be positive")
        unknown = set(self.planes) - set(PLANE_AXES)
        if unknown or not self.planes:
            raise ValueError(f"planes must be a non-empty subset of {sorted(PLANE_AXES)}")

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2


def _tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


# ------------------------------------------------------------------ pixel loss

def pixel_l1(sr: Tensor, hr: Tensor) -> Tensor:
    if sr.shape != hr.shape:
        raise ShapeMismatch(f"sr {tuple(sr.shape)} vs hr {tuple(hr.shape)}")
    return (sr - hr).abs().mean()


# ------------------------------------------------------------------------ SSIM

def gaussian_window(size: int, sigma: float, dtype=torch.float64) -> Tensor:
    """Normalized 1D Gaussian taps; the 2D window is their outer product."""
    x = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(x**2) / (2 * sigma**2))
    return (g / g.sum()).to(dtype)


def _blur(x: Tensor, g: Tensor) -> Tensor:
    # valid-mode separable filtering of (N, 1, H, W)
    x = F.conv2d(x, g.view(1, 1, -1, 1))
    return F.conv2d(x, g.view(1, 1, 1, -1))


def ssim_maps(x: Tensor, y: Tensor, p: SsimParams) -> tuple[Tensor, Tensor]:
    """Local SSIM and contrast-structure maps for batches of slices (N, 1, H, W)."""
    g = gaussian_window(p.window_size, p.sigma, x.dtype).to(x.device)
    mu_x, mu_y = _blur(x, g), _blur(y, g)
    mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
    s_xx = _blur(x * x, g) - mu_xx
    s_yy = _blur(y * y, g) - mu_yy
    s_xy = _blur(x * y, g) - mu_xy
    cs = (2 * s_xy + p.c2) / (s_xx + s_yy + p.c2)
    lum = (2 * mu_xy + p.c1) / (mu_xx + mu_yy + p.c1)
    return lum * cs, cs


def slice_ssim(x: Tensor, y: Tensor, p: SsimParams) -> Tensor:
    """Mean SSIM per slice for (N, 1, H, W) inputs; returns shape (N,)."""
    if x.shape != y.shape:
        raise ShapeMismatch(f"{tuple(x.shape)} vs {tuple(y.shape)}")
    if min(x.shape[-2:]) < p.window_size:
        raise SliceTooSmall(f"slices {tuple(x.shape[-2:])} smaller than window {p.window_size}")
    return ssim_maps(x, y, p)[0].mean(dim=(1, 2, 3))


def ssim_2d(a, b, p: SsimParams = SsimParams()) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() != 2:
        raise ValueError(f"ssim_2d takes 2D slices, got shape {tuple(a.shape)}")
    return slice_ssim(a[None, None], b[None, None], p)[0]


def as_volume_batch(v: Tensor) -> Tensor:
    """(D, H, W), (B, D, H, W) or (B, 1, D, H, W) -> (B, D, H, W)."""
    if v.dim() == 3:
        return v[None]
    if v.dim() == 5:
        if v.shape[1] != 1:
            raise ValueError("volume batches must be single-channel")
        return v[:, 0]
    if v.dim() == 4:
        return v
    raise ValueError(f"cannot interpret shape {tuple(v.shape)} as a volume batch")


def plane_slices(v: Tensor, plane: str) -> Tensor:
    """Every slice of every volume along ``plane`` as an (N, 1, h, w) stack."""
    vb = as_volume_batch(v)
    axis = PLANE_AXES[plane] + 1
    s = vb.movedim(axis, 1)
    return s.reshape(-1, 1, *s.shape[2:])


def plane_ssim(sr, hr, p: SsimParams = SsimParams()) -> dict[str, Tensor]:
    """Per-plane mean slice SSIM; planes whose slices are smaller than the window are skipped."""
    sr, hr = _tensor(sr), _tensor(hr)
    if sr.shape != hr.shape:
        raise ShapeMismatch(f"sr {tuple(sr.shape)} vs hr {tuple(hr.shape)}")
    out = {}
    for plane in p.planes:
        xs, ys = plane_slices(sr, plane), plane_slices(hr, plane)
        if min(xs.shape[-2:]) < p.window_size:
            warnings.warn(f"skipping {plane} plane: slices {tuple(xs.shape[-2:])} below window {p.window_size}")
            continue
        out[plane] = slice_ssim(xs, ys, p).mean()
    if not out:
        raise AllPlanesTooSmall(f"no plane of shape {tuple(sr.shape)} fits a {p.window_size} window")
    return out


def perceptual_ssim_loss(sr, hr, p: SsimParams = SsimParams()) -> Tensor:
    """Sum over planes of the slice-averaged SSIM dissimilarity; lies in [0, 2*len(planes)]."""
    sr, hr = _tensor(sr), _tensor(hr)
    if sr.shape != hr.shape:
        raise ShapeMismatch(f"sr {tuple(sr.shape)} vs hr {tuple(hr.shape)}")
    total = None
    for plane in p.planes:
        xs, ys = plane_slices(sr, plane), plane_slices(hr, plane)
        if min(xs.shape[-2:]) < p.window_size:
            warnings.warn(f"skipping {plane} plane: slices {tuple(xs.shape[-2:])} below window {p.window_size}")
            continue
        term = (1 - slice_ssim(xs, ys, p)).mean()
        total = term if total is None else total + term
    if total is None:
        raise AllPlanesTooSmall(f"no plane of shape {tuple(sr.shape)} fits a {p.window_size} window")
    return total


# ------------------------------------------------------------- relativistic GAN

def _check_scores(c_real: Tensor, c_fake: Tensor) -> None:
    if c_real.numel() == 0 or c_fake.numel() == 0:
        raise EmptyBatch("relativistic losses need non-empty real and fake score batches")


def rad_generator_loss(c_real: Tensor, c_fake: Tensor) -> Tensor:
    """Relativistic-average generator loss.

    ``-E_r[log(1 - sig(C_r - E C_f))] - E_f[log sig(C_f - E C_r)]``, written with
    softplus so extreme scores stay finite. Expectations run over batch and
    score-map positions alike.
    """
    _check_scores(c_real, c_fake)
    real_rel = c_real - c_fake.mean()
    fake_rel = c_fake - c_real.mean()
    return F.softplus(real_rel).mean() + F.softplus(-fake_rel).mean()


def rad_discriminator_loss(c_real: Tensor, c_fake: Tensor) -> Tensor:
    _check_scores(c_real, c_fake)
    real_rel = c_real - c_fake.mean()
    fake_rel = c_fake - c_real.mean()
    return F.softplus(-real_rel).mean() + F.softplus(fake_rel).mean()


def relativistic_confidence(c_real: Tensor, c_fake: Tensor) -> float:
    """Mean |sig(C_r - E C_f) - 0.5|; near 0.5 means the discriminator has saturated."""
    with torch.no_grad():
        return float((torch.sigmoid(c_real - c_fake.mean()) - 0.5).abs().mean())


# ------------------------------------------------------------------- composite

def composite_generator_loss(
    sr: Tensor,
    hr: Tensor,
    c_real: Tensor | None,
    c_fake: Tensor | None,
    w: LossWeights = LossWeights(),
    p: SsimParams = SsimParams(),
) -> tuple[Tensor, dict[str, float | None]]:
    """Weighted pixel + perceptual + adversarial loss.

    Terms with a zero weight are kept out of the autograd graph (they are
    still evaluated for the breakdown when their inputs are available), so
    ``LossWeights.pixel_only()`` yields exactly ``pixel_l1``. Scores may be
    ``None`` when ``lambda_adv`` is zero.
    """
    l_pixel = pixel_l1(sr, hr)
    total = w.lambda_pixel * l_pixel

    if w.lambda_perc > 0:
        l_perc = perceptual_ssim_loss(sr, hr, p)
        total = total + w.lambda_perc * l_perc
    else:
        with torch.no_grad(), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            l_perc = perceptual_ssim_loss(sr.detach(), hr, p)

    l_adv = None
    if w.lambda_adv > 0:
        if c_real is None or c_fake is None:
            raise ValueError("lambda_adv > 0 needs discriminator scores")
        l_adv = rad_generator_loss(c_real, c_fake)
        total = total + w.lambda_adv * l_adv
    elif c_real is not None and c_fake is not None:
        with torch.no_grad():
            l_adv = rad_generator_loss(c_real, c_fake)

    def _f(t):
        return None if t is None else float(t.detach())

    breakdown = {
        "l_pixel": _f(l_pixel),
        "l_perc": _f(l_perc),
        "l_adv_g": _f(l_adv),
        "w_pixel": w.lambda_pixel * _f(l_pixel),
        "w_perc": w.lambda_perc * _f(l_perc),
        "w_adv": None if l_adv is None else w.lambda_adv * _f(l_adv),
        "total_g": _f(total),
    }
    return total, breakdown
