"""Evaluation metrics and Table-style aggregation.

Inputs are numpy arrays (or :class:`~volsr.volume_data.Volume`); everything is
computed in float64. Callers are expected to clamp SR outputs to [0, 1]
before scoring.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DegenerateReference, EmptyInput, ShapeMismatch, SliceTooSmall
from .losses import SsimParams, gaussian_window, plane_slices, plane_ssim, ssim_maps
from .volume_data import Volume

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
REPORT_COLUMNS = ("psnr_db", "ssim", "ms_ssim", "vif", "mse")


def _arr(x) -> np.ndarray:
    if isinstance(x, Volume):
        return x.data
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().double().numpy()
    return np.asarray(x, dtype=np.float64)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, data_range: float = 1.0) -> float:
    """PSNR in dB; ``math.inf`` when the inputs are identical."""
    m = mse(a, b)
    if m == 0:
        return math.inf
    return float(10.0 * np.log10(data_range**2 / m))


def ssim_volume(a, b, p: SsimParams = SsimParams()) -> float:
    """Slice SSIM averaged within each plane, then across planes."""
    a, b = _pair(a, b)
    planes = plane_ssim(torch.from_numpy(a), torch.from_numpy(b), p)
    return float(sum(planes.values()) / len(planes))


# -------------------------------------------------------------------- MS-SSIM

class MsSsim(NamedTuple):
    value: float
    n_scales: int


def ms_ssim_scales(min_dim: int, p: SsimParams, max_scales: int = len(MS_SSIM_WEIGHTS)) -> int:
    """Largest scale count whose coarsest level still fits the SSIM window."""
    n = 0
    while n < max_scales and min_dim >= p.window_size * 2**n:
        n += 1
    return n


def _ms_ssim_batch(x: torch.Tensor, y: torch.Tensor, p: SsimParams) -> tuple[torch.Tensor, int]:
    levels = ms_ssim_scales(min(x.shape[-2:]), p)
    if levels < 1:
        raise SliceTooSmall(f"slices {tuple(x.shape[-2:])} too small for a {p.window_size} window")
    weights = torch.tensor(MS_SSIM_WEIGHTS[:levels], dtype=x.dtype)
    weights = weights / weights.sum()
    out = torch.ones(x.shape[0], dtype=x.dtype)
    for j in range(levels):
        ssim_map, cs_map = ssim_maps(x, y, p)
        if j < levels - 1:
            cs = cs_map.mean(dim=(1, 2, 3)).clamp_min(0)
            out = out * cs ** weights[j]
            x, y = F.avg_pool2d(x, 2), F.avg_pool2d(y, 2)
        else:
            out = out * ssim_map.mean(dim=(1, 2, 3)).clamp_min(0) ** weights[j]
    return out, levels


def ms_ssim_2d(a, b, p: SsimParams = SsimParams()) -> MsSsim:
    """Multi-scale SSIM of two slices.

    Uses up to five scales; when the slice is too small for all of them the
    count is reduced, the weights renormalized, and the count reported back.
    """
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise ValueError("ms_ssim_2d takes 2D slices")
    val, levels = _ms_ssim_batch(torch.from_numpy(a)[None, None], torch.from_numpy(b)[None, None], p)
    return MsSsim(float(val[0]), levels)


def ms_ssim_volume(a, b, p: SsimParams = SsimParams()) -> float:
    a, b = _pair(a, b)
    ta, tb = torch.from_numpy(a), torch.from_numpy(b)
    means = []
    for plane in p.planes:
        xs, ys = plane_slices(ta, plane), plane_slices(tb, plane)
        if min(xs.shape[-2:]) < p.window_size:
            continue
        means.append(_ms_ssim_batch(xs, ys, p)[0].mean())
    if not means:
        raise SliceTooSmall(f"no plane of {a.shape} fits a {p.window_size} window")
    return float(sum(means) / len(means))


# ------------------------------------------------------------------------ VIF

@dataclass(frozen=True)
class VifParams:
    n_scales: int = 4
    noise_variance: float = 2.0
    eps: float = 1e-10
    data_range: float = 1.0
    # images are rescaled to this peak so noise_variance keeps its usual 8-bit meaning
    working_range: float = 255.0

    def __post_init__(self):
        if self.n_scales < 1:
            raise ValueError("n_scales must be >= 1")
        if self.noise_variance <= 0:
            raise ValueError("noise_variance must be positive")

    def kernel_size(self, scale: int) -> int:
        return 2 ** (self.n_scales - scale) + 1


def vif_min_size(p: VifParams = VifParams()) -> int:
    """Smallest square slice for which every scale leaves at least one window."""
    n = 1
    while not _vif_fits(n, p):
        n += 1
    return n


def _vif_fits(size: int, p: VifParams) -> bool:
    s = size
    for j in range(p.n_scales):
        k = p.kernel_size(j)
        if j > 0:
            s = s - k + 1
            if s < 1:
                return False
            s = (s + 1) // 2
        if s - k + 1 < 1:
            return False
    return True


def _vif_sums(ref: torch.Tensor, dist: torch.Tensor, p: VifParams) -> tuple[float, float]:
    scale = p.working_range / p.data_range
    x, y = ref * scale, dist * scale
    # moments are shift-invariant; centring keeps E[x^2] - mu^2 from cancelling badly
    x = x - x.mean(dim=(-2, -1), keepdim=True)
    y = y - y.mean(dim=(-2, -1), keepdim=True)
    num = den = 0.0
    for j in range(p.n_scales):
        k = p.kernel_size(j)
        g = gaussian_window(k, k / 5.0, x.dtype)
        win = torch.outer(g, g)[None, None]
        if j > 0:
            x = F.conv2d(x, win)[:, :, ::2, ::2]
            y = F.conv2d(y, win)[:, :, ::2, ::2]
        mu_x, mu_y = F.conv2d(x, win), F.conv2d(y, win)
        var_x = (F.conv2d(x * x, win) - mu_x * mu_x).clamp_min(0)
        var_y = (F.conv2d(y * y, win) - mu_y * mu_y).clamp_min(0)
        cov = F.conv2d(x * y, win) - mu_x * mu_y
        gain = (cov / (var_x + p.eps)).clamp_min(0)
        sv_sq = (var_y - gain * cov).clamp_min(0)
        num += float(torch.log2(1 + gain**2 * var_x / (sv_sq + p.noise_variance)).sum())
        den += float(torch.log2(1 + var_x / p.noise_variance).sum())
    return num, den


def vif(ref, dist, p: VifParams = VifParams()) -> float:
    """Pixel-domain visual information fidelity of ``dist`` against ``ref``.

    Order matters: the first argument is the reference. 3D inputs are
    processed as a stack of axial slices whose information sums are pooled
    before the ratio is taken.
    """
    ref, dist = _pair(ref, dist)
    if ref.ndim == 2:
        ref, dist = ref[None], dist[None]
    if ref.ndim != 3:
        raise ValueError("vif takes 2D slices or 3D volumes")
    if not _vif_fits(min(ref.shape[1:]), p):
        raise SliceTooSmall(f"slices {ref.shape[1:]} smaller than the {vif_min_size(p)}px VIF pyramid")
    num, den = _vif_sums(torch.from_numpy(ref)[:, None], torch.from_numpy(dist)[:, None], p)
    if den <= p.eps:
        raise DegenerateReference("reference carries no information (constant image)")
    return num / den


# ---------------------------------------------------------------------- report

@dataclass
class MetricRow:
    component_label: str
    psnr_db: float
    ssim: float
    ms_ssim: float
    vif: float
    mse: float
    subject_id: str = ""

    def values(self) -> list[float]:
        return [getattr(self, c) for c in REPORT_COLUMNS]


@dataclass
class MetricReport:
    rows: list[MetricRow]
    overall_average: MetricRow
    std: MetricRow
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("component",) + REPORT_COLUMNS)
        for row in [*self.rows, self.overall_average, self.std]:
            w.writerow([row.component_label] + [repr(float(v)) for v in row.values()])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "columns": list(REPORT_COLUMNS),
            "rows": [asdict(r) for r in self.rows],
            "overall_average": asdict(self.overall_average),
            "std": asdict(self.std),
            **({"meta": self.meta} if self.meta else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            rows=[MetricRow(**r) for r in d["rows"]],
            overall_average=MetricRow(**d["overall_average"]),
            std=MetricRow(**d["std"]),
            meta=d.get("meta", {}),
        )


def score_pair(sr, hr, ssim_params: SsimParams = SsimParams(), vif_params: VifParams = VifParams()) -> dict:
    """All report metrics of one SR volume against its ground truth."""
    sr, hr = _pair(sr, hr)
    return {
        "psnr_db": psnr(sr, hr),
        "ssim": ssim_volume(sr, hr, ssim_params),
        "ms_ssim": ms_ssim_volume(sr, hr, ssim_params),
        "vif": vif(hr, sr, vif_params),
        "mse": mse(sr, hr),
    }


def aggregate(rows: Sequence[MetricRow]) -> MetricReport:
    if not rows:
        raise EmptyInput("cannot build a report from zero rows")
    table = np.array([r.values() for r in rows], dtype=np.float64)
    with np.errstate(invalid="ignore"):  # identical pairs give inf PSNR, whose spread is nan
        mean = table.mean(axis=0)
        std = table.std(axis=0)
    return MetricReport(
        rows=list(rows),
        overall_average=MetricRow("overall_average", *map(float, mean)),
        std=MetricRow("std", *map(float, std)),
    )


def build_report(pairs: Sequence[tuple], ssim_params: SsimParams = SsimParams(),
                 vif_params: VifParams = VifParams()) -> MetricReport:
    """Score ``(label, sr, hr[, subject])`` tuples into a report, keeping input order."""
    if not pairs:
        raise EmptyInput("build_report needs at least one pair")
    rows = []
    for item in pairs:
        label, sr, hr = item[:3]
        subject = item[3] if len(item) > 3 else (hr.subject_id if isinstance(hr, Volume) else "")
        rows.append(MetricRow(label, subject_id=subject, **score_pair(sr, hr, ssim_params, vif_params)))
    return aggregate(rows)
