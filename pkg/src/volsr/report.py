"""Model-1 baseline, report files, and slice montages."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SliceOutOfRange
from .metrics import MetricReport, REPORT_COLUMNS
from .volume_data import Volume, upsample_trilinear


def trilinear_baseline(lr: Volume) -> Volume:
    """Model 1: plain x2 trilinear upsampling of the LR input."""
    return upsample_trilinear(lr)


def volume_digest(volumes: Sequence[Volume]) -> str:
    h = hashlib.sha256()
    for v in volumes:
        h.update(np.ascontiguousarray(v.data, dtype="<f8").tobytes())
    return h.hexdigest()


def write_report(report: MetricReport, out_dir: str | Path, stem: str = "report") -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    csv_path.write_text(report.to_csv())
    json_path.write_text(report.to_json())
    return csv_path, json_path


def comparison_bundle(model2: MetricReport, model1: MetricReport, lr_digest: str,
                      model1_name: str = "trilinear", montages: Sequence[str] = ()) -> dict:
    """Side-by-side summary of both models, with Model 2 minus Model 1 deltas."""
    deltas = {c: getattr(model2.overall_average, c) - getattr(model1.overall_average, c) for c in REPORT_COLUMNS}
    return {
        "lr_sha256": lr_digest,
        "model_1": {"name": model1_name, **model1.to_dict()},
        "model_2": {"name": "generator", **model2.to_dict()},
        "delta_overall": deltas,
        "montages": list(montages),
    }


def write_json(obj: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


# ------------------------------------------------------------------- montage

def write_pgm(img: np.ndarray, path: str | Path) -> Path:
    """Binary (P5) 8-bit greyscale image; ``img`` is expected in [0, 1]."""
    path = Path(path)
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = pixels.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos + 1)
    return data.reshape(h, w).astype(np.float64) / maxval


def nearest_upscale(slice2d: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    rows = np.minimum((np.arange(shape[0]) * slice2d.shape[0]) // shape[0], slice2d.shape[0] - 1)
    cols = np.minimum((np.arange(shape[1]) * slice2d.shape[1]) // shape[1], slice2d.shape[1] - 1)
    return slice2d[np.ix_(rows, cols)]


def crop_box(center: tuple[int, int], box: int, shape: tuple[int, int]) -> tuple[slice, slice]:
    """``box``-sized window centred on ``center`` and shifted to stay inside ``shape``."""
    out = []
    for c, n in zip(center, shape):
        size = min(box, n)
        lo = int(np.clip(c - size // 2, 0, n - size))
        out.append(slice(lo, lo + size))
    return tuple(out)


def montage(gt: Volume, lr: Volume, model1: Volume, model2: Volume,
            slice_index: int | None = None, box: int = 16, gap: int = 2) -> np.ndarray:
    """GT | LR (nearest) | Model 1 | Model 2 on top, magnified crops of the same box below.

    The default slice is mid-depth; the crop is centred on the GT's brightest voxel.
    """
    depth = gt.shape[0]
    k = depth // 2 if slice_index is None else slice_index
    if not 0 <= k < depth:
        raise SliceOutOfRange(f"slice {k} outside [0, {depth})")
    h, w = gt.shape[1:]
    lr_k = min(k * lr.shape[0] // depth, lr.shape[0] - 1)
    panels = [
        gt.data[k],
        nearest_upscale(lr.data[lr_k], (h, w)),
        model1.data[k],
        model2.data[k],
    ]
    peak = np.unravel_index(int(np.argmax(gt.data)), gt.shape)
    rows, cols = crop_box((int(peak[1]), int(peak[2])), box, (h, w))
    crop_h, crop_w = rows.stop - rows.start, cols.stop - cols.start
    mag = max(1, min(h // crop_h, w // crop_w))
    crops = [np.kron(p[rows, cols], np.ones((mag, mag))) for p in panels]

    width = 4 * w + 3 * gap
    height = h + gap + crops[0].shape[0]
    canvas = np.zeros((height, width))
    for i, (p, c) in enumerate(zip(panels, crops)):
        x0 = i * (w + gap)
        canvas[:h, x0 : x0 + w] = p
        canvas[h + gap : h + gap + c.shape[0], x0 : x0 + c.shape[1]] = c
    return canvas
