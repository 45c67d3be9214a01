"""Volumes on disk and in memory: loading, normalization, degradation, splits, patches.

Everything here is numpy and pure given ``(inputs, seed)``.
"""
from __future__ import annotations

import gzip
import json
import math
import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadShape,
    CorruptHeader,
    DimensionTooSmall,
    MissingFile,
    NegativeSigma,
    NonFiniteData,
    OddDimension,
    ShapeMismatch,
    TooFewSubjects,
    VolumeTooSmall,
)

LR_PATCH = 16
COMPONENT_LABELS = ("Precuneus", "ACC", "PCC")


@dataclass
class Volume:
    data: np.ndarray
    subject_id: str = ""
    component_label: str = ""
    value_range: tuple[float, float] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise BadShape(f"volume must be 3D, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise BadShape(f"volume has an empty axis: {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise NonFiniteData("volume contains NaN or Inf voxels")
        if self.value_range is None:
            self.value_range = (float(self.data.min()), float(self.data.max()))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "Volume":
        return replace(self, data=data)


@dataclass(frozen=True)
class DegradationSpec:
    scale_factor: float = 0.5
    rician_enabled: bool = True
    rician_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.scale_factor != 0.5:
            raise ValueError("only x2 super-resolution is supported (scale_factor must be 0.5)")
        if self.rician_sigma < 0:
            raise NegativeSigma(f"rician_sigma must be >= 0, got {self.rician_sigma}")


@dataclass(frozen=True)
class DatasetSplit:
    train_subjects: list[str]
    val_subjects: list[str]
    test_subjects: list[str]
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "train": list(self.train_subjects),
            "val": list(self.val_subjects),
            "test": list(self.test_subjects),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(list(d["train"]), list(d["val"]), list(d["test"]), int(d.get("seed", 0)))

    def subjects(self, name: str) -> list[str]:
        return {"train": self.train_subjects, "val": self.val_subjects, "test": self.test_subjects}[name]


@dataclass
class PatchPair:
    lr_patch: np.ndarray
    hr_patch: np.ndarray
    origin_lr: tuple[int, int, int]
    subject_id: str = ""

    @property
    def origin_hr(self) -> tuple[int, int, int]:
        return tuple(2 * o for o in self.origin_lr)


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from a mix of ints and strings."""
    words = []
    for k in keys:
        if isinstance(k, str):
            words.append(zlib.crc32(k.encode("utf-8")))
        else:
            words.append(int(k) & 0xFFFFFFFFFFFFFFFF)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def _as_array(v) -> np.ndarray:
    return v.data if isinstance(v, Volume) else np.asarray(v, dtype=np.float64)


# --------------------------------------------------------------------------- I/O

def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _is_nifti(path: Path) -> bool:
    name = path.name.lower()
    return name.endswith(".nii") or name.endswith(".nii.gz")


_NIFTI_DTYPES = {2: "u1", 4: "i2", 8: "i4", 16: "f4", 64: "f8", 256: "i1", 512: "u2", 768: "u4"}


def _read_nifti(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except OSError as exc:
            raise CorruptHeader(f"{path}: bad gzip stream") from exc
    if len(raw) < 348:
        raise CorruptHeader(f"{path}: file shorter than a NIfTI-1 header")
    for endian in ("<", ">"):
        if struct.unpack(endian + "i", raw[:4])[0] == 348:
            break
    else:
        raise CorruptHeader(f"{path}: sizeof_hdr is not 348")
    dim = struct.unpack(endian + "8h", raw[40:56])
    datatype = struct.unpack(endian + "h", raw[70:72])[0]
    vox_offset = int(struct.unpack(endian + "f", raw[108:112])[0])
    slope, inter = struct.unpack(endian + "2f", raw[112:120])
    ndim = dim[0]
    if not 3 <= ndim <= 7 or any(d > 1 for d in dim[4 : ndim + 1]):
        raise CorruptHeader(f"{path}: expected a single 3D volume, dim={dim}")
    if datatype not in _NIFTI_DTYPES:
        raise CorruptHeader(f"{path}: unsupported datatype code {datatype}")
    shape = tuple(dim[1:4])
    if min(shape) < 1:
        raise CorruptHeader(f"{path}: non-positive dimension in {shape}")
    dtype = np.dtype(endian + _NIFTI_DTYPES[datatype])
    count = int(np.prod(shape))
    offset = max(vox_offset, 348)
    if len(raw) < offset + count * dtype.itemsize:
        raise CorruptHeader(f"{path}: data block shorter than header shape {shape}")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).astype(np.float64)
    if slope not in (0.0, 1.0) or inter != 0.0:
        data = data * (slope if slope != 0.0 else 1.0) + inter
    # NIfTI stores the first axis fastest
    return data.reshape(shape, order="F")


def write_nifti(path: str | Path, data: np.ndarray, compress: bool | None = None) -> Path:
    """Write a minimal float32 NIfTI-1 single file (identity affine)."""
    path = Path(path)
    data = np.asarray(data, dtype="<f4")
    if data.ndim != 3:
        raise BadShape(f"expected 3D data, got {data.shape}")
    hdr = bytearray(352)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, 16, 32)
    struct.pack_into("<8f", hdr, 76, 1, 1, 1, 1, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<f", hdr, 112, 1.0)
    hdr[344:348] = b"n+1\x00"
    payload = bytes(hdr) + data.tobytes(order="F")
    if compress is None:
        compress = path.name.lower().endswith(".gz")
    if compress:
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)
    return path


def load_volume(path: str | Path, format: str | None = None) -> Volume:
    """Read a volume from ``raw-f32`` (+ JSON sidecar) or a NIfTI-like file.

    The returned data is not normalized; ``value_range`` holds the observed
    min/max. NIfTI affine/orientation metadata is ignored.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"no such volume file: {path}")
    if format is None:
        format = "nifti-like" if _is_nifti(path) else "raw-f32"
    subject, component = "", ""
    if format == "nifti-like":
        data = _read_nifti(path)
        subject = path.name.split(".")[0]
    elif format == "raw-f32":
        sidecar = _sidecar_path(path)
        if not sidecar.exists():
            raise MissingFile(f"raw-f32 volume {path} has no sidecar header {sidecar}")
        try:
            meta = json.loads(sidecar.read_text())
            shape = tuple(int(s) for s in meta["shape"])
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptHeader(f"{sidecar}: unreadable header") from exc
        if len(shape) != 3 or min(shape) < 1:
            raise CorruptHeader(f"{sidecar}: shape must be three positive ints, got {shape}")
        raw = path.read_bytes()
        expected = 4 * int(np.prod(shape))
        if len(raw) != expected:
            raise CorruptHeader(f"{path}: header shape {shape} needs {expected} bytes, file has {len(raw)}")
        data = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
        subject = str(meta.get("subject", ""))
        component = str(meta.get("component", ""))
    else:
        raise ValueError(f"unknown volume format {format!r}")
    if not np.isfinite(data).all():
        raise NonFiniteData(f"{path}: contains NaN or Inf voxels")
    return Volume(data, subject_id=subject, component_label=component)


def save_volume(v: Volume, path: str | Path) -> Path:
    """Write ``v`` as little-endian float32 plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(np.ascontiguousarray(v.data, dtype="<f4").tobytes())
    meta = {"shape": list(v.shape), "subject": v.subject_id, "component": v.component_label}
    _sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n")
    return path


def read_manifest(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"no manifest at {path}")
    records = json.loads(path.read_text())
    if not isinstance(records, list):
        raise CorruptHeader(f"{path}: manifest must be a JSON list")
    for r in records:
        missing = {"path", "subject", "component"} - set(r)
        if missing:
            raise CorruptHeader(f"{path}: manifest record lacks {sorted(missing)}")
    return records


def write_manifest(records: Iterable[dict], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(list(records), indent=1, sort_keys=True) + "\n")
    return path


# ------------------------------------------------------------------ intensity

def normalize_volume(v: Volume) -> Volume:
    lo, hi = float(v.data.min()), float(v.data.max())
    if hi > lo:
        data = (v.data - lo) / (hi - lo)
    else:
        data = np.zeros_like(v.data)
    return replace(v, data=data, value_range=(lo, hi))


def crop_to_even(v: Volume) -> Volume:
    """Drop the last slice along every odd-sized axis."""
    if min(v.shape) < 2:
        raise DimensionTooSmall(f"cannot crop {v.shape} to a non-empty even shape")
    d, h, w = (n - n % 2 for n in v.shape)
    return v.with_data(v.data[:d, :h, :w].copy())


# ----------------------------------------------------------------- resampling

def _resample_axis(a: np.ndarray, axis: int, n_out: int) -> np.ndarray:
    # half-voxel centre alignment, edge samples clamped (align_corners=False)
    n_in = a.shape[axis]
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = src - i0
    shape = [1] * a.ndim
    shape[axis] = n_out
    w = w.reshape(shape)
    return np.take(a, i0, axis=axis) * (1.0 - w) + np.take(a, i1, axis=axis) * w


def resample_trilinear(data: np.ndarray, out_shape: Sequence[int]) -> np.ndarray:
    """Separable trilinear resampling of a 3D array to ``out_shape``."""
    out = np.asarray(data, dtype=np.float64)
    for axis, n in enumerate(out_shape):
        if out.shape[axis] != n:
            out = _resample_axis(out, axis, int(n))
    return out


def downsample_trilinear(v: Volume, factor: float = 0.5) -> Volume:
    if factor != 0.5:
        raise ValueError("only factor 0.5 is supported")
    if any(n % 2 for n in v.shape):
        raise OddDimension(f"downsampling needs even dims, got {v.shape}; call crop_to_even first")
    out_shape = tuple(n // 2 for n in v.shape)
    return v.with_data(resample_trilinear(v.data, out_shape))


def upsample_trilinear(v: Volume) -> Volume:
    """x2 trilinear upsampling, the inverse alignment of :func:`downsample_trilinear`."""
    out_shape = tuple(2 * n for n in v.shape)
    return v.with_data(resample_trilinear(v.data, out_shape))


# ---------------------------------------------------------------------- noise

def add_rician_noise(v, sigma: float, seed) -> Volume | np.ndarray:
    """Magnitude of the clean signal plus complex Gaussian noise of std ``sigma``.

    Accepts a :class:`Volume` or a bare array and returns the same kind.
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if sigma < 0:
        raise NegativeSigma(f"sigma must be >= 0, got {sigma}")
    clean = _as_array(v)
    if sigma == 0:
        out = clean.copy()
    else:
        rng = np.random.default_rng(seed)
        n1 = rng.normal(0.0, sigma, size=clean.shape)
        n2 = rng.normal(0.0, sigma, size=clean.shape)
        out = np.sqrt((clean + n1) ** 2 + n2**2)
    return v.with_data(out) if isinstance(v, Volume) else out


def degrade(gt: Volume, spec: DegradationSpec) -> Volume:
    """Cropped GT -> LR input: x0.5 trilinear, then optional Rician noise.

    The noise stream is keyed on ``(spec.seed, subject, component)`` so any
    caller degrading the same volume gets the same bytes.
    """
    lr = downsample_trilinear(gt, spec.scale_factor)
    if spec.rician_enabled and spec.rician_sigma > 0:
        seed = derive_seed(spec.seed, "lr-noise", gt.subject_id, gt.component_label)
        lr = add_rician_noise(lr, spec.rician_sigma, seed)
    return lr


# ---------------------------------------------------------------------- split

def split_subjects(subject_ids: Sequence[str], seed: int) -> DatasetSplit:
    """Shuffle distinct subjects under ``seed`` and cut 90/5/5, rounding toward train."""
    subjects = sorted(set(subject_ids))
    n = len(subjects)
    if n < 3:
        raise TooFewSubjects(f"need at least 3 distinct subjects, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [subjects[i] for i in order]
    n_hold = max(1, math.floor(0.05 * n))
    n_train = n - 2 * n_hold
    return DatasetSplit(
        train_subjects=shuffled[:n_train],
        val_subjects=shuffled[n_train : n_train + n_hold],
        test_subjects=shuffled[n_train + n_hold :],
        seed=seed,
    )


# -------------------------------------------------------------------- patches

def extract_patch_pair(hr, lr, seed, lr_size: int = LR_PATCH) -> PatchPair:
    """Random aligned (LR ``lr_size``^3, HR ``2*lr_size``^3) pair.

    ``seed`` may be an int or a shared ``numpy.random.Generator``.
    """
    hr_a, lr_a = _as_array(hr), _as_array(lr)
    if tuple(2 * n for n in lr_a.shape) != hr_a.shape:
        raise ShapeMismatch(f"HR shape {hr_a.shape} is not 2x LR shape {lr_a.shape}")
    if min(lr_a.shape) < lr_size:
        raise VolumeTooSmall(f"LR volume {lr_a.shape} cannot hold a {lr_size}^3 patch")
    rng = np.random.default_rng(seed)
    origin = tuple(int(rng.integers(0, n - lr_size + 1)) for n in lr_a.shape)
    z, y, x = origin
    s, S = lr_size, 2 * lr_size
    lr_patch = lr_a[z : z + s, y : y + s, x : x + s].copy()
    hr_patch = hr_a[2 * z : 2 * z + S, 2 * y : 2 * y + S, 2 * x : 2 * x + S].copy()
    subject = hr.subject_id if isinstance(hr, Volume) else ""
    return PatchPair(lr_patch, hr_patch, origin, subject)


# ------------------------------------------------------------------ synthesis

def synthesize_spatial_map(
    shape: Sequence[int],
    n_blobs: int,
    seed: int,
    subject_id: str = "",
    component_label: str = "",
) -> Volume:
    """Smooth surrogate for an ICA spatial map: Gaussian blobs on a faint background."""
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or min(shape) < 8:
        raise BadShape(f"shape must be three dims >= 8, got {shape}")
    if n_blobs < 1:
        raise BadShape(f"n_blobs must be >= 1, got {n_blobs}")
    rng = np.random.default_rng(seed)
    axes = [np.arange(n, dtype=np.float64) for n in shape]
    field = np.zeros(shape)
    for _ in range(n_blobs):
        amp = rng.uniform(0.4, 1.0)
        profiles = []
        for n, ax in zip(shape, axes):
            centre = rng.uniform(0.2 * n, 0.8 * n)
            width = rng.uniform(1.2, 4.0)
            profiles.append(np.exp(-0.5 * ((ax - centre) / width) ** 2))
        field += amp * np.einsum("i,j,k->ijk", *profiles)
    background = []
    for n, ax in zip(shape, axes):
        freq = rng.uniform(0.5, 1.5)
        phase = rng.uniform(0, 2 * np.pi)
        background.append(1.0 + np.cos(2 * np.pi * freq * ax / n + phase))
    field += 0.03 * np.einsum("i,j,k->ijk", *background)
    return normalize_volume(Volume(field, subject_id=subject_id, component_label=component_label))
