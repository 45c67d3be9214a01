"""RRDB-3D generator and spectrally normalized 3D PatchGAN discriminator."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import BadInputRank, ChannelMismatch, InputTooSmall, NonFiniteActivation, ZeroWeight


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 1
    base_channels: int = 64
    growth_channels: int = 32
    n_rrdb: int = 16
    dense_blocks_per_rrdb: int = 3
    convs_per_dense_block: int = 5
    residual_scale: float = 0.2
    upscale: int = 2
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.n_rrdb < 1:
            raise ValueError("n_rrdb must be >= 1")
        if not 0 < self.residual_scale <= 1:
            raise ValueError("residual_scale must lie in (0, 1]")
        if self.upscale != 2:
            raise ValueError("only upscale=2 is supported")
        if self.convs_per_dense_block < 2:
            raise ValueError("convs_per_dense_block must be >= 2")
        if min(self.in_channels, self.base_channels, self.growth_channels, self.dense_blocks_per_rrdb) < 1:
            raise ValueError("channel and block counts must be positive")

    @classmethod
    def full(cls) -> "GeneratorConfig":
        return cls()

    @classmethod
    def desk(cls) -> "GeneratorConfig":
        return cls(base_channels=16, growth_channels=8, n_rrdb=4)

    @classmethod
    def tiny(cls) -> "GeneratorConfig":
        return cls(base_channels=8, growth_channels=4, n_rrdb=1)

    @classmethod
    def preset(cls, name: str) -> "GeneratorConfig":
        return {"full": cls.full, "desk": cls.desk, "tiny": cls.tiny}[name]()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 1
    channel_schedule: tuple[int, ...] = (32, 64, 128, 256)
    spectral_norm: bool = True
    power_iterations: int = 1
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "channel_schedule", tuple(int(c) for c in self.channel_schedule))
        sched = self.channel_schedule
        if not sched:
            raise ValueError("channel_schedule must be non-empty")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError(f"channel_schedule must be strictly increasing, got {sched}")
        if self.power_iterations < 1:
            raise ValueError("power_iterations must be >= 1")

    @classmethod
    def desk(cls) -> "DiscriminatorConfig":
        return cls(channel_schedule=(8, 16, 32, 64))

    @classmethod
    def tiny(cls) -> "DiscriminatorConfig":
        return cls(channel_schedule=(4, 8, 16, 32))

    @classmethod
    def preset(cls, name: str) -> "DiscriminatorConfig":
        return {"full": cls, "desk": cls.desk, "tiny": cls.tiny}[name]()

    @property
    def min_input(self) -> int:
        return 2 ** (len(self.channel_schedule) + 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_schedule"] = list(self.channel_schedule)
        return d


def conv3(cin: int, cout: int, stride: int = 1) -> nn.Conv3d:
    return nn.Conv3d(cin, cout, kernel_size=3, stride=stride, padding=1)


def conv_param_count(cin: int, cout: int) -> int:
    return 27 * cin * cout + cout


# ------------------------------------------------------------------- generator

class DenseBlock3d(nn.Module):
    """Densely connected 3x3x3 convs with a beta-scaled residual around the block."""

    def __init__(self, nf: int, gc: int, n_convs: int = 5, beta: float = 0.2, slope: float = 0.2):
        super().__init__()
        self.nf, self.beta, self.slope = nf, beta, slope
        self.convs = nn.ModuleList(
            conv3(nf + k * gc, gc if k < n_convs - 1 else nf) for k in range(n_convs)
        )

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.nf:
            raise ChannelMismatch(f"dense block expects {self.nf} channels, got {x.shape[1]}")
        feats = [x]
        for conv in self.convs[:-1]:
            feats.append(F.leaky_relu(conv(torch.cat(feats, 1)), self.slope))
        fused = self.convs[-1](torch.cat(feats, 1))
        return x + self.beta * fused


class RRDB3d(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.nf, self.beta = cfg.base_channels, cfg.residual_scale
        self.blocks = nn.ModuleList(
            DenseBlock3d(cfg.base_channels, cfg.growth_channels, cfg.convs_per_dense_block,
                         cfg.residual_scale, cfg.leaky_slope)
            for _ in range(cfg.dense_blocks_per_rrdb)
        )

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.nf:
            raise ChannelMismatch(f"RRDB expects {self.nf} channels, got {x.shape[1]}")
        out = x
        for block in self.blocks:
            out = block(out)
        return x + self.beta * (out - x)


class Generator(nn.Module):
    """LR volume (N, 1, d, h, w) -> SR volume (N, 1, 2d, 2h, 2w)."""

    min_input = 4

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        nf = cfg.base_channels
        self.conv_first = conv3(cfg.in_channels, nf)
        self.body = nn.Sequential(*(RRDB3d(cfg) for _ in range(cfg.n_rrdb)))
        self.trunk_conv = conv3(nf, nf)
        self.up_conv = conv3(nf, nf)
        self.hr_conv = conv3(nf, nf)
        self.conv_last = conv3(nf, cfg.in_channels)
        self.init_record: dict = {}

    def forward(self, x: Tensor) -> Tensor:
        if x.dim() != 5:
            raise BadInputRank(f"expected (batch, channels, d, h, w), got shape {tuple(x.shape)}")
        if x.shape[1] != self.cfg.in_channels:
            raise ChannelMismatch(f"expected {self.cfg.in_channels} input channels, got {x.shape[1]}")
        if min(x.shape[2:]) < self.min_input:
            raise InputTooSmall(f"spatial dims must be >= {self.min_input}, got {tuple(x.shape[2:])}")
        slope = self.cfg.leaky_slope
        f0 = self.conv_first(x)
        f_body = f0 + self.trunk_conv(self.body(f0))
        up = F.interpolate(f_body, scale_factor=2, mode="trilinear", align_corners=False)
        up = F.leaky_relu(self.up_conv(up), slope)
        up = F.leaky_relu(self.hr_conv(up), slope)
        out = self.conv_last(up)
        if not torch.isfinite(out).all():
            raise NonFiniteActivation("generator produced NaN/Inf")
        return out


def _kaiming_(weight: Tensor, slope: float, gen: torch.Generator, scale: float = 1.0) -> None:
    fan_in = weight[0].numel()
    std = math.sqrt(2.0 / (1.0 + slope**2)) / math.sqrt(fan_in)
    with torch.no_grad():
        weight.copy_(torch.randn(weight.shape, generator=gen, dtype=torch.float64).to(weight.dtype) * std * scale)


def init_generator(cfg: GeneratorConfig, seed: int) -> Generator:
    """Fan-in Gaussian init; dense-block kernels scaled by 0.1, biases zero."""
    model = Generator(cfg)
    gen = torch.Generator().manual_seed(int(seed))
    dense = {id(c) for m in model.modules() if isinstance(m, DenseBlock3d) for c in m.convs}
    for module in model.modules():
        if isinstance(module, nn.Conv3d):
            _kaiming_(module.weight, cfg.leaky_slope, gen, 0.1 if id(module) in dense else 1.0)
            nn.init.zeros_(module.bias)
    model.init_record = {"scheme": "kaiming-normal-fan-in", "dense_scale": 0.1, "seed": int(seed),
                         "residual_scale": cfg.residual_scale}
    return model


# --------------------------------------------------------- spectral normalization

def _unit(t: Tensor, eps: float = 1e-12) -> Tensor:
    return t / t.norm().clamp_min(eps)


def spectral_normalize(
    weight: Tensor, state: tuple[Tensor, Tensor] | None = None, n_iters: int = 1
) -> tuple[Tensor, tuple[Tensor, Tensor]]:
    """Divide ``weight`` by a power-iteration estimate of its top singular value.

    ``weight`` is viewed as (out_channels, everything_else). ``state`` holds the
    left/right singular vector estimates ``(u, v)``; the refreshed pair is
    returned so callers can persist it. Gradients flow through ``weight`` only.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    mat = weight.reshape(weight.shape[0], -1)
    if not torch.any(mat != 0):
        raise ZeroWeight("cannot spectrally normalize an all-zero weight")
    with torch.no_grad():
        if state is None:
            gen = torch.Generator().manual_seed(0)
            u = _unit(torch.randn(mat.shape[0], generator=gen, dtype=torch.float64).to(mat.dtype))
        else:
            u = state[0].to(mat.dtype)
        for _ in range(n_iters):
            v = _unit(mat.t() @ u)
            u = _unit(mat @ v)
    sigma = torch.dot(u, mat @ v)
    return weight / sigma, (u, v)


class SNConv3d(nn.Module):
    """Conv3d whose kernel is spectrally normalized on every forward.

    In training mode each forward advances the power iteration and stores the
    new vectors; in eval mode the stored vectors are used as-is, so the layer
    is a fixed differentiable function of its weight.
    """

    def __init__(self, cin: int, cout: int, stride: int = 1, power_iterations: int = 1):
        super().__init__()
        self.stride = stride
        self.power_iterations = power_iterations
        self.weight = nn.Parameter(torch.empty(cout, cin, 3, 3, 3))
        self.bias = nn.Parameter(torch.zeros(cout))
        self.register_buffer("u", _unit(torch.ones(cout)))
        self.register_buffer("v", _unit(torch.ones(cin * 27)))

    def normalized_weight(self) -> Tensor:
        if self.training:
            w, (u, v) = spectral_normalize(self.weight, (self.u, self.v), self.power_iterations)
            with torch.no_grad():
                self.u.copy_(u)
                self.v.copy_(v)
            return w
        mat = self.weight.reshape(self.weight.shape[0], -1)
        return self.weight / torch.dot(self.u, mat @ self.v)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv3d(x, self.normalized_weight(), self.bias, stride=self.stride, padding=1)


# --------------------------------------------------------------- discriminator

class Discriminator(nn.Module):
    """3D PatchGAN: stride-2 conv stack, single-channel pre-sigmoid score map."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        sched = cfg.channel_schedule
        layers: list[nn.Module] = [conv3(cfg.in_channels, sched[0], stride=2)]
        for cin, cout in zip(sched, sched[1:]):
            if cfg.spectral_norm:
                layers.append(SNConv3d(cin, cout, stride=2, power_iterations=cfg.power_iterations))
            else:
                layers.append(conv3(cin, cout, stride=2))
        self.features = nn.ModuleList(layers)
        self.head = conv3(sched[-1], 1)

    def forward(self, x: Tensor) -> Tensor:
        if x.dim() != 5:
            raise BadInputRank(f"expected (batch, channels, D, H, W), got shape {tuple(x.shape)}")
        if min(x.shape[2:]) < self.cfg.min_input:
            raise InputTooSmall(f"discriminator needs spatial dims >= {self.cfg.min_input}, got {tuple(x.shape[2:])}")
        h = x
        for layer in self.features:
            h = F.leaky_relu(layer(h), self.cfg.leaky_slope)
        return self.head(h)


def init_discriminator(cfg: DiscriminatorConfig, seed: int) -> Discriminator:
    model = Discriminator(cfg)
    gen = torch.Generator().manual_seed(int(seed))
    for module in model.modules():
        if isinstance(module, (nn.Conv3d, SNConv3d)):
            _kaiming_(module.weight, cfg.leaky_slope, gen)
            nn.init.zeros_(module.bias)
        if isinstance(module, SNConv3d):
            with torch.no_grad():
                module.u.copy_(_unit(torch.randn(module.u.shape, generator=gen, dtype=torch.float64)))
                module.v.copy_(_unit(module.weight.reshape(module.weight.shape[0], -1).t() @ module.u))
    return model


def receptive_intervals(n_in: int, n_layers: int) -> list[tuple[int, int]]:
    """Input index interval [lo, hi] seen by each score position along one axis.

    Follows the discriminator's geometry: ``n_layers`` stride-2 k3 p1 convs
    then one stride-1 k3 p1 head.
    """
    sizes = [n_in]
    for _ in range(n_layers):
        sizes.append((sizes[-1] - 1) // 2 + 1)
    strides = [2] * n_layers + [1]
    n_out = sizes[-1]
    intervals = []
    for o in range(n_out):
        lo = hi = o
        for s in reversed(strides):
            lo, hi = lo * s - 1, hi * s + 1
        intervals.append((max(lo, 0), min(hi, n_in - 1)))
    return intervals
