"""Two-stage training: L1 pretraining, then joint relativistic adversarial training."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import Tensor

from .errors import DiscriminatorCollapse, IoFailure, NonFiniteActivation, NonFiniteGradient, NonFiniteLoss, VersionMismatch
from .losses import (
    LossWeights,
    SsimParams,
    composite_generator_loss,
    rad_discriminator_loss,
    relativistic_confidence,
)
from .metrics import MetricReport, MetricRow, aggregate, psnr, score_pair, ssim_volume
from .networks import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    init_discriminator,
    init_generator,
)
from .volume_data import (
    DegradationSpec,
    Volume,
    add_rician_noise,
    crop_to_even,
    degrade,
    derive_seed,
    downsample_trilinear,
    extract_patch_pair,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
CHECKPOINT_FILE = "checkpoint.pt"
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class TrainConfig:
    stage1_epochs: int = 200
    stage2_epochs: int = 130
    lr_init: float = 2e-4
    lr_halving_period: int = 40
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    patches_per_epoch: int | None = None
    d_steps_per_g_step: int = 1
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    ssim_params: SsimParams = field(default_factory=SsimParams)
    noise_augment: bool = True
    rician_sigma: float = 0.02
    dtype: str = "float32"
    collapse_patience: int = 200

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            object.__setattr__(self, "loss_weights", LossWeights(**self.loss_weights))
        if isinstance(self.ssim_params, dict):
            object.__setattr__(self, "ssim_params", SsimParams(**self.ssim_params))
        if self.lr_init <= 0:
            raise ValueError("lr_init must be positive")
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batch_size < 1 or self.d_steps_per_g_step < 1:
            raise ValueError("batch_size and d_steps_per_g_step must be >= 1")
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """CPU-sized schedule: 10 x 200 steps of batch 4 in stage 1, 2 epochs in stage 2."""
        base = dict(batch_size=4, patches_per_epoch=800, stage1_epochs=10, stage2_epochs=2)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ssim_params"]["planes"] = list(self.ssim_params.planes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def steps_per_epoch(self, n_train: int) -> int:
        patches = self.patches_per_epoch or 4 * n_train
        return max(1, math.ceil(patches / self.batch_size))

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]


def lr_at(epoch: int, stage: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if stage == 1:
        return cfg.lr_init
    return cfg.lr_init * 0.5 ** (epoch // cfg.lr_halving_period)


# ----------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    t: int = 0
    m: dict[str, Tensor] = field(default_factory=dict)
    v: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(0, {k: torch.zeros_like(p) for k, p in params.items()},
                   {k: torch.zeros_like(p) for k, p in params.items()})

    def to_dict(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        return cls(int(d["t"]), dict(d["m"]), dict(d["v"]))


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, Tensor],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[dict[str, Tensor], AdamState]:
    """One bias-corrected Adam update, applied in place; ``state.t`` is advanced first."""
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient for {name}")
    b1, b2 = betas
    state.t += 1
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m, v = state.m[name], state.v[name]
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            p.sub_(lr * (m / c1) / ((v / c2).sqrt() + eps))
    return params, state


# ------------------------------------------------------------------ data + ckpt

@dataclass
class TrainData:
    """In-memory training set: clean (HR, LR) arrays plus degraded validation volumes."""

    train: list[tuple[np.ndarray, np.ndarray, str]]
    val: list[tuple[Volume, Volume]] = field(default_factory=list)

    @classmethod
    def from_volumes(cls, train_gt: Sequence[Volume], val_gt: Sequence[Volume] = (),
                     degradation: DegradationSpec = DegradationSpec()) -> "TrainData":
        train = []
        for v in train_gt:
            hr = crop_to_even(v)
            train.append((hr.data, downsample_trilinear(hr).data, v.subject_id))
        val = []
        for v in val_gt:
            hr = crop_to_even(v)
            val.append((hr, degrade(hr, degradation)))
        if not train:
            raise ValueError("training split is empty")
        return cls(train, val)


def config_hash(gen_config: dict, disc_config: dict | None, train_config: dict) -> str:
    # epoch counts are excluded so a run may be extended on resume
    tc = {k: v for k, v in train_config.items() if k not in ("stage1_epochs", "stage2_epochs")}
    blob = json.dumps({"g": gen_config, "d": disc_config, "t": tc}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Checkpoint:
    stage: int
    epoch: int
    global_step: int
    generator: dict[str, Tensor]
    g_opt: AdamState
    rng_state: dict
    gen_config: dict
    train_config: dict
    discriminator: dict[str, Tensor] | None = None
    d_opt: AdamState | None = None
    disc_config: dict | None = None
    best: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    @property
    def config_hash(self) -> str:
        return config_hash(self.gen_config, self.disc_config, self.train_config)

    def build_generator(self) -> Generator:
        # cast before loading so 64-bit weights are not rounded through float32
        g = Generator(GeneratorConfig(**self.gen_config)).to(next(iter(self.generator.values())).dtype)
        g.load_state_dict(self.generator)
        return g

    def build_discriminator(self) -> Discriminator:
        cfg = dict(self.disc_config)
        d = Discriminator(DiscriminatorConfig(**cfg)).to(next(iter(self.discriminator.values())).dtype)
        d.load_state_dict(self.discriminator)
        return d

    def with_fresh_optimizer(self) -> "Checkpoint":
        """Same weights and random stream, zeroed Adam moments."""
        return replace(self, g_opt=AdamState.zeros_like(self.generator),
                       d_opt=None if self.discriminator is None else AdamState.zeros_like(self.discriminator))


def _clone(sd: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: v.detach().clone() for k, v in sd.items()}


def _rng_from_state(state: dict) -> np.random.Generator:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state
    return rng


def initial_checkpoint(gen_cfg: GeneratorConfig, cfg: TrainConfig) -> Checkpoint:
    g = init_generator(gen_cfg, derive_seed(cfg.seed, "generator")).to(cfg.torch_dtype)
    sd = _clone(g.state_dict())
    rng = np.random.default_rng(derive_seed(cfg.seed, "patches"))
    return Checkpoint(
        stage=1, epoch=0, global_step=0, generator=sd, g_opt=AdamState.zeros_like(sd),
        rng_state=rng.bit_generator.state, gen_config=gen_cfg.to_dict(), train_config=cfg.to_dict(),
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    if path.suffix != ".pt":
        path = path / CHECKPOINT_FILE
    payload = {
        "version": ckpt.version,
        "config_hash": ckpt.config_hash,
        "stage": ckpt.stage,
        "epoch": ckpt.epoch,
        "global_step": ckpt.global_step,
        "generator": ckpt.generator,
        "g_opt": ckpt.g_opt.to_dict(),
        "discriminator": ckpt.discriminator,
        "d_opt": None if ckpt.d_opt is None else ckpt.d_opt.to_dict(),
        "rng_state": ckpt.rng_state,
        "gen_config": ckpt.gen_config,
        "disc_config": ckpt.disc_config,
        "train_config": ckpt.train_config,
        "best": ckpt.best,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, path)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path: str | Path, expected_hash: str | None = None) -> Checkpoint:
    path = Path(path)
    if path.is_dir():
        path = path / CHECKPOINT_FILE
    try:
        payload = torch.load(path, weights_only=True)
    except FileNotFoundError as exc:
        raise IoFailure(f"no checkpoint at {path}") from exc
    except Exception as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {payload.get('version')} != {CHECKPOINT_VERSION}")
    ckpt = Checkpoint(
        stage=payload["stage"], epoch=payload["epoch"], global_step=payload["global_step"],
        generator=payload["generator"], g_opt=AdamState.from_dict(payload["g_opt"]),
        rng_state=payload["rng_state"], gen_config=payload["gen_config"],
        train_config=payload["train_config"], discriminator=payload["discriminator"],
        d_opt=None if payload["d_opt"] is None else AdamState.from_dict(payload["d_opt"]),
        disc_config=payload["disc_config"], best=payload["best"],
    )
    if ckpt.config_hash != payload["config_hash"]:
        raise VersionMismatch(f"{path}: stored config hash does not match its config record")
    if expected_hash is not None and expected_hash != ckpt.config_hash:
        raise VersionMismatch(f"{path}: config hash {ckpt.config_hash} != expected {expected_hash}")
    return ckpt


# ------------------------------------------------------------------- helpers

class TrainLog:
    """JSON-lines sink; ``None`` path keeps records in memory only."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def __call__(self, record: dict) -> None:
        self.records.append(record)
        if self.path:
            with self.path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def sample_batch(rng: np.random.Generator, data: TrainData, cfg: TrainConfig) -> tuple[Tensor, Tensor]:
    lrs, hrs = [], []
    for _ in range(cfg.batch_size):
        hr, lr, _subject = data.train[int(rng.integers(len(data.train)))]
        pair = extract_patch_pair(hr, lr, rng)
        lr_patch = pair.lr_patch
        if cfg.noise_augment and cfg.rician_sigma > 0:
            lr_patch = add_rician_noise(lr_patch, cfg.rician_sigma, rng)
        lrs.append(lr_patch)
        hrs.append(pair.hr_patch)
    to_t = lambda xs: torch.from_numpy(np.stack(xs)[:, None]).to(cfg.torch_dtype)  # noqa: E731
    return to_t(lrs), to_t(hrs)


def super_resolve(generator: Generator, lr: Volume) -> Volume:
    """Full-volume inference, clamped to [0, 1]."""
    dtype = next(generator.parameters()).dtype
    was_training = generator.training
    generator.eval()
    with torch.no_grad():
        out = generator(torch.from_numpy(lr.data).to(dtype)[None, None])[0, 0]
    generator.train(was_training)
    return lr.with_data(out.clamp(0, 1).double().numpy())


def _validate(generator: Generator, data: TrainData, p: SsimParams) -> dict:
    if not data.val:
        return {}
    psnrs, ssims = [], []
    for gt, lr in data.val:
        sr = super_resolve(generator, lr)
        psnrs.append(psnr(sr.data, gt.data))
        ssims.append(ssim_volume(sr.data, gt.data, p))
    return {"val_psnr": float(np.mean(psnrs)), "val_ssim": float(np.mean(ssims))}


def _dump_batch(ckpt_dir: Path | None, step: int, lr_b: Tensor, hr_b: Tensor, sr: Tensor) -> str | None:
    if ckpt_dir is None:
        return None
    path = Path(ckpt_dir) / f"nonfinite_step{step:07d}.pt"
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"lr": lr_b, "hr": hr_b, "sr": sr.detach()}, path)
    return str(path)


def _forward(g: Generator, lr_b: Tensor, hr_b: Tensor, ckpt_dir: Path | None, step: int, stage: int) -> Tensor:
    try:
        return g(lr_b)
    except NonFiniteActivation as exc:
        raise NonFiniteLoss(f"stage {stage} step {step}: {exc}",
                            _dump_batch(ckpt_dir, step, lr_b, hr_b, lr_b)) from exc


def _epoch_dir(ckpt_dir: Path, stage: int, epoch: int) -> Path:
    return Path(ckpt_dir) / f"stage{stage}" / f"epoch_{epoch:04d}"


def _snapshot(ckpt: Checkpoint, g: Generator, g_opt: AdamState, rng, epoch: int, step: int,
              d: Discriminator | None = None, d_opt: AdamState | None = None) -> Checkpoint:
    return replace(
        ckpt, epoch=epoch, global_step=step, generator=_clone(g.state_dict()),
        g_opt=AdamState(g_opt.t, _clone(g_opt.m), _clone(g_opt.v)), rng_state=rng.bit_generator.state,
        discriminator=None if d is None else _clone(d.state_dict()),
        d_opt=None if d_opt is None else AdamState(d_opt.t, _clone(d_opt.m), _clone(d_opt.v)),
        best=dict(ckpt.best),
    )


def _end_of_epoch(ckpt: Checkpoint, g: Generator, data: TrainData, cfg: TrainConfig,
                  ckpt_dir: Path | None, sink: Callable, select_by: str) -> Checkpoint:
    metrics = _validate(g, data, cfg.ssim_params)
    sink({"kind": "val", "stage": ckpt.stage, "epoch": ckpt.epoch, "step": ckpt.global_step, **metrics})
    if metrics and (not ckpt.best or metrics[select_by] > ckpt.best["value"]):
        ckpt.best = {"metric": select_by, "value": metrics[select_by], "epoch": ckpt.epoch}
        if ckpt_dir:
            save_checkpoint(ckpt, Path(ckpt_dir) / f"stage{ckpt.stage}" / "best")
    if ckpt_dir:
        save_checkpoint(ckpt, _epoch_dir(ckpt_dir, ckpt.stage, ckpt.epoch))
    return ckpt


def _named_params(model: torch.nn.Module) -> dict[str, Tensor]:
    return dict(model.named_parameters())


# -------------------------------------------------------------------- stage 1

def pretrain_generator(
    data: TrainData,
    cfg: TrainConfig,
    gen_cfg: GeneratorConfig | None = None,
    start: Checkpoint | None = None,
    ckpt_dir: str | Path | None = None,
    sink: Callable[[dict], None] | None = None,
) -> Checkpoint:
    """Stage 1: minimize the pixel L1 loss alone for ``cfg.stage1_epochs`` epochs.

    Pass ``start`` to resume from a stage-1 checkpoint; otherwise the
    generator is initialized from ``gen_cfg`` and ``cfg.seed``.
    """
    sink = sink or TrainLog()
    if start is None:
        ckpt = initial_checkpoint(gen_cfg or GeneratorConfig.desk(), cfg)
        if ckpt_dir:
            save_checkpoint(ckpt, _epoch_dir(ckpt_dir, 1, 0))
        if cfg.stage1_epochs > 0:
            g0 = ckpt.build_generator()
            sink({"kind": "val", "stage": 1, "epoch": 0, "step": 0, **_validate(g0, data, cfg.ssim_params)})
    else:
        if start.stage != 1:
            raise ValueError("pretrain_generator resumes only from stage-1 checkpoints")
        ckpt = start
    g = ckpt.build_generator()
    g.train()
    params = _named_params(g)
    opt = AdamState(ckpt.g_opt.t, _clone(ckpt.g_opt.m), _clone(ckpt.g_opt.v))
    rng = _rng_from_state(ckpt.rng_state)
    step = ckpt.global_step
    weights = LossWeights.pixel_only()
    n_steps = cfg.steps_per_epoch(len(data.train))
    betas = (cfg.adam_beta1, cfg.adam_beta2)

    for epoch in range(ckpt.epoch, cfg.stage1_epochs):
        lr = lr_at(epoch, 1, cfg)
        for _ in range(n_steps):
            lr_b, hr_b = sample_batch(rng, data, cfg)
            sr = _forward(g, lr_b, hr_b, ckpt_dir, step, 1)
            total, br = composite_generator_loss(sr, hr_b, None, None, weights, cfg.ssim_params)
            if not math.isfinite(br["total_g"]):
                raise NonFiniteLoss(f"stage 1 step {step}: loss {br['total_g']}",
                                    _dump_batch(ckpt_dir, step, lr_b, hr_b, sr))
            grads = dict(zip(params, torch.autograd.grad(total, list(params.values()))))
            adam_step(params, grads, opt, lr, betas, cfg.adam_eps)
            step += 1
            sink({"kind": "step", "stage": 1, "epoch": epoch, "step": step, "l_pixel": br["l_pixel"],
                  "l_perc": br["l_perc"], "l_adv_g": None, "l_d": None, "total_g": br["total_g"], "lr": lr})
        ckpt = _snapshot(ckpt, g, opt, rng, epoch + 1, step)
        ckpt = _end_of_epoch(ckpt, g, data, cfg, ckpt_dir, sink, "val_psnr")
    return ckpt


# -------------------------------------------------------------------- stage 2

def begin_stage2(ckpt: Checkpoint, disc_cfg: DiscriminatorConfig, cfg: TrainConfig) -> Checkpoint:
    """Turn a pretrained stage-1 checkpoint into the start of adversarial training."""
    if ckpt.stage != 1:
        raise ValueError("stage 2 starts from a stage-1 checkpoint")
    d = init_discriminator(disc_cfg, derive_seed(cfg.seed, "discriminator")).to(cfg.torch_dtype)
    start = replace(ckpt, stage=2, epoch=0, discriminator=_clone(d.state_dict()),
                    disc_config=disc_cfg.to_dict(), train_config=cfg.to_dict(), best={})
    return start.with_fresh_optimizer()


def adversarial_train(
    ckpt: Checkpoint,
    data: TrainData,
    cfg: TrainConfig,
    disc_cfg: DiscriminatorConfig | None = None,
    ckpt_dir: str | Path | None = None,
    sink: Callable[[dict], None] | None = None,
) -> Checkpoint:
    """Stage 2: alternate one RaD discriminator update with one composite generator update.

    A stage-1 checkpoint starts stage 2 (new discriminator, fresh Adam
    moments); a stage-2 checkpoint resumes it.
    """
    sink = sink or TrainLog()
    if ckpt.stage == 1:
        ckpt = begin_stage2(ckpt, disc_cfg or DiscriminatorConfig.desk(), cfg)
        if ckpt_dir:
            save_checkpoint(ckpt, _epoch_dir(ckpt_dir, 2, 0))
    g, d = ckpt.build_generator(), ckpt.build_discriminator()
    g.train()
    d.train()
    g_params, d_params = _named_params(g), _named_params(d)
    g_opt = AdamState(ckpt.g_opt.t, _clone(ckpt.g_opt.m), _clone(ckpt.g_opt.v))
    d_opt = AdamState(ckpt.d_opt.t, _clone(ckpt.d_opt.m), _clone(ckpt.d_opt.v))
    rng = _rng_from_state(ckpt.rng_state)
    step = ckpt.global_step
    n_steps = cfg.steps_per_epoch(len(data.train))
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    saturated = 0

    for epoch in range(ckpt.epoch, cfg.stage2_epochs):
        lr = lr_at(epoch, 2, cfg)
        for _ in range(n_steps):
            lr_b, hr_b = sample_batch(rng, data, cfg)
            n = hr_b.shape[0]
            sr = _forward(g, lr_b, hr_b, ckpt_dir, step, 2)

            for _ in range(cfg.d_steps_per_g_step):
                scores = d(torch.cat([hr_b, sr.detach()]))
                l_d = rad_discriminator_loss(scores[:n], scores[n:])
                if not torch.isfinite(l_d):
                    raise NonFiniteLoss(f"stage 2 step {step}: discriminator loss {float(l_d.detach())}",
                                        _dump_batch(ckpt_dir, step, lr_b, hr_b, sr))
                grads = dict(zip(d_params, torch.autograd.grad(l_d, list(d_params.values()))))
                adam_step(d_params, grads, d_opt, lr, betas, cfg.adam_eps)

            scores = d(torch.cat([hr_b, sr]))
            c_real, c_fake = scores[:n], scores[n:]
            total, br = composite_generator_loss(sr, hr_b, c_real, c_fake, cfg.loss_weights, cfg.ssim_params)
            if not math.isfinite(br["total_g"]):
                raise NonFiniteLoss(f"stage 2 step {step}: generator loss {br['total_g']}",
                                    _dump_batch(ckpt_dir, step, lr_b, hr_b, sr))
            grads = dict(zip(g_params, torch.autograd.grad(total, list(g_params.values()))))
            adam_step(g_params, grads, g_opt, lr, betas, cfg.adam_eps)
            step += 1

            confidence = relativistic_confidence(c_real.detach(), c_fake.detach())
            saturated = saturated + 1 if confidence > 0.49 else 0
            if saturated == cfg.collapse_patience:
                warnings.warn(f"discriminator saturated for {saturated} steps (step {step})",
                              DiscriminatorCollapse, stacklevel=2)
                sink({"kind": "warning", "stage": 2, "step": step, "event": "discriminator_collapse"})
            sink({"kind": "step", "stage": 2, "epoch": epoch, "step": step, "l_pixel": br["l_pixel"],
                  "l_perc": br["l_perc"], "l_adv_g": br["l_adv_g"], "l_d": float(l_d.detach()),
                  "total_g": br["total_g"], "lr": lr})
        ckpt = _snapshot(ckpt, g, g_opt, rng, epoch + 1, step, d, d_opt)
        ckpt = _end_of_epoch(ckpt, g, data, cfg, ckpt_dir, sink, "val_ssim")
    return ckpt


# ----------------------------------------------------------------- evaluation

def evaluate_pairs(upsample: Callable[[Volume], Volume], items: Sequence[tuple[Volume, Volume]],
                   ssim_params: SsimParams = SsimParams()) -> tuple[MetricReport, list[Volume]]:
    """Score ``upsample(lr)`` against each cropped GT; rows sorted by (component, subject)."""
    order = sorted(range(len(items)), key=lambda i: (items[i][0].component_label, items[i][0].subject_id))
    rows, outputs = [], []
    for i in order:
        gt, lr = items[i]
        sr = upsample(lr)
        sr = sr.with_data(np.clip(sr.data, 0.0, 1.0))
        outputs.append(sr)
        rows.append(MetricRow(gt.component_label, subject_id=gt.subject_id,
                              **score_pair(sr.data, gt.data, ssim_params)))
    return aggregate(rows), outputs


def evaluate_split(ckpt: Checkpoint | Generator, volumes: Sequence[Volume],
                   degradation: DegradationSpec = DegradationSpec(),
                   ssim_params: SsimParams = SsimParams()) -> MetricReport:
    """Crop, degrade and super-resolve each whole volume, then score it against its GT."""
    g = ckpt.build_generator() if isinstance(ckpt, Checkpoint) else ckpt
    items = []
    for v in volumes:
        gt = crop_to_even(v)
        items.append((gt, degrade(gt, degradation)))
    report, _ = evaluate_pairs(lambda lr: super_resolve(g, lr), items, ssim_params)
    return report
