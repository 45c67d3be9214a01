"""Command-line entry point: ``volsr prepare|train|evaluate|montage``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import NonFiniteLoss, VolSRError
from .networks import DiscriminatorConfig, GeneratorConfig
from .report import (
    comparison_bundle,
    montage,
    trilinear_baseline,
    volume_digest,
    write_json,
    write_pgm,
    write_report,
)
from .trainer import (
    TrainConfig,
    TrainData,
    TrainLog,
    adversarial_train,
    config_hash,
    evaluate_pairs,
    load_checkpoint,
    pretrain_generator,
    super_resolve,
)
from .volume_data import (
    COMPONENT_LABELS,
    DatasetSplit,
    DegradationSpec,
    Volume,
    crop_to_even,
    degrade,
    derive_seed,
    load_volume,
    normalize_volume,
    read_manifest,
    save_volume,
    split_subjects,
    synthesize_spatial_map,
    write_manifest,
)

log = logging.getLogger("volsr")

SYNTHETIC_SHAPE = (53, 63, 52)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Everything a command needs, resolved; written next to its outputs."""

    command: str
    seed: int = 0
    desk_scale: bool = False
    out: str = "."
    model_size: str = "full"
    generator: dict = field(default_factory=dict)
    discriminator: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    degradation: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def gen_config(self) -> GeneratorConfig:
        return GeneratorConfig(**self.generator)

    def disc_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(**self.discriminator)

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.train)

    def degradation_spec(self) -> DegradationSpec:
        return DegradationSpec(**self.degradation)

    def write(self, out_dir: Path) -> Path:
        return write_json(asdict(self), out_dir / "resolved_config.json")


def _given(args, name):
    return getattr(args, name, None) is not None


def resolve_config(args) -> RunConfig:
    base: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        base = json.loads(path.read_text())
    seed = args.seed if _given(args, "seed") else int(base.get("seed", 0))
    desk = bool(args.desk_scale) or bool(base.get("desk_scale", False))
    size = args.model_size if _given(args, "model_size") else base.get("model_size", "desk" if desk else "full")
    out = args.out if _given(args, "out") else base.get("out", ".")

    generator = base.get("generator") or GeneratorConfig.preset(size).to_dict()
    discriminator = base.get("discriminator") or DiscriminatorConfig.preset(size).to_dict()
    train = dict(base.get("train") or (TrainConfig.desk() if desk else TrainConfig()).to_dict())
    degradation = dict(base.get("degradation") or asdict(DegradationSpec()))
    train["seed"] = seed
    degradation["seed"] = seed
    options = dict(base.get("options", {})) if base.get("command") == args.command else {}

    if args.command == "prepare":
        for key in ("synthetic", "input"):
            if _given(args, key):
                options[key] = getattr(args, key)
        if _given(args, "rician_sigma"):
            degradation["rician_sigma"] = args.rician_sigma
        if args.no_noise:
            degradation["rician_enabled"] = False
    elif args.command == "train":
        for key in ("data", "resume"):
            if _given(args, key):
                options[key] = getattr(args, key)
        if args.stage1_only:
            options["stage1_only"] = True
        if _given(args, "epochs"):
            train["stage1_epochs"] = args.epochs
        if _given(args, "stage2_epochs"):
            train["stage2_epochs"] = args.stage2_epochs
    elif args.command == "evaluate":
        for key in ("data", "checkpoint", "split", "baseline", "baseline_checkpoint"):
            if _given(args, key):
                options[key] = getattr(args, key)
    elif args.command == "montage":
        for key in ("data", "eval_dir", "slice", "box", "split"):
            if _given(args, key):
                options[key] = getattr(args, key)

    cfg = RunConfig(args.command, seed, desk, str(out), size, generator, discriminator, train, degradation, options)
    # fail fast on malformed records
    cfg.gen_config(), cfg.disc_config(), cfg.train_config(), cfg.degradation_spec()
    return cfg


# ------------------------------------------------------------------ prepared data

def load_prepared(data_dir: str | Path) -> tuple[list[dict], DatasetSplit]:
    data_dir = Path(data_dir)
    if not (data_dir / "manifest.json").exists():
        raise UsageError(f"{data_dir} is not a prepared dataset (no manifest.json); run `volsr prepare` first")
    records = read_manifest(data_dir / "manifest.json")
    split = DatasetSplit.from_dict(json.loads((data_dir / "split.json").read_text()))
    return records, split


def _records_for(records: list[dict], subjects: list[str]) -> list[dict]:
    wanted = set(subjects)
    return [r for r in records if r["subject"] in wanted]


def _load_gt(data_dir: Path, rec: dict) -> Volume:
    v = load_volume(data_dir / rec["path"])
    v.subject_id, v.component_label = rec["subject"], rec["component"]
    return v


def _load_lr(data_dir: Path, rec: dict) -> Volume:
    v = load_volume(data_dir / rec["lr_path"])
    v.subject_id, v.component_label = rec["subject"], rec["component"]
    return v


# ---------------------------------------------------------------------- commands

def cmd_prepare(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    spec = cfg.degradation_spec()
    synthetic, source = cfg.options.get("synthetic"), cfg.options.get("input")
    volumes: list[Volume] = []
    if synthetic:
        for i in range(int(synthetic)):
            volumes.append(synthesize_spatial_map(
                SYNTHETIC_SHAPE, 3 + i % 4, derive_seed(cfg.seed, "synthetic", i),
                subject_id=f"sub-{i:04d}", component_label=COMPONENT_LABELS[i % len(COMPONENT_LABELS)]))
    elif source:
        src = Path(source)
        manifest = src / "manifest.json" if src.is_dir() else src
        if not manifest.exists():
            raise UsageError(f"input {src} has no manifest.json")
        for rec in read_manifest(manifest):
            v = load_volume(manifest.parent / rec["path"])
            v.subject_id, v.component_label = str(rec["subject"]), str(rec["component"])
            volumes.append(v)
    else:
        raise UsageError("prepare needs --synthetic N or --input PATH")

    records = []
    for i, v in enumerate(volumes):
        gt = crop_to_even(normalize_volume(v))
        lr = degrade(gt, spec)
        stem = f"{v.subject_id}_{v.component_label}_{i:04d}"
        save_volume(gt, out / "gt" / f"{stem}.raw")
        save_volume(lr, out / "lr" / f"{stem}.raw")
        records.append({"path": f"gt/{stem}.raw", "lr_path": f"lr/{stem}.raw",
                        "subject": v.subject_id, "component": v.component_label})
    split = split_subjects([r["subject"] for r in records], cfg.seed)
    write_manifest(records, out / "manifest.json")
    write_json(split.to_dict(), out / "split.json")
    cfg.write(out)
    log.info("prepared %d volumes: split %d/%d/%d", len(records), len(split.train_subjects),
             len(split.val_subjects), len(split.test_subjects))
    return 0


def cmd_train(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    data_dir = cfg.options.get("data")
    if not data_dir:
        raise UsageError("train needs --data PREPARED_DIR")
    data_dir = Path(data_dir)
    records, split = load_prepared(data_dir)
    tcfg, gcfg, dcfg = cfg.train_config(), cfg.gen_config(), cfg.disc_config()
    train_gt = [_load_gt(data_dir, r) for r in _records_for(records, split.train_subjects)]
    val_recs = _records_for(records, split.val_subjects)
    data = TrainData(
        train=TrainData.from_volumes(train_gt).train,
        val=[(_load_gt(data_dir, r), _load_lr(data_dir, r)) for r in val_recs],
    )
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out)
    sink = TrainLog(out / "train_log.jsonl")
    ckpt_dir = out / "ckpt"

    start = None
    if cfg.options.get("resume"):
        probe = load_checkpoint(cfg.options["resume"])
        expected = config_hash(gcfg.to_dict(), dcfg.to_dict() if probe.stage == 2 else None, tcfg.to_dict())
        start = load_checkpoint(cfg.options["resume"], expected_hash=expected)
        log.info("resuming stage %d at epoch %d, step %d", start.stage, start.epoch, start.global_step)

    t0 = time.time()
    if start is None or start.stage == 1:
        ckpt = pretrain_generator(data, tcfg, gcfg, start=start, ckpt_dir=ckpt_dir, sink=sink)
    else:
        ckpt = start
    log.info("stage 1 done at step %d (%.0fs)", ckpt.global_step, time.time() - t0)
    if not cfg.options.get("stage1_only"):
        ckpt = adversarial_train(ckpt, data, tcfg, dcfg, ckpt_dir=ckpt_dir, sink=sink)
        log.info("stage 2 done at step %d (%.0fs)", ckpt.global_step, time.time() - t0)
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    opts = cfg.options
    if not opts.get("data") or not opts.get("checkpoint"):
        raise UsageError("evaluate needs --data PREPARED_DIR and --checkpoint CKPT")
    data_dir = Path(opts["data"])
    records, split = load_prepared(data_dir)
    recs = _records_for(records, split.subjects(opts.get("split", "test")))
    items = [(_load_gt(data_dir, r), _load_lr(data_dir, r)) for r in recs]
    lr_inputs = [lr for _, lr in items]
    digest = volume_digest(lr_inputs)

    generator = load_checkpoint(opts["checkpoint"]).build_generator()
    baseline = opts.get("baseline", "trilinear")
    if baseline == "trilinear":
        model1 = trilinear_baseline
    elif baseline == "l1-only":
        if not opts.get("baseline_checkpoint"):
            raise UsageError("--baseline l1-only needs --baseline-checkpoint (a stage-1 checkpoint)")
        ablated = load_checkpoint(opts["baseline_checkpoint"]).build_generator()
        model1 = lambda lr: super_resolve(ablated, lr)  # noqa: E731
    else:
        raise UsageError(f"unknown baseline {baseline!r}")

    report2, preds2 = evaluate_pairs(lambda lr: super_resolve(generator, lr), items)
    report1, preds1 = evaluate_pairs(model1, items)
    if volume_digest(lr_inputs) != digest:
        raise VolSRError("LR inputs changed between model evaluations")
    report2.meta = {"model": "generator", "lr_sha256": digest}
    report1.meta = {"model": baseline, "lr_sha256": digest}
    log.info("LR input sha256 %s (%d volumes)", digest, len(items))

    write_report(report2, out, "report")
    write_report(report1, out, "baseline_report")
    for name, preds in (("model_2", preds2), ("model_1", preds1)):
        for v in preds:
            save_volume(v, out / "predictions" / name / f"{v.subject_id}_{v.component_label}.raw")
    write_json(comparison_bundle(report2, report1, digest, baseline), out / "comparison.json")
    cfg.write(out)
    d = report2.overall_average.psnr_db - report1.overall_average.psnr_db
    log.info("overall PSNR: model 2 %.3f dB, model 1 %.3f dB (delta %+.3f)",
             report2.overall_average.psnr_db, report1.overall_average.psnr_db, d)
    return 0


def cmd_montage(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    opts = cfg.options
    if not opts.get("data") or not opts.get("eval_dir"):
        raise UsageError("montage needs --data PREPARED_DIR and --eval-dir EVALUATE_OUT")
    data_dir, eval_dir = Path(opts["data"]), Path(opts["eval_dir"])
    records, split = load_prepared(data_dir)
    written = []
    for rec in _records_for(records, split.subjects(opts.get("split", "test"))):
        name = f"{rec['subject']}_{rec['component']}.raw"
        m1_path, m2_path = eval_dir / "predictions" / "model_1" / name, eval_dir / "predictions" / "model_2" / name
        if not (m1_path.exists() and m2_path.exists()):
            raise UsageError(f"no evaluated predictions for {rec['subject']} under {eval_dir}; run evaluate first")
        img = montage(_load_gt(data_dir, rec), _load_lr(data_dir, rec), load_volume(m1_path),
                      load_volume(m2_path), opts.get("slice"), int(opts.get("box", 16)))
        out.mkdir(parents=True, exist_ok=True)
        written.append(str(write_pgm(img, out / f"montage_{rec['subject']}_{rec['component']}.pgm")))
    bundle_path = eval_dir / "comparison.json"
    if bundle_path.exists():
        bundle = json.loads(bundle_path.read_text())
        bundle["montages"] = written
        write_json(bundle, bundle_path)
    cfg.write(out)
    log.info("wrote %d montages", len(written))
    return 0


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "evaluate": cmd_evaluate, "montage": cmd_montage}


def build_parser() -> argparse.ArgumentParser:
    def add_globals(p, default):
        p.add_argument("--config", default=default, help="JSON run config (e.g. a resolved_config.json)")
        p.add_argument("--seed", type=int, default=default)
        p.add_argument("--out", default=default, help="output directory")
        p.add_argument("--desk-scale", action="store_true", default=default or False,
                       help="CPU-sized model and schedule")
        p.add_argument("--model-size", choices=("full", "desk", "tiny"), default=default)
        p.add_argument("-v", "--verbose", action="store_true", default=default or False)

    parser = _Parser(prog="volsr", description="3D GAN super-resolution toolkit")
    add_globals(parser, None)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="write cropped GT, degraded LR, manifest and split")
    add_globals(p, argparse.SUPPRESS)
    p.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic subjects")
    p.add_argument("--input", help="manifest JSON (or a directory holding manifest.json)")
    p.add_argument("--rician-sigma", type=float)
    p.add_argument("--no-noise", action="store_true")

    p = sub.add_parser("train", help="stage-1 L1 pretraining then stage-2 adversarial training")
    add_globals(p, argparse.SUPPRESS)
    p.add_argument("--data", help="prepared dataset directory")
    p.add_argument("--stage1-only", action="store_true")
    p.add_argument("--resume", metavar="CKPT")
    p.add_argument("--epochs", type=int, help="stage-1 epochs")
    p.add_argument("--stage2-epochs", type=int)

    p = sub.add_parser("evaluate", help="score the generator and the baseline on a split")
    add_globals(p, argparse.SUPPRESS)
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--baseline", choices=("trilinear", "l1-only"))
    p.add_argument("--baseline-checkpoint")

    p = sub.add_parser("montage", help="GT | LR | Model 1 | Model 2 slice panels as PGM")
    add_globals(p, argparse.SUPPRESS)
    p.add_argument("--data")
    p.add_argument("--eval-dir")
    p.add_argument("--slice", type=int)
    p.add_argument("--box", type=int)
    p.add_argument("--split", choices=("train", "val", "test"))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"volsr: error: {exc}", file=sys.stderr)
        return 1
    except NonFiniteLoss as exc:
        print(f"volsr: training diverged: {exc} (batch dump: {exc.dump_path})", file=sys.stderr)
        return 2
    except (VolSRError, OSError, ValueError) as exc:
        print(f"volsr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
