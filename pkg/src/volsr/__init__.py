"""Two-stage 3D GAN super-resolution for volumetric spatial maps."""
from .errors import VolSRError
from .losses import LossWeights, SsimParams, composite_generator_loss, perceptual_ssim_loss
from .metrics import MetricReport, MetricRow, build_report, ms_ssim_volume, psnr, ssim_volume, vif
from .networks import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig
from .trainer import TrainConfig, adversarial_train, load_checkpoint, pretrain_generator, save_checkpoint
from .volume_data import DegradationSpec, Volume, degrade, load_volume, save_volume

__version__ = "0.1.0"

__all__ = [
    "VolSRError", "LossWeights", "SsimParams", "composite_generator_loss", "perceptual_ssim_loss",
    "MetricReport", "MetricRow", "build_report", "ms_ssim_volume", "psnr", "ssim_volume", "vif",
    "Discriminator", "DiscriminatorConfig", "Generator", "GeneratorConfig",
    "TrainConfig", "adversarial_train", "load_checkpoint", "pretrain_generator", "save_checkpoint",
    "DegradationSpec", "Volume", "degrade", "load_volume", "save_volume",
]
