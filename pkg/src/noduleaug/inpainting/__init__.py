"""Context-encoder patch inpainting: geometry, losses, training, evaluation."""

from .geometry import InpainterSpec, channel_size, discount_map
from .loss import reconstruction_loss
from .model import MeanFillInpainter, OracleInpainter, TrainedInpainter, inpaint, load_model
from .train import train_inpainter
from .evaluate import evaluate_inpainter, psnr

__all__ = [
    "InpainterSpec",
    "channel_size",
    "discount_map",
    "reconstruction_loss",
    "MeanFillInpainter",
    "OracleInpainter",
    "TrainedInpainter",
    "inpaint",
    "load_model",
    "train_inpainter",
    "evaluate_inpainter",
    "psnr",
]
