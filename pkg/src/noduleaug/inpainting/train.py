"""Training harness for the patch inpainting network."""

from __future__ import annotations

import logging

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import GeometryError, InvariantError, TrainingDivergedError
from ..records import Patch
from ..seeding import derive_rng, derive_seed
from .geometry import InpainterSpec, discount_map
from .model import TrainedInpainter
from .network import ContextEncoder, InteriorDiscriminator

logger = logging.getLogger(__name__)


def _as_stack(patches, patch_size: int, what: str) -> np.ndarray:
    """list[Patch] or [N,P,P] array -> float32 stack, geometry checked."""
    if isinstance(patches, np.ndarray):
        stack = patches.astype(np.float32)
    else:
        stack = np.stack([p.pixels for p in patches]).astype(np.float32)
    if stack.ndim != 3 or stack.shape[1] != patch_size or stack.shape[2] != patch_size:
        raise GeometryError(
            f"{what} patches have shape {stack.shape}, expected "
            f"(n, {patch_size}, {patch_size})"
        )
    return stack


def _rec_loss(pred: torch.Tensor, target: torch.Tensor, weights: torch.Tensor, norm: str) -> torch.Tensor:
    err = (pred - target).abs()
    if norm == "l2":
        err = err**2
    return (weights * err).sum(dim=(1, 2, 3)).mean() / weights.sum()


def train_inpainter(
    spec: InpainterSpec,
    train_patches: list[Patch] | np.ndarray,
    val_patches: list[Patch] | np.ndarray | None,
    epochs: int,
    seed: int = 0,
) -> TrainedInpainter:
    """Train the context encoder with discounted reconstruction + adversarial loss.

    Deterministic per seed (CPU backend, derived batch order). Raises
    TrainingDivergedError with diagnostics if any loss goes non-finite.
    """
    train = _as_stack(train_patches, spec.patch_size, "train")
    if train.shape[0] == 0:
        raise InvariantError("train patch set is empty")
    val = None
    if val_patches is not None and len(val_patches) > 0:
        val = _as_stack(val_patches, spec.patch_size, "val")

    torch.manual_seed(derive_seed(seed, "inpainter-init"))
    gen = ContextEncoder(spec)
    disc = InteriorDiscriminator(spec)
    opt_g = torch.optim.Adam(gen.parameters(), lr=spec.learning_rate,
                             betas=(spec.adam_beta1, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=spec.learning_rate,
                             betas=(spec.adam_beta1, 0.999))

    weights = torch.from_numpy(
        discount_map(spec.mask_spec, spec.gamma).astype(np.float32)
    )[None, None, :, :]
    o = spec.mask_spec.mask_origin
    m = spec.mask_size

    def split_batch(stack: np.ndarray) -> tuple[torch.Tensor, torch.Tensor]:
        masked = stack.copy()
        masked[:, o : o + m, o : o + m] = 0.0
        target = stack[:, o : o + m, o : o + m]
        return (
            torch.from_numpy(masked[:, None, :, :]),
            torch.from_numpy(target[:, None, :, :].copy()),
        )

    def val_loss() -> float:
        gen.eval()
        losses = []
        with torch.no_grad():
            for i in range(0, val.shape[0], spec.batch_size):
                masked, target = split_batch(val[i : i + spec.batch_size])
                pred = gen(masked)
                err = (pred - target).abs()
                if spec.rec_norm == "l2":
                    err = err**2
                losses.append((weights * err).sum().item())
        gen.train()
        return sum(losses) / (val.shape[0] * weights.sum().item())

    train_curve: list[float] = []
    val_curve: list[float] = []
    for epoch in range(epochs):
        order = derive_rng(seed, "order", epoch).permutation(train.shape[0])
        epoch_losses = []
        for start in range(0, len(order), spec.batch_size):
            batch = train[order[start : start + spec.batch_size]]
            masked, target = split_batch(batch)

            # generator step
            opt_g.zero_grad()
            pred = gen(masked)
            rec = _rec_loss(pred, target, weights, spec.rec_norm)
            adv_g = F.binary_cross_entropy_with_logits(
                disc(pred), torch.ones(batch.shape[0], 1)
            )
            g_loss = spec.rec_loss_weight * rec + spec.adv_loss_weight * adv_g
            g_loss.backward()
            opt_g.step()

            # discriminator step
            opt_d.zero_grad()
            logits_real = disc(target)
            logits_fake = disc(pred.detach())
            d_loss = F.binary_cross_entropy_with_logits(
                logits_real, torch.ones_like(logits_real)
            ) + F.binary_cross_entropy_with_logits(
                logits_fake, torch.zeros_like(logits_fake)
            )
            d_loss.backward()
            opt_d.step()

            if not (torch.isfinite(g_loss) and torch.isfinite(d_loss)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}",
                    diagnostics={
                        "epoch": epoch,
                        "step": start // spec.batch_size,
                        "g_loss": float(g_loss),
                        "d_loss": float(d_loss),
                        "train_curve": train_curve,
                    },
                )
            epoch_losses.append(float(rec.detach()))

        train_curve.append(float(np.mean(epoch_losses)))
        if val is not None:
            val_curve.append(val_loss())
        logger.info(
            "stage=train-inpainter step=epoch:%d train_rec=%.6f val_rec=%s",
            epoch, train_curve[-1],
            f"{val_curve[-1]:.6f}" if val is not None else "n/a",
        )

    gen.eval()
    metadata = {
        "epochs": epochs,
        "seed": seed,
        "backend": "torch-cpu",
        "n_train": int(train.shape[0]),
        "n_val": int(val.shape[0]) if val is not None else 0,
        "train_rec_curve": train_curve,
        "val_rec_curve": val_curve,
    }
    return TrainedInpainter(spec, gen, metadata)
