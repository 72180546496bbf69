"""Network geometry: channel schedule and the spatial discount map."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import InvariantError
from ..records import MaskSpec

_LAYER_RANGES = {"encoder": range(5), "decoder": range(4), "adversarial": range(4)}


def channel_size(part: str, l: int) -> int:
    """Channel count at layer l: 2^(8+l) for encoder/adversarial, 2^(12-l) for decoder."""
    if part not in _LAYER_RANGES:
        raise ValueError(f"unknown network part {part!r}")
    if l not in _LAYER_RANGES[part]:
        raise ValueError(
            f"layer index {l} out of range for {part} "
            f"(valid: {list(_LAYER_RANGES[part])})"
        )
    if part == "decoder":
        return 2 ** (12 - l)
    return 2 ** (8 + l)


def discount_map(mask_spec: MaskSpec, gamma: float = 0.97) -> np.ndarray:
    """Per-pixel reconstruction weights gamma^r over the M x M hole.

    r is the ring index counted inward from the hole boundary: the
    outermost masked ring has r=0 and full weight 1.0, so the
    least-ambiguous border pixels dominate the loss.
    """
    m = mask_spec.mask_size
    idx = np.arange(m)
    # ring[i, j] = min(i, j, m-1-i, m-1-j): Chebyshev distance to the
    # nearest unmasked pixel, minus one
    ring = np.minimum(
        np.minimum(idx[:, None], m - 1 - idx[:, None]),
        np.minimum(idx[None, :], m - 1 - idx[None, :]),
    )
    return np.power(float(gamma), ring.astype(np.float64))


@dataclass(frozen=True)
class InpainterSpec:
    """Everything that fixes the inpainting network and its training loss.

    The full-scale channel schedule is divided by `channel_divisor`
    (16 for the desk preset, 1 for the paper-faithful full preset).
    """

    patch_size: int = 64
    mask_size: int = 32
    gamma: float = 0.97
    channel_divisor: int = 16
    rec_loss_weight: float = 0.999
    adv_loss_weight: float = 0.001
    rec_norm: str = "l1"
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    batch_size: int = 64

    def __post_init__(self):
        MaskSpec(self.patch_size, self.mask_size)  # validates the pairing
        if abs(self.rec_loss_weight + self.adv_loss_weight - 1.0) > 1e-9:
            raise InvariantError(
                "rec_loss_weight + adv_loss_weight must equal 1, got "
                f"{self.rec_loss_weight} + {self.adv_loss_weight}"
            )
        if self.rec_norm not in ("l1", "l2"):
            raise InvariantError(f"rec_norm must be 'l1' or 'l2', got {self.rec_norm!r}")
        if self.channel_divisor < 1:
            raise InvariantError("channel_divisor must be >= 1")
        for part in _LAYER_RANGES:
            for l in _LAYER_RANGES[part]:
                if channel_size(part, l) // self.channel_divisor < 1:
                    raise InvariantError(
                        f"channel_divisor {self.channel_divisor} collapses "
                        f"{part} layer {l} to zero channels"
                    )
        if not 0 < self.gamma <= 1:
            raise InvariantError(f"gamma must be in (0, 1], got {self.gamma}")

    @property
    def mask_spec(self) -> MaskSpec:
        return MaskSpec(self.patch_size, self.mask_size)

    def channels(self, part: str) -> list[int]:
        """Scaled channel schedule for one network part."""
        return [
            channel_size(part, l) // self.channel_divisor
            for l in _LAYER_RANGES[part]
        ]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "InpainterSpec":
        return cls(**d)
