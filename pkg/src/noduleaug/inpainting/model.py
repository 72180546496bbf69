"""Inpainter model wrappers, the composition rule, and the artifact format.

All inpainters expose fill(masked) -> M x M interior prediction; the public
inpaint() splices that interior into the original frame, so frame pixels are
always preserved bit-exactly no matter what the backend predicts.

Model artifact: a directory holding metadata.json (format version, spec,
training log) and weights.pt (parameter blob).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..errors import GeometryError, IngestionError
from ..records import MaskedPatch, Patch
from .geometry import InpainterSpec
from .network import ContextEncoder

ARTIFACT_VERSION = 1


class TrainedInpainter:
    """Context-encoder network plus the spec and training metadata behind it."""

    def __init__(self, spec: InpainterSpec, net: ContextEncoder, metadata: dict | None = None):
        self.spec = spec
        self.net = net
        self.metadata = metadata or {}
        self.net.eval()

    def fill(self, masked: MaskedPatch) -> np.ndarray:
        return self.fill_batch([masked])[0]

    def fill_batch(self, masked_patches: list[MaskedPatch]) -> list[np.ndarray]:
        for mp in masked_patches:
            self._check_geometry(mp)
        batch = np.stack([mp.pixels for mp in masked_patches])[:, None, :, :]
        with torch.no_grad():
            out = self.net(torch.from_numpy(batch).float())
        return [np.asarray(x[0]) for x in out.numpy()]

    def _check_geometry(self, masked: MaskedPatch) -> None:
        if (
            masked.mask_spec.patch_size != self.spec.patch_size
            or masked.mask_spec.mask_size != self.spec.mask_size
        ):
            raise GeometryError(
                f"patch geometry {masked.mask_spec} does not match model "
                f"spec ({self.spec.patch_size}, {self.spec.mask_size})"
            )

    def save(self, out_dir: str | Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "format_version": ARTIFACT_VERSION,
            "spec": self.spec.to_dict(),
            "metadata": self.metadata,
        }
        with open(out_dir / "metadata.json", "w") as f:
            json.dump(meta, f, indent=2)
        torch.save(self.net.state_dict(), out_dir / "weights.pt")
        return out_dir


def load_model(model_dir: str | Path) -> TrainedInpainter:
    """Load a model artifact directory written by TrainedInpainter.save."""
    model_dir = Path(model_dir)
    meta_path = model_dir / "metadata.json"
    if not meta_path.exists():
        raise IngestionError(f"no metadata.json in model dir {model_dir}")
    with open(meta_path) as f:
        meta = json.load(f)
    if meta.get("format_version") != ARTIFACT_VERSION:
        raise IngestionError(
            f"unsupported model format version {meta.get('format_version')}"
        )
    spec = InpainterSpec.from_dict(meta["spec"])
    net = ContextEncoder(spec)
    net.load_state_dict(torch.load(model_dir / "weights.pt", weights_only=True))
    return TrainedInpainter(spec, net, meta.get("metadata", {}))


class OracleInpainter:
    """Perfect inpainter backed by ground-truth clean images.

    Looks up the masked patch's source image in a registry of nodule-free
    twins and returns the true hole content. Only works on data for which
    ground truth exists (the phantom harness).
    """

    def __init__(self, clean_images: dict[str, np.ndarray]):
        self.clean_images = clean_images

    def fill(self, masked: MaskedPatch) -> np.ndarray:
        clean = self.clean_images.get(masked.source_id)
        if clean is None:
            raise IngestionError(
                f"oracle has no clean image for source {masked.source_id!r}"
            )
        ox, oy = masked.origin
        o = masked.mask_spec.mask_origin
        m = masked.mask_spec.mask_size
        return clean[oy + o : oy + o + m, ox + o : ox + o + m].astype(np.float32)

    def fill_batch(self, masked_patches: list[MaskedPatch]) -> list[np.ndarray]:
        return [self.fill(mp) for mp in masked_patches]


class MeanFillInpainter:
    """Baseline that fills the hole with the mean of the surrounding frame."""

    def fill(self, masked: MaskedPatch) -> np.ndarray:
        m = masked.mask_spec.mask_size
        frame = masked.pixels.copy()
        frame_mask = np.ones_like(frame, dtype=bool)
        frame_mask[masked.mask_spec.mask_slice] = False
        mean = float(frame[frame_mask].mean())
        return np.full((m, m), mean, dtype=np.float32)

    def fill_batch(self, masked_patches: list[MaskedPatch]) -> list[np.ndarray]:
        return [self.fill(mp) for mp in masked_patches]


def inpaint(model, masked_patch: MaskedPatch) -> Patch:
    """Predict the hole and splice it into the original frame.

    Output equals the input outside the hole bit-exactly; predicted values
    are clipped to [0, 1].
    """
    interior = np.clip(model.fill(masked_patch), 0.0, 1.0).astype(np.float32)
    m = masked_patch.mask_spec.mask_size
    if interior.shape != (m, m):
        raise GeometryError(
            f"model produced interior of shape {interior.shape}, expected {(m, m)}"
        )
    pixels = masked_patch.pixels.copy()
    pixels[masked_patch.mask_spec.mask_slice] = interior
    return Patch(pixels=pixels, origin=masked_patch.origin, source_id=masked_patch.source_id)


def inpaint_batch(model, masked_patches: list[MaskedPatch]) -> list[Patch]:
    """Batched inpaint with the same composition rule."""
    interiors = model.fill_batch(masked_patches)
    out = []
    for mp, interior in zip(masked_patches, interiors):
        interior = np.clip(interior, 0.0, 1.0).astype(np.float32)
        pixels = mp.pixels.copy()
        pixels[mp.mask_spec.mask_slice] = interior
        out.append(Patch(pixels=pixels, origin=mp.origin, source_id=mp.source_id))
    return out
