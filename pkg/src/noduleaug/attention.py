"""Inpainting-occlusion attention maps.

Every patch position on a stride lattice is masked, inpainted, spliced
back into the image, and scored by the classifier; the score is painted
over the mask footprint. Where a nodule got inpainted away the score
drops, so the map minimum localizes the nodule.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import apply_center_mask, patch2img, write_image_png
from .errors import GeometryError, InvariantError
from .inpainting.model import inpaint
from .records import ImageRecord, MaskSpec, Patch


@dataclass
class AttentionMap:
    values: np.ndarray      # H x W, mean prediction where covered, 0 elsewhere
    coverage: np.ndarray    # H x W, number of mask footprints over each pixel
    stride: int

    def covered_min(self) -> tuple[float, tuple[int, int]]:
        """Minimum value over covered pixels and its (x, y) location."""
        masked = np.where(self.coverage > 0, self.values, np.inf)
        flat = int(np.argmin(masked))
        y, x = np.unravel_index(flat, masked.shape)
        return float(masked[y, x]), (int(x), int(y))


def attention_map(
    inpainter,
    classifier,
    record: ImageRecord,
    mask_spec: MaskSpec = MaskSpec(),
    stride: int | None = None,
) -> AttentionMap:
    """Slide the inpainting hole over the image and map classifier predictions.

    Overlapping footprints are averaged via coverage counts. Deterministic:
    there is no sampling anywhere in the loop.
    """
    h, w = record.shape
    p = mask_spec.patch_size
    if stride is None:
        stride = mask_spec.mask_size // 2
    if stride < 1:
        raise InvariantError("stride must be >= 1")
    if stride > h or stride > w:
        raise GeometryError(f"stride {stride} larger than image {w}x{h}")
    if p > h or p > w:
        raise GeometryError(f"patch size {p} larger than image {w}x{h}")

    value_sum = np.zeros((h, w), dtype=np.float64)
    coverage = np.zeros((h, w), dtype=np.int32)
    o = mask_spec.mask_origin
    m = mask_spec.mask_size
    for oy in range(0, h - p + 1, stride):
        for ox in range(0, w - p + 1, stride):
            patch = Patch(
                pixels=record.pixels[oy : oy + p, ox : ox + p].copy(),
                origin=(ox, oy),
                source_id=record.image_id,
            )
            masked = apply_center_mask(patch, mask_spec)
            filled = inpaint(inpainter, masked)
            modified = patch2img(record, filled)
            score = float(classifier.predict(modified.pixels))
            ys, xs = oy + o, ox + o
            value_sum[ys : ys + m, xs : xs + m] += score
            coverage[ys : ys + m, xs : xs + m] += 1

    values = np.where(coverage > 0, value_sum / np.maximum(coverage, 1), 0.0)
    return AttentionMap(values=values, coverage=coverage, stride=stride)


def render_heatmap(
    amap: AttentionMap,
    record: ImageRecord,
    out_path: str | Path,
    alpha: float = 0.45,
    cmap: str = "magma",
) -> Path:
    """Write a color overlay PNG plus the raw map as a 16-bit PNG sibling."""
    import matplotlib
    matplotlib.use("Agg")

    if not (amap.coverage > 0).any():
        raise InvariantError("attention map has no covered pixels")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    base = np.repeat(record.pixels[:, :, None], 3, axis=2)
    colormap = matplotlib.colormaps[cmap]
    colored = colormap(np.clip(amap.values, 0.0, 1.0))[:, :, :3]
    covered = (amap.coverage > 0)[:, :, None]
    overlay = np.where(covered, (1 - alpha) * base + alpha * colored, base)

    from PIL import Image

    Image.fromarray(np.round(overlay * 255).astype(np.uint8)).save(out_path)
    raw_path = out_path.with_name(out_path.stem + "_raw.png")
    write_image_png(raw_path, amap.values, depth=16)
    return out_path
