"""Local feature augmentation: per-epoch nodule insertion, plus the
whole-image standard-augmentation baseline.

Each epoch, every eligible image (label 0, lung mask available) is
independently chosen with probability k; a bank asset is picked uniformly,
rotated by a random integer degree, optionally flipped, and inserted
additively at a location whose support footprint lies inside the lung.
All per-image randomness derives from (seed, epoch, image_id), so plans
are reproducible and order-independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GeometryError, InvariantError
from .extraction import SUPPORT_EPS, NoduleAsset, support_bbox
from .records import BoundingBox, ImageRecord
from .seeding import derive_rng


@dataclass(frozen=True)
class AugmentationConfig:
    """Knobs for per-epoch nodule insertion."""

    insertion_rate: float = 0.05        # probability k per image per epoch
    flip_horizontal: bool = True
    flip_vertical: bool = True
    max_location_attempts: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.insertion_rate <= 1.0:
            raise InvariantError(
                f"insertion_rate must be in [0, 1], got {self.insertion_rate}"
            )
        if self.max_location_attempts < 1:
            raise InvariantError("max_location_attempts must be >= 1")


@dataclass(frozen=True)
class InsertionDecision:
    asset_id: str
    origin: tuple[int, int]
    rotation: int
    flip_h: bool
    flip_v: bool


@dataclass
class EpochPlan:
    """Per-image insertion decisions for one epoch."""

    epoch: int
    insertions: dict[str, InsertionDecision] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)   # drawn but no admissible location

    def to_json(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "insertions": {
                    image_id: {
                        "asset_id": d.asset_id,
                        "origin": list(d.origin),
                        "rotation": d.rotation,
                        "flip_h": d.flip_h,
                        "flip_v": d.flip_v,
                    }
                    for image_id, d in sorted(self.insertions.items())
                },
                "skipped": sorted(self.skipped),
            },
            indent=2,
        )

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def transform_asset(
    asset: NoduleAsset, rotation_deg: int, flip_h: bool, flip_v: bool
) -> NoduleAsset:
    """Rotate about the patch center and flip; residual stays >= 0.

    Multiples of 90 degrees are exact grid permutations; other angles use
    bilinear interpolation. The support box is recomputed afterwards.
    """
    if not (0 <= rotation_deg < 360) or int(rotation_deg) != rotation_deg:
        raise InvariantError(
            f"rotation must be an integer in [0, 360), got {rotation_deg}"
        )
    residual = asset.residual
    if rotation_deg % 90 == 0:
        residual = np.rot90(residual, k=rotation_deg // 90).copy()
    elif rotation_deg != 0:
        residual = ndimage.rotate(
            residual, rotation_deg, reshape=False, order=1,
            mode="constant", cval=0.0,
        )
    if flip_h:
        residual = np.fliplr(residual).copy()
    if flip_v:
        residual = np.flipud(residual).copy()
    residual = np.maximum(residual.astype(np.float32), 0.0)
    sb = support_bbox(residual, SUPPORT_EPS)
    if sb is None:
        raise InvariantError(
            f"transform of asset {asset.asset_id} left no residual support"
        )
    return NoduleAsset(
        residual=residual,
        source_image_id=asset.source_image_id,
        source_origin=asset.source_origin,
        support_bbox=sb,
        gate_score=asset.gate_score,
        asset_id=asset.asset_id,
    )


def sample_location(
    lung_mask: np.ndarray,
    support: BoundingBox,
    patch_size: int,
    rng: np.random.Generator,
    max_attempts: int = 100,
) -> tuple[int, int] | None:
    """Rejection-sample a patch origin whose support footprint is all lung.

    Origins are uniform over positions keeping the whole patch in-bounds;
    the first draw whose support rectangle lands entirely on lung pixels
    wins. None when max_attempts draws all fail.
    """
    h, w = lung_mask.shape
    if patch_size > h or patch_size > w:
        raise GeometryError(f"patch size {patch_size} exceeds mask size {w}x{h}")
    for _ in range(max_attempts):
        ox = int(rng.integers(0, w - patch_size + 1))
        oy = int(rng.integers(0, h - patch_size + 1))
        y0 = oy + support.y
        x0 = ox + support.x
        window = lung_mask[y0 : y0 + support.h, x0 : x0 + support.w]
        if window.all():
            return (ox, oy)
    return None


def insert_asset(
    record: ImageRecord, asset: NoduleAsset, origin: tuple[int, int]
) -> ImageRecord:
    """Additively implant a residual into a non-nodule image; label flips to 1."""
    if record.nodule_label != 0:
        raise InvariantError(
            f"{record.image_id}: insertion target must have nodule_label=0"
        )
    ox, oy = int(origin[0]), int(origin[1])
    h, w = record.shape
    p = asset.residual.shape[0]
    if ox < 0 or oy < 0 or ox + p > w or oy + p > h:
        raise GeometryError(
            f"asset footprint at ({ox},{oy}) size {p} outside image {w}x{h}"
        )
    pixels = record.pixels.copy()
    region = pixels[oy : oy + p, ox : ox + p]
    pixels[oy : oy + p, ox : ox + p] = np.clip(region + asset.residual, 0.0, 1.0)
    sb = asset.support_bbox
    return ImageRecord(
        image_id=record.image_id,
        patient_id=record.patient_id,
        pixels=pixels,
        nodule_label=1,
        bboxes=list(record.bboxes),
        lung_mask=record.lung_mask,
        source_depth=record.source_depth,
        provenance=record.provenance
        + [{
            "inserted_asset": asset.asset_id,
            "origin": [ox, oy],
            "support_footprint": [ox + sb.x, oy + sb.y, sb.w, sb.h],
        }],
    )


def plan_epoch(
    records: list[ImageRecord],
    bank: list[NoduleAsset],
    config: AugmentationConfig,
    epoch: int,
) -> EpochPlan:
    """Insertion decisions for one epoch, a pure function of (seed, epoch, image_id)."""
    if config.insertion_rate > 0 and not bank:
        raise InvariantError("insertion_rate > 0 requires a non-empty bank")
    plan = EpochPlan(epoch=epoch)
    for record in records:
        if record.nodule_label != 0 or record.lung_mask is None:
            continue
        rng = derive_rng(config.seed, "plan", epoch, record.image_id)
        if rng.random() >= config.insertion_rate:
            continue
        asset = bank[int(rng.integers(len(bank)))]
        rotation = int(rng.integers(0, 360))
        flip_h = bool(rng.integers(2)) if config.flip_horizontal else False
        flip_v = bool(rng.integers(2)) if config.flip_vertical else False
        transformed = transform_asset(asset, rotation, flip_h, flip_v)
        patch_size = transformed.residual.shape[0]
        origin = sample_location(
            record.lung_mask, transformed.support_bbox, patch_size, rng,
            config.max_location_attempts,
        )
        if origin is None:
            plan.skipped.append(record.image_id)
            continue
        plan.insertions[record.image_id] = InsertionDecision(
            asset_id=asset.asset_id,
            origin=origin,
            rotation=rotation,
            flip_h=flip_h,
            flip_v=flip_v,
        )
    return plan


def apply_decision(
    record: ImageRecord,
    bank_by_id: dict[str, NoduleAsset],
    decision: InsertionDecision,
) -> ImageRecord:
    """Materialize one plan entry: transform the asset and insert it."""
    asset = bank_by_id[decision.asset_id]
    transformed = transform_asset(
        asset, decision.rotation, decision.flip_h, decision.flip_v
    )
    return insert_asset(record, transformed, decision.origin)


def standard_augment(record: ImageRecord, rng: np.random.Generator) -> ImageRecord:
    """Whole-image baseline: flip horizontally with p=0.5, rotate uniform [-15, 15] deg.

    Label is unchanged; only pixels are transformed (the training stream
    uses pixels + label, so boxes and masks are carried through untouched).
    """
    pixels = record.pixels
    if rng.random() < 0.5:
        pixels = np.fliplr(pixels).copy()
    angle = float(rng.uniform(-15.0, 15.0))
    if angle != 0.0:
        pixels = np.clip(
            ndimage.rotate(pixels, angle, reshape=False, order=1,
                           mode="constant", cval=0.0),
            0.0, 1.0,
        )
    return ImageRecord(
        image_id=record.image_id,
        patient_id=record.patient_id,
        pixels=pixels.astype(np.float32),
        nodule_label=record.nodule_label,
        bboxes=list(record.bboxes),
        lung_mask=record.lung_mask,
        source_depth=record.source_depth,
        provenance=list(record.provenance),
    )
