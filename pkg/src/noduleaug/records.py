"""Core domain types: images, bounding boxes, patches, masks, splits.

Coordinate convention: bbox and patch origins are (x, y) with x = column
and y = row; pixel arrays are indexed [y, x]. Pixel values live in [0, 1]
as float32 regardless of the 8/16-bit source depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, InvariantError


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel units, (x, y) top-left, (w, h) extent."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvariantError(f"bbox extent must be positive, got {self}")

    @property
    def center(self) -> tuple[int, int]:
        return (self.x + self.w // 2, self.y + self.h // 2)

    @property
    def x2(self) -> int:
        """Exclusive right edge."""
        return self.x + self.w

    @property
    def y2(self) -> int:
        """Exclusive bottom edge."""
        return self.y + self.h

    def check_within(self, height: int, width: int) -> None:
        if self.x < 0 or self.y < 0 or self.x2 > width or self.y2 > height:
            raise GeometryError(
                f"bbox {self} outside image of size {width}x{height}"
            )

    def rescaled(self, scale_x: float, scale_y: float) -> "BoundingBox":
        """Proportional rescale with floor/ceil so coverage is preserved."""
        x = int(np.floor(self.x * scale_x))
        y = int(np.floor(self.y * scale_y))
        x2 = int(np.ceil(self.x2 * scale_x))
        y2 = int(np.ceil(self.y2 * scale_y))
        return BoundingBox(x, y, max(x2 - x, 1), max(y2 - y, 1))

    def dilated(self, margin: int, height: int, width: int) -> "BoundingBox":
        """Grow by `margin` on every side, clipped to the image."""
        x = max(self.x - margin, 0)
        y = max(self.y - margin, 0)
        x2 = min(self.x2 + margin, width)
        y2 = min(self.y2 + margin, height)
        return BoundingBox(x, y, x2 - x, y2 - y)

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and self.x2 >= other.x2
            and self.y2 >= other.y2
        )

    def contains_point(self, x: int, y: int) -> bool:
        return self.x <= x < self.x2 and self.y <= y < self.y2

    def iou(self, other: "BoundingBox") -> float:
        ix = max(0, min(self.x2, other.x2) - max(self.x, other.x))
        iy = max(0, min(self.y2, other.y2) - max(self.y, other.y))
        inter = ix * iy
        union = self.w * self.h + other.w * other.h - inter
        return inter / union if union > 0 else 0.0


@dataclass
class ImageRecord:
    """One grayscale scan with label, optional boxes and lung mask."""

    image_id: str
    patient_id: str
    pixels: np.ndarray
    nodule_label: int
    bboxes: list[BoundingBox] = field(default_factory=list)
    lung_mask: np.ndarray | None = None
    source_depth: int = 16
    provenance: list[dict] = field(default_factory=list)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2:
            raise InvariantError(
                f"{self.image_id}: pixels must be 2-d, got shape {px.shape}"
            )
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise InvariantError(
                f"{self.image_id}: pixel values outside [0, 1] "
                f"(min {px.min():.4g}, max {px.max():.4g})"
            )
        self.pixels = px
        if self.nodule_label not in (0, 1):
            raise InvariantError(
                f"{self.image_id}: nodule_label must be 0 or 1"
            )
        if self.bboxes and self.nodule_label != 1:
            raise InvariantError(
                f"{self.image_id}: has bboxes but nodule_label=0"
            )
        h, w = px.shape
        for bbox in self.bboxes:
            bbox.check_within(h, w)
        if self.lung_mask is not None:
            mask = np.asarray(self.lung_mask)
            if mask.shape != px.shape:
                raise InvariantError(
                    f"{self.image_id}: lung_mask shape {mask.shape} != "
                    f"image shape {px.shape}"
                )
            if not np.isin(mask, (0, 1)).all():
                raise InvariantError(
                    f"{self.image_id}: lung_mask must be binary"
                )
            self.lung_mask = mask.astype(np.uint8)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class MaskSpec:
    """Centered square hole geometry: mask is half the patch size."""

    patch_size: int = 64
    mask_size: int = 32

    def __post_init__(self):
        if self.patch_size % 2 != 0:
            raise InvariantError("patch_size must be even")
        if self.mask_size != self.patch_size // 2:
            raise InvariantError(
                f"mask_size must be patch_size/2, got "
                f"{self.mask_size} for patch_size {self.patch_size}"
            )

    @property
    def mask_origin(self) -> int:
        """Offset of the hole from the patch edge, same in x and y."""
        return (self.patch_size - self.mask_size) // 2

    @property
    def mask_slice(self) -> tuple[slice, slice]:
        o, m = self.mask_origin, self.mask_size
        return (slice(o, o + m), slice(o, o + m))


@dataclass
class Patch:
    """Square crop of a source image, origin in source coordinates."""

    pixels: np.ndarray
    origin: tuple[int, int]
    source_id: str

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise InvariantError(f"patch must be square, got {px.shape}")
        self.pixels = px
        self.origin = (int(self.origin[0]), int(self.origin[1]))

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


@dataclass
class MaskedPatch:
    """Patch with its centered hole filled by a constant value."""

    pixels: np.ndarray
    origin: tuple[int, int]
    source_id: str
    mask_spec: MaskSpec
    fill_value: float = 0.0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.shape != (self.mask_spec.patch_size, self.mask_spec.patch_size):
            raise InvariantError(
                f"masked patch shape {px.shape} does not match "
                f"mask_spec patch_size {self.mask_spec.patch_size}"
            )
        self.pixels = px
        self.origin = (int(self.origin[0]), int(self.origin[1]))


@dataclass
class DatasetSplit:
    """Patient-disjoint train/val/test partition of image ids."""

    train: list[str]
    val: list[str]
    test: list[str]
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def all_ids(self) -> list[str]:
        return list(self.train) + list(self.val) + list(self.test)
