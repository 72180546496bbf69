"""Dataset ingestion, patient-wise splitting, and patch geometry.

File formats:
  labels CSV  image_id,patient_id,nodule_label   (header required)
  bbox CSV    image_id,x,y,w,h                   (source-resolution pixels)
  images      single-channel 8- or 16-bit PNG, one file per image_id
  lung masks  binary PNG with the same file name as the image
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import GeometryError, IngestionError, InvariantError
from .records import BoundingBox, DatasetSplit, ImageRecord, MaskedPatch, MaskSpec, Patch
from .seeding import derive_rng


def read_image_png(path: str | Path) -> tuple[np.ndarray, int]:
    """Load a grayscale PNG as float32 in [0, 1]; returns (pixels, bit depth)."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"image file not found: {path}")
    img = Image.open(path)
    arr = np.array(img)
    if arr.ndim != 2:
        raise IngestionError(f"{path}: expected single-channel image, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        depth = 8
        scale = 255.0
    elif arr.dtype in (np.uint16, np.int32):
        depth = 16
        scale = 65535.0
    else:
        raise IngestionError(f"{path}: unsupported pixel type {arr.dtype}")
    return (arr.astype(np.float32) / scale), depth


def write_image_png(path: str | Path, pixels: np.ndarray, depth: int = 16) -> None:
    """Write float [0, 1] pixels as an 8- or 16-bit grayscale PNG."""
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    if depth == 16:
        img = Image.fromarray(np.round(arr * 65535.0).astype(np.uint16))
    elif depth == 8:
        img = Image.fromarray(np.round(arr * 255.0).astype(np.uint8))
    else:
        raise ValueError(f"unsupported depth {depth}")
    img.save(path)


def read_mask_png(path: str | Path) -> np.ndarray:
    """Load a binary mask PNG; any nonzero pixel counts as foreground."""
    pixels, _ = read_image_png(path)
    return (pixels > 0).astype(np.uint8)


def _resize(pixels: np.ndarray, size: int, nearest: bool = False) -> np.ndarray:
    img = Image.fromarray(pixels.astype(np.float32), mode="F")
    resample = Image.NEAREST if nearest else Image.BILINEAR
    out = np.array(img.resize((size, size), resample))
    return np.clip(out, 0.0, 1.0)


def load_dataset(
    image_dir: str | Path,
    labels_file: str | Path,
    bbox_file: str | Path | None = None,
    mask_dir: str | Path | None = None,
    working_size: int | None = None,
) -> list[ImageRecord]:
    """Ingest a dataset directory into validated ImageRecords.

    Images are resized to `working_size` (bboxes rescaled proportionally);
    bbox presence forces nodule_label=1. Records come back sorted by
    image_id so ingestion order never matters.
    """
    image_dir = Path(image_dir)
    labels_file = Path(labels_file)
    if not labels_file.exists():
        raise IngestionError(f"labels file not found: {labels_file}")

    bboxes_by_id: dict[str, list[BoundingBox]] = {}
    if bbox_file is not None and Path(bbox_file).exists():
        with open(bbox_file, newline="") as f:
            for row in csv.DictReader(f):
                bboxes_by_id.setdefault(row["image_id"], []).append(
                    BoundingBox(int(row["x"]), int(row["y"]), int(row["w"]), int(row["h"]))
                )

    records = []
    seen_ids = set()
    with open(labels_file, newline="") as f:
        reader = csv.DictReader(f)
        required = {"image_id", "patient_id", "nodule_label"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise IngestionError(
                f"labels file must have header {sorted(required)}, got {reader.fieldnames}"
            )
        for row in reader:
            image_id = row["image_id"]
            seen_ids.add(image_id)
            path = image_dir / f"{image_id}.png"
            if not path.exists():
                raise IngestionError(f"missing image file for id {image_id}: {path}")
            pixels, depth = read_image_png(path)
            src_h, src_w = pixels.shape

            boxes = bboxes_by_id.get(image_id, [])
            if working_size is not None and (src_h, src_w) != (working_size, working_size):
                pixels = _resize(pixels, working_size)
                sx = working_size / src_w
                sy = working_size / src_h
                boxes = [b.rescaled(sx, sy) for b in boxes]

            label = int(row["nodule_label"])
            if boxes:
                label = 1

            lung_mask = None
            if mask_dir is not None:
                mask_path = Path(mask_dir) / f"{image_id}.png"
                if mask_path.exists():
                    lung_mask = read_mask_png(mask_path)
                    if working_size is not None and lung_mask.shape != pixels.shape:
                        lung_mask = _resize(
                            lung_mask.astype(np.float32), working_size, nearest=True
                        ).astype(np.uint8)

            try:
                records.append(
                    ImageRecord(
                        image_id=image_id,
                        patient_id=row["patient_id"],
                        pixels=pixels,
                        nodule_label=label,
                        bboxes=boxes,
                        lung_mask=lung_mask,
                        source_depth=depth,
                    )
                )
            except GeometryError as exc:
                raise InvariantError(f"{image_id}: {exc}") from exc

    unknown = sorted(set(bboxes_by_id) - seen_ids)
    if unknown:
        raise IngestionError(f"bbox rows reference unknown image_ids: {unknown}")

    records.sort(key=lambda r: r.image_id)
    return records


def split_by_patient(
    records: list[ImageRecord],
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
    pin_to_train: set[str] | None = None,
) -> DatasetSplit:
    """Patient-disjoint split; `pin_to_train` image_ids force their patients into train."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    by_patient: dict[str, list[str]] = {}
    for rec in records:
        by_patient.setdefault(rec.patient_id, []).append(rec.image_id)

    pinned_patients = set()
    if pin_to_train:
        id_to_patient = {r.image_id: r.patient_id for r in records}
        for image_id in pin_to_train:
            if image_id not in id_to_patient:
                raise IngestionError(f"pinned image_id not in dataset: {image_id}")
            pinned_patients.add(id_to_patient[image_id])

    patients = sorted(by_patient)
    n = len(patients)
    if n < 3:
        raise InvariantError(f"need at least 3 patients to split, got {n}")
    if len(pinned_patients) > n - 2:
        raise InvariantError(
            "pinned patients leave no room for non-empty val/test splits"
        )
    rng = derive_rng(seed, "split")
    rng.shuffle(patients)
    # pinned patients first so they land in the train prefix; stable sort
    # keeps the shuffled order within each group
    patients = sorted(patients, key=lambda p: p not in pinned_patients)

    n_train = min(max(int(round(fractions[0] * n)), 1, len(pinned_patients)), n - 2)
    n_val = min(max(int(round(fractions[1] * n)), 1), n - n_train - 1)
    groups = (
        patients[:n_train],
        patients[n_train : n_train + n_val],
        patients[n_train + n_val :],
    )
    train, val, test = (
        sorted(i for p in grp for i in by_patient[p]) for grp in groups
    )
    return DatasetSplit(train=train, val=val, test=test, fractions=fractions)


def get_patch(
    record: ImageRecord,
    bbox_or_center: BoundingBox | tuple[int, int],
    patch_size: int,
) -> Patch:
    """Crop a patch_size square centered on a bbox (or point), origin clamped in-bounds."""
    h, w = record.shape
    if patch_size > h or patch_size > w:
        raise GeometryError(
            f"patch size {patch_size} exceeds image size {w}x{h}"
        )
    if isinstance(bbox_or_center, BoundingBox):
        cx, cy = bbox_or_center.center
    else:
        cx, cy = int(bbox_or_center[0]), int(bbox_or_center[1])
    ox = int(np.clip(cx - patch_size // 2, 0, w - patch_size))
    oy = int(np.clip(cy - patch_size // 2, 0, h - patch_size))
    pixels = record.pixels[oy : oy + patch_size, ox : ox + patch_size].copy()
    return Patch(pixels=pixels, origin=(ox, oy), source_id=record.image_id)


def apply_center_mask(
    patch: Patch, mask_spec: MaskSpec, fill_value: float = 0.0
) -> MaskedPatch:
    """Replace the centered hole with fill_value; the frame is untouched."""
    if patch.size != mask_spec.patch_size:
        raise GeometryError(
            f"patch size {patch.size} does not match mask spec "
            f"patch_size {mask_spec.patch_size}"
        )
    pixels = patch.pixels.copy()
    pixels[mask_spec.mask_slice] = fill_value
    return MaskedPatch(
        pixels=pixels,
        origin=patch.origin,
        source_id=patch.source_id,
        mask_spec=mask_spec,
        fill_value=fill_value,
    )


def patch2img(
    record: ImageRecord,
    patch: Patch,
    origin: tuple[int, int] | None = None,
) -> ImageRecord:
    """New record with the patch spliced in at origin (default: the patch's own)."""
    ox, oy = origin if origin is not None else patch.origin
    h, w = record.shape
    p = patch.size
    if ox < 0 or oy < 0 or ox + p > w or oy + p > h:
        raise GeometryError(
            f"patch footprint at ({ox},{oy}) size {p} outside image {w}x{h}"
        )
    pixels = record.pixels.copy()
    pixels[oy : oy + p, ox : ox + p] = patch.pixels
    return ImageRecord(
        image_id=record.image_id,
        patient_id=record.patient_id,
        pixels=pixels,
        nodule_label=record.nodule_label,
        bboxes=list(record.bboxes),
        lung_mask=record.lung_mask,
        source_depth=record.source_depth,
        provenance=list(record.provenance),
    )


def sample_random_patches(
    records: list[ImageRecord],
    n: int,
    patch_size: int,
    seed: int = 0,
    exclude_nodule_images: bool = False,
) -> list[Patch]:
    """Sample n patches with origins uniform over valid positions, deterministic per seed."""
    if not records:
        raise IngestionError("cannot sample patches from an empty record list")
    pool = [r for r in records if not (exclude_nodule_images and r.nodule_label == 1)]
    if not pool:
        raise IngestionError("no eligible source images (all are nodule-labeled)")
    pool = sorted(pool, key=lambda r: r.image_id)
    rng = derive_rng(seed, "patches")
    patches = []
    for _ in range(n):
        rec = pool[int(rng.integers(len(pool)))]
        h, w = rec.shape
        if patch_size > h or patch_size > w:
            raise GeometryError(
                f"patch size {patch_size} exceeds image size {w}x{h}"
            )
        ox = int(rng.integers(0, w - patch_size + 1))
        oy = int(rng.integers(0, h - patch_size + 1))
        patches.append(
            Patch(
                pixels=rec.pixels[oy : oy + patch_size, ox : ox + patch_size].copy(),
                origin=(ox, oy),
                source_id=rec.image_id,
            )
        )
    return patches
