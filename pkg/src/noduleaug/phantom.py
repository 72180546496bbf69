"""Synthetic chest phantom: backgrounds, lung masks, and ground-truth blobs.

The blob is additive and non-negative, so with a perfect inpainter the
extraction clamp returns it unchanged and every stage of the pipeline can
be verified against exact ground truth at desk scale.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GeometryError, InvariantError
from .records import BoundingBox, ImageRecord
from .dataset import read_image_png, write_image_png
from .seeding import derive_rng, derive_seed


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and texture parameters for one synthetic scan."""

    image_size: int = 128
    background_level: float = 0.50
    field_strength: float = 0.08       # low-frequency intensity drift
    rib_strength: float = 0.05         # periodic band amplitude
    rib_period: float = 14.0           # pixels
    noise_sigma: float = 0.02
    lung_drop: float = 0.22            # how much darker lung fields are
    amplitude_range: tuple[float, float] = (0.1, 0.4)
    radius_range: tuple[float, float] = (3.0, 8.0)
    blob_rim: float = 0.02             # blob value at its support edge

    def __post_init__(self):
        lo, hi = self.amplitude_range
        if not (0.0 < lo <= hi):
            raise InvariantError(f"bad amplitude range {self.amplitude_range}")
        rlo, rhi = self.radius_range
        if not (1.0 <= rlo <= rhi):
            raise InvariantError(f"bad radius range {self.radius_range}")
        if self.image_size < 32:
            raise InvariantError("image_size must be at least 32")


def _lung_mask(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    """Two jittered ellipses standing in for the lung fields."""
    s = spec.image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    mask = np.zeros((s, s), dtype=np.uint8)
    cy = s * (0.50 + rng.uniform(-0.02, 0.02))
    for side in (-1.0, 1.0):
        cx = s * (0.5 + side * (0.21 + rng.uniform(-0.015, 0.015)))
        ax = s * (0.155 + rng.uniform(-0.01, 0.01))
        ay = s * (0.30 + rng.uniform(-0.02, 0.02))
        ellipse = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0
        mask |= ellipse.astype(np.uint8)
    return mask


def _background(spec: PhantomSpec, lung: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    s = spec.image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    img = np.full((s, s), spec.background_level)

    # low-frequency drift: a few long-wavelength cosines
    for _ in range(3):
        theta = rng.uniform(0, np.pi)
        period = s * rng.uniform(0.7, 1.6)
        phase = rng.uniform(0, 2 * np.pi)
        proj = xx * np.cos(theta) + yy * np.sin(theta)
        img += (spec.field_strength / 3) * np.cos(2 * np.pi * proj / period + phase)

    # rib-like bands, slightly tilted
    tilt = rng.uniform(-0.15, 0.15)
    phase = rng.uniform(0, 2 * np.pi)
    proj = yy + tilt * xx
    img += spec.rib_strength * np.sin(2 * np.pi * proj / spec.rib_period + phase)

    img -= spec.lung_drop * lung
    if spec.noise_sigma > 0:
        img += rng.normal(0.0, spec.noise_sigma, size=(s, s))
    return np.clip(img, 0.0, 1.0)


def generate_phantom(
    spec: PhantomSpec, seed: int
) -> tuple[ImageRecord, np.ndarray]:
    """Nodule-free phantom scan plus its lung mask, deterministic per seed."""
    rng = derive_rng(seed, "phantom")
    lung = _lung_mask(spec, rng)
    pixels = _background(spec, lung, rng)
    record = ImageRecord(
        image_id=f"phantom{seed}",
        patient_id=f"pat{seed}",
        pixels=pixels.astype(np.float32),
        nodule_label=0,
        lung_mask=lung,
    )
    return record, lung


def blob_profile(
    shape: tuple[int, int],
    center: tuple[int, int],
    amplitude: float,
    radius: float,
    rim: float = 0.02,
) -> np.ndarray:
    """Additive nodule blob: Gaussian core on a small rim plateau.

    The profile is truncated to zero outside `radius`, and its value at the
    support edge is ~`rim`, so the support boundary is a hard cliff: the
    set {blob > 0.01*amplitude} and the set {blob > absolute 0.01} are both
    exactly the disc of `radius`, which keeps the extracted support box
    equal to the ground-truth box even after mild smoothing.
    """
    cx, cy = center
    yy, xx = np.ogrid[0 : shape[0], 0 : shape[1]]
    d2 = (xx - cx) ** 2.0 + (yy - cy) ** 2.0
    sigma = radius / 3.0
    blob = rim + (amplitude - rim) * np.exp(-d2 / (2.0 * sigma * sigma))
    blob[d2 > radius * radius] = 0.0
    return blob


def implant_blob(
    record: ImageRecord,
    lung_mask: np.ndarray,
    amplitude: float,
    radius: float,
    seed: int,
    rim: float = 0.02,
) -> tuple[ImageRecord, BoundingBox]:
    """Add a blob at a random lung-interior location; returns the new record + tight bbox."""
    if amplitude <= 0:
        raise InvariantError("degenerate blob: amplitude must be > 0")
    if amplitude <= rim:
        raise InvariantError(f"amplitude {amplitude} must exceed rim {rim}")
    h, w = record.shape
    # admissible centers: the radius-rho disc must stay inside the lung mask
    dist = ndimage.distance_transform_edt(lung_mask)
    admissible = np.argwhere(dist > radius + 1.0)
    if len(admissible) == 0:
        raise GeometryError(
            f"lung mask admits no disc of radius {radius}"
        )
    rng = derive_rng(seed, "blob")
    cy, cx = admissible[int(rng.integers(len(admissible)))]
    blob = blob_profile((h, w), (int(cx), int(cy)), amplitude, radius, rim)

    support = np.argwhere(blob > 0.01 * amplitude)
    y0, x0 = support.min(axis=0)
    y1, x1 = support.max(axis=0)
    bbox = BoundingBox(int(x0), int(y0), int(x1 - x0 + 1), int(y1 - y0 + 1))

    pixels = np.clip(record.pixels + blob.astype(np.float32), 0.0, 1.0)
    out = ImageRecord(
        image_id=record.image_id,
        patient_id=record.patient_id,
        pixels=pixels,
        nodule_label=1,
        bboxes=[bbox],
        lung_mask=record.lung_mask,
        source_depth=record.source_depth,
        provenance=[{
            "blob": {
                "center": [int(cx), int(cy)],
                "amplitude": float(amplitude),
                "radius": float(radius),
                "rim": float(rim),
            }
        }],
    )
    return out, bbox


def generate_phantom_dataset(
    n: int,
    nodule_fraction: float,
    spec: PhantomSpec,
    seed: int,
    out_dir: str | Path,
) -> dict:
    """Write a phantom dataset in the standard on-disk layout.

    Layout: images/, masks/, clean/ (nodule-free twin of every image, the
    ground truth a perfect inpainter would restore), labels.csv, bboxes.csv,
    dataset.json. Positives are spread evenly over the index range; patients
    group every 4 consecutive images.
    """
    if n < 1:
        raise InvariantError("n must be >= 1")
    if not 0.0 <= nodule_fraction <= 1.0:
        raise InvariantError("nodule_fraction must be in [0, 1]")
    out_dir = Path(out_dir)
    for sub in ("images", "masks", "clean"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    n_pos = int(round(n * nodule_fraction))
    positive_idx = set()
    if n_pos > 0:
        step = n / n_pos
        positive_idx = {min(int(round(j * step)), n - 1) for j in range(n_pos)}
        # rounding collisions: fill from the front
        j = 0
        while len(positive_idx) < n_pos:
            if j not in positive_idx:
                positive_idx.add(j)
            j += 1

    labels_rows = []
    bbox_rows = []
    truth: dict[str, dict] = {}
    for i in range(n):
        record, lung = generate_phantom(spec, seed=derive_seed(seed, i))
        record.image_id = f"ph{i:05d}"
        record.patient_id = f"pat{i // 4:05d}"
        clean_pixels = record.pixels.copy()
        if i in positive_idx:
            rng = derive_rng(seed, i, "nodule")
            amplitude = float(rng.uniform(*spec.amplitude_range))
            radius = float(rng.uniform(*spec.radius_range))
            record, bbox = implant_blob(
                record, lung, amplitude, radius,
                seed=derive_seed(seed, i, "implant"), rim=spec.blob_rim,
            )
            bbox_rows.append((record.image_id, bbox.x, bbox.y, bbox.w, bbox.h))
            truth[record.image_id] = record.provenance[0]["blob"]
        write_image_png(out_dir / "images" / f"{record.image_id}.png", record.pixels, 16)
        write_image_png(out_dir / "clean" / f"{record.image_id}.png", clean_pixels, 16)
        write_image_png(out_dir / "masks" / f"{record.image_id}.png", lung.astype(np.float64), 8)
        labels_rows.append((record.image_id, record.patient_id, record.nodule_label))

    with open(out_dir / "labels.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "patient_id", "nodule_label"])
        writer.writerows(labels_rows)
    with open(out_dir / "bboxes.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "x", "y", "w", "h"])
        writer.writerows(bbox_rows)

    manifest = {
        "n": n,
        "nodule_fraction": nodule_fraction,
        "n_positive": n_pos,
        "seed": seed,
        "spec": asdict(spec),
    }
    with open(out_dir / "dataset.json", "w") as f:
        json.dump(manifest, f, indent=2)
    with open(out_dir / "truth.json", "w") as f:
        json.dump(truth, f, indent=2)
    return manifest


def load_clean_images(dataset_dir: str | Path) -> dict[str, np.ndarray]:
    """Nodule-free ground-truth images keyed by image_id (for the oracle inpainter)."""
    clean_dir = Path(dataset_dir) / "clean"
    out = {}
    for path in sorted(clean_dir.glob("*.png")):
        out[path.stem], _ = read_image_png(path)
    return out


def load_ground_truth(dataset_dir: str | Path) -> dict[str, dict]:
    """Blob parameters (center, amplitude, radius, rim) keyed by image_id."""
    with open(Path(dataset_dir) / "truth.json") as f:
        return json.load(f)
