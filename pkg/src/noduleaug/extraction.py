"""Nodule residual extraction: inpaint-and-subtract, filter, gate, bank.

Pipeline per candidate (in this order): crop the patch around the bbox,
mask its center, inpaint, subtract and clamp negatives to zero, smooth with
a small bilateral filter, then gate on the classifier score of the
inpainted full image. Accepted residuals form the nodule bank on disk:
16-bit PNGs named <image_id>_<k>.png with one JSON sidecar each.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import apply_center_mask, get_patch, patch2img, read_image_png, write_image_png
from .errors import GeometryError, IngestionError, InvariantError
from .inpainting.model import inpaint
from .records import BoundingBox, ImageRecord, MaskSpec, Patch

logger = logging.getLogger(__name__)

SUPPORT_EPS = 0.01  # residual level below which pixels count as quantization dust


@dataclass(frozen=True)
class FilterParams:
    """Bilateral filter configuration; size is the square window edge."""

    size: int = 3
    sigma_space: float = 1.0
    sigma_intensity: float = 0.1
    enabled: bool = True

    def __post_init__(self):
        if self.size % 2 != 1 or self.size < 1:
            raise InvariantError(f"filter size must be odd and >= 1, got {self.size}")
        if self.sigma_space <= 0 or self.sigma_intensity <= 0:
            raise InvariantError("filter sigmas must be > 0")


@dataclass
class NoduleAsset:
    """Non-negative residual patch with provenance and gate score."""

    residual: np.ndarray
    source_image_id: str
    source_origin: tuple[int, int]
    support_bbox: BoundingBox
    gate_score: float | None = None
    asset_id: str = ""

    def __post_init__(self):
        res = np.asarray(self.residual, dtype=np.float32)
        if res.ndim != 2:
            raise InvariantError(f"residual must be 2-d, got {res.shape}")
        if res.size and res.min() < 0:
            raise InvariantError("residual has negative values")
        self.residual = res
        self.source_origin = (int(self.source_origin[0]), int(self.source_origin[1]))
        if not self.asset_id:
            ox, oy = self.source_origin
            self.asset_id = f"{self.source_image_id}_{ox}_{oy}"


def subtract_clamp(original: Patch | np.ndarray, inpainted: Patch | np.ndarray) -> np.ndarray:
    """Elementwise max(original - inpainted, 0)."""
    a = np.asarray(original.pixels if isinstance(original, Patch) else original, dtype=np.float32)
    b = np.asarray(inpainted.pixels if isinstance(inpainted, Patch) else inpainted, dtype=np.float32)
    if a.shape != b.shape:
        raise GeometryError(f"shape mismatch: {a.shape} vs {b.shape}")
    return np.maximum(a - b, 0.0)


def bilateral_filter(
    grid: np.ndarray,
    size: int = 3,
    sigma_space: float = 1.0,
    sigma_intensity: float = 0.1,
) -> np.ndarray:
    """Edge-preserving smoothing over an s x s window (vectorized).

    Border pixels use only their in-bounds neighbors; no padding is
    invented. Matches bilateral_filter_reference to float precision.
    """
    FilterParams(size, sigma_space, sigma_intensity)  # validate
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    rad = size // 2
    num = np.zeros_like(grid)
    den = np.zeros_like(grid)
    inv2ss = 1.0 / (2.0 * sigma_space * sigma_space)
    inv2si = 1.0 / (2.0 * sigma_intensity * sigma_intensity)
    for dy in range(-rad, rad + 1):
        for dx in range(-rad, rad + 1):
            w_space = np.exp(-(dx * dx + dy * dy) * inv2ss)
            ys0, ys1 = max(0, -dy), min(h, h - dy)
            xs0, xs1 = max(0, -dx), min(w, w - dx)
            center = grid[ys0:ys1, xs0:xs1]
            neighbor = grid[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx]
            wgt = w_space * np.exp(-((neighbor - center) ** 2) * inv2si)
            num[ys0:ys1, xs0:xs1] += wgt * neighbor
            den[ys0:ys1, xs0:xs1] += wgt
    return (num / den).astype(np.float64)


def bilateral_filter_reference(
    grid: np.ndarray,
    size: int = 3,
    sigma_space: float = 1.0,
    sigma_intensity: float = 0.1,
) -> np.ndarray:
    """Brute-force double-loop bilateral filter; the oracle for the fast path."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    rad = size // 2
    out = np.zeros_like(grid)
    for y in range(h):
        for x in range(w):
            num = 0.0
            den = 0.0
            for ny in range(max(0, y - rad), min(h, y + rad + 1)):
                for nx in range(max(0, x - rad), min(w, x + rad + 1)):
                    ws = np.exp(
                        -((nx - x) ** 2 + (ny - y) ** 2)
                        / (2.0 * sigma_space * sigma_space)
                    )
                    wi = np.exp(
                        -((grid[ny, nx] - grid[y, x]) ** 2)
                        / (2.0 * sigma_intensity * sigma_intensity)
                    )
                    num += ws * wi * grid[ny, nx]
                    den += ws * wi
            out[y, x] = num / den
    return out


def support_bbox(residual: np.ndarray, eps: float = SUPPORT_EPS) -> BoundingBox | None:
    """Tight box around residual > eps, or None when nothing survives."""
    ys, xs = np.nonzero(residual > eps)
    if len(ys) == 0:
        return None
    return BoundingBox(
        int(xs.min()), int(ys.min()),
        int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1),
    )


def _extract_candidate(
    inpainter_model,
    record: ImageRecord,
    bbox: BoundingBox,
    mask_spec: MaskSpec,
    filter_params: FilterParams,
    support_eps: float,
) -> tuple[NoduleAsset, Patch]:
    if bbox.w > mask_spec.mask_size or bbox.h > mask_spec.mask_size:
        raise GeometryError(
            f"nodule too large: bbox {bbox.w}x{bbox.h} exceeds mask size "
            f"{mask_spec.mask_size}"
        )
    patch = get_patch(record, bbox, mask_spec.patch_size)
    ox, oy = patch.origin
    o = mask_spec.mask_origin
    mask_footprint = BoundingBox(ox + o, oy + o, mask_spec.mask_size, mask_spec.mask_size)
    if not mask_footprint.contains(bbox):
        raise GeometryError(
            f"nodule at {bbox} not coverable by the mask footprint "
            f"{mask_footprint} (patch origin clamped to image bounds)"
        )
    masked = apply_center_mask(patch, mask_spec)
    inpainted = inpaint(inpainter_model, masked)
    residual = subtract_clamp(patch, inpainted)
    if filter_params.enabled:
        residual = bilateral_filter(
            residual, filter_params.size, filter_params.sigma_space,
            filter_params.sigma_intensity,
        ).astype(np.float32)
    sb = support_bbox(residual, support_eps)
    if sb is None:
        raise InvariantError(
            f"no residual: nothing above {support_eps} after extraction "
            f"for {record.image_id} at {bbox}"
        )
    asset = NoduleAsset(
        residual=residual,
        source_image_id=record.image_id,
        source_origin=patch.origin,
        support_bbox=sb,
    )
    return asset, inpainted


def extract_nodule(
    inpainter_model,
    record: ImageRecord,
    bbox: BoundingBox,
    mask_spec: MaskSpec = MaskSpec(),
    filter_params: FilterParams = FilterParams(),
    support_eps: float = SUPPORT_EPS,
) -> NoduleAsset:
    """Candidate residual asset for one boxed nodule (gate not yet applied)."""
    asset, _ = _extract_candidate(
        inpainter_model, record, bbox, mask_spec, filter_params, support_eps
    )
    return asset


def gate_asset(
    classifier,
    record: ImageRecord,
    inpainted_patch: Patch,
    origin: tuple[int, int] | None = None,
    thr: float = 0.5,
) -> tuple[bool, float]:
    """Score the inpainted full image; accept iff score < thr (strict).

    A low score means the classifier no longer sees a nodule, i.e. the
    inpainting genuinely removed it.
    """
    modified = patch2img(record, inpainted_patch, origin)
    score = float(classifier.predict(modified.pixels))
    return score < thr, score


@dataclass
class BankSummary:
    candidates: int = 0
    accepted: int = 0
    rejected_by_gate: int = 0
    rejected_by_geometry: int = 0
    rejected_no_residual: int = 0
    out_dir: str = ""

    def as_dict(self) -> dict:
        return {
            "candidates": self.candidates,
            "accepted": self.accepted,
            "rejected_by_gate": self.rejected_by_gate,
            "rejected_by_geometry": self.rejected_by_geometry,
            "rejected_no_residual": self.rejected_no_residual,
            "out_dir": self.out_dir,
        }


def pipeline_config_hash(mask_spec: MaskSpec, filter_params: FilterParams, thr: float) -> str:
    key = json.dumps(
        {
            "patch_size": mask_spec.patch_size,
            "mask_size": mask_spec.mask_size,
            "filter": [filter_params.size, filter_params.sigma_space,
                       filter_params.sigma_intensity, filter_params.enabled],
            "thr": thr,
        },
        sort_keys=True,
    )
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def build_nodule_bank(
    inpainter_model,
    classifier,
    records: list[ImageRecord],
    thr: float = 0.5,
    out_dir: str | Path | None = None,
    mask_spec: MaskSpec = MaskSpec(),
    filter_params: FilterParams = FilterParams(),
) -> tuple[list[NoduleAsset], BankSummary]:
    """Extract and gate every boxed nodule; write accepted assets to out_dir.

    Deterministic: records are processed in image_id order and assets are
    named <image_id>_<k> by bbox index.
    """
    summary = BankSummary(out_dir=str(out_dir) if out_dir else "")
    cfg_hash = pipeline_config_hash(mask_spec, filter_params, thr)
    assets: list[NoduleAsset] = []
    for record in sorted(records, key=lambda r: r.image_id):
        for k, bbox in enumerate(record.bboxes):
            summary.candidates += 1
            try:
                asset, inpainted = _extract_candidate(
                    inpainter_model, record, bbox, mask_spec, filter_params,
                    SUPPORT_EPS,
                )
            except GeometryError as exc:
                summary.rejected_by_geometry += 1
                logger.info("stage=extract step=%s_%d value=rejected-geometry (%s)",
                            record.image_id, k, exc)
                continue
            except InvariantError as exc:
                summary.rejected_no_residual += 1
                logger.info("stage=extract step=%s_%d value=rejected-no-residual (%s)",
                            record.image_id, k, exc)
                continue
            accepted, score = gate_asset(classifier, record, inpainted, thr=thr)
            if not accepted:
                summary.rejected_by_gate += 1
                logger.info("stage=extract step=%s_%d value=rejected-gate score=%.4f",
                            record.image_id, k, score)
                continue
            asset.gate_score = score
            asset.asset_id = f"{record.image_id}_{k}"
            assets.append(asset)
            summary.accepted += 1

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for asset in assets:
            write_image_png(out_dir / f"{asset.asset_id}.png", asset.residual, 16)
            sidecar = {
                "asset_id": asset.asset_id,
                "source_image_id": asset.source_image_id,
                "source_origin": list(asset.source_origin),
                "gate_score": asset.gate_score,
                "support_bbox": [asset.support_bbox.x, asset.support_bbox.y,
                                 asset.support_bbox.w, asset.support_bbox.h],
                "pipeline_config_hash": cfg_hash,
            }
            with open(out_dir / f"{asset.asset_id}.json", "w") as f:
                json.dump(sidecar, f, indent=2)
        with open(out_dir / "bank.json", "w") as f:
            json.dump(summary.as_dict(), f, indent=2)
    return assets, summary


def load_nodule_bank(bank_dir: str | Path) -> list[NoduleAsset]:
    """Load assets written by build_nodule_bank, ordered by asset_id."""
    bank_dir = Path(bank_dir)
    assets = []
    for sidecar_path in sorted(bank_dir.glob("*.json")):
        if sidecar_path.name == "bank.json":
            continue
        with open(sidecar_path) as f:
            meta = json.load(f)
        png_path = bank_dir / f"{meta['asset_id']}.png"
        if not png_path.exists():
            raise IngestionError(f"bank asset missing residual image: {png_path}")
        residual, _ = read_image_png(png_path)
        x, y, w, h = meta["support_bbox"]
        assets.append(
            NoduleAsset(
                residual=residual,
                source_image_id=meta["source_image_id"],
                source_origin=tuple(meta["source_origin"]),
                support_bbox=BoundingBox(x, y, w, h),
                gate_score=meta["gate_score"],
                asset_id=meta["asset_id"],
            )
        )
    if not assets:
        raise IngestionError(f"no assets found in bank dir {bank_dir}")
    return assets
