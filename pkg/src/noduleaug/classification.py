"""Nodule/non-nodule classifier, AUC evaluation, and the learning-curve harness.

Three training regimes share one loop: `baseline` trains on raw images,
`standard` applies whole-image flip/rotation each epoch, and `local`
applies the per-epoch nodule-insertion plans. Batch order depends only on
(seed, epoch), never on the regime, so regimes are comparable stream-wise.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy import stats

from .augmentation import AugmentationConfig, apply_decision, plan_epoch, standard_augment
from .errors import GeometryError, InvariantError, TrainingDivergedError
from .extraction import NoduleAsset
from .records import DatasetSplit, ImageRecord
from .seeding import derive_rng, derive_seed

logger = logging.getLogger(__name__)

REGIMES = ("baseline", "standard", "local")

_PRESETS = {
    "desk": [8, 16, 32, 64],
    "full": [16, 32, 64, 128, 256, 512],
}


@dataclass(frozen=True)
class ClassifierConfig:
    """Training configuration for one classifier run."""

    input_size: int = 128
    preset: str = "desk"
    epochs: int = 8
    batch_size: int = 32
    learning_rate: float = 1e-3
    lr_decay: float = 1.0        # multiplicative per epoch
    regime: str = "baseline"
    seed: int = 0
    insertion: AugmentationConfig = field(default_factory=AugmentationConfig)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise InvariantError(f"unknown regime {self.regime!r}, expected {REGIMES}")
        if self.preset not in _PRESETS:
            raise InvariantError(f"unknown preset {self.preset!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvariantError("epochs must be >= 0 and batch_size >= 1")


class _ConvNet(nn.Module):
    def __init__(self, channels: list[int]):
        super().__init__()
        layers = []
        in_ch = 1
        for c in channels:
            layers += [
                nn.Conv2d(in_ch, c, 3, stride=2, padding=1),
                nn.BatchNorm2d(c),
                nn.ReLU(inplace=True),
            ]
            in_ch = c
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(in_ch, 1)

    def forward(self, x):
        feats = self.features(x).mean(dim=(2, 3))
        return self.head(feats)


class Classifier:
    """Trained scorer: images in, nodule probability out."""

    def __init__(self, config: ClassifierConfig, net: _ConvNet, log: dict | None = None):
        self.config = config
        self.net = net
        self.log = log or {}
        self.net.eval()

    def predict(self, pixels: np.ndarray) -> float:
        return float(self.predict_batch(pixels[None])[0])

    def predict_batch(self, pixels: np.ndarray) -> np.ndarray:
        arr = np.asarray(pixels, dtype=np.float32)
        expected = (self.config.input_size, self.config.input_size)
        if arr.shape[1:] != expected:
            raise GeometryError(
                f"input size {arr.shape[1:]} does not match classifier "
                f"input_size {expected}"
            )
        with torch.no_grad():
            logits = self.net(torch.from_numpy(arr[:, None, :, :]))
        return torch.sigmoid(logits).numpy().ravel()

    def save(self, out_dir: str | Path) -> Path:
        import json

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = {
            "format_version": 1,
            "input_size": self.config.input_size,
            "preset": self.config.preset,
            "epochs": self.config.epochs,
            "batch_size": self.config.batch_size,
            "learning_rate": self.config.learning_rate,
            "lr_decay": self.config.lr_decay,
            "regime": self.config.regime,
            "seed": self.config.seed,
            "log": self.log,
        }
        with open(out_dir / "metadata.json", "w") as f:
            json.dump(cfg, f, indent=2)
        torch.save(self.net.state_dict(), out_dir / "weights.pt")
        return out_dir


def load_classifier(model_dir: str | Path) -> Classifier:
    import json

    model_dir = Path(model_dir)
    with open(model_dir / "metadata.json") as f:
        meta = json.load(f)
    config = ClassifierConfig(
        input_size=meta["input_size"],
        preset=meta["preset"],
        epochs=meta["epochs"],
        batch_size=meta["batch_size"],
        learning_rate=meta["learning_rate"],
        lr_decay=meta.get("lr_decay", 1.0),
        regime=meta["regime"],
        seed=meta["seed"],
    )
    net = _ConvNet(_PRESETS[config.preset])
    net.load_state_dict(torch.load(model_dir / "weights.pt", weights_only=True))
    return Classifier(config, net, meta.get("log", {}))


def predict(model: Classifier, record: ImageRecord) -> float:
    """Nodule score in [0, 1] for one record."""
    return model.predict(record.pixels)


def _epoch_stream(
    config: ClassifierConfig,
    epoch: int,
    train_records: list[ImageRecord],
    base_pixels: np.ndarray,
    base_labels: np.ndarray,
    bank: list[NoduleAsset] | None,
    bank_by_id: dict[str, NoduleAsset],
    plans_out: list | None,
) -> tuple[np.ndarray, np.ndarray]:
    if config.regime == "baseline":
        return base_pixels, base_labels
    if config.regime == "standard":
        pixels = np.empty_like(base_pixels)
        for i, rec in enumerate(train_records):
            rng = derive_rng(config.seed, "std-aug", epoch, rec.image_id)
            pixels[i] = standard_augment(rec, rng).pixels
        return pixels, base_labels
    # local: apply this epoch's insertion plan
    aug_cfg = replace(config.insertion, seed=config.seed)
    plan = plan_epoch(train_records, bank or [], aug_cfg, epoch)
    if plans_out is not None:
        plans_out.append(plan)
    pixels = base_pixels.copy()
    labels = base_labels.copy()
    index = {rec.image_id: i for i, rec in enumerate(train_records)}
    for image_id, decision in plan.insertions.items():
        i = index[image_id]
        modified = apply_decision(train_records[i], bank_by_id, decision)
        pixels[i] = modified.pixels
        labels[i] = 1.0
    return pixels, labels


def train_classifier(
    config: ClassifierConfig,
    split: DatasetSplit,
    records: list[ImageRecord],
    bank: list[NoduleAsset] | None = None,
    collect_plans: bool = False,
) -> Classifier:
    """Train one classifier under the configured regime.

    Deterministic per config.seed. The returned model's log carries loss
    curves, a per-epoch digest of the training stream (for determinism
    checks), and the collected insertion plans when requested.
    """
    by_id = {r.image_id: r for r in records}
    missing = [i for i in split.train + split.val if i not in by_id]
    if missing:
        raise InvariantError(f"split references unknown image_ids: {missing[:5]}")
    train_records = [by_id[i] for i in split.train]
    val_records = [by_id[i] for i in split.val]
    if not train_records:
        raise InvariantError("training split is empty")
    if config.regime == "local" and config.insertion.insertion_rate > 0 and not bank:
        raise InvariantError("local regime with insertion_rate > 0 requires a bank")

    for rec in train_records + val_records:
        if rec.shape != (config.input_size, config.input_size):
            raise GeometryError(
                f"{rec.image_id}: image shape {rec.shape} does not match "
                f"config input_size {config.input_size}"
            )

    base_pixels = np.stack([r.pixels for r in train_records])
    base_labels = np.array([r.nodule_label for r in train_records], dtype=np.float32)
    val_pixels = (
        np.stack([r.pixels for r in val_records]) if val_records else None
    )
    val_labels = (
        np.array([r.nodule_label for r in val_records], dtype=np.float32)
        if val_records else None
    )
    bank_by_id = {a.asset_id: a for a in bank} if bank else {}

    torch.manual_seed(derive_seed(config.seed, "cls-init"))
    net = _ConvNet(_PRESETS[config.preset])
    optimizer = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    scheduler = torch.optim.lr_scheduler.ExponentialLR(optimizer, gamma=config.lr_decay)

    train_curve: list[float] = []
    val_curve: list[float] = []
    stream_digests: list[str] = []
    plans: list = [] if collect_plans else None

    for epoch in range(config.epochs):
        pixels, labels = _epoch_stream(
            config, epoch, train_records, base_pixels, base_labels,
            bank, bank_by_id, plans,
        )
        order = derive_rng(config.seed, "shuffle", epoch).permutation(len(labels))
        digest = hashlib.blake2b(digest_size=8)
        digest.update(pixels[order].tobytes())
        digest.update(labels[order].tobytes())
        stream_digests.append(digest.hexdigest())

        net.train()
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            x = torch.from_numpy(pixels[idx][:, None, :, :])
            y = torch.from_numpy(labels[idx][:, None])
            optimizer.zero_grad()
            loss = F.binary_cross_entropy_with_logits(net(x), y)
            loss.backward()
            optimizer.step()
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite classifier loss at epoch {epoch}",
                    diagnostics={"epoch": epoch, "train_curve": train_curve},
                )
            epoch_losses.append(float(loss.detach()))
        scheduler.step()
        train_curve.append(float(np.mean(epoch_losses)))

        if val_pixels is not None:
            net.eval()
            with torch.no_grad():
                losses = []
                for start in range(0, len(val_labels), config.batch_size):
                    x = torch.from_numpy(val_pixels[start : start + config.batch_size][:, None])
                    y = torch.from_numpy(val_labels[start : start + config.batch_size][:, None])
                    losses.append(
                        F.binary_cross_entropy_with_logits(net(x), y, reduction="sum").item()
                    )
                val_curve.append(sum(losses) / len(val_labels))
            if not np.isfinite(val_curve[-1]):
                raise TrainingDivergedError(
                    f"non-finite validation loss at epoch {epoch}",
                    diagnostics={"epoch": epoch, "val_curve": val_curve},
                )
        logger.info(
            "stage=train-classifier step=epoch:%d regime=%s train_loss=%.6f val_loss=%s",
            epoch, config.regime, train_curve[-1],
            f"{val_curve[-1]:.6f}" if val_curve else "n/a",
        )

    net.eval()
    log = {
        "train_loss_curve": train_curve,
        "val_loss_curve": val_curve,
        "stream_digests": stream_digests,
        "regime": config.regime,
        "seed": config.seed,
        "n_train": len(train_records),
    }
    if collect_plans:
        log["plans"] = plans
    return Classifier(config, net, log)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-d and the same length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvariantError(
            f"AUC undefined: need both classes, got {n_pos} pos / {n_neg} neg"
        )
    ranks = stats.rankdata(scores, method="average")
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_pairwise(scores, labels) -> float:
    """Brute-force O(n^2) pair enumeration; the oracle for auc()."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise InvariantError("AUC undefined for single-class input")
    numerator = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                numerator += 1.0
            elif p == q:
                numerator += 0.5
    return numerator / (len(pos) * len(neg))


@dataclass
class EvalResult:
    """Mean +/- std AUC for one (regime, fraction) cell."""

    regime: str
    fraction: float
    aucs: list[float]
    seeds: list[int]
    n_pos: int
    n_neg: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def std(self) -> float:
        return float(np.std(self.aucs, ddof=1)) if len(self.aucs) > 1 else 0.0


@dataclass
class LearningCurveResult:
    rows: list[tuple[str, float, int, float]]       # regime, fraction, repeat, auc
    cells: dict[tuple[str, float], EvalResult]
    subsample_ids: dict[float, list[str]]

    def cell(self, regime: str, fraction: float) -> EvalResult:
        return self.cells[(regime, fraction)]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["regime", "fraction", "repeat", "auc"])
            for regime, fraction, repeat, value in self.rows:
                writer.writerow([regime, f"{fraction:g}", repeat, f"{value:.6f}"])

    def as_text(self) -> str:
        fractions = sorted({f for _, f in self.cells}, reverse=True)
        regimes = [r for r in REGIMES if any(r == reg for reg, _ in self.cells)]
        header = f"{'regime':<12}" + "".join(f"{f * 100:>14.0f}%" for f in fractions)
        lines = [header]
        for regime in regimes:
            cells = []
            for f in fractions:
                res = self.cells[(regime, f)]
                cells.append(f"{res.mean:.3f}+-{res.std:.3f}".rjust(14))
            lines.append(f"{regime:<12}" + "".join(cells))
        return "\n".join(lines)


def subsample_train_patients(
    records: list[ImageRecord],
    train_ids: list[str],
    fraction: float,
    seed: int,
) -> list[str]:
    """Deterministic patient-wise subsample of the training split."""
    if not 0.0 < fraction <= 1.0:
        raise InvariantError(f"fraction must be in (0, 1], got {fraction}")
    by_id = {r.image_id: r for r in records}
    patients: dict[str, list[str]] = {}
    for image_id in train_ids:
        patients.setdefault(by_id[image_id].patient_id, []).append(image_id)
    names = sorted(patients)
    if fraction == 1.0:
        return sorted(train_ids)
    rng = derive_rng(seed, "subsample", f"{fraction:.6f}")
    keep = rng.permutation(len(names))[: max(int(round(fraction * len(names))), 1)]
    ids = [i for k in keep for i in patients[names[k]]]
    return sorted(ids)


def learning_curve(
    config: ClassifierConfig,
    records: list[ImageRecord],
    split: DatasetSplit,
    bank: list[NoduleAsset] | None = None,
    fractions: tuple[float, ...] = (1.0, 0.7, 0.5, 0.2, 0.1, 0.05),
    repeats: int = 3,
    regimes: tuple[str, ...] = REGIMES,
    out_dir: str | Path | None = None,
) -> LearningCurveResult:
    """Train every regime on shrinking training subsets; AUC on the fixed test split.

    For each fraction the same patient-wise subsample feeds every regime
    and repeat; repeats vary only the training seed. Results land in a
    regime,fraction,repeat,auc CSV plus a formatted table.
    """
    by_id = {r.image_id: r for r in records}
    test_records = [by_id[i] for i in split.test]
    test_labels = np.array([r.nodule_label for r in test_records])
    n_pos = int((test_labels == 1).sum())
    n_neg = int((test_labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvariantError("test split must contain both classes")

    rows = []
    cells: dict[tuple[str, float], EvalResult] = {}
    subsample_ids: dict[float, list[str]] = {}
    for fraction in fractions:
        sub_train = subsample_train_patients(records, split.train, fraction, config.seed)
        sub_labels = [by_id[i].nodule_label for i in sub_train]
        if sum(sub_labels) == 0:
            raise InvariantError(f"fraction {fraction} yields zero positive images")
        if sum(sub_labels) == len(sub_labels):
            raise InvariantError(f"fraction {fraction} yields zero negative images")
        subsample_ids[fraction] = sub_train
        sub_split = DatasetSplit(
            train=sub_train, val=list(split.val), test=list(split.test),
            fractions=split.fractions,
        )
        for regime in regimes:
            aucs = []
            seeds = []
            for repeat in range(repeats):
                run_seed = derive_seed(config.seed, "repeat", repeat)
                run_cfg = replace(config, regime=regime, seed=run_seed)
                model = train_classifier(run_cfg, sub_split, records, bank)
                scores = model.predict_batch(np.stack([r.pixels for r in test_records]))
                value = auc(scores, test_labels)
                rows.append((regime, fraction, repeat, value))
                aucs.append(value)
                seeds.append(run_seed)
                logger.info(
                    "stage=learning-curve step=%s:%g:%d value=%.4f",
                    regime, fraction, repeat, value,
                )
            cells[(regime, fraction)] = EvalResult(
                regime=regime, fraction=fraction, aucs=aucs, seeds=seeds,
                n_pos=n_pos, n_neg=n_neg,
            )

    result = LearningCurveResult(rows=rows, cells=cells, subsample_ids=subsample_ids)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.to_csv(out_dir / "learning_curve.csv")
        (out_dir / "learning_curve.txt").write_text(result.as_text() + "\n")
    return result
