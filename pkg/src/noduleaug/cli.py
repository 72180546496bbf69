"""Command-line entry point for every pipeline stage.

One flat config file (YAML or JSON) plus per-flag overrides; precedence is
flags > file > defaults. Every run writes resolved_config.json (including
content hashes of its inputs) next to its outputs, so any two runs with
identical resolved configs and seeds are byte-comparable.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PipelineError
from .records import MaskSpec

logger = logging.getLogger("noduleaug")

SUBCOMMANDS = (
    "phantom-gen",
    "prepare-patches",
    "train-inpainter",
    "eval-inpainter",
    "extract-nodules",
    "train-classifier",
    "attention-map",
    "learning-curve",
)

# scale presets bundle the knobs that differ between the desk-size phantom
# setup and the paper-faithful full-resolution setup
SCALE_PRESETS = {
    "desk": {
        "image_size": 128,
        "channel_divisor": 16,
        "classifier_preset": "desk",
        "train_patches": 2000,
        "val_patches": 200,
        "test_patches": 800,
        "inpainter_epochs": 12,
        "classifier_epochs": 8,
    },
    "full": {
        "image_size": 512,
        "channel_divisor": 1,
        "classifier_preset": "full",
        "train_patches": 1_000_000,
        "val_patches": 10_000,
        "test_patches": 800,
        "inpainter_epochs": 20,
        "classifier_epochs": 20,
    },
}


def _hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_inputs(paths: dict[str, str | Path | None]) -> dict[str, str]:
    """Content hash per named input; directories hash their file manifest."""
    out = {}
    for name, p in paths.items():
        if p is None:
            continue
        p = Path(p)
        if p.is_file():
            out[name] = _hash_file(p)
        elif p.is_dir():
            digest = hashlib.sha256()
            for f in sorted(p.rglob("*")):
                if f.is_file():
                    digest.update(str(f.relative_to(p)).encode())
                    digest.update(_hash_file(f).encode())
            out[name] = digest.hexdigest()
    return out


def write_snapshot(out_dir: Path, subcommand: str, config: dict, inputs: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "subcommand": subcommand,
        "package_version": __version__,
        "config": {k: config[k] for k in sorted(config)},
        "input_hashes": hash_inputs(inputs),
    }
    with open(out_dir / "resolved_config.json", "w") as f:
        json.dump(snapshot, f, indent=2)


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise PipelineError(f"config file not found: {p}")
    text = p.read_text()
    if p.suffix == ".json":
        return json.loads(text)
    import yaml

    data = yaml.safe_load(text)
    return data or {}


def resolve(defaults: dict, file_cfg: dict, flags: dict) -> dict:
    """flags > file > defaults; only keys known to the subcommand are kept."""
    cfg = dict(defaults)
    for k in cfg:
        if k in file_cfg and file_cfg[k] is not None:
            cfg[k] = file_cfg[k]
    for k in cfg:
        if flags.get(k) is not None:
            cfg[k] = flags[k]
    return cfg


def validate(cfg: dict, checks: list[tuple[bool, str]]) -> None:
    """Collect every failed check and raise one error naming all of them."""
    problems = [msg for ok, msg in checks if not ok]
    if problems:
        raise PipelineError("config validation failed:\n  " + "\n  ".join(problems))


def _load_dataset_records(cfg: dict):
    from .dataset import load_dataset

    root = Path(cfg["dataset"])
    return load_dataset(
        root / "images",
        root / "labels.csv",
        root / "bboxes.csv" if (root / "bboxes.csv").exists() else None,
        root / "masks" if (root / "masks").exists() else None,
        working_size=cfg.get("image_size"),
    )


def _load_inpainter(cfg: dict):
    from .inpainting import OracleInpainter, load_model
    from .phantom import load_clean_images

    if cfg.get("oracle"):
        if not cfg.get("dataset"):
            raise PipelineError("--oracle requires --dataset with a clean/ directory")
        return OracleInpainter(load_clean_images(cfg["dataset"]))
    return load_model(cfg["inpainter"])


def _write_metrics_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------- subcommands

def cmd_phantom_gen(flags: dict, file_cfg: dict) -> int:
    from .phantom import PhantomSpec, generate_phantom_dataset

    defaults = {
        "out": None, "n": 200, "nodule_fraction": 0.15, "seed": 0,
        "image_size": 128, "noise_sigma": 0.02,
        "amplitude_min": 0.1, "amplitude_max": 0.4,
        "radius_min": 3.0, "radius_max": 8.0,
    }
    cfg = resolve(defaults, file_cfg, flags)
    validate(cfg, [
        (cfg["out"] is not None, "--out is required"),
        (cfg["n"] >= 1, "n must be >= 1"),
        (0.0 <= cfg["nodule_fraction"] <= 1.0, "nodule_fraction must be in [0, 1]"),
    ])
    spec = PhantomSpec(
        image_size=cfg["image_size"],
        noise_sigma=cfg["noise_sigma"],
        amplitude_range=(cfg["amplitude_min"], cfg["amplitude_max"]),
        radius_range=(cfg["radius_min"], cfg["radius_max"]),
    )
    out = Path(cfg["out"])
    manifest = generate_phantom_dataset(cfg["n"], cfg["nodule_fraction"], spec, cfg["seed"], out)
    write_snapshot(out, "phantom-gen", cfg, {})
    logger.info("stage=phantom-gen step=done value=%d", manifest["n"])
    return 0


def cmd_prepare_patches(flags: dict, file_cfg: dict) -> int:
    from .dataset import sample_random_patches

    defaults = {
        "dataset": None, "out": None, "seed": 0, "patch_size": 64,
        "train_patches": 2000, "val_patches": 200, "test_patches": 800,
        "image_size": None,
    }
    cfg = resolve(defaults, file_cfg, flags)
    validate(cfg, [
        (cfg["dataset"] is not None, "--dataset is required"),
        (cfg["out"] is not None, "--out is required"),
    ])
    records = _load_dataset_records(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for name, count in (
        ("train", cfg["train_patches"]),
        ("val", cfg["val_patches"]),
        ("test", cfg["test_patches"]),
    ):
        patches = sample_random_patches(
            records, count, cfg["patch_size"],
            seed_from(cfg["seed"], name), exclude_nodule_images=True,
        )
        np.savez_compressed(
            out / f"{name}.npz",
            pixels=np.stack([p.pixels for p in patches]),
            origins=np.array([p.origin for p in patches], dtype=np.int32),
            source_ids=np.array([p.source_id for p in patches]),
        )
        logger.info("stage=prepare-patches step=%s value=%d", name, count)
    write_snapshot(out, "prepare-patches", cfg, {"dataset": cfg["dataset"]})
    return 0


def seed_from(base: int, tag: str) -> int:
    from .seeding import derive_seed

    return derive_seed(base, tag)


def _load_patches(path: Path):
    from .records import Patch

    data = np.load(path, allow_pickle=False)
    return [
        Patch(pixels=px, origin=(int(o[0]), int(o[1])), source_id=str(s))
        for px, o, s in zip(data["pixels"], data["origins"], data["source_ids"])
    ]


def cmd_train_inpainter(flags: dict, file_cfg: dict) -> int:
    from .inpainting import InpainterSpec, train_inpainter

    defaults = {
        "patches": None, "out": None, "seed": 0, "scale": "desk",
        "epochs": None, "gamma": 0.97, "batch_size": 64, "learning_rate": 2e-4,
        "rec_norm": "l1",
    }
    cfg = resolve(defaults, file_cfg, flags)
    validate(cfg, [
        (cfg["patches"] is not None, "--patches is required"),
        (cfg["out"] is not None, "--out is required"),
        (cfg["scale"] in SCALE_PRESETS, f"scale must be one of {sorted(SCALE_PRESETS)}"),
    ])
    preset = SCALE_PRESETS[cfg["scale"]]
    if cfg["epochs"] is None:
        cfg["epochs"] = preset["inpainter_epochs"]
    spec = InpainterSpec(
        gamma=cfg["gamma"],
        channel_divisor=preset["channel_divisor"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        rec_norm=cfg["rec_norm"],
    )
    patches_dir = Path(cfg["patches"])
    train = _load_patches(patches_dir / "train.npz")
    val_path = patches_dir / "val.npz"
    val = _load_patches(val_path) if val_path.exists() else None
    model = train_inpainter(spec, train, val, cfg["epochs"], cfg["seed"])
    out = Path(cfg["out"])
    model.save(out)
    rows = [
        (i, f"{t:.6f}", f"{v:.6f}")
        for i, (t, v) in enumerate(
            zip(model.metadata["train_rec_curve"],
                model.metadata["val_rec_curve"] or [float("nan")] * cfg["epochs"])
        )
    ]
    _write_metrics_csv(out / "metrics.csv", ["epoch", "train_rec", "val_rec"], rows)
    write_snapshot(out, "train-inpainter", cfg, {"patches": cfg["patches"]})
    return 0


def cmd_eval_inpainter(flags: dict, file_cfg: dict) -> int:
    from .inpainting import evaluate_inpainter

    defaults = {
        "patches": None, "out": None, "inpainter": None, "oracle": False,
        "dataset": None, "patch_size": 64,
    }
    cfg = resolve(defaults, file_cfg, flags)
    validate(cfg, [
        (cfg["patches"] is not None, "--patches is required"),
        (cfg["out"] is not None, "--out is required"),
        (cfg["inpainter"] is not None or cfg["oracle"],
         "--inpainter or --oracle is required"),
    ])
    model = _load_inpainter(cfg)
    test = _load_patches(Path(cfg["patches"]) / "test.npz")
    mask_spec = MaskSpec(cfg["patch_size"], cfg["patch_size"] // 2)
    report = evaluate_inpainter(model, test, mask_spec)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics_csv(
        out / "psnr_report.csv",
        ["method", "psnr_mean", "psnr_std", "n"],
        [(r.name, f"{r.mean:.6f}", f"{r.std:.6f}", r.n) for r in report.rows],
    )
    write_snapshot(out, "eval-inpainter", cfg, {
        "patches": cfg["patches"], "inpainter": cfg["inpainter"],
    })
    print(report.as_text())
    return 0


def cmd_extract_nodules(flags: dict, file_cfg: dict) -> int:
    from .classification import load_classifier
    from .extraction import FilterParams, build_nodule_bank

    defaults = {
        "dataset": None, "out": None, "inpainter": None, "oracle": False,
        "classifier": None, "thr": 0.5, "patch_size": 64,
        "filter_size": 3, "sigma_space": 1.0, "sigma_intensity": 0.1,
        "no_filter": False, "image_size": None,
    }
    cfg = resolve(defaults, file_cfg, flags)
    validate(cfg, [
        (cfg["dataset"] is not None, "--dataset is required"),
        (cfg["out"] is not None, "--out is required"),
        (cfg["inpainter"] is not None or cfg["oracle"],
         "--inpainter or --oracle is required"),
        (cfg["classifier"] is not None, "--classifier is required"),
    ])
    records = _load_dataset_records(cfg)
    model = _load_inpainter(cfg)
    classifier = load_classifier(cfg["classifier"])
    boxed = [r for r in records if r.bboxes]
    mask_spec = MaskSpec(cfg["patch_size"], cfg["patch_size"] // 2)
    params = FilterParams(
        size=cfg["filter_size"], sigma_space=cfg["sigma_space"],
        sigma_intensity=cfg["sigma_intensity"], enabled=not cfg["no_filter"],
    )
    out = Path(cfg["out"])
    assets, summary = build_nodule_bank(
        model, classifier, boxed, cfg["thr"], out, mask_spec, params
    )
    write_snapshot(out, "extract-nodules", cfg, {
        "dataset": cfg["dataset"], "inpainter": cfg["inpainter"],
        "classifier": cfg["classifier"],
    })
    logger.info(
        "stage=extract-nodules step=done value=accepted:%d/%d",
        summary.accepted, summary.candidates,
    )
    print(json.dumps(summary.as_dict(), indent=2))
    return 0


def _split_for(cfg: dict, records, bank=None):
    from .dataset import split_by_patient

    pin = None
    if bank and cfg.get("pin_bank_sources", True):
        pin = {a.source_image_id for a in bank}
        pin &= {r.image_id for r in records}
    return split_by_patient(
        records,
        tuple(cfg.get("split_fractions", (0.7, 0.1, 0.2))),
        seed=cfg.get("split_seed", 0),
        pin_to_train=pin,
    )


def cmd_train_classifier(flags: dict, file_cfg: dict) -> int:
    from .augmentation import AugmentationConfig
    from .classification import ClassifierConfig, auc, train_classifier
    from .extraction import load_nodule_bank

    defaults = {
        "dataset": None, "out": None, "regime": "baseline", "bank": None,
        "scale": "desk", "epochs": None, "batch_size": 32, "learning_rate": 1e-3,
        "seed": 0, "split_seed": 0, "insertion_rate": 0.05, "image_size": None,
        "dump_plans": False,
    }
    cfg = resolve(defaults, file_cfg, flags)
    validate(cfg, [
        (cfg["dataset"] is not None, "--dataset is required"),
        (cfg["out"] is not None, "--out is required"),
        (cfg["regime"] in ("baseline", "standard", "local"),
         "regime must be baseline|standard|local"),
        (cfg["regime"] != "local" or cfg["bank"] is not None or cfg["insertion_rate"] == 0,
         "local regime requires --bank"),
        (cfg["scale"] in SCALE_PRESETS, f"scale must be one of {sorted(SCALE_PRESETS)}"),
    ])
    preset = SCALE_PRESETS[cfg["scale"]]
    if cfg["epochs"] is None:
        cfg["epochs"] = preset["classifier_epochs"]
    records = _load_dataset_records(cfg)
    input_size = records[0].shape[0]
    bank = load_nodule_bank(cfg["bank"]) if cfg["bank"] else None
    split = _split_for(cfg, records, bank)
    config = ClassifierConfig(
        input_size=input_size,
        preset=preset["classifier_preset"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        regime=cfg["regime"],
        seed=cfg["seed"],
        insertion=AugmentationConfig(insertion_rate=cfg["insertion_rate"]),
    )
    model = train_classifier(config, split, records, bank, collect_plans=cfg["dump_plans"])
    out = Path(cfg["out"])
    plans = model.log.pop("plans", None)
    model.save(out)
    if plans is not None:
        plans_dir = out / "plans"
        plans_dir.mkdir(exist_ok=True)
        for plan in plans:
            plan.dump(plans_dir / f"epoch_{plan.epoch:04d}.json")

    by_id = {r.image_id: r for r in records}
    test_records = [by_id[i] for i in split.test]
    scores = model.predict_batch(np.stack([r.pixels for r in test_records]))
    labels = np.array([r.nodule_label for r in test_records])
    test_auc = auc(scores, labels)
    rows = [
        (i, f"{t:.6f}", f"{v:.6f}")
        for i, (t, v) in enumerate(
            zip(model.log["train_loss_curve"], model.log["val_loss_curve"])
        )
    ]
    _write_metrics_csv(out / "metrics.csv", ["epoch", "train_loss", "val_loss"], rows)
    _write_metrics_csv(out / "test_auc.csv", ["regime", "auc"],
                       [(cfg["regime"], f"{test_auc:.6f}")])
    with open(out / "split.json", "w") as f:
        json.dump({"train": split.train, "val": split.val, "test": split.test}, f, indent=2)
    write_snapshot(out, "train-classifier", cfg, {
        "dataset": cfg["dataset"], "bank": cfg["bank"],
    })
    logger.info("stage=train-classifier step=test-auc value=%.4f", test_auc)
    return 0


def cmd_attention_map(flags: dict, file_cfg: dict) -> int:
    from .attention import attention_map, render_heatmap
    from .classification import load_classifier

    defaults = {
        "dataset": None, "out": None, "image_id": None, "inpainter": None,
        "oracle": False, "classifier": None, "stride": None, "patch_size": 64,
        "image_size": None,
    }
    cfg = resolve(defaults, file_cfg, flags)
    validate(cfg, [
        (cfg["dataset"] is not None, "--dataset is required"),
        (cfg["out"] is not None, "--out is required"),
        (cfg["image_id"] is not None, "--image-id is required"),
        (cfg["inpainter"] is not None or cfg["oracle"],
         "--inpainter or --oracle is required"),
        (cfg["classifier"] is not None, "--classifier is required"),
    ])
    records = _load_dataset_records(cfg)
    matches = [r for r in records if r.image_id == cfg["image_id"]]
    if not matches:
        raise PipelineError(f"image_id {cfg['image_id']!r} not in dataset")
    record = matches[0]
    model = _load_inpainter(cfg)
    classifier = load_classifier(cfg["classifier"])
    mask_spec = MaskSpec(cfg["patch_size"], cfg["patch_size"] // 2)
    amap = attention_map(model, classifier, record, mask_spec, cfg["stride"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    render_heatmap(amap, record, out / f"{record.image_id}_attention.png")
    value, (x, y) = amap.covered_min()
    with open(out / f"{record.image_id}_attention.json", "w") as f:
        json.dump({
            "image_id": record.image_id,
            "stride": amap.stride,
            "min_value": value,
            "min_location": [x, y],
        }, f, indent=2)
    write_snapshot(out, "attention-map", cfg, {
        "dataset": cfg["dataset"], "inpainter": cfg["inpainter"],
        "classifier": cfg["classifier"],
    })
    logger.info("stage=attention-map step=min value=%.4f@(%d,%d)", value, x, y)
    return 0


def cmd_learning_curve(flags: dict, file_cfg: dict) -> int:
    from .augmentation import AugmentationConfig
    from .classification import ClassifierConfig, learning_curve
    from .extraction import load_nodule_bank

    defaults = {
        "dataset": None, "out": None, "bank": None, "scale": "desk",
        "fractions": "1.0,0.7,0.5,0.2,0.1,0.05", "repeats": 3,
        "regimes": "baseline,standard,local",
        "epochs": None, "batch_size": 32, "learning_rate": 1e-3,
        "seed": 0, "split_seed": 0, "insertion_rate": 0.05, "image_size": None,
    }
    cfg = resolve(defaults, file_cfg, flags)
    regimes = tuple(str(cfg["regimes"]).split(","))
    validate(cfg, [
        (cfg["dataset"] is not None, "--dataset is required"),
        (cfg["out"] is not None, "--out is required"),
        (all(r in ("baseline", "standard", "local") for r in regimes),
         "regimes must be a comma list of baseline|standard|local"),
        (cfg["bank"] is not None or "local" not in regimes or cfg["insertion_rate"] == 0,
         "local regime requires --bank"),
        (cfg["repeats"] >= 1, "repeats must be >= 1"),
    ])
    preset = SCALE_PRESETS[cfg["scale"]]
    if cfg["epochs"] is None:
        cfg["epochs"] = preset["classifier_epochs"]
    fractions = tuple(float(x) for x in str(cfg["fractions"]).split(","))
    records = _load_dataset_records(cfg)
    bank = load_nodule_bank(cfg["bank"]) if cfg["bank"] else None
    split = _split_for(cfg, records, bank)
    config = ClassifierConfig(
        input_size=records[0].shape[0],
        preset=preset["classifier_preset"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        seed=cfg["seed"],
        insertion=AugmentationConfig(insertion_rate=cfg["insertion_rate"]),
    )
    out = Path(cfg["out"])
    result = learning_curve(
        config, records, split, bank, fractions, cfg["repeats"], regimes, out
    )
    write_snapshot(out, "learning-curve", cfg, {
        "dataset": cfg["dataset"], "bank": cfg["bank"],
    })
    print(result.as_text())
    return 0


_HANDLERS = {
    "phantom-gen": cmd_phantom_gen,
    "prepare-patches": cmd_prepare_patches,
    "train-inpainter": cmd_train_inpainter,
    "eval-inpainter": cmd_eval_inpainter,
    "extract-nodules": cmd_extract_nodules,
    "train-classifier": cmd_train_classifier,
    "attention-map": cmd_attention_map,
    "learning-curve": cmd_learning_curve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noduleaug",
        description="Local feature augmentation pipeline for nodule classification",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, *specs):
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat YAML/JSON config file")
        for args, kwargs in specs:
            p.add_argument(*args, **kwargs)
        return p

    opt = lambda *names, **kw: (names, {"default": None, **kw})  # noqa: E731
    flag = lambda *names: (names, {"action": "store_true", "default": None})  # noqa: E731

    add("phantom-gen",
        opt("--out"), opt("--n", type=int), opt("--nodule-fraction", type=float),
        opt("--seed", type=int), opt("--image-size", type=int),
        opt("--noise-sigma", type=float),
        opt("--amplitude-min", type=float), opt("--amplitude-max", type=float),
        opt("--radius-min", type=float), opt("--radius-max", type=float))
    add("prepare-patches",
        opt("--dataset"), opt("--out"), opt("--seed", type=int),
        opt("--patch-size", type=int), opt("--train-patches", type=int),
        opt("--val-patches", type=int), opt("--test-patches", type=int))
    add("train-inpainter",
        opt("--patches"), opt("--out"), opt("--seed", type=int),
        opt("--scale", choices=sorted(SCALE_PRESETS)), opt("--epochs", type=int),
        opt("--gamma", type=float), opt("--batch-size", type=int),
        opt("--learning-rate", type=float), opt("--rec-norm", choices=["l1", "l2"]))
    add("eval-inpainter",
        opt("--patches"), opt("--out"), opt("--inpainter"), flag("--oracle"),
        opt("--dataset"), opt("--patch-size", type=int))
    add("extract-nodules",
        opt("--dataset"), opt("--out"), opt("--inpainter"), flag("--oracle"),
        opt("--classifier"), opt("--thr", type=float), opt("--patch-size", type=int),
        opt("--filter-size", type=int), opt("--sigma-space", type=float),
        opt("--sigma-intensity", type=float), flag("--no-filter"))
    add("train-classifier",
        opt("--dataset"), opt("--out"), opt("--regime"), opt("--bank"),
        opt("--scale", choices=sorted(SCALE_PRESETS)), opt("--epochs", type=int),
        opt("--batch-size", type=int), opt("--learning-rate", type=float),
        opt("--seed", type=int), opt("--split-seed", type=int),
        opt("--insertion-rate", type=float), flag("--dump-plans"))
    add("attention-map",
        opt("--dataset"), opt("--out"), opt("--image-id"), opt("--inpainter"),
        flag("--oracle"), opt("--classifier"), opt("--stride", type=int),
        opt("--patch-size", type=int))
    add("learning-curve",
        opt("--dataset"), opt("--out"), opt("--bank"),
        opt("--scale", choices=sorted(SCALE_PRESETS)), opt("--fractions"),
        opt("--repeats", type=int), opt("--regimes"), opt("--epochs", type=int),
        opt("--batch-size", type=int), opt("--learning-rate", type=float),
        opt("--seed", type=int), opt("--split-seed", type=int),
        opt("--insertion-rate", type=float))
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {
        k: v for k, v in vars(args).items()
        if k not in ("subcommand", "config")
    }
    try:
        file_cfg = load_config_file(args.config)
        return _HANDLERS[args.subcommand](flags, file_cfg)
    except PipelineError as exc:
        logger.error("validation error: %s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.exception("runtime error: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
