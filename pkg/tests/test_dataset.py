import csv

import numpy as np
import pytest

from noduleaug.dataset import (
    apply_center_mask,
    get_patch,
    load_dataset,
    patch2img,
    read_image_png,
    sample_random_patches,
    split_by_patient,
    write_image_png,
)
from noduleaug.errors import GeometryError, IngestionError, InvariantError
from noduleaug.records import BoundingBox, ImageRecord, MaskSpec, Patch


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _make_dataset(tmp_path, n=3, size=96, bbox_rows=(), labels=None):
    (tmp_path / "images").mkdir(exist_ok=True)
    rng = np.random.default_rng(0)
    ids = [f"img{i}" for i in range(n)]
    for i in ids:
        write_image_png(tmp_path / "images" / f"{i}.png", rng.random((size, size)), 16)
    if labels is None:
        labels = [(i, f"pat{k}", 0) for k, i in enumerate(ids)]
    _write_csv(tmp_path / "labels.csv", ["image_id", "patient_id", "nodule_label"], labels)
    _write_csv(tmp_path / "bboxes.csv", ["image_id", "x", "y", "w", "h"], bbox_rows)
    return tmp_path


def _record(size=96, seed=0, label=0, **kw):
    rng = np.random.default_rng(seed)
    return ImageRecord(
        image_id=f"r{seed}", patient_id=f"p{seed}",
        pixels=rng.random((size, size)).astype(np.float32),
        nodule_label=label, **kw,
    )


class TestLoadDataset:
    def test_bbox_presence_forces_positive_label(self, tmp_path):
        root = _make_dataset(tmp_path, n=3, bbox_rows=[("img1", 10, 12, 8, 9)])
        records = load_dataset(root / "images", root / "labels.csv",
                               root / "bboxes.csv")
        assert len(records) == 3
        assert sum(r.nodule_label for r in records) == 1
        assert records[1].image_id == "img1" and records[1].nodule_label == 1

    def test_empty_bbox_file_uses_label_column(self, tmp_path):
        labels = [("img0", "a", 1), ("img1", "b", 0), ("img2", "c", 1)]
        root = _make_dataset(tmp_path, n=3, labels=labels)
        records = load_dataset(root / "images", root / "labels.csv",
                               root / "bboxes.csv")
        assert [r.nodule_label for r in records] == [1, 0, 1]

    def test_missing_image_file_names_the_id(self, tmp_path):
        root = _make_dataset(tmp_path, n=2)
        labels = [("img0", "a", 0), ("ghost", "b", 0)]
        _write_csv(root / "labels.csv", ["image_id", "patient_id", "nodule_label"], labels)
        with pytest.raises(IngestionError, match="ghost"):
            load_dataset(root / "images", root / "labels.csv")

    def test_bbox_row_with_unknown_id_rejected(self, tmp_path):
        root = _make_dataset(tmp_path, n=2, bbox_rows=[("nope", 1, 1, 4, 4)])
        with pytest.raises(IngestionError, match="nope"):
            load_dataset(root / "images", root / "labels.csv", root / "bboxes.csv")

    def test_resize_rescales_bboxes(self, tmp_path):
        root = _make_dataset(tmp_path, n=1, size=128,
                             bbox_rows=[("img0", 32, 64, 16, 16)])
        records = load_dataset(root / "images", root / "labels.csv",
                               root / "bboxes.csv", working_size=64)
        rec = records[0]
        assert rec.shape == (64, 64)
        bbox = rec.bboxes[0]
        assert (bbox.x, bbox.y, bbox.w, bbox.h) == (16, 32, 8, 8)

    def test_mask_ingested_alongside_image(self, small_dataset_dir, small_records):
        assert all(r.lung_mask is not None for r in small_records)
        assert all(set(np.unique(r.lung_mask)) <= {0, 1} for r in small_records[:5])

    def test_png_roundtrip_16bit_lossless(self, tmp_path):
        rng = np.random.default_rng(7)
        pixels = np.round(rng.random((32, 32)) * 65535) / 65535
        write_image_png(tmp_path / "x.png", pixels, 16)
        back, depth = read_image_png(tmp_path / "x.png")
        assert depth == 16
        np.testing.assert_allclose(back, pixels, atol=1e-12)


class TestSplitByPatient:
    def test_deterministic_per_seed(self):
        records = []
        for i in range(10):
            for j in range(3):
                r = _record(size=32, seed=i * 10 + j)
                r.patient_id = f"pat{i}"
                records.append(r)
        s1 = split_by_patient(records, (0.7, 0.1, 0.2), seed=7)
        s2 = split_by_patient(records, (0.7, 0.1, 0.2), seed=7)
        assert s1.train == s2.train and s1.val == s2.val and s1.test == s2.test

    def test_patient_images_stay_together(self):
        records = [_record(size=32, seed=i) for i in range(12)]
        for i, r in enumerate(records):
            r.patient_id = "same" if i < 5 else f"pat{i}"
        split = split_by_patient(records, seed=1)
        grouped = [r.image_id for r in records if r.patient_id == "same"]
        for ids in (split.train, split.val, split.test):
            inside = set(grouped) & set(ids)
            assert inside in (set(), set(grouped))

    def test_pinned_ids_land_in_train(self):
        records = [_record(size=32, seed=i) for i in range(12)]
        for i, r in enumerate(records):
            r.patient_id = f"pat{i}"
        for seed in range(5):
            split = split_by_patient(records, seed=seed,
                                     pin_to_train={records[3].image_id})
            assert records[3].image_id in split.train

    def test_no_patient_crosses_splits_random_multisets(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            records = []
            k = 0
            for p in range(int(rng.integers(3, 15))):
                for _ in range(int(rng.integers(1, 4))):
                    r = _record(size=16, seed=trial * 1000 + k)
                    r.patient_id = f"pat{p}"
                    records.append(r)
                    k += 1
            split = split_by_patient(records, seed=trial)
            seen = {}
            for name, ids in (("train", split.train), ("val", split.val),
                              ("test", split.test)):
                for image_id in ids:
                    patient = next(r.patient_id for r in records if r.image_id == image_id)
                    assert seen.setdefault(patient, name) == name
            assert sorted(split.all_ids()) == sorted(r.image_id for r in records)

    def test_sizes_within_one_patient_of_fractions(self):
        records = []
        for i in range(20):
            r = _record(size=16, seed=i)
            r.patient_id = f"pat{i}"
            records.append(r)
        split = split_by_patient(records, (0.7, 0.1, 0.2), seed=9)
        assert abs(len(split.train) - 14) <= 1
        assert abs(len(split.val) - 2) <= 1
        assert abs(len(split.test) - 4) <= 1

    def test_too_few_patients_rejected(self):
        records = [_record(size=16, seed=i) for i in range(2)]
        for i, r in enumerate(records):
            r.patient_id = f"pat{i}"
        with pytest.raises(InvariantError):
            split_by_patient(records)


class TestPatchGeometry:
    def test_centered_bbox_origin(self):
        rec = _record(size=96, label=1, bboxes=[BoundingBox(44, 44, 8, 8)])
        patch = get_patch(rec, rec.bboxes[0], 64)
        assert patch.origin == (16, 16)  # center (48,48) - 32

    def test_border_bbox_clamps_origin(self):
        rec = _record(size=96, label=1, bboxes=[BoundingBox(0, 0, 6, 6)])
        patch = get_patch(rec, rec.bboxes[0], 64)
        assert patch.origin == (0, 0)
        assert patch.pixels.shape == (64, 64)

    def test_patch_too_large_rejected(self):
        rec = _record(size=32)
        with pytest.raises(GeometryError):
            get_patch(rec, (16, 16), 64)

    def test_roundtrip_identity_exhaustive_small(self):
        rec = _record(size=12)
        for oy in range(12 - 4 + 1):
            for ox in range(12 - 4 + 1):
                patch = get_patch(rec, (ox + 2, oy + 2), 4)
                back = patch2img(rec, patch)
                np.testing.assert_array_equal(back.pixels, rec.pixels)

    def test_patch2img_replace_then_extract(self):
        rec = _record(size=96)
        patch = Patch(pixels=np.zeros((64, 64), np.float32), origin=(10, 20),
                      source_id=rec.image_id)
        new = patch2img(rec, patch)
        again = get_patch(new, (10 + 32, 20 + 32), 64)
        np.testing.assert_array_equal(again.pixels, patch.pixels)
        outside = new.pixels.copy()
        outside[20:84, 10:74] = rec.pixels[20:84, 10:74]
        np.testing.assert_array_equal(outside, rec.pixels)

    def test_patch2img_out_of_bounds(self):
        rec = _record(size=96)
        patch = Patch(pixels=np.zeros((64, 64), np.float32), origin=(0, 0),
                      source_id=rec.image_id)
        with pytest.raises(GeometryError):
            patch2img(rec, patch, origin=(96 - 64 + 1, 0))


class TestCenterMask:
    def test_mask_geometry_64(self):
        rec = _record(size=96)
        patch = get_patch(rec, (48, 48), 64)
        masked = apply_center_mask(patch, MaskSpec(64, 32))
        hole = masked.pixels[16:48, 16:48]
        assert (hole == 0).all()
        frame = np.ones((64, 64), bool)
        frame[16:48, 16:48] = False
        assert frame.sum() == 3072
        np.testing.assert_array_equal(masked.pixels[frame], patch.pixels[frame])

    def test_changes_exactly_mask_squared_pixels(self):
        rec = _record(size=96)
        patch = get_patch(rec, (48, 48), 64)
        patch.pixels += 0.001  # keep away from the fill value
        patch.pixels = np.clip(patch.pixels, 0.001, 1.0)
        masked = apply_center_mask(patch, MaskSpec(64, 32), fill_value=0.0)
        assert (masked.pixels != patch.pixels).sum() == 32 * 32

    def test_fill_equal_to_content_is_identity(self):
        patch = Patch(pixels=np.full((64, 64), 0.25, np.float32), origin=(0, 0),
                      source_id="x")
        masked = apply_center_mask(patch, MaskSpec(64, 32), fill_value=0.25)
        np.testing.assert_array_equal(masked.pixels, patch.pixels)

    def test_bad_mask_spec_rejected(self):
        with pytest.raises(InvariantError):
            MaskSpec(64, 16)
        with pytest.raises(InvariantError):
            MaskSpec(63, 31)


class TestSampleRandomPatches:
    def test_patches_inside_bounds(self, small_records):
        patches = sample_random_patches(small_records, 100, 64, seed=3,
                                        exclude_nodule_images=True)
        assert len(patches) == 100
        for p in patches:
            assert 0 <= p.origin[0] <= 128 - 64
            assert 0 <= p.origin[1] <= 128 - 64
            assert p.pixels.shape == (64, 64)

    def test_all_nodule_sources_rejected(self):
        recs = [_record(size=96, seed=i, label=1) for i in range(3)]
        with pytest.raises(IngestionError):
            sample_random_patches(recs, 5, 64, seed=0, exclude_nodule_images=True)

    def test_same_seed_same_origins(self, small_records):
        a = sample_random_patches(small_records, 50, 64, seed=11)
        b = sample_random_patches(small_records, 50, 64, seed=11)
        assert [p.origin for p in a] == [p.origin for p in b]
        assert [p.source_id for p in a] == [p.source_id for p in b]


class TestRecordInvariants:
    def test_pixels_out_of_range_rejected(self):
        with pytest.raises(InvariantError):
            ImageRecord("x", "p", np.full((8, 8), 1.5, np.float32), 0)

    def test_bboxes_force_label(self):
        with pytest.raises(InvariantError):
            ImageRecord("x", "p", np.zeros((8, 8), np.float32), 0,
                        bboxes=[BoundingBox(0, 0, 2, 2)])

    def test_mask_shape_must_match(self):
        with pytest.raises(InvariantError):
            ImageRecord("x", "p", np.zeros((8, 8), np.float32), 0,
                        lung_mask=np.zeros((4, 4), np.uint8))

    def test_bbox_outside_image_rejected(self):
        with pytest.raises((GeometryError, InvariantError)):
            ImageRecord("x", "p", np.zeros((8, 8), np.float32), 1,
                        bboxes=[BoundingBox(6, 6, 4, 4)])
