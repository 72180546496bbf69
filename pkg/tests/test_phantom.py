import numpy as np
import pytest

from noduleaug.dataset import load_dataset, read_image_png, split_by_patient
from noduleaug.errors import GeometryError, InvariantError
from noduleaug.phantom import (
    PhantomSpec,
    blob_profile,
    generate_phantom,
    generate_phantom_dataset,
    implant_blob,
    load_clean_images,
    load_ground_truth,
)


class TestGeneratePhantom:
    def test_same_seed_bit_identical(self):
        spec = PhantomSpec()
        a, mask_a = generate_phantom(spec, seed=9)
        b, mask_b = generate_phantom(spec, seed=9)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        np.testing.assert_array_equal(mask_a, mask_b)

    def test_zero_noise_is_pure_background(self):
        spec = PhantomSpec(noise_sigma=0.0)
        a, _ = generate_phantom(spec, seed=4)
        b, _ = generate_phantom(spec, seed=4)
        np.testing.assert_array_equal(a.pixels, b.pixels)
        noisy, _ = generate_phantom(PhantomSpec(noise_sigma=0.02), seed=4)
        assert not np.array_equal(a.pixels, noisy.pixels)

    def test_mask_area_fraction_over_seeds(self):
        spec = PhantomSpec()
        fracs = [generate_phantom(spec, seed=s)[1].mean() for s in range(100)]
        assert min(fracs) >= 0.2
        assert max(fracs) <= 0.6

    def test_label_and_range(self):
        rec, mask = generate_phantom(PhantomSpec(), seed=2)
        assert rec.nodule_label == 0
        assert rec.pixels.min() >= 0 and rec.pixels.max() <= 1
        assert mask.mean() >= 0.2


class TestImplantBlob:
    def test_zero_amplitude_rejected(self):
        rec, mask = generate_phantom(PhantomSpec(), seed=1)
        with pytest.raises(InvariantError, match="degenerate blob"):
            implant_blob(rec, mask, amplitude=0.0, radius=5, seed=0)

    def test_bbox_centered_on_blob(self):
        rec, mask = generate_phantom(PhantomSpec(), seed=1)
        out, bbox = implant_blob(rec, mask, amplitude=0.3, radius=5, seed=3)
        cx, cy = out.provenance[0]["blob"]["center"]
        bx, by = bbox.center
        assert abs(bx - cx) <= 1 and abs(by - cy) <= 1

    def test_subtraction_recovers_clipped_blob(self):
        rec, mask = generate_phantom(PhantomSpec(), seed=6)
        out, bbox = implant_blob(rec, mask, amplitude=0.25, radius=6, seed=2)
        info = out.provenance[0]["blob"]
        blob = blob_profile(rec.shape, tuple(info["center"]), info["amplitude"],
                            info["radius"], info["rim"])
        expected = np.clip(rec.pixels.astype(np.float64) + blob, 0, 1) - rec.pixels
        np.testing.assert_allclose(out.pixels - rec.pixels, expected, atol=1e-6)

    def test_blob_nonnegative_and_inside_lung(self):
        rec, mask = generate_phantom(PhantomSpec(), seed=8)
        out, bbox = implant_blob(rec, mask, amplitude=0.2, radius=4, seed=5)
        diff = out.pixels - rec.pixels
        assert (diff >= -1e-7).all()
        ys, xs = np.nonzero(diff > 1e-6)
        assert mask[ys, xs].all()

    def test_no_admissible_center_rejected(self):
        rec, mask = generate_phantom(PhantomSpec(), seed=1)
        with pytest.raises(GeometryError):
            implant_blob(rec, np.zeros_like(mask), amplitude=0.3, radius=5, seed=0)


class TestPhantomDataset:
    def test_positive_count_exact(self, tmp_path):
        generate_phantom_dataset(40, 0.3, PhantomSpec(), seed=1, out_dir=tmp_path)
        records = load_dataset(tmp_path / "images", tmp_path / "labels.csv",
                               tmp_path / "bboxes.csv", tmp_path / "masks")
        assert len(records) == 40
        assert sum(r.nodule_label for r in records) == 12

    def test_roundtrip_through_loader(self, small_dataset_dir, small_records):
        assert len(small_records) == 80
        for rec in small_records:
            assert rec.shape == (128, 128)
            assert rec.lung_mask is not None

    def test_patient_groups_of_four_split_cleanly(self, small_records):
        split = split_by_patient(small_records, seed=2)
        patient_of = {r.image_id: r.patient_id for r in small_records}
        assignment = {}
        for name, ids in (("train", split.train), ("val", split.val),
                          ("test", split.test)):
            for i in ids:
                assert assignment.setdefault(patient_of[i], name) == name

    def test_files_reingest_losslessly(self, tmp_path):
        generate_phantom_dataset(4, 0.5, PhantomSpec(), seed=9, out_dir=tmp_path)
        # writing the loaded pixels again must reproduce identical files
        first, _ = read_image_png(tmp_path / "images" / "ph00000.png")
        from noduleaug.dataset import write_image_png

        write_image_png(tmp_path / "again.png", first, 16)
        second, _ = read_image_png(tmp_path / "again.png")
        np.testing.assert_array_equal(first, second)

    def test_clean_and_truth_side_channels(self, small_dataset_dir, small_records):
        clean = load_clean_images(small_dataset_dir)
        truth = load_ground_truth(small_dataset_dir)
        positives = [r for r in small_records if r.nodule_label == 1]
        assert set(truth) == {r.image_id for r in positives}
        assert set(clean) == {r.image_id for r in small_records}
        # clean equals the image for negatives, differs inside bbox for positives
        neg = next(r for r in small_records if r.nodule_label == 0)
        np.testing.assert_allclose(clean[neg.image_id], neg.pixels, atol=1e-6)
        pos = positives[0]
        bbox = pos.bboxes[0]
        region = (slice(bbox.y, bbox.y2), slice(bbox.x, bbox.x2))
        assert (pos.pixels[region] - clean[pos.image_id][region]).max() > 0.01
