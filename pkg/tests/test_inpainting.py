import numpy as np
import pytest

from noduleaug.dataset import apply_center_mask
from noduleaug.errors import GeometryError, InvariantError
from noduleaug.inpainting import (
    InpainterSpec,
    MeanFillInpainter,
    OracleInpainter,
    channel_size,
    discount_map,
    evaluate_inpainter,
    inpaint,
    load_model,
    psnr,
    reconstruction_loss,
    train_inpainter,
)
from noduleaug.records import MaskSpec, Patch

DESK = InpainterSpec(channel_divisor=16)


def random_patches(n, seed=0, size=64):
    rng = np.random.default_rng(seed)
    return rng.random((n, size, size)).astype(np.float32)


class TestChannelSchedule:
    def test_encoder_table(self):
        assert [channel_size("encoder", l) for l in range(5)] == [
            256, 512, 1024, 2048, 4096]

    def test_decoder_table(self):
        assert [channel_size("decoder", l) for l in range(4)] == [
            4096, 2048, 1024, 512]

    def test_adversarial_table(self):
        assert [channel_size("adversarial", l) for l in range(4)] == [
            256, 512, 1024, 2048]

    def test_bottleneck_matches(self):
        assert channel_size("encoder", 4) == channel_size("decoder", 0) == 4096

    @pytest.mark.parametrize("part,l", [("encoder", 5), ("decoder", 4),
                                        ("adversarial", 4), ("encoder", -1)])
    def test_out_of_range_rejected(self, part, l):
        with pytest.raises(ValueError):
            channel_size(part, l)

    def test_unknown_part_rejected(self):
        with pytest.raises(ValueError):
            channel_size("generator", 0)


class TestDiscountMap:
    def test_reference_values(self):
        dm = discount_map(MaskSpec(64, 32), gamma=0.97)
        assert dm[0, 0] == 1.0
        assert dm[0, 17] == 1.0  # whole outer ring
        assert dm[1, 1] == pytest.approx(0.97, abs=1e-15)
        assert dm[15, 15] == pytest.approx(0.97**15, abs=1e-12)
        assert dm[15, 16] == pytest.approx(0.97**15, abs=1e-12)

    def test_monotone_inward_and_bounded(self):
        dm = discount_map(MaskSpec(64, 32), gamma=0.97)
        for r in range(15):
            assert dm[r, r] >= dm[r + 1, r + 1]
        assert (dm > 0).all() and (dm <= 1.0).all()

    def test_dihedral_symmetry(self):
        dm = discount_map(MaskSpec(64, 32), gamma=0.9)
        np.testing.assert_array_equal(dm, dm.T)
        np.testing.assert_array_equal(dm, np.flipud(dm))
        np.testing.assert_array_equal(dm, np.fliplr(dm))

    def test_gamma_one_uniform(self):
        dm = discount_map(MaskSpec(8, 4), gamma=1.0)
        np.testing.assert_array_equal(dm, np.ones((4, 4)))


class TestReconstructionLoss:
    def setup_method(self):
        self.weights = discount_map(MaskSpec(64, 32), 0.97)
        self.rng = np.random.default_rng(3)

    def test_zero_iff_equal(self):
        target = self.rng.random((32, 32))
        assert reconstruction_loss(target, target, self.weights) == 0.0
        bumped = target.copy()
        bumped[5, 5] += 1e-3
        assert reconstruction_loss(bumped, target, self.weights) > 0.0

    def test_constant_offset_passes_through(self):
        target = self.rng.random((32, 32)) * 0.5
        assert reconstruction_loss(target + 0.1, target, self.weights) == \
            pytest.approx(0.1, abs=1e-12)

    def test_center_error_cheaper_than_border_error(self):
        target = np.zeros((32, 32))
        center = target.copy()
        center[15:17, 15:17] = 0.5
        border = target.copy()
        border[0:2, 0:2] = 0.5
        loss_center = reconstruction_loss(center, target, self.weights)
        loss_border = reconstruction_loss(border, target, self.weights)
        assert loss_center < loss_border

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            reconstruction_loss(np.zeros((32, 32)), np.zeros((16, 16)), self.weights)

    def test_l2_option(self):
        target = np.zeros((32, 32))
        assert reconstruction_loss(target + 0.1, target, self.weights, norm="l2") == \
            pytest.approx(0.01, abs=1e-12)


class TestInpainterSpec:
    def test_loss_weights_must_sum_to_one(self):
        with pytest.raises(InvariantError):
            InpainterSpec(rec_loss_weight=0.9, adv_loss_weight=0.2)

    def test_divisor_cannot_collapse_channels(self):
        with pytest.raises(InvariantError):
            InpainterSpec(channel_divisor=512)

    def test_desk_schedule(self):
        assert DESK.channels("encoder") == [16, 32, 64, 128, 256]
        assert DESK.channels("decoder") == [256, 128, 64, 32]


class TestTrainInpainter:
    def test_zero_epochs_model_usable(self):
        model = train_inpainter(DESK, random_patches(8), None, epochs=0, seed=1)
        patch = Patch(pixels=random_patches(1)[0], origin=(0, 0), source_id="x")
        out = inpaint(model, apply_center_mask(patch, MaskSpec(64, 32)))
        assert out.pixels.shape == (64, 64)

    def test_geometry_mismatch_rejected(self):
        with pytest.raises(GeometryError):
            train_inpainter(DESK, random_patches(4, size=32), None, epochs=0)

    def test_empty_train_rejected(self):
        with pytest.raises(InvariantError):
            train_inpainter(DESK, random_patches(0), None, epochs=1)

    def test_training_makes_progress_on_structured_data(self, small_records):
        from noduleaug.dataset import sample_random_patches

        patches = sample_random_patches(small_records, 200, 64, seed=5,
                                        exclude_nodule_images=True)
        val = sample_random_patches(small_records, 40, 64, seed=6,
                                    exclude_nodule_images=True)
        model = train_inpainter(DESK, patches, val, epochs=3, seed=2)
        curve = model.metadata["val_rec_curve"]
        assert len(curve) == 3
        assert curve[-1] <= curve[0]

    def test_seed_reproducibility(self):
        patches = random_patches(32, seed=9)
        m1 = train_inpainter(DESK, patches, patches[:8], epochs=1, seed=5)
        m2 = train_inpainter(DESK, patches, patches[:8], epochs=1, seed=5)
        assert m1.metadata["val_rec_curve"] == m2.metadata["val_rec_curve"]
        for p1, p2 in zip(m1.net.parameters(), m2.net.parameters()):
            np.testing.assert_array_equal(p1.detach().numpy(), p2.detach().numpy())


class TestInpaint:
    def setup_method(self):
        self.model = train_inpainter(DESK, random_patches(8), None, epochs=0, seed=3)
        self.mask_spec = MaskSpec(64, 32)

    def test_frame_always_preserved(self):
        frame = np.ones((64, 64), bool)
        frame[self.mask_spec.mask_slice] = False
        for seed in range(5):
            patch = Patch(pixels=random_patches(1, seed=seed)[0], origin=(0, 0),
                          source_id="x")
            out = inpaint(self.model, apply_center_mask(patch, self.mask_spec))
            np.testing.assert_array_equal(out.pixels[frame], patch.pixels[frame])

    def test_output_in_unit_range(self):
        patch = Patch(pixels=random_patches(1)[0], origin=(0, 0), source_id="x")
        out = inpaint(self.model, apply_center_mask(patch, self.mask_spec))
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_geometry_mismatch_rejected(self):
        small = Patch(pixels=np.zeros((32, 32), np.float32), origin=(0, 0),
                      source_id="x")
        masked = apply_center_mask(small, MaskSpec(32, 16))
        with pytest.raises(GeometryError):
            inpaint(self.model, masked)

    def test_oracle_restores_ground_truth(self):
        clean = np.linspace(0, 1, 64 * 64, dtype=np.float32).reshape(64, 64)
        oracle = OracleInpainter({"img": clean})
        patch = Patch(pixels=clean.copy(), origin=(0, 0), source_id="img")
        out = inpaint(oracle, apply_center_mask(patch, self.mask_spec))
        np.testing.assert_array_equal(out.pixels, clean)

    def test_mean_fill_uses_frame_mean(self):
        pixels = np.zeros((64, 64), np.float32)
        pixels[:16] = 0.5  # frame content only
        patch = Patch(pixels=pixels, origin=(0, 0), source_id="x")
        masked = apply_center_mask(patch, self.mask_spec)
        filled = inpaint(MeanFillInpainter(), masked)
        frame = np.ones((64, 64), bool)
        frame[self.mask_spec.mask_slice] = False
        expected = pixels[frame].mean()
        np.testing.assert_allclose(filled.pixels[self.mask_spec.mask_slice],
                                   expected, rtol=1e-6)


class TestPsnr:
    def test_identical_is_infinite(self):
        a = np.random.default_rng(0).random((16, 16))
        assert psnr(a, a) == float("inf")

    def test_constant_difference_closed_form(self):
        a = np.zeros((8, 8))
        b = np.full((8, 8), 16 / 255)
        assert psnr(a, b, max_val=1.0) == pytest.approx(
            10 * np.log10(1.0 / (16 / 255) ** 2), abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((5, 5)))


class TestEvaluateInpainter:
    def test_perfect_oracle_reports_inf(self):
        rng = np.random.default_rng(1)
        clean = {f"i{k}": rng.random((96, 96)).astype(np.float32) for k in range(3)}
        patches = [
            Patch(pixels=clean[f"i{k}"][:64, :64].copy(), origin=(0, 0),
                  source_id=f"i{k}")
            for k in range(3)
        ]
        report = evaluate_inpainter(OracleInpainter(clean), patches, MaskSpec(64, 32))
        assert report.row("model").mean == float("inf")
        assert report.row("model").std == 0.0

    def test_two_rows_model_and_baseline(self):
        patches = [Patch(pixels=p, origin=(0, 0), source_id="x")
                   for p in random_patches(4)]
        model = train_inpainter(DESK, random_patches(8), None, epochs=0, seed=0)
        report = evaluate_inpainter(model, patches, MaskSpec(64, 32))
        assert [r.name for r in report.rows] == ["model", "mean_fill"]
        assert np.isfinite(report.row("mean_fill").mean)

    def test_baseline_reproducible(self):
        patches = [Patch(pixels=p, origin=(0, 0), source_id="x")
                   for p in random_patches(4, seed=8)]
        model = MeanFillInpainter()
        r1 = evaluate_inpainter(model, patches, MaskSpec(64, 32))
        r2 = evaluate_inpainter(model, patches, MaskSpec(64, 32))
        assert r1.row("model").mean == r2.row("model").mean

    def test_too_few_patches_rejected(self):
        patches = [Patch(pixels=random_patches(1)[0], origin=(0, 0), source_id="x")]
        with pytest.raises(InvariantError):
            evaluate_inpainter(MeanFillInpainter(), patches, MaskSpec(64, 32))


class TestModelArtifact:
    def test_save_load_roundtrip(self, tmp_path):
        model = train_inpainter(DESK, random_patches(16), random_patches(4),
                                epochs=1, seed=4)
        model.save(tmp_path / "model")
        loaded = load_model(tmp_path / "model")
        assert loaded.spec == model.spec
        assert loaded.metadata["epochs"] == 1
        patch = Patch(pixels=random_patches(1)[0], origin=(0, 0), source_id="x")
        masked = apply_center_mask(patch, MaskSpec(64, 32))
        np.testing.assert_array_equal(model.fill(masked), loaded.fill(masked))
