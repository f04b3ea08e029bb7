import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointvis.errors import DomainError
from pointvis.losses import (
    ScaleScores,
    discriminator_adv_loss,
    downscale_reference,
    generator_adv_loss,
)


def scores_of(*maps):
    return ScaleScores([np.asarray(m, dtype=float) for m in maps])


class TestGeneratorLoss:
    def test_perfect_fool_is_zero(self):
        fake = scores_of(*[np.ones((3, 3))] * 5)
        assert generator_adv_loss(fake) == 0.0

    def test_single_half_score(self):
        assert abs(generator_adv_loss(scores_of([[0.5]])) - 0.25) <= 1e-12

    def test_five_scales_of_zeros(self):
        fake = scores_of(*[np.zeros((2, 2))] * 5)
        assert abs(generator_adv_loss(fake) - 5.0) <= 1e-12

    def test_empty_map_rejected(self):
        with pytest.raises(DomainError):
            ScaleScores([np.zeros((0, 2))])

    def test_no_scales_rejected(self):
        with pytest.raises(DomainError):
            ScaleScores([])


class TestDiscriminatorLoss:
    def test_perfect_discriminator_is_zero(self):
        fake = scores_of(np.zeros((2, 2)))
        real = scores_of(np.ones((3, 3)))
        assert discriminator_adv_loss(fake, real) == 0.0

    def test_fooled_discriminator(self):
        fake = scores_of(np.ones((2, 2)), np.ones((1, 1)))
        real = scores_of(np.ones((2, 2)), np.ones((1, 1)))
        assert abs(discriminator_adv_loss(fake, real) - 2.0) <= 1e-12

    def test_mixed_maps(self):
        fake = scores_of([[0.2, 0.4]])
        real = scores_of([[0.9]])
        assert abs(discriminator_adv_loss(fake, real) - 0.11) <= 1e-12

    def test_scale_count_mismatch(self):
        with pytest.raises(DomainError):
            discriminator_adv_loss(scores_of([[0.0]]), scores_of([[1.0]], [[1.0]]))

    def test_zero_iff_fake_zero_real_one(self):
        fake = scores_of([[0.0, 1e-8]])
        real = scores_of([[1.0]])
        assert discriminator_adv_loss(fake, real) > 0.0


class TestProperties:
    def test_generator_zero_iff_all_ones(self):
        rng = np.random.default_rng(27)
        for _ in range(20):
            maps = [rng.uniform(0, 1, rng.integers(1, 5, 2)) for _ in range(3)]
            loss = generator_adv_loss(ScaleScores(maps))
            if all(np.all(m == 1.0) for m in maps):
                assert loss == 0.0
            else:
                assert loss >= 0.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(28)
        flat = rng.uniform(-1, 2, 12)
        a = generator_adv_loss(scores_of(flat.reshape(3, 4)))
        b = generator_adv_loss(scores_of(rng.permutation(flat).reshape(4, 3)))
        assert abs(a - b) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_additivity_over_scales(self, seed):
        rng = np.random.default_rng(seed)
        n_scales = int(rng.integers(1, 6))
        maps = [rng.uniform(-1, 2, (int(rng.integers(1, 4)), int(rng.integers(1, 4)))) for _ in range(n_scales)]
        dup = int(rng.integers(0, n_scales))
        base = generator_adv_loss(ScaleScores(maps))
        extended = generator_adv_loss(ScaleScores(maps + [maps[dup]]))
        per_scale = float(np.mean((maps[dup] - 1.0) ** 2))
        assert abs(extended - (base + per_scale)) <= 1e-12

        real_maps = [rng.uniform(-1, 2, m.shape) for m in maps]
        d_base = discriminator_adv_loss(ScaleScores(maps), ScaleScores(real_maps))
        d_ext = discriminator_adv_loss(
            ScaleScores(maps + [maps[dup]]), ScaleScores(real_maps + [real_maps[dup]])
        )
        d_term = float(np.mean(maps[dup] ** 2)) + float(np.mean((real_maps[dup] - 1.0) ** 2))
        assert abs(d_ext - (d_base + d_term)) <= 1e-12


class TestDownscaleReference:
    def test_scale_one_is_identity(self):
        img = np.random.default_rng(29).uniform(0, 1, (8, 8, 3))
        assert np.array_equal(downscale_reference(img, 1), img)

    def test_box_filter(self):
        img = np.array([[0.0, 0.0], [1.0, 1.0]])
        out = downscale_reference(img, 2)
        assert out.shape == (1, 1)
        assert out[0, 0] == 0.5

    def test_constant_preserved(self):
        img = np.full((16, 16, 3), 0.37)
        for i in (1, 2, 3):
            assert np.allclose(downscale_reference(img, i), 0.37, atol=1e-12)

    def test_too_small_rejected(self):
        with pytest.raises(DomainError):
            downscale_reference(np.zeros((1, 4)), 2)
        with pytest.raises(DomainError):
            downscale_reference(np.zeros((4, 4)), 0)
