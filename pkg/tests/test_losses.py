import numpy as np
import pytest

from facefit.errors import DegenerateInputError, InvalidArgumentError
from facefit.losses import (EMBED_DIM, LossWeights, dct_embedding,
                            identity_loss, landmark_loss, reg_loss,
                            texture_loss, total_loss, vis_texture_loss,
                            visibility_loss)
from facefit.pipeline import synth_target
from facefit.render import render


class TestLandmarkLoss:
    def test_exact_match_is_zero(self):
        p = np.random.default_rng(0).uniform(0, 64, size=(68, 2))
        assert float(landmark_loss(p, p.copy())) == 0.0

    def test_single_unit_offset(self):
        p = np.zeros((68, 2))
        q = p.copy()
        q[17, 0] = 1.0
        assert abs(float(landmark_loss(p, q)) - 1.0 / 68.0) < 1e-18

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(0, 64, size=(68, 2))
        q = rng.uniform(0, 64, size=(68, 2))
        acc = 0.0
        for i in range(68):
            acc += abs(p[i, 0] - q[i, 0]) + abs(p[i, 1] - q[i, 1])
        assert abs(float(landmark_loss(p, q)) - acc / 68.0) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        p, q = rng.random((68, 2)), rng.random((68, 2))
        assert float(landmark_loss(p, q)) == float(landmark_loss(q, p))

    def test_nan_rejected(self):
        p = np.zeros((68, 2))
        q = p.copy()
        q[0, 0] = np.nan
        with pytest.raises(InvalidArgumentError):
            landmark_loss(p, q)


class TestRegLoss:
    def test_zeros(self):
        assert float(reg_loss(np.zeros(5), np.zeros(3))) == 0.0

    def test_unit_vector(self):
        s = np.zeros(5)
        s[2] = 1.0
        assert float(reg_loss(s, np.zeros(3))) == 1.0

    def test_matches_dot_oracle(self):
        rng = np.random.default_rng(3)
        s, e = rng.normal(size=7), rng.normal(size=4)
        expected = float(np.dot(s, s) + np.dot(e, e))
        assert abs(float(reg_loss(s, e)) - expected) < 1e-15


class TestTextureLoss:
    def test_empty_mask_is_zero(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((5, 5, 3)), rng.random((5, 5, 3))
        assert float(texture_loss(a, b, np.zeros((5, 5)))) == 0.0

    def test_identical_images_zero(self):
        rng = np.random.default_rng(5)
        a = rng.random((5, 5, 3))
        mask = (rng.random((5, 5)) < 0.5).astype(np.uint8)
        assert float(texture_loss(a, a.copy(), mask)) == 0.0

    def test_hand_summed_2x2_case(self):
        a = np.zeros((2, 2, 3))
        b = np.zeros((2, 2, 3))
        b[0, 1, 2] = 0.5
        mask = np.zeros((2, 2))
        mask[0, 1] = 1.0
        assert abs(float(texture_loss(a, b, mask)) - 0.5 / 3.0) < 1e-18

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        a, b = rng.random((4, 4, 3)), rng.random((4, 4, 3))
        mask = (rng.random((4, 4)) < 0.6).astype(np.uint8)
        assert float(texture_loss(a, b, mask)) == float(texture_loss(b, a, mask))

    def test_binary_mask_required(self):
        a = np.zeros((2, 2, 3))
        with pytest.raises(InvalidArgumentError):
            texture_loss(a, a, np.full((2, 2), 0.5))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            texture_loss(np.zeros((2, 2, 3)), np.zeros((3, 3, 3)),
                         np.zeros((2, 2)))


@pytest.fixture(scope="module")
def scene(toy_basis):
    tgt = synth_target(toy_basis, seed=21, width=32, height=32,
                       texture_res=64)
    return toy_basis, tgt


class TestVisTextureLoss:

    def test_k1_base_pose_reduces_to_texture_loss(self, scene):
        basis, tgt = scene
        from facefit.assets import procedural_texture
        other = procedural_texture(64, seed=5)
        r = render(basis, tgt.params, other, 32, 32)
        expected = float(texture_loss(tgt.image, r.image, tgt.skin_mask))
        got = float(vis_texture_loss(tgt.image, basis, other, tgt.params,
                                     [tgt.params.pose], [tgt.skin_mask]))
        assert got == expected  # bit-for-bit

    def test_all_masks_empty_zero(self, scene):
        basis, tgt = scene
        empty = np.zeros((32, 32), dtype=np.uint8)
        poses = [tgt.params.pose, tgt.params.pose + np.array([0, 0.3, 0, 0, 0, 0])]
        out = vis_texture_loss(tgt.image, basis, tgt.texture, tgt.params,
                               poses, [empty, empty])
        assert float(out) == 0.0

    def test_k2_equals_mean_of_single_views(self, scene):
        basis, tgt = scene
        rng = np.random.default_rng(7)
        mask1 = (rng.random((32, 32)) < 0.7).astype(np.uint8)
        mask2 = (rng.random((32, 32)) < 0.7).astype(np.uint8)
        pose2 = tgt.params.pose + np.array([0.0, 0.25, 0.0, 0.0, 0.0, 0.0])
        target2 = np.clip(rng.random((32, 32, 3)), 0, 1)

        both = float(vis_texture_loss(
            tgt.image, basis, tgt.texture, tgt.params,
            [tgt.params.pose, pose2], [mask1, mask2],
            targets=[tgt.image, target2]))
        one = float(vis_texture_loss(
            tgt.image, basis, tgt.texture, tgt.params,
            [tgt.params.pose], [mask1], targets=[tgt.image]))
        two = float(vis_texture_loss(
            tgt.image, basis, tgt.texture, tgt.params,
            [pose2], [mask2], targets=[target2]))
        assert abs(both - (one + two) / 2.0) < 1e-15

    def test_empty_pose_list_rejected(self, scene):
        basis, tgt = scene
        with pytest.raises(InvalidArgumentError):
            vis_texture_loss(tgt.image, basis, tgt.texture, tgt.params, [], [])


class TestIdentityLoss:
    def test_self_is_exact_zero(self):
        img = np.random.default_rng(8).random((16, 16, 3))
        assert float(identity_loss(dct_embedding, img, img.copy())) == 0.0

    def test_orthogonal_embeddings_give_one(self):
        def embed(img):
            # marker-driven orthogonal features
            if float(np.asarray(img).sum()) > 0:
                return np.array([1.0, 0.0])
            return np.array([0.0, 1.0])

        a = np.ones((2, 2, 3))
        b = np.zeros((2, 2, 3))
        assert float(identity_loss(embed, a, b)) == 1.0

    def test_random_pair_matches_cosine_oracle(self):
        rng = np.random.default_rng(9)
        a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
        fa, fb = np.asarray(dct_embedding(a)), np.asarray(dct_embedding(b))
        cos = float(fa @ fb / (np.linalg.norm(fa) * np.linalg.norm(fb)))
        assert abs(float(identity_loss(dct_embedding, a, b)) - (1 - cos)) < 1e-12

    def test_constant_image_degenerate(self):
        # a constant image has only a DC component, which the embedding
        # excludes, so its norm is zero
        flat = np.full((16, 16, 3), 0.5)
        other = np.random.default_rng(10).random((16, 16, 3))
        with pytest.raises(DegenerateInputError):
            identity_loss(dct_embedding, flat, other)

    def test_embedding_width(self):
        img = np.random.default_rng(11).random((32, 32, 3))
        assert np.asarray(dct_embedding(img)).shape == (EMBED_DIM,)


class TestVisibilityLoss:
    def test_equal_masks_zero(self):
        m = (np.random.default_rng(12).random((8, 8)) < 0.5).astype(float)
        assert float(visibility_loss(m, m.copy())) == 0.0

    def test_complementary_full_masks(self):
        a = np.ones((6, 6))
        assert float(visibility_loss(a, 1.0 - a)) == 1.0

    def test_single_differing_pixel(self):
        a = np.zeros((10, 10))
        b = a.copy()
        b[3, 4] = 1.0
        assert abs(float(visibility_loss(a, b)) - 0.01) < 1e-18

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            visibility_loss(np.zeros((2, 2)), np.zeros((3, 3)))


class TestTotalLoss:
    def test_all_zero(self):
        parts = {k: 0.0 for k in ("lmk", "tex", "vis_tex", "id", "reg", "vis")}
        assert float(total_loss(parts)) == 0.0

    def test_unit_weights_sum(self):
        parts = dict(zip(("lmk", "tex", "vis_tex", "id", "reg", "vis"),
                         (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)))
        assert float(total_loss(parts)) == 21.0

    def test_weighted_dot_oracle(self):
        rng = np.random.default_rng(13)
        vals = rng.random(6)
        ws = rng.random(6)
        parts = dict(zip(("lmk", "tex", "vis_tex", "id", "reg", "vis"), vals))
        weights = LossWeights(*ws)
        assert abs(float(total_loss(parts, weights)) - float(vals @ ws)) < 1e-15

    def test_negative_weight_rejected(self):
        with pytest.raises(InvalidArgumentError):
            LossWeights(w_lmk=-0.1)

    def test_nonfinite_part_rejected(self):
        with pytest.raises(InvalidArgumentError):
            total_loss({"lmk": np.inf})


class TestNonNegativity:
    def test_losses_nonnegative_on_random_inputs(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            p, q = rng.random((68, 2)), rng.random((68, 2))
            assert float(landmark_loss(p, q)) >= 0.0
            a, b = rng.random((4, 4, 3)), rng.random((4, 4, 3))
            m = (rng.random((4, 4)) < 0.5).astype(np.uint8)
            assert float(texture_loss(a, b, m)) >= 0.0
            assert float(reg_loss(rng.normal(size=3), rng.normal(size=2))) >= 0.0
            ia = rng.random((16, 16, 3))
            ib = rng.random((16, 16, 3))
            assert float(identity_loss(dct_embedding, ia, ib)) >= 0.0
