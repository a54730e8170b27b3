import numpy as np
import pytest

from facefit.errors import InvalidArgumentError
from facefit.raster import rasterize, vertex_normals

from raster_oracle import oracle_rasterize


def random_soup(rng, n_tris, size=32):
    pts = rng.uniform(-4, size + 4, size=(n_tris * 3, 2))
    dep = rng.uniform(-1, 1, size=n_tris * 3)
    faces = np.arange(n_tris * 3).reshape(-1, 3)
    return pts, dep, faces


class TestRasterize:
    def test_empty_faces_all_background(self):
        fb = rasterize(np.zeros((0, 2)), np.zeros(0),
                       np.zeros((0, 3), dtype=int), 16, 16)
        assert not fb.coverage.any()
        assert (fb.face_id == -1).all()

    def test_halfplane_triangle_matches_signtest(self):
        # one large triangle with vertices on pixel-grid corners: its
        # hypotenuse crosses every pixel row
        pts = np.array([[0.0, 0.0], [16.0, 0.0], [0.0, 16.0]])
        dep = np.zeros(3)
        faces = np.array([[0, 1, 2]])
        fb = rasterize(pts, dep, faces, 16, 16)
        oracle_fid, _, _ = oracle_rasterize(pts, dep, faces, 16, 16)
        assert np.array_equal(fb.face_id, oracle_fid.astype(fb.face_id.dtype))

    def test_depth_order_picks_nearer(self):
        pts = np.array([[1.0, 1.0], [30.0, 2.0], [4.0, 28.0]])
        pts2 = np.vstack([pts, pts])
        dep = np.array([1.0] * 3 + [2.0] * 3)
        faces = np.array([[0, 1, 2], [3, 4, 5]])
        fb = rasterize(pts2, dep, faces, 32, 32)
        assert set(np.unique(fb.face_id[fb.coverage])) == {0}
        # swap depths: face 1 wins
        fb2 = rasterize(pts2, dep[::-1], faces, 32, 32)
        assert set(np.unique(fb2.face_id[fb2.coverage])) == {1}

    def test_equal_depth_tie_goes_to_lower_index(self):
        pts = np.array([[1.0, 1.0], [30.0, 2.0], [4.0, 28.0]])
        pts2 = np.vstack([pts, pts])
        dep = np.zeros(6)
        faces = np.array([[0, 1, 2], [3, 4, 5]])
        fb = rasterize(pts2, dep, faces, 32, 32)
        assert set(np.unique(fb.face_id[fb.coverage])) == {0}

    def test_degenerate_never_covers(self):
        pts = np.array([[1.0, 1.0], [20.0, 20.0], [10.5, 10.5],
                        [5.0, 5.0], [5.0, 5.0], [9.0, 2.0]])
        dep = np.zeros(6)
        faces = np.array([[0, 1, 2], [3, 4, 5]])  # collinear; repeated vertex
        fb = rasterize(pts, dep, faces, 24, 24)
        assert not fb.coverage.any()

    def test_barycentric_partition_of_unity(self):
        rng = np.random.default_rng(0)
        pts, dep, faces = random_soup(rng, 12)
        fb = rasterize(pts, dep, faces, 32, 32)
        sums = fb.bary[fb.coverage].sum(axis=1)
        assert np.abs(sums - 1.0).max() < 1e-9

    def test_coverage_count_invariant_under_face_permutation(self):
        rng = np.random.default_rng(1)
        pts, dep, faces = random_soup(rng, 10)
        fb = rasterize(pts, dep, faces, 32, 32)
        perm = rng.permutation(faces.shape[0])
        fb2 = rasterize(pts, dep, faces[perm], 32, 32)
        assert fb.coverage.sum() == fb2.coverage.sum()
        # depth winner is permutation-independent too
        assert np.array_equal(fb.depth, fb2.depth)

    @pytest.mark.parametrize("bands", [2, 3, 5, 7, 64])
    def test_band_count_does_not_change_output(self, bands):
        rng = np.random.default_rng(2)
        pts, dep, faces = random_soup(rng, 15)
        a = rasterize(pts, dep, faces, 32, 32, bands=1)
        b = rasterize(pts, dep, faces, 32, 32, bands=bands)
        assert a.face_id.tobytes() == b.face_id.tobytes()
        assert a.bary.tobytes() == b.bary.tobytes()
        assert a.depth.tobytes() == b.depth.tobytes()

    def test_adjacent_triangles_share_edges_without_double_cover(self):
        # a quad split along the diagonal: every covered pixel belongs to
        # exactly one face and the union fills the quad interior
        pts = np.array([[2.0, 2.0], [22.0, 2.0], [22.0, 22.0], [2.0, 22.0]])
        dep = np.zeros(4)
        faces = np.array([[0, 1, 2], [0, 2, 3]])
        fb = rasterize(pts, dep, faces, 24, 24)
        oracle_fid, _, _ = oracle_rasterize(pts, dep, faces, 24, 24)
        assert np.array_equal(fb.face_id, oracle_fid.astype(fb.face_id.dtype))

    def test_input_validation(self):
        with pytest.raises(InvalidArgumentError):
            rasterize(np.zeros((3, 2)), np.zeros(3),
                      np.array([[0, 1, 5]]), 8, 8)
        with pytest.raises(InvalidArgumentError):
            rasterize(np.zeros((3, 2)), np.zeros(3),
                      np.array([[0, 1, 2]]), 0, 8)

    def test_random_soups_match_oracle(self):
        # smaller-scale version of the acceptance sweep
        rng = np.random.default_rng(3)
        for _ in range(10):
            pts, dep, faces = random_soup(rng, 8)
            fb = rasterize(pts, dep, faces, 32, 32)
            fid, bary, _ = oracle_rasterize(pts, dep, faces, 32, 32)
            assert np.array_equal(fb.face_id.astype(np.int64), fid)
            cov = fid >= 0
            assert np.abs(fb.bary[cov] - bary[cov]).max() < 1e-9


class TestVertexNormals:
    def test_planar_grid_all_up(self, grid_basis):
        n = vertex_normals(grid_basis.template, grid_basis.faces)
        assert np.abs(n - np.array([0.0, 0.0, 1.0])).max() < 1e-12

    def test_unit_length(self, toy_basis):
        n = vertex_normals(toy_basis.template, toy_basis.faces)
        lens = np.linalg.norm(n, axis=1)
        assert np.abs(lens - 1.0).max() < 1e-9

    def test_cube_corner_hand_weighted(self):
        # cube with face diagonals meeting vertex 0 at (0,0,0): the three
        # incident cube faces each contribute two triangles whose
        # unnormalized cross products sum to weight 2 along the outward
        # face axis, so the accumulated corner normal is (-2,-2,-2),
        # normalized (-1,-1,-1)/sqrt(3)
        v = np.array([
            [0., 0., 0.], [1., 0., 0.], [1., 1., 0.], [0., 1., 0.],
            [0., 0., 1.], [1., 0., 1.], [1., 1., 1.], [0., 1., 1.],
        ])
        faces = np.array([
            [0, 2, 1], [0, 3, 2],  # z=0, outward -z
            [0, 1, 5], [0, 5, 4],  # y=0, outward -y
            [0, 4, 7], [0, 7, 3],  # x=0, outward -x
            [1, 2, 6], [1, 6, 5],  # x=1 side (keeps the mesh closed enough)
            [2, 3, 7], [2, 7, 6],
            [4, 5, 6], [4, 6, 7],
        ])
        n = vertex_normals(v, faces)
        expected = np.array([-1.0, -1.0, -1.0]) / np.sqrt(3.0)
        assert np.abs(n[0] - expected).max() < 1e-12

    def test_isolated_vertex_default(self):
        v = np.array([[0., 0., 0.], [1., 0., 0.], [0., 1., 0.], [9., 9., 9.]])
        faces = np.array([[0, 1, 2]])
        n = vertex_normals(v, faces)
        assert np.array_equal(n[3], [0.0, 0.0, 1.0])
