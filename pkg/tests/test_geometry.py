import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundsynth.errors import ParameterError, ShapeError
from groundsynth.geometry import (
    DepthMap,
    PointCloud,
    SatelliteView,
    StatisticalOutlierRemoval,
    TriangleMesh,
    compute_texture_coords,
    fuse_point_clouds,
    identity_stage,
    mesh_validate,
    pack_atlas,
    refine_points,
    triangulate_grid,
    unproject_depth,
)


def rot_x(deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def make_view(h=128, w=128, f=100.0, rotation=None, translation=None, seed=0):
    rng = np.random.default_rng(seed)
    return SatelliteView(
        rng.integers(0, 256, (h, w, 3), dtype=np.uint8),
        f,
        f,
        w / 2,
        h / 2,
        np.eye(3) if rotation is None else rotation,
        np.zeros(3) if translation is None else translation,
    )


# --- unproject -----------------------------------------------------------


def test_unproject_constant_depth():
    view = make_view()
    cloud = unproject_depth(DepthMap(np.full((128, 128), 5.0)), view)
    assert len(cloud) == 16_384
    center = cloud.points[64 * 128 + 64]
    assert np.array_equal(center, [0.0, 0.0, 5.0])
    assert np.array_equal(cloud.colors[64 * 128 + 64], view.image[64, 64])


def test_unproject_all_invalid():
    d = np.zeros((8, 8))
    d[::2] = np.nan
    assert len(unproject_depth(DepthMap(d), make_view(8, 8))) == 0


def test_unproject_shape_mismatch():
    with pytest.raises(ShapeError):
        unproject_depth(DepthMap(np.ones((4, 5))), make_view(5, 4))


def test_unproject_matches_per_pixel_oracle():
    rng = np.random.default_rng(3)
    r = rot_y(20) @ rot_x(-35)
    t = np.array([1.5, -2.0, 40.0])
    view = SatelliteView(np.zeros((30, 40, 3), np.uint8), 80.0, 90.0, 19.3, 15.1, r, t)
    d = rng.uniform(1, 50, (30, 40))
    d[rng.random((30, 40)) < 0.3] = 0.0
    d[rng.random((30, 40)) < 0.1] = np.nan
    cloud = unproject_depth(DepthMap(d), view)
    valid = [(v, u) for v in range(30) for u in range(40) if d[v, u] > 0]
    assert len(cloud) == len(valid)
    for k in rng.choice(len(valid), 100, replace=False):
        v, u = valid[k]
        cam = [d[v, u] * (u - 19.3) / 80.0, d[v, u] * (v - 15.1) / 90.0, d[v, u]]
        world = [sum(r[i][j] * (cam[i] - t[i]) for i in range(3)) for j in range(3)]
        assert np.allclose(cloud.points[k], world, atol=1e-9, rtol=0)


@settings(max_examples=25, deadline=None)
@given(
    yaw=st.floats(-180, 180), pitch=st.floats(-80, 80), seed=st.integers(0, 1000)
)
def test_unproject_project_round_trip(yaw, pitch, seed):
    rng = np.random.default_rng(seed)
    view = make_view(12, 16, 30.0, rot_y(yaw) @ rot_x(pitch), rng.normal(0, 10, 3))
    depth = rng.uniform(0.5, 100, (12, 16))
    cloud = unproject_depth(DepthMap(depth), view)
    x, y, z = view.project(cloud.points)
    rows, cols = np.mgrid[0:12, 0:16]
    assert np.abs(x - cols.ravel()).max() < 1e-6
    assert np.abs(y - rows.ravel()).max() < 1e-6


def test_view_rejects_non_orthonormal():
    with pytest.raises(ParameterError):
        make_view(rotation=np.diag([1.0, 1.0, 1.01]))


# --- fusion ----------------------------------------------------------------


def test_fuse_identical_clouds_idempotent():
    rng = np.random.default_rng(0)
    c = PointCloud(rng.uniform(-5, 5, (500, 3)))
    once = fuse_point_clouds([c], 0.5)
    twice = fuse_point_clouds([c, c], 0.5)
    assert len(once) == len(twice)
    np.testing.assert_allclose(once.points, twice.points, atol=1e-12)


def test_fuse_empty():
    assert len(fuse_point_clouds([], 0.5)) == 0


@pytest.mark.parametrize("voxel", [0.0, -1.0])
def test_fuse_rejects_bad_voxel(voxel):
    with pytest.raises(ParameterError):
        fuse_point_clouds([], voxel)


def test_fuse_voxel_count_matches_hash_set():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-4, 4, (1000, 3))
    fused = fuse_point_clouds([PointCloud(pts)], 0.5)
    keys = {tuple(math.floor(c / 0.5) for c in p) for p in pts.tolist()}
    assert len(fused) == len(keys)
    # lexicographic voxel order
    fused_keys = [tuple(math.floor(c / 0.5) for c in p) for p in fused.points.tolist()]
    assert fused_keys == sorted(keys)


def test_fuse_centroid_and_color():
    a = PointCloud([[0.1, 0.1, 0.1], [0.3, 0.3, 0.3]], np.array([[0, 0, 0], [10, 20, 31]], np.uint8))
    out = fuse_point_clouds([a], 1.0)
    np.testing.assert_allclose(out.points, [[0.2, 0.2, 0.2]])
    assert out.colors.tolist() == [[5, 10, 16]]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), perm_seed=st.integers(0, 10_000))
def test_fuse_permutation_invariant(seed, perm_seed):
    rng = np.random.default_rng(seed)
    clouds = [
        PointCloud(rng.normal(0, 2, (n, 3)), rng.integers(0, 256, (n, 3), dtype=np.uint8))
        for n in rng.integers(0, 60, 4)
    ]
    perm = np.random.default_rng(perm_seed).permutation(len(clouds))
    a = fuse_point_clouds(clouds, 0.7)
    b = fuse_point_clouds([clouds[i] for i in perm], 0.7)
    assert np.array_equal(a.points, b.points)
    assert (a.colors is None and b.colors is None) or np.array_equal(a.colors, b.colors)


# --- refinement ----------------------------------------------------------


def test_identity_stage_is_bit_exact():
    c = PointCloud(np.random.default_rng(0).random((20, 3)))
    out = refine_points(c, identity_stage)
    assert np.array_equal(out.points, c.points)


def test_outlier_removal_drops_far_point():
    grid = np.array(list(itertools.product(np.linspace(0, 1, 6), repeat=3)))
    pts = np.vstack([grid, [[25.0, 25.0, 25.0]]])
    out = refine_points(PointCloud(pts), StatisticalOutlierRemoval(k=8, std_multiplier=2.0))

    # brute-force k-NN statistics
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    knn = np.sort(dist, axis=1)[:, 1:9].mean(axis=1)
    keep = knn <= knn.mean() + 2.0 * knn.std()
    assert not keep[-1] and keep[:-1].all()
    assert np.array_equal(out.points, pts[keep])


def test_outlier_removal_empty():
    assert len(refine_points(PointCloud.empty(), StatisticalOutlierRemoval())) == 0


# --- triangulation -------------------------------------------------------


@pytest.mark.parametrize("h,w", [(2, 2), (5, 7), (16, 16)])
def test_grid_triangle_count(h, w):
    view = make_view(h, w, 50.0)
    mesh = triangulate_grid(DepthMap(np.full((h, w), 10.0)), view, 1e6, 100.0)
    assert len(mesh.faces) == 2 * (h - 1) * (w - 1)
    assert mesh_validate(mesh) == []


def test_grid_split_pattern():
    view = make_view(2, 2, 50.0)
    mesh = triangulate_grid(DepthMap(np.full((2, 2), 10.0)), view, 1e6, 100.0)
    assert mesh.faces.tolist() == [[0, 1, 2], [1, 3, 2]]


def test_depth_step_is_not_bridged():
    h, w = 20, 20
    d = np.full((h, w), 10.0)
    d[:, 10:] = 100.0
    view = make_view(h, w, 50.0)
    mesh = triangulate_grid(DepthMap(d), view, 1e6, 3.0)
    x, _, _ = view.project(mesh.vertices)
    cols = np.rint(x).astype(int)[mesh.faces]
    crossing = (cols.min(axis=1) < 10) & (cols.max(axis=1) >= 10)
    assert not crossing.any()
    assert len(mesh.faces) == 2 * 19 * 9 * 2


def test_all_invalid_gives_empty_mesh():
    mesh = triangulate_grid(DepthMap(np.zeros((6, 6))), make_view(6, 6), 5.0, 1.5)
    assert len(mesh.faces) == 0 and len(mesh.vertices) == 0


@pytest.mark.parametrize("edge,ratio", [(0.0, 2.0), (1.0, 1.0)])
def test_triangulate_parameter_errors(edge, ratio):
    with pytest.raises(ParameterError):
        triangulate_grid(DepthMap(np.ones((3, 3))), make_view(3, 3), edge, ratio)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), max_edge=st.floats(0.05, 3.0))
def test_no_edge_exceeds_limit(seed, max_edge):
    rng = np.random.default_rng(seed)
    d = rng.uniform(5, 8, (10, 12))
    d[rng.random(d.shape) < 0.2] = 0
    mesh = triangulate_grid(DepthMap(d), make_view(10, 12, 20.0), max_edge, 1.5)
    assert mesh_validate(mesh) == []
    for f in mesh.faces:
        p = mesh.vertices[f]
        for i in range(3):
            assert np.linalg.norm(p[i] - p[(i + 1) % 3]) <= max_edge


def test_edges_count_unique_pairs():
    mesh = TriangleMesh(np.eye(3).tolist() + [[1, 1, 1]], [[0, 1, 2], [1, 3, 2]])
    assert len(mesh.edges) == 5


def test_mesh_validate_flags_problems():
    bad = TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]], np.full((1, 3, 2), 1.5), None)
    problems = mesh_validate(bad)
    assert any("degenerate" in p for p in problems)
    assert any("uv outside" in p for p in problems)
    assert any("atlas" in p for p in problems)
    assert mesh_validate(TriangleMesh([[0, 0, 0]], [[0, 1, 2]])) == ["face index out of range"]


# --- texturing -----------------------------------------------------------


def test_single_triangle_uv_is_normalized_projection():
    view = make_view(64, 64, 60.0)
    tri = np.array([[-1.0, -1.0, 10.0], [1.0, -1.0, 10.0], [0.0, 1.0, 10.0]])
    mesh = compute_texture_coords(TriangleMesh(tri, [[0, 1, 2]]), [view])
    atlas, origins, _ = pack_atlas([view.image])
    ah, aw = atlas.shape[:2]
    assert origins == [(0, 0)]
    x = 60.0 * tri[:, 0] / 10.0 + 32
    y = 60.0 * tri[:, 1] / 10.0 + 32
    expected = np.stack([(x + 0.5) / aw, (y + 0.5) / ah], axis=1)
    np.testing.assert_allclose(mesh.face_uvs[0], expected, atol=1e-6)
    assert np.array_equal(mesh.atlas[:64, :64], view.image)
    assert mesh_validate(mesh) == []


def ray_hits_triangle(origin, direction, tri):
    """Moller-Trumbore, returning distance or None."""
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    p = np.cross(direction, e2)
    det = e1 @ p
    if abs(det) < 1e-12:
        return None
    s = origin - tri[0]
    u = (s @ p) / det
    q = np.cross(s, e1)
    v = (direction @ q) / det
    t = (e2 @ q) / det
    if u < 0 or v < 0 or u + v > 1 or t <= 0:
        return None
    return t


def test_occluded_triangle_gets_fallback():
    view = make_view(64, 64, 60.0)
    front = [[-2, -2, 5], [2, -2, 5], [0, 2, 5]]
    back = [[-0.5, -0.5, 10], [0.5, -0.5, 10], [0.0, 0.5, 10]]
    mesh = TriangleMesh(front + back, [[0, 1, 2], [3, 4, 5]])

    # Ray-cast oracle: every ray toward the back triangle's corners hits the front one first.
    verts = mesh.vertices
    for corner in verts[3:]:
        d = corner / np.linalg.norm(corner)
        t_front = ray_hits_triangle(np.zeros(3), d, verts[:3])
        assert t_front is not None and t_front < np.linalg.norm(corner)

    out = compute_texture_coords(mesh, [view])
    _, _, fallback = pack_atlas([view.image])
    assert np.allclose(out.face_uvs[1], fallback)
    assert not np.allclose(out.face_uvs[0], fallback)
    ah, aw = out.atlas.shape[:2]
    u, v = out.face_uvs[1, 0]
    assert out.atlas[int(v * ah), int(u * aw)].tolist() == [128, 128, 128]


def test_face_picks_view_with_larger_projected_area():
    # A quad in the plane z = 0 tilted so one view sees it head-on and another obliquely.
    quad = np.array([[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]], dtype=float)
    mesh = TriangleMesh(quad, [[0, 1, 2], [0, 2, 3]])
    # head-on: camera at z = -10 looking +z
    head_on = make_view(64, 64, 40.0, np.eye(3), [0, 0, 10], seed=1)
    # oblique: rotated 70 degrees about y, same distance
    r = rot_y(70)
    center = np.array([-10 * math.sin(math.radians(70)), 0, -10 * math.cos(math.radians(70))])
    oblique = make_view(64, 64, 40.0, r.T, -r.T @ center, seed=2)

    def area(view, f):
        x, y, _ = view.project(quad[f])
        return 0.5 * abs((x[1] - x[0]) * (y[2] - y[0]) - (y[1] - y[0]) * (x[2] - x[0]))

    for views in ([head_on, oblique], [oblique, head_on]):
        out = compute_texture_coords(mesh, views)
        atlas, origins, _ = pack_atlas([v.image for v in views])
        for fi, f in enumerate(mesh.faces):
            areas = [area(v, f) for v in views]
            best = int(np.argmax(areas))
            ox, oy = origins[best]
            x, y, _ = views[best].project(quad[f])
            exp = np.stack([(ox + x + 0.5) / atlas.shape[1], (oy + y + 0.5) / atlas.shape[0]], axis=1)
            np.testing.assert_allclose(out.face_uvs[fi], exp, atol=1e-9)


def test_texture_needs_views():
    with pytest.raises(ParameterError):
        compute_texture_coords(TriangleMesh.empty(), [])


def test_atlas_packing_is_disjoint():
    ims = [np.full((h, w, 3), k, np.uint8) for k, (h, w) in enumerate([(10, 30), (20, 5), (7, 7), (30, 30)], 1)]
    atlas, origins, _ = pack_atlas(ims)
    for (ox, oy), im in zip(origins, ims):
        assert np.array_equal(atlas[oy : oy + im.shape[0], ox : ox + im.shape[1]], im)
