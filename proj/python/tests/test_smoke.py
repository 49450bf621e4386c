"""Smoke tests for the python bindings, cross-checked against scipy/numpy."""

import numpy as np
import pytest

sdfrecon = pytest.importorskip("sdfrecon")


def random_mask(rng, h=48, w=48, p=0.3):
    return rng.random((h, w)) < p


def test_distance_transform_matches_scipy():
    from scipy import ndimage

    rng = np.random.default_rng(7)
    for _ in range(20):
        mask = random_mask(rng)
        if not mask.any() or mask.all():
            continue
        dist_ext, dist_int = sdfrecon.distance_transform(mask)
        # scipy: distance of nonzero pixels to the nearest zero pixel
        ref_ext = ndimage.distance_transform_edt(~mask)
        ref_int = ndimage.distance_transform_edt(mask)
        assert np.allclose(dist_ext, ref_ext, atol=1e-12)
        assert np.allclose(dist_int, ref_int, atol=1e-12)


def test_importance_weights_are_reciprocal_distances():
    rng = np.random.default_rng(5)
    mask = np.zeros((64, 64), dtype=bool)
    mask[20:44, 20:44] = True
    w = sdfrecon.importance_weights(mask, "exterior")
    dist_ext, _ = sdfrecon.distance_transform(mask)
    outside = ~mask
    assert np.allclose(w[outside], 1.0 / (dist_ext[outside] * 2.0 / 64.0))
    assert (w[mask] == 0).all()


def test_lower_bound_brute_force():
    rng = np.random.default_rng(3)
    thetas = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    for _ in range(50):
        u = rng.uniform(-1, 1, 2)
        d = rng.uniform(0, 0.5)
        z = rng.uniform(1, 3)
        b = sdfrecon.sdf_lower_bound(u[0], u[1], z, d)
        # numpy brute force over the circle with per-theta linear solve
        v = np.stack([u[0] + d * np.cos(thetas), u[1] + d * np.sin(thetas),
                      np.ones_like(thetas)])
        x = np.array([z * u[0], z * u[1], z])
        zp = np.clip(v.T @ x / np.einsum("ij,ij->j", v, v), 0, None)
        best = np.sqrt(((x[:, None] - v * zp) ** 2).sum(axis=0).min())
        assert abs(b - best) < 1e-5

    # orthographic limit
    assert abs(sdfrecon.sdf_lower_bound_finite_focal(0.3, 0.4, 2.0, 0.25, 1e6) - 0.25) < 1e-3
    assert sdfrecon.sdf_lower_bound(0.3, 0.4, 2.0, 0.25, model="orthographic") == 0.25


def test_chamfer_matches_scipy_kdtree():
    from scipy.spatial import cKDTree

    rng = np.random.default_rng(11)
    a = rng.uniform(-1, 1, (400, 3))
    b = rng.uniform(-1, 1, (300, 3))
    acc, cov = sdfrecon.chamfer(a, b)
    ref_acc = cKDTree(b).query(a)[0].mean()
    ref_cov = cKDTree(a).query(b)[0].mean()
    assert abs(acc - ref_acc) < 1e-12
    assert abs(cov - ref_cov) < 1e-12


def test_icp_recovers_transform():
    rng = np.random.default_rng(13)
    gt = rng.uniform(-0.5, 0.5, (500, 3)) * np.array([1.0, 0.6, 0.4])
    ang = np.deg2rad(10.0)
    rot = np.array([[np.cos(ang), -np.sin(ang), 0],
                    [np.sin(ang), np.cos(ang), 0],
                    [0, 0, 1]])
    src = gt @ rot.T + np.array([0.05, 0, 0])
    R, t, registered = sdfrecon.icp_register(src, gt, 50)
    assert np.allclose(R @ rot, np.eye(3), atol=2e-3)
    acc, cov = sdfrecon.chamfer(registered, gt)
    assert acc < 5e-3


def test_marching_cubes_sphere():
    verts, faces = sdfrecon.marching_cubes_scene("sphere", resolution=64)
    assert len(faces) > 0
    radii = np.linalg.norm(verts, axis=1)
    assert np.abs(radii - 0.5).max() < 1.5 * (2.0 / 64.0)
    samples = sdfrecon.sample_surface(verts, faces, 5000, seed=3)
    assert abs(np.linalg.norm(samples, axis=1).mean() - 0.5) < 0.01


def test_scene_eval_anchors():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    vals = sdfrecon.scene_eval("sphere", pts)
    assert np.allclose(vals, [-0.5, 0.5])
    assert np.allclose(sdfrecon.scene_eval("torus", np.array([[0.5, 0.0, 0.0]])), [-0.15])


def test_positional_encoding_shape_and_values():
    enc = sdfrecon.positional_encoding(np.zeros((4, 3)), levels=6)
    assert enc.shape == (4, 39)
    block = enc[0, :13]
    assert block[0] == 0.0
    assert np.allclose(block[1::2], 1.0)  # cosines of zero
    assert np.allclose(block[2::2], 0.0)  # sines of zero


def test_field_roundtrip_and_gradients(tmp_path):
    field = sdfrecon.Field(width=32, levels=3, seed=9)
    assert field.param_count > 0
    pts = np.random.default_rng(1).uniform(-1, 1, (16, 3))
    f = field.sdf(pts)
    assert np.isfinite(f).all()

    path = str(tmp_path / "net.ckpt")
    field.save(path)
    again = sdfrecon.Field(path)
    assert np.array_equal(again.sdf(pts), f)

    # spatial gradients against numpy central differences
    g = field.sdf_grad(pts)
    h = 1e-3
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (field.sdf(pts + e) - field.sdf(pts - e)) / (2 * h)
        # float32 noise ~eps*|f|/h, and the odd relu kink inside the FD
        # interval; exact audits run in the double-precision C++ tests
        close = np.isclose(g[:, k], fd, rtol=1e-3, atol=3e-4)
        assert close.mean() >= 0.9

    rgb = field.rgb(pts)
    assert (rgb >= 0).all() and (rgb <= 1).all()


def test_field_quick_sphere_fit():
    field = sdfrecon.Field(width=32, levels=3, seed=4)
    mse = field.pretrain_sphere(radius=0.5, iterations=300, points=2000, lr=1e-3, seed=4)
    assert mse < 0.02
    center = field.sdf(np.zeros((1, 3)))[0]
    assert abs(center + 0.5) < 0.2
