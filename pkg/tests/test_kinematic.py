import functools
import math

import numpy as np
import pytest
from scipy import stats
from scipy.optimize import linprog

from fmt_engine import _backend, _core_py
from fmt_engine.geometry import Sphere, Spheroid, minkowski_measures, scale_body
from fmt_engine.kinematic import (VOL_SO3, KinematicError, MCEstimate, OverlapNonConvergence, Pose,
                                  excluded_volume_analytic, excluded_volume_mc, intersects,
                                  intersects_batch, quat_to_matrix, random_quaternions, sample_pose,
                                  second_virial, sphere_volume_Ok, third_virial_mc,
                                  third_virial_stack_mc)
from fmt_engine.meshes import icosphere

V1 = 4 * math.pi / 3


# ---------------------------------------------------------------------------
# independent overlap oracles


def perram_wertheim(axesA, RA, tA, axesB, RB, tB, iters=100):
    """Contact function max_l l(1-l) r^T [(1-l) A^-1 + l B^-1]^-1 r; overlap iff < 1."""
    Ainv = np.einsum("nij,j,nkj->nik", RA, np.asarray(axesA) ** 2, RA)
    Binv = np.einsum("nij,j,nkj->nik", RB, np.asarray(axesB) ** 2, RB)
    r = tB - tA

    def F(lam):
        M = (1 - lam)[:, None, None] * Ainv + lam[:, None, None] * Binv
        return lam * (1 - lam) * np.einsum("ni,ni->n", r, np.linalg.solve(M, r[..., None])[..., 0])

    lo, hi = np.zeros(len(r)), np.ones(len(r))
    g = (math.sqrt(5) - 1) / 2
    for _ in range(iters):  # golden section, F is concave in l
        a = hi - g * (hi - lo)
        b = lo + g * (hi - lo)
        left = F(a) > F(b)
        hi = np.where(left, b, hi)
        lo = np.where(left, lo, a)
    return F(0.5 * (lo + hi))


def polytope_overlap_lp(VA, VB):
    """Feasibility of sum la_i VA_i = sum mu_j VB_j on the two simplices."""
    na, nb = len(VA), len(VB)
    A_eq = np.zeros((5, na + nb))
    A_eq[:3, :na] = VA.T
    A_eq[:3, na:] = -VB.T
    A_eq[3, :na] = 1
    A_eq[4, na:] = 1
    b = np.array([0, 0, 0, 1, 1.0])
    res = linprog(np.zeros(na + nb), A_eq=A_eq, b_eq=b, bounds=(0, None), method="highs")
    return res.status == 0


def _random_poses(rng, n, h):
    RA = quat_to_matrix(random_quaternions(rng, n))
    RB = quat_to_matrix(random_quaternions(rng, n))
    tA = np.zeros((n, 3))
    tB = (2 * rng.random((n, 3)) - 1) * h
    return RA, tA, RB, tB


# ---------------------------------------------------------------------------


def test_sphere_volume_Ok():
    assert sphere_volume_Ok(1) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_volume_Ok(2) == pytest.approx(4 * math.pi, rel=1e-15)
    assert sphere_volume_Ok(3) == pytest.approx(2 * math.pi**2, rel=1e-15)
    for k in range(3, 12):
        assert sphere_volume_Ok(k) == pytest.approx(2 * math.pi * sphere_volume_Ok(k - 2) / (k - 1), rel=1e-13)
    assert VOL_SO3 == pytest.approx(sphere_volume_Ok(2) * sphere_volume_Ok(1), rel=1e-15)
    with pytest.raises(KinematicError):
        sphere_volume_Ok(0)


def test_pose_normalises_and_validates():
    p = Pose((2.0, 0, 0, 0), (1, 2, 3))
    assert abs(np.linalg.norm(p.rotation) - 1) <= 1e-12
    assert np.allclose(p.matrix, np.eye(3))
    with pytest.raises(KinematicError):
        Pose((0, 0, 0, 0))


def test_rotation_matrices_orthonormal():
    R = quat_to_matrix(random_quaternions(np.random.default_rng(0), 1000))
    assert np.allclose(np.einsum("nij,nkj->nik", R, R), np.eye(3), atol=1e-13)
    assert np.allclose(np.linalg.det(R), 1.0, atol=1e-13)


def test_haar_mean_rotation_zero():
    n = 1_000_000
    R = quat_to_matrix(random_quaternions(np.random.default_rng(1), n))
    mean = R.mean(axis=0)
    sigma = math.sqrt(1.0 / 3.0 / n)  # each entry has variance 1/3
    assert np.all(np.abs(mean) <= 3.5 * sigma)


def test_haar_angle_distribution_chi2():
    n = 200_000
    q = random_quaternions(np.random.default_rng(2), n)
    theta = 2 * np.arccos(np.clip(np.abs(q[:, 0]), 0, 1))
    edges = np.linspace(0, math.pi, 31)
    obs, _ = np.histogram(theta, edges)
    # density (1 - cos t)/pi integrates to (t - sin t)/pi
    cdf = (edges - np.sin(edges)) / math.pi
    exp = n * np.diff(cdf)
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_sample_pose_determinism_and_box():
    a = [sample_pose(np.random.default_rng(9), 2.0) for _ in range(3)]
    b = [sample_pose(np.random.default_rng(9), 2.0) for _ in range(3)]
    assert a == b
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = sample_pose(rng, ([0, 0, 0], [1, 2, 3]))
        assert np.all(p.t >= 0) and np.all(p.t <= [1, 2, 3])
    with pytest.raises(KinematicError):
        sample_pose(rng, ([0, 0, 0], [1, -1, 1]))


def test_intersects_spheres():
    s = Sphere(1.0)
    assert intersects(s, Pose(), s, Pose(translation=(1.9, 0, 0)))
    assert not intersects(s, Pose(), s, Pose(translation=(2.1, 0, 0)))


def test_intersects_spheroid_axes():
    sp = Spheroid(1.0, 2.0)
    assert intersects(sp, Pose(), sp, Pose(translation=(0, 0, 3.9)))
    assert not intersects(sp, Pose(), sp, Pose(translation=(0, 0, 4.1)))
    assert not intersects(sp, Pose(), sp, Pose(translation=(2.1, 0, 0)))


@pytest.mark.parametrize("pair", [((1.0, 2.0), (1.0, 2.0)), ((1.0, 2.0), (1.3, 1.3)), ((2.0, 0.6), (1.0, 2.0))])
def test_gjk_vs_perram_wertheim(pair):
    (a1, c1), (a2, c2) = pair
    A, B = Spheroid(a1, c1), Spheroid(a2, c2)
    rng = np.random.default_rng(hash(pair) % 2**32)
    n = 100_000
    h = max(a1, c1) + max(a2, c2)
    RA, tA, RB, tB = _random_poses(rng, n, h)
    got = intersects_batch(A, RA, tA, B, RB, tB)
    F = perram_wertheim((a1, a1, c1), RA, tA, (a2, a2, c2), RB, tB)
    clear = np.abs(F - 1) > 1e-6
    assert clear.sum() > 0.99 * n
    assert np.array_equal(got[clear], (F < 1)[clear])
    assert 0.05 < got.mean() < 0.95


def test_gjk_vs_point_sampling():
    # points strictly inside B that land inside A prove overlap; GJK must agree
    A, B = Spheroid(1.0, 2.0), Spheroid(1.0, 2.0)
    rng = np.random.default_rng(12)
    n = 2000
    RA, tA, RB, tB = _random_poses(rng, n, 4.0)
    got = intersects_batch(A, RA, tA, B, RB, tB)
    u = rng.standard_normal((4000, 3))
    u *= (rng.random(4000) ** (1 / 3) / np.linalg.norm(u, axis=1))[:, None]
    pts = u * [1.0, 1.0, 2.0]
    for i in range(n):
        x = pts @ RB[i].T + tB[i]
        y = x @ RA[i]  # to A's frame
        inside = np.sum((y / [1.0, 1.0, 2.0]) ** 2, axis=1) < 1 - 1e-9
        if inside.any():
            assert got[i]


def test_gjk_polytopes_vs_lp():
    A = icosphere(1, 1.0)
    B = scale_body(icosphere(0, 1.0), 1.2)
    rng = np.random.default_rng(4)
    n = 300
    RA, tA, RB, tB = _random_poses(rng, n, 2.3)
    got = intersects_batch(A, RA, tA, B, RB, tB)
    for i in range(n):
        VA = A.vertices @ RA[i].T + tA[i]
        VB = B.vertices @ RB[i].T + tB[i]
        assert got[i] == polytope_overlap_lp(VA, VB)


def test_gjk_mesh_vs_sphere_via_pw():
    # a fine icosphere against a spheroid approximates the sphere-spheroid oracle
    M = icosphere(5, 1.0)
    B = Spheroid(0.7, 1.4)
    rng = np.random.default_rng(6)
    n = 2000
    RA, tA, RB, tB = _random_poses(rng, n, 2.4)
    got = intersects_batch(M, RA, tA, B, RB, tB)
    F = perram_wertheim((1, 1, 1), RA, tA, (0.7, 0.7, 1.4), RB, tB)
    clear = np.abs(F - 1) > 0.02  # icosphere(5) lies within 2e-4 of the sphere
    assert np.array_equal(got[clear], (F < 1)[clear])


@pytest.mark.skipif(_backend.BACKEND != "cython", reason="compiled backend not built")
@pytest.mark.parametrize("bodies", [(Spheroid(1.0, 2.0), Spheroid(1.0, 2.0)),
                                    (icosphere(1), Spheroid(0.5, 1.5)),
                                    (icosphere(1), scale_body(icosphere(2), 0.8))])
def test_backend_agreement(bodies):
    A, B = bodies
    rng = np.random.default_rng(10)
    RA, tA, RB, tB = _random_poses(rng, 3000, 2.8)
    a = intersects_batch(A, RA, tA, B, RB, tB, backend="python")
    b = intersects_batch(A, RA, tA, B, RB, tB, backend="cython")
    assert np.array_equal(a, b)


def test_nonconvergence_carries_poses(monkeypatch):
    monkeypatch.setattr(_core_py, "gjk_overlap_batch",
                        functools.partial(_core_py.gjk_overlap_batch, max_iter=1))
    rng = np.random.default_rng(0)
    RA, tA, RB, tB = _random_poses(rng, 50, 3.0)
    with pytest.raises(OverlapNonConvergence) as ei:
        intersects_batch(Spheroid(1, 2), RA, tA, Spheroid(1, 2), RB, tB, backend="python")
    assert "R" in ei.value.poseA and "t" in ei.value.poseB


# ---------------------------------------------------------------------------
# excluded volume / B2


def test_excluded_volume_analytic_examples():
    s = Sphere(1.0)
    assert excluded_volume_analytic(s, s) == pytest.approx(32 * math.pi / 3, rel=1e-15)
    assert excluded_volume_analytic(s, Sphere(1e-9)) == pytest.approx(V1, rel=1e-8)
    A, B = Spheroid(1.0, 2.0), icosphere(2)
    assert excluded_volume_analytic(A, B) == excluded_volume_analytic(B, A)


def test_excluded_volume_mc_spheres():
    e = excluded_volume_mc(Sphere(1.0), Sphere(1.0), 200_000, seed=1)
    assert abs(e.mean - 32 * math.pi / 3) <= 3 * e.stderr
    assert e.n_samples == 200_000 and e.seed == 1


def test_excluded_volume_mc_spheroid():
    sp = Spheroid(1.0, 2.0)
    e = excluded_volume_mc(sp, sp, 200_000, seed=2)
    assert abs(e.mean - excluded_volume_analytic(sp, sp)) <= 3 * e.stderr


def test_excluded_volume_mc_mesh():
    m = icosphere(2)
    e = excluded_volume_mc(m, Spheroid(0.5, 1.0), 100_000, seed=3)
    assert abs(e.mean - excluded_volume_analytic(m, Spheroid(0.5, 1.0))) <= 3 * e.stderr


def test_excluded_volume_mc_symmetric_in_distribution():
    A, B = Spheroid(1.0, 2.0), Sphere(0.7)
    ab = excluded_volume_mc(A, B, 100_000, seed=4)
    ba = excluded_volume_mc(B, A, 100_000, seed=5)
    assert abs(ab.mean - ba.mean) <= 3 * math.hypot(ab.stderr, ba.stderr)


def test_zero_box_probe():
    sp = Spheroid(1.0, 2.0)
    e = excluded_volume_mc(sp, sp, 10_000, seed=0, half_width=0.0)
    assert e.extras["hit_fraction"] == 1.0


def test_small_box_rejected():
    with pytest.raises(KinematicError):
        excluded_volume_mc(Sphere(1.0), Sphere(1.0), 10_000, seed=0, half_width=1.0)


def test_mc_argument_checks():
    with pytest.raises(KinematicError):
        excluded_volume_mc(Sphere(1.0), Sphere(1.0), 1000, seed=0)
    with pytest.raises(KinematicError):
        excluded_volume_mc(Sphere(1.0), Sphere(1.0), 10_000, seed=None)
    with pytest.raises(KinematicError):
        third_virial_mc(Sphere(1.0), 10_000, seed=0)


def test_stderr_scaling():
    sp = Spheroid(1.0, 2.0)
    a = excluded_volume_mc(sp, sp, 100_000, seed=6)
    b = excluded_volume_mc(sp, sp, 200_000, seed=6)
    assert a.stderr / b.stderr == pytest.approx(math.sqrt(2), rel=0.05)


def test_stderr_definition():
    e = excluded_volume_mc(Sphere(1.0), Sphere(1.0), 50_000, seed=8)
    p = e.extras["hit_fraction"]
    box = (2 * e.extras["half_width"]) ** 3
    n = e.n_samples
    assert e.stderr == pytest.approx(box * math.sqrt(p * (1 - p) / (n - 1)), rel=1e-10)


def test_mc_deterministic_across_threads():
    sp = Spheroid(1.0, 2.0)
    a = excluded_volume_mc(sp, sp, 150_000, seed=42, threads=1)
    b = excluded_volume_mc(sp, sp, 150_000, seed=42, threads=4)
    c = excluded_volume_mc(sp, sp, 150_000, seed=42, threads=3)
    assert a == b == c


def test_second_virial():
    s = Sphere(1.0)
    assert second_virial(s) / V1 == pytest.approx(4.0, abs=1e-12)
    e = second_virial(s, method="mc", n_samples=100_000, seed=7)
    assert isinstance(e, MCEstimate)
    assert abs(e.mean / V1 - 4.0) <= 3 * e.stderr / V1
    with pytest.raises(KinematicError):
        second_virial(s, method="bogus")


@pytest.mark.parametrize("lam", [0.5, 2.0, 3.7])
def test_second_virial_scaling(lam):
    sp = Spheroid(1.0, 2.0)
    assert second_virial(scale_body(sp, lam)) == pytest.approx(lam**3 * second_virial(sp), rel=1e-13)


def test_mc_scaling_power_of_two_is_exact():
    sp = Spheroid(1.0, 2.0)
    a = excluded_volume_mc(sp, sp, 20_000, seed=3, half_width=4.5)
    b = excluded_volume_mc(scale_body(sp, 2.0), scale_body(sp, 2.0), 20_000, seed=3, half_width=9.0)
    assert b.mean == pytest.approx(8 * a.mean, rel=1e-12)
    # the B3 box carries a fixed 1e-6 margin that does not dilate
    a3 = third_virial_mc(sp, 100_000, seed=3)
    b3 = third_virial_mc(scale_body(sp, 2.0), 100_000, seed=3)
    assert b3.mean == pytest.approx(64 * a3.mean, rel=1e-5)


# ---------------------------------------------------------------------------
# B3


def test_third_virial_spheres():
    e = third_virial_mc(Sphere(1.0), 300_000, seed=3)
    assert abs(e.mean / V1**2 - 10.0) <= 3 * e.stderr / V1**2


def test_third_virial_point_limit():
    e = third_virial_mc(Sphere(1e-3), 100_000, seed=1)
    assert 0 <= e.mean <= 1e-15


def test_third_virial_spheroid_reproducible():
    sp = Spheroid(1.0, 2.0)
    a = third_virial_mc(sp, 100_000, seed=11)
    b = third_virial_mc(sp, 100_000, seed=11, threads=2)
    assert a == b and a.mean > 0


def test_stack_spheres():
    e = third_virial_stack_mc(Sphere(1.0), 200_000, seed=3)
    assert abs(e.mean / V1**2 - 10.0) <= 3 * e.stderr / V1**2


def test_stack_vs_exact_spheres_combined():
    s = Sphere(1.0)
    a = third_virial_stack_mc(s, 200_000, seed=21)
    b = third_virial_mc(s, 300_000, seed=22)
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.stderr, b.stderr)


def test_stack_kernel_choice_distinguishable():
    # the bare 1/8 pi product kernel overshoots the sphere value (15 instead of 10)
    e = third_virial_stack_mc(Sphere(1.0), 200_000, seed=3, kernel="euler_product")
    assert abs(e.mean / V1**2 - 15.0) <= 3 * e.stderr / V1**2
    r = third_virial_stack_mc(Sphere(1.0), 200_000, seed=3, kernel="rosenfeld")
    assert abs(r.mean / V1**2 - 10.0) <= 3 * r.stderr / V1**2
    with pytest.raises(KinematicError):
        third_virial_stack_mc(Sphere(1.0), 200_000, seed=3, kernel="bogus")


def test_stack_spheroid_discrepancy_seed_stable():
    sp = Spheroid(1.0, 2.0)
    a = third_virial_stack_mc(sp, 100_000, seed=5)
    b = third_virial_stack_mc(sp, 100_000, seed=5, threads=2)
    assert a == b
    assert math.isfinite(a.mean) and a.mean > 0
