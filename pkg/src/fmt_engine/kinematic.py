"""Monte Carlo over the kinematic measure: excluded volumes and virial coefficients.

Randomness is organised in fixed-size chunks of ``CHUNK`` samples. Chunk
``c`` of estimator stream ``s`` draws particle ``p`` from an independent
Philox generator seeded by ``SeedSequence(seed, spawn_key=(s, c, p))``, so
every estimate is a deterministic function of ``(inputs, seed)`` whatever
the number of worker threads. Chunk partial sums are combined in chunk
order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from . import _backend
from .geometry import (Mesh, Sphere, Spheroid, _canonical, circumradius, minkowski_measures,
                       surface_quadrature)
from .weights import (FOUR_PI, intersection_determinant, three_body_euler_form,
                      two_body_weight_expansion)

__all__ = [
    "VOL_SO3",
    "CHUNK",
    "Pose",
    "MCEstimate",
    "KinematicError",
    "OverlapNonConvergence",
    "sphere_volume_Ok",
    "random_quaternions",
    "quat_to_matrix",
    "sample_pose",
    "intersects",
    "intersects_batch",
    "excluded_volume_analytic",
    "excluded_volume_mc",
    "second_virial",
    "third_virial_mc",
    "third_virial_stack_mc",
    "resolve_threads",
]

CHUNK = 1 << 16
VOL_SO3 = 8.0 * math.pi**2  # O_2 * O_1

_STREAM_EXCLUDED = 1
_STREAM_B3 = 2
_STREAM_STACK = 3


class KinematicError(ValueError):
    pass


class OverlapNonConvergence(RuntimeError):
    """The overlap iteration did not converge; carries the offending poses."""

    def __init__(self, poseA, poseB, iterations):
        self.poseA = poseA
        self.poseB = poseB
        super().__init__(
            f"overlap test did not converge after {iterations} iterations "
            f"(poseA={poseA}, poseB={poseB})"
        )


def sphere_volume_Ok(k) -> float:
    """Surface volume of the unit k-sphere, ``2 pi^((k+1)/2) / Gamma((k+1)/2)``."""
    k = int(k)
    if k < 1:
        raise KinematicError("k must be >= 1")
    return float(2.0 * math.pi ** ((k + 1) / 2.0) / gamma((k + 1) / 2.0))


# ---------------------------------------------------------------------------
# poses


def random_quaternions(rng, n):
    """Haar-uniform unit quaternions ``(w, x, y, z)``, shape (n, 4)."""
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1)[:, None]


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - z * w)
    R[..., 0, 2] = 2 * (x * z + y * w)
    R[..., 1, 0] = 2 * (x * y + z * w)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - x * w)
    R[..., 2, 0] = 2 * (x * z - y * w)
    R[..., 2, 1] = 2 * (y * z + x * w)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


@dataclass(frozen=True)
class Pose:
    """Rigid motion: unit quaternion ``(w, x, y, z)`` and translation."""

    rotation: tuple = (1.0, 0.0, 0.0, 0.0)
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float)
        nq = np.linalg.norm(q)
        if q.shape != (4,) or not nq > 0:
            raise KinematicError("rotation must be a non-zero quaternion")
        object.__setattr__(self, "rotation", tuple(float(x) for x in q / nq))
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,):
            raise KinematicError("translation must be a 3-vector")
        object.__setattr__(self, "translation", tuple(float(x) for x in t))

    @property
    def matrix(self):
        return quat_to_matrix(np.array(self.rotation))

    @property
    def t(self):
        return np.array(self.translation)


def _box_bounds(translation_box):
    if np.ndim(translation_box) == 0:
        h = float(translation_box)
        lo, hi = np.full(3, -h), np.full(3, h)
    else:
        lo, hi = (np.asarray(x, dtype=float) for x in translation_box)
    if np.any(hi < lo):
        raise KinematicError("empty translation box")
    return lo, hi


def sample_pose(rng, translation_box) -> Pose:
    """Draw one pose: Haar rotation and uniform translation in the box.

    ``translation_box`` is a half-width (cube centred at the origin) or a
    ``(lo, hi)`` pair of corner vectors.
    """
    lo, hi = _box_bounds(translation_box)
    q = random_quaternions(rng, 1)[0]
    t = lo + (hi - lo) * rng.random(3)
    return Pose(tuple(q), tuple(t))


# ---------------------------------------------------------------------------
# overlap


def _shape_args(body):
    body = _canonical(body)
    if isinstance(body, Sphere):
        return 0, np.array([body.radius, 0.0]), np.zeros((0, 3))
    if isinstance(body, Spheroid):
        return 1, np.array([body.a, body.c]), np.zeros((0, 3))
    if isinstance(body, Mesh):
        return 2, np.zeros(2), np.ascontiguousarray(body.vertices)
    raise KinematicError(f"unsupported body {type(body).__name__}")


def intersects_batch(bodyA, RA, tA, bodyB, RB, tB, backend=None):
    """Vectorised overlap indicator for posed body pairs.

    Parameters
    ----------
    RA, RB : ndarray, shape (n, 3, 3)
    tA, tB : ndarray, shape (n, 3)
    backend : {"cython", "python"}, optional
        Force a kernel backend; default is the one selected at import.

    Returns
    -------
    ndarray of bool
    """
    bodyA, bodyB = _canonical(bodyA), _canonical(bodyB)
    tA = np.asarray(tA, dtype=float)
    tB = np.asarray(tB, dtype=float)
    if isinstance(bodyA, Sphere) and isinstance(bodyB, Sphere):
        d = tA - tB
        return np.einsum("ij,ij->i", d, d) < (bodyA.radius + bodyB.radius) ** 2
    core = _backend.core if backend is None else _backend.get(backend)
    kA, pA, vA = _shape_args(bodyA)
    kB, pB, vB = _shape_args(bodyB)
    try:
        out = core.gjk_overlap_batch(kA, pA, vA, np.ascontiguousarray(RA, dtype=float), tA,
                                     kB, pB, vB, np.ascontiguousarray(RB, dtype=float), tB)
    except core.GJKNonConvergence as exc:
        i = exc.index
        ra = np.asarray(RA)[i]
        rb = np.asarray(RB)[i]
        raise OverlapNonConvergence(
            {"R": ra.tolist(), "t": tA[i].tolist()}, {"R": rb.tolist(), "t": tB[i].tolist()},
            exc.iterations) from exc
    return out.astype(bool)


def intersects(bodyA, poseA, bodyB, poseB) -> bool:
    """True iff the posed convex bodies overlap."""
    return bool(intersects_batch(bodyA, poseA.matrix[None], poseA.t[None],
                                 bodyB, poseB.matrix[None], poseB.t[None])[0])


# ---------------------------------------------------------------------------
# Monte Carlo machinery


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int
    estimator: str = ""
    extras: dict = field(default_factory=dict)

    def as_dict(self):
        d = {"estimator": self.estimator, "n": self.n_samples, "seed": self.seed,
             "mean": self.mean, "stderr": self.stderr}
        d.update(self.extras)
        return d


def resolve_threads(threads=None):
    import os

    if threads is None:
        threads = os.environ.get("FMT_ENGINE_THREADS", "1")
    threads = int(threads)
    if threads < 1:
        raise KinematicError("threads must be >= 1")
    return threads


def _rng(seed, stream, chunk, particle):
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream, chunk, particle))
    return np.random.Generator(np.random.Philox(ss))


def _run_chunks(fn, n_samples, threads):
    """Evaluate ``fn(chunk_index, size) -> (count, mean, m2)`` and merge in order."""
    sizes = [min(CHUNK, n_samples - c * CHUNK) for c in range((n_samples + CHUNK - 1) // CHUNK)]
    jobs = list(enumerate(sizes))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: fn(*a), jobs))
    else:
        parts = [fn(*a) for a in jobs]
    n, mean, m2 = 0, 0.0, 0.0
    for nb, mb, m2b in parts:  # Chan et al. pairwise merge, fixed order
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * nb / tot
        m2 = m2 + m2b + delta * delta * n * nb / tot
        n = tot
    return n, mean, m2


def _chunk_stats(y):
    y = np.asarray(y, dtype=float)
    m = float(np.mean(y))
    return len(y), m, float(np.sum((y - m) ** 2))


def _estimate(n, mean, m2, seed, name, **extras):
    var = m2 / (n - 1) if n > 1 else 0.0
    return MCEstimate(float(mean), float(math.sqrt(var / n)), int(n), int(seed), name, extras)


def _check_seed(seed):
    if seed is None:
        raise KinematicError("an explicit integer seed is required")
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise KinematicError("seed must be a 64-bit unsigned integer")
    return seed


# ---------------------------------------------------------------------------
# excluded volume and B2


def excluded_volume_analytic(bodyA, bodyB) -> float:
    """Rotation-averaged excluded volume ``V1 + V2 + (M1 S2 + M2 S1) / 4 pi``."""
    a = minkowski_measures(bodyA)
    b = minkowski_measures(bodyB)
    return (a.volume + b.volume
            + (a.mean_curvature_integral * b.surface + b.mean_curvature_integral * a.surface) / FOUR_PI)


def excluded_volume_mc(bodyA, bodyB, n_samples, seed, half_width=None, threads=None) -> MCEstimate:
    """Hit-or-miss estimate of the excluded volume.

    Body A sits at the origin; body B gets a Haar rotation and a uniform
    translation in a cube of half-width ``rA + rB + 1e-6`` (circumradii).
    ``half_width=0`` is a degenerate probe that places B at the origin and
    reports the hit fraction; any other box smaller than the overlap
    support is rejected.
    """
    seed = _check_seed(seed)
    n_samples = int(n_samples)
    if n_samples < 10_000:
        raise KinematicError("excluded_volume_mc needs n_samples >= 1e4")
    threads = resolve_threads(threads)
    reach = circumradius(bodyA) + circumradius(bodyB)
    if half_width is None:
        h = reach + 1e-6
    else:
        h = float(half_width)
        if h < 0 or (0 < h < reach):
            raise KinematicError(
                f"translation box half-width {h} cannot contain the overlap support (needs >= {reach})")
    box = (2.0 * h) ** 3

    def chunk(c, size):
        q = random_quaternions(_rng(seed, _STREAM_EXCLUDED, c, 0), size)
        t = (2.0 * _rng(seed, _STREAM_EXCLUDED, c, 1).random((size, 3)) - 1.0) * h
        eye = np.broadcast_to(np.eye(3), (size, 3, 3))
        hit = intersects_batch(bodyA, eye, np.zeros((size, 3)), bodyB, quat_to_matrix(q), t)
        return _chunk_stats(hit.astype(float))

    n, p, m2 = _run_chunks(chunk, n_samples, threads)
    est = _estimate(n, p, m2, seed, "excluded_volume_mc", hit_fraction=float(p), half_width=h)
    return MCEstimate(box * est.mean, box * est.stderr, n, seed, est.estimator, est.extras)


def second_virial(bodyA, bodyB=None, method="analytic", n_samples=1_000_000, seed=None,
                  threads=None):
    """``B2 = V_excl / 2``; returns a float (analytic) or an MCEstimate."""
    bodyB = bodyA if bodyB is None else bodyB
    if method == "analytic":
        return 0.5 * excluded_volume_analytic(bodyA, bodyB)
    if method == "mc":
        e = excluded_volume_mc(bodyA, bodyB, n_samples, seed, threads=threads)
        return MCEstimate(0.5 * e.mean, 0.5 * e.stderr, e.n_samples, e.seed, "second_virial_mc",
                          e.extras)
    raise KinematicError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# third virial


def third_virial_mc(body, n_samples, seed, threads=None) -> MCEstimate:
    """Exact third virial coefficient by hit-or-miss over two posed copies.

    ``B3 = (1/3) int int f12 f13 f23`` with hard-body Mayer functions
    taken as overlap indicators (positive convention). Bodies 2 and 3 are
    placed in the cube of half-width ``2 r + 1e-6`` around body 1.
    """
    seed = _check_seed(seed)
    n_samples = int(n_samples)
    if n_samples < 100_000:
        raise KinematicError("third_virial_mc needs n_samples >= 1e5")
    threads = resolve_threads(threads)
    h = 2.0 * circumradius(body) + 1e-6
    scale = (2.0 * h) ** 6 / 3.0

    def chunk(c, size):
        q2 = random_quaternions(_rng(seed, _STREAM_B3, c, 0), size)
        t2 = (2.0 * _rng(seed, _STREAM_B3, c, 1).random((size, 3)) - 1.0) * h
        q3 = random_quaternions(_rng(seed, _STREAM_B3, c, 2), size)
        t3 = (2.0 * _rng(seed, _STREAM_B3, c, 3).random((size, 3)) - 1.0) * h
        R2, R3 = quat_to_matrix(q2), quat_to_matrix(q3)
        eye = np.broadcast_to(np.eye(3), (size, 3, 3))
        zero = np.zeros((size, 3))
        hit = intersects_batch(body, eye, zero, body, R2, t2)
        idx = np.nonzero(hit)[0]
        h13 = intersects_batch(body, eye[idx], zero[idx], body, R3[idx], t3[idx])
        idx = idx[h13]
        h23 = intersects_batch(body, R2[idx], t2[idx], body, R3[idx], t3[idx])
        y = np.zeros(size)
        y[idx[h23]] = scale
        return _chunk_stats(y)

    n, mean, m2 = _run_chunks(chunk, n_samples, threads)
    return _estimate(n, mean, m2, seed, "third_virial_mc", half_width=h)


_KERNELS = ("tarazona", "rosenfeld", "euler_product")


def _three_body_kernel(n1, n2, n3, kernel):
    if kernel == "tarazona":
        M3 = intersection_determinant(np.stack([n1, n2, n3], axis=-2))
        return (three_body_euler_form(n1, n2, n3) - M3) / (16.0 * math.pi)
    if kernel == "rosenfeld":
        # s0^3 - 3 s0 s1.s1 symmetrised over the three bodies
        c = (np.einsum("ij,ij->i", n1, n2) + np.einsum("ij,ij->i", n1, n3)
             + np.einsum("ij,ij->i", n2, n3))
        return (1.0 - c) / (24.0 * math.pi)
    if kernel == "euler_product":
        return three_body_euler_form(n1, n2, n3) / (8.0 * math.pi)
    raise KinematicError(f"unknown three-body kernel {kernel!r}; choose from {_KERNELS}")


class _RotatedPatches:
    __slots__ = ("normal", "kappa1", "kappa2", "dir1", "dir2")

    def __init__(self, ps, idx, R=None):
        def rot(a):
            return a if R is None else np.einsum("nij,nj->ni", R, a)
        self.normal = rot(ps.normal[idx])
        self.dir1 = rot(ps.dir1[idx])
        self.dir2 = rot(ps.dir2[idx])
        self.kappa1 = ps.kappa1[idx]
        self.kappa2 = ps.kappa2[idx]


def third_virial_stack_mc(body, n_samples, seed, threads=None, kernel="tarazona", L_max=2,
                          resolution=4096) -> MCEstimate:
    """Third virial coefficient of the single-intersection-point stack.

    Per sample, three surface points are drawn area-weighted (bodies 2 and
    3 with Haar rotations) and the estimator

    ``Y = V^2 S w_chi(1) + 2 V S^2 P(1,2) / 8 pi + 2 S^3 T(1,2,3)``

    is averaged, where ``P`` is the symmetrised two-body weight expansion
    truncated at ``L_max`` and ``T`` the selected three-body kernel.
    """
    seed = _check_seed(seed)
    n_samples = int(n_samples)
    if n_samples < 100_000:
        raise KinematicError("third_virial_stack_mc needs n_samples >= 1e5")
    if kernel not in _KERNELS:
        raise KinematicError(f"unknown three-body kernel {kernel!r}; choose from {_KERNELS}")
    threads = resolve_threads(threads)
    ps = surface_quadrature(body, resolution)
    cdf = ps.cumulative_area()
    mm = minkowski_measures(body)
    V = mm.volume
    S = ps.total_area

    def pick(rng, size):
        return np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(cdf) - 1)

    def chunk(c, size):
        i1 = pick(_rng(seed, _STREAM_STACK, c, 0), size)
        i2 = pick(_rng(seed, _STREAM_STACK, c, 1), size)
        i3 = pick(_rng(seed, _STREAM_STACK, c, 2), size)
        R2 = quat_to_matrix(random_quaternions(_rng(seed, _STREAM_STACK, c, 3), size))
        R3 = quat_to_matrix(random_quaternions(_rng(seed, _STREAM_STACK, c, 4), size))
        p1 = _RotatedPatches(ps, i1)
        p2 = _RotatedPatches(ps, i2, R2)
        p3 = _RotatedPatches(ps, i3, R3)
        wchi = p1.kappa1 * p1.kappa2 / FOUR_PI
        pair = two_body_weight_expansion(p1, p2, L_max)
        tri = _three_body_kernel(p1.normal, p2.normal, p3.normal, kernel)
        y = V * V * S * wchi + 2.0 * V * S * S * pair / (8.0 * math.pi) + 2.0 * S**3 * tri
        return _chunk_stats(y)

    n, mean, m2 = _run_chunks(chunk, n_samples, threads)
    return _estimate(n, mean, m2, seed, "third_virial_stack_mc", kernel=kernel, L_max=int(L_max))
