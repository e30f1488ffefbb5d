"""Pure-Python reference implementation of the compiled kernels.

Signatures and algorithms mirror ``_core.pyx`` statement for statement so
that both backends take identical decisions. Shape kinds: 0 sphere
(``par[0]`` radius), 1 spheroid (``par[0] = a``, ``par[1] = c``), 2 convex
vertex set.
"""
import math

import numpy as np

BACKEND = "python"

SPHERE, SPHEROID, POLYTOPE = 0, 1, 2


class GJKNonConvergence(RuntimeError):
    def __init__(self, index, iterations):
        self.index = int(index)
        self.iterations = int(iterations)
        super().__init__(f"GJK did not converge for sample {index} after {iterations} iterations")


def _local_support(kind, par, verts, d):
    if kind == SPHERE:
        nrm = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        if nrm == 0.0:
            return [par[0], 0.0, 0.0]
        s = par[0] / nrm
        return [d[0] * s, d[1] * s, d[2] * s]
    if kind == SPHEROID:
        a2 = par[0] * par[0]
        c2 = par[1] * par[1]
        h = math.sqrt(a2 * (d[0] * d[0] + d[1] * d[1]) + c2 * d[2] * d[2])
        if h == 0.0:
            return [par[0], 0.0, 0.0]
        return [a2 * d[0] / h, a2 * d[1] / h, c2 * d[2] / h]
    best = -math.inf
    bi = 0
    for i in range(verts.shape[0]):
        p = verts[i, 0] * d[0] + verts[i, 1] * d[1] + verts[i, 2] * d[2]
        if p > best:
            best = p
            bi = i
    return [verts[bi, 0], verts[bi, 1], verts[bi, 2]]


def _world_support(kind, par, verts, R, t, d):
    # rotate d into the body frame, take support, rotate back
    dl = [R[0][0] * d[0] + R[1][0] * d[1] + R[2][0] * d[2],
          R[0][1] * d[0] + R[1][1] * d[1] + R[2][1] * d[2],
          R[0][2] * d[0] + R[1][2] * d[1] + R[2][2] * d[2]]
    s = _local_support(kind, par, verts, dl)
    return [R[0][0] * s[0] + R[0][1] * s[1] + R[0][2] * s[2] + t[0],
            R[1][0] * s[0] + R[1][1] * s[1] + R[1][2] * s[2] + t[1],
            R[2][0] * s[0] + R[2][1] * s[1] + R[2][2] * s[2] + t[2]]


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _sub(a, b):
    return [a[0] - b[0], a[1] - b[1], a[2] - b[2]]


def _cross(a, b):
    return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]


def _closest_segment(a, b):
    ab = _sub(b, a)
    t = -_dot(a, ab)
    if t <= 0.0:
        return a, [a]
    den = _dot(ab, ab)
    if t >= den:
        return b, [b]
    t = t / den
    return [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]], [a, b]


def _closest_triangle(a, b, c):
    # Voronoi-region walk for the origin against triangle abc
    ab = _sub(b, a)
    ac = _sub(c, a)
    ap = [-a[0], -a[1], -a[2]]
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    if d1 <= 0.0 and d2 <= 0.0:
        return a, [a]
    bp = [-b[0], -b[1], -b[2]]
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    if d3 >= 0.0 and d4 <= d3:
        return b, [b]
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return [a[0] + v * ab[0], a[1] + v * ab[1], a[2] + v * ab[2]], [a, b]
    cp = [-c[0], -c[1], -c[2]]
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    if d6 >= 0.0 and d5 <= d6:
        return c, [c]
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return [a[0] + w * ac[0], a[1] + w * ac[1], a[2] + w * ac[2]], [a, c]
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return [b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]), b[2] + w * (c[2] - b[2])], [b, c]
    den = 1.0 / (va + vb + vc)
    v = vb * den
    w = vc * den
    return [a[0] + ab[0] * v + ac[0] * w, a[1] + ab[1] * v + ac[1] * w,
            a[2] + ab[2] * v + ac[2] * w], [a, b, c]


def _outside_plane(a, b, c, d):
    # origin and d on opposite sides of plane abc; a flat tetrahedron
    # (sd == 0) counts as outside so that the face fallback is used
    n = _cross(_sub(b, a), _sub(c, a))
    so = -_dot(a, n)
    sd = _dot(_sub(d, a), n)
    return so * sd < 0.0 or sd == 0.0


def _closest_tetra(a, b, c, d):
    best = None
    best_d2 = math.inf
    inside = True
    for (p, q, r, s) in ((a, b, c, d), (a, c, d, b), (a, d, b, c), (b, d, c, a)):
        if _outside_plane(p, q, r, s):
            inside = False
            x, simp = _closest_triangle(p, q, r)
            dd = _dot(x, x)
            if dd < best_d2:
                best_d2 = dd
                best = (x, simp)
    if inside:
        return [0.0, 0.0, 0.0], [a, b, c, d], True
    return best[0], best[1], False


def gjk_overlap(kindA, parA, vertsA, RA, tA, kindB, parB, vertsB, RB, tB,
                eps=1e-12, max_iter=128):
    """Boolean GJK on the Minkowski difference ``A - B``.

    Returns ``(overlap, iterations)``; ``iterations < 0`` flags
    non-convergence.
    """
    v = [tA[0] - tB[0], tA[1] - tB[1], tA[2] - tB[2]]
    if _dot(v, v) == 0.0:
        v = [1.0, 0.0, 0.0]
    simplex = []
    scale = 1.0
    for it in range(max_iter):
        nv = [-v[0], -v[1], -v[2]]
        pa = _world_support(kindA, parA, vertsA, RA, tA, nv)
        pb = _world_support(kindB, parB, vertsB, RB, tB, v)
        w = _sub(pa, pb)
        if it == 0:
            scale = max(1.0, math.sqrt(_dot(w, w)))
        if _dot(v, w) > 0.0:
            return False, it + 1
        simplex.append(w)
        k = len(simplex)
        if k == 1:
            x, simplex = simplex[0], [simplex[0]]
        elif k == 2:
            x, simplex = _closest_segment(simplex[0], simplex[1])
        elif k == 3:
            x, simplex = _closest_triangle(simplex[0], simplex[1], simplex[2])
        else:
            x, simplex, inside = _closest_tetra(simplex[0], simplex[1], simplex[2], simplex[3])
            if inside:
                return True, it + 1
        vv = _dot(x, x)
        if vv <= (eps * scale) ** 2:
            return True, it + 1
        if _dot(v, v) - _dot(x, v) <= 0.0 and it > 0 and vv >= _dot(v, v):
            # no progress: distance has converged to a positive value
            return False, it + 1
        v = x
    return False, -max_iter


def gjk_overlap_batch(kindA, parA, vertsA, RA, tA, kindB, parB, vertsB, RB, tB,
                      eps=1e-12, max_iter=128):
    """Batched overlap test. Pose arrays have shapes (n, 3, 3) and (n, 3).

    Raises
    ------
    GJKNonConvergence
        With the index of the first failing sample.
    """
    n = RA.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    parA = [float(x) for x in parA]
    parB = [float(x) for x in parB]
    for i in range(n):
        ok, it = gjk_overlap(kindA, parA, vertsA, RA[i].tolist(), tA[i].tolist(),
                             kindB, parB, vertsB, RB[i].tolist(), tB[i].tolist(), eps, max_iter)
        if it < 0:
            raise GJKNonConvergence(i, max_iter)
        out[i] = 1 if ok else 0
    return out


def convolve_multi(ext, kernels):
    """Direct convolution ``out[k, i] = sum_m ext[i + width - 1 - m] w[k, m]``.

    ``ext`` has length ``n + 2P`` and each kernel row length ``2P + 1``
    (index ``m = -P..P``); returns shape ``(nk, n)``. Equivalent to
    ``np.convolve(ext, w, "valid")`` per row.
    """
    ext = np.asarray(ext, dtype=float)
    kernels = np.asarray(kernels, dtype=float)
    nk, width = kernels.shape
    n = ext.shape[0] - width + 1
    out = np.zeros((nk, n))
    for m in range(width):
        seg = ext[width - 1 - m:width - 1 - m + n]
        out += kernels[:, m:m + 1] * seg[None, :]
    return out


def correlate_multi(ext, kernels):
    """Direct correlation ``out[i] = sum_k sum_m ext[k, i + m] w[k, m]``.

    ``ext`` has shape ``(nk, n + width - 1)``; returns the summed field of
    length ``n``, the adjoint of :func:`convolve_multi` summed over rows.
    """
    ext = np.asarray(ext, dtype=float)
    kernels = np.asarray(kernels, dtype=float)
    nk, width = kernels.shape
    n = ext.shape[1] - width + 1
    out = np.zeros(n)
    for m in range(width):
        out += np.einsum("k,ki->i", kernels[:, m], ext[:, m:m + n])
    return out
