# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: batched GJK overlap tests and direct multi-kernel convolution.

Mirrors ``_core_py`` statement for statement.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()

BACKEND = "cython"

DEF SPHERE = 0
DEF SPHEROID = 1
DEF POLYTOPE = 2


class GJKNonConvergence(RuntimeError):
    def __init__(self, index, iterations):
        self.index = int(index)
        self.iterations = int(iterations)
        super().__init__(f"GJK did not converge for sample {index} after {iterations} iterations")


cdef struct Shape:
    int kind
    double p0
    double p1
    const double* verts
    Py_ssize_t nv


cdef inline double dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline void local_support(const Shape* s, const double* d, double* out) noexcept nogil:
    cdef double nrm, sc, a2, c2, h, best, p
    cdef Py_ssize_t i, bi
    if s.kind == SPHERE:
        nrm = sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        if nrm == 0.0:
            out[0] = s.p0; out[1] = 0.0; out[2] = 0.0
            return
        sc = s.p0 / nrm
        out[0] = d[0] * sc; out[1] = d[1] * sc; out[2] = d[2] * sc
        return
    if s.kind == SPHEROID:
        a2 = s.p0 * s.p0
        c2 = s.p1 * s.p1
        h = sqrt(a2 * (d[0] * d[0] + d[1] * d[1]) + c2 * d[2] * d[2])
        if h == 0.0:
            out[0] = s.p0; out[1] = 0.0; out[2] = 0.0
            return
        out[0] = a2 * d[0] / h; out[1] = a2 * d[1] / h; out[2] = c2 * d[2] / h
        return
    best = -INFINITY
    bi = 0
    for i in range(s.nv):
        p = s.verts[3 * i] * d[0] + s.verts[3 * i + 1] * d[1] + s.verts[3 * i + 2] * d[2]
        if p > best:
            best = p
            bi = i
    out[0] = s.verts[3 * bi]; out[1] = s.verts[3 * bi + 1]; out[2] = s.verts[3 * bi + 2]


cdef inline void world_support(const Shape* s, const double* R, const double* t,
                               const double* d, double* out) noexcept nogil:
    cdef double dl[3]
    cdef double sl[3]
    dl[0] = R[0] * d[0] + R[3] * d[1] + R[6] * d[2]
    dl[1] = R[1] * d[0] + R[4] * d[1] + R[7] * d[2]
    dl[2] = R[2] * d[0] + R[5] * d[1] + R[8] * d[2]
    local_support(s, dl, sl)
    out[0] = R[0] * sl[0] + R[1] * sl[1] + R[2] * sl[2] + t[0]
    out[1] = R[3] * sl[0] + R[4] * sl[1] + R[5] * sl[2] + t[1]
    out[2] = R[6] * sl[0] + R[7] * sl[1] + R[8] * sl[2] + t[2]


cdef inline void copy3(const double* a, double* b) noexcept nogil:
    b[0] = a[0]; b[1] = a[1]; b[2] = a[2]


cdef int closest_segment(double* S, double* x) noexcept nogil:
    # S holds up to 4 points (row-major); returns the reduced simplex size
    cdef double ab[3]
    cdef double t, den
    ab[0] = S[3] - S[0]; ab[1] = S[4] - S[1]; ab[2] = S[5] - S[2]
    t = -dot3(S, ab)
    if t <= 0.0:
        copy3(S, x)
        return 1
    den = dot3(ab, ab)
    if t >= den:
        copy3(S + 3, x)
        copy3(S + 3, S)
        return 1
    t = t / den
    x[0] = S[0] + t * ab[0]; x[1] = S[1] + t * ab[1]; x[2] = S[2] + t * ab[2]
    return 2


cdef int closest_triangle(const double* a, const double* b, const double* c,
                          double* x, double* out) noexcept nogil:
    # writes the reduced simplex into out and the closest point into x
    cdef double ab[3]
    cdef double ac[3]
    cdef double d1, d2, d3, d4, d5, d6, va, vb, vc, v, w, den
    ab[0] = b[0] - a[0]; ab[1] = b[1] - a[1]; ab[2] = b[2] - a[2]
    ac[0] = c[0] - a[0]; ac[1] = c[1] - a[1]; ac[2] = c[2] - a[2]
    d1 = -dot3(ab, a)
    d2 = -dot3(ac, a)
    if d1 <= 0.0 and d2 <= 0.0:
        copy3(a, x); copy3(a, out)
        return 1
    d3 = -dot3(ab, b)
    d4 = -dot3(ac, b)
    if d3 >= 0.0 and d4 <= d3:
        copy3(b, x); copy3(b, out)
        return 1
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        x[0] = a[0] + v * ab[0]; x[1] = a[1] + v * ab[1]; x[2] = a[2] + v * ab[2]
        copy3(a, out); copy3(b, out + 3)
        return 2
    d5 = -dot3(ab, c)
    d6 = -dot3(ac, c)
    if d6 >= 0.0 and d5 <= d6:
        copy3(c, x); copy3(c, out)
        return 1
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        x[0] = a[0] + w * ac[0]; x[1] = a[1] + w * ac[1]; x[2] = a[2] + w * ac[2]
        copy3(a, out); copy3(c, out + 3)
        return 2
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        x[0] = b[0] + w * (c[0] - b[0]); x[1] = b[1] + w * (c[1] - b[1]); x[2] = b[2] + w * (c[2] - b[2])
        copy3(b, out); copy3(c, out + 3)
        return 2
    den = 1.0 / (va + vb + vc)
    v = vb * den
    w = vc * den
    x[0] = a[0] + ab[0] * v + ac[0] * w
    x[1] = a[1] + ab[1] * v + ac[1] * w
    x[2] = a[2] + ab[2] * v + ac[2] * w
    copy3(a, out); copy3(b, out + 3); copy3(c, out + 6)
    return 3


cdef inline bint outside_plane(const double* a, const double* b, const double* c,
                               const double* d) noexcept nogil:
    cdef double u[3]
    cdef double v[3]
    cdef double n[3]
    cdef double e[3]
    cdef double so, sd
    u[0] = b[0] - a[0]; u[1] = b[1] - a[1]; u[2] = b[2] - a[2]
    v[0] = c[0] - a[0]; v[1] = c[1] - a[1]; v[2] = c[2] - a[2]
    n[0] = u[1] * v[2] - u[2] * v[1]
    n[1] = u[2] * v[0] - u[0] * v[2]
    n[2] = u[0] * v[1] - u[1] * v[0]
    so = -dot3(a, n)
    e[0] = d[0] - a[0]; e[1] = d[1] - a[1]; e[2] = d[2] - a[2]
    sd = dot3(e, n)
    return so * sd < 0.0 or sd == 0.0


cdef int closest_tetra(double* S, double* x) noexcept nogil:
    # returns reduced simplex size, or 4 if the origin is enclosed
    cdef int faces[4][4]
    cdef int f, k, bestk = 0
    cdef double best_d2 = INFINITY
    cdef double dd
    cdef double xt[3]
    cdef double tmp[9]
    cdef double best[9]
    cdef bint inside = True
    faces[0][0] = 0; faces[0][1] = 1; faces[0][2] = 2; faces[0][3] = 3
    faces[1][0] = 0; faces[1][1] = 2; faces[1][2] = 3; faces[1][3] = 1
    faces[2][0] = 0; faces[2][1] = 3; faces[2][2] = 1; faces[2][3] = 2
    faces[3][0] = 1; faces[3][1] = 3; faces[3][2] = 2; faces[3][3] = 0
    for f in range(4):
        if outside_plane(S + 3 * faces[f][0], S + 3 * faces[f][1], S + 3 * faces[f][2], S + 3 * faces[f][3]):
            inside = False
            k = closest_triangle(S + 3 * faces[f][0], S + 3 * faces[f][1], S + 3 * faces[f][2], xt, tmp)
            dd = dot3(xt, xt)
            if dd < best_d2:
                best_d2 = dd
                bestk = k
                copy3(xt, x)
                for k in range(9):
                    best[k] = tmp[k]
    if inside:
        x[0] = 0.0; x[1] = 0.0; x[2] = 0.0
        return 4
    for k in range(3 * bestk):
        S[k] = best[k]
    return bestk


cdef int gjk_one(const Shape* A, const double* RA, const double* tA,
                 const Shape* B, const double* RB, const double* tB,
                 double eps, int max_iter) noexcept nogil:
    # 1 overlap, 0 separated, -1 no convergence
    cdef double v[3]
    cdef double nv[3]
    cdef double pa[3]
    cdef double pb[3]
    cdef double w[3]
    cdef double x[3]
    cdef double S[12]
    cdef double tmp[9]
    cdef int k = 0, it, j
    cdef double scale = 1.0, vv
    v[0] = tA[0] - tB[0]; v[1] = tA[1] - tB[1]; v[2] = tA[2] - tB[2]
    if dot3(v, v) == 0.0:
        v[0] = 1.0; v[1] = 0.0; v[2] = 0.0
    for it in range(max_iter):
        nv[0] = -v[0]; nv[1] = -v[1]; nv[2] = -v[2]
        world_support(A, RA, tA, nv, pa)
        world_support(B, RB, tB, v, pb)
        w[0] = pa[0] - pb[0]; w[1] = pa[1] - pb[1]; w[2] = pa[2] - pb[2]
        if it == 0:
            scale = sqrt(dot3(w, w))
            if scale < 1.0:
                scale = 1.0
        if dot3(v, w) > 0.0:
            return 0
        copy3(w, S + 3 * k)
        k += 1
        if k == 1:
            copy3(S, x)
        elif k == 2:
            k = closest_segment(S, x)
        elif k == 3:
            k = closest_triangle(S, S + 3, S + 6, x, tmp)
            for j in range(3 * k):
                S[j] = tmp[j]
        else:
            k = closest_tetra(S, x)
            if k == 4:
                return 1
        vv = dot3(x, x)
        if vv <= (eps * scale) * (eps * scale):
            return 1
        if dot3(v, v) - dot3(x, v) <= 0.0 and it > 0 and vv >= dot3(v, v):
            return 0
        copy3(x, v)
    return -1


cdef Shape make_shape(int kind, double[::1] par, const double[:, ::1] verts):
    cdef Shape s
    s.kind = kind
    s.p0 = par[0] if par.shape[0] > 0 else 0.0
    s.p1 = par[1] if par.shape[0] > 1 else 0.0
    s.nv = verts.shape[0]
    s.verts = &verts[0, 0] if verts.shape[0] > 0 else NULL
    return s


def gjk_overlap_batch(int kindA, parA, vertsA, RA, tA, int kindB, parB, vertsB, RB, tB,
                      double eps=1e-12, int max_iter=128):
    """Batched overlap test. Pose arrays have shapes (n, 3, 3) and (n, 3).

    Raises
    ------
    GJKNonConvergence
        With the index of the first failing sample.
    """
    cdef double[::1] pA = np.ascontiguousarray(parA, dtype=np.float64).reshape(-1)
    cdef double[::1] pB = np.ascontiguousarray(parB, dtype=np.float64).reshape(-1)
    cdef const double[:, ::1] vA = np.ascontiguousarray(vertsA, dtype=np.float64).reshape(-1, 3)
    cdef const double[:, ::1] vB = np.ascontiguousarray(vertsB, dtype=np.float64).reshape(-1, 3)
    cdef const double[:, ::1] rA = np.ascontiguousarray(RA, dtype=np.float64).reshape(-1, 9)
    cdef const double[:, ::1] rB = np.ascontiguousarray(RB, dtype=np.float64).reshape(-1, 9)
    cdef const double[:, ::1] xA = np.ascontiguousarray(tA, dtype=np.float64).reshape(-1, 3)
    cdef const double[:, ::1] xB = np.ascontiguousarray(tB, dtype=np.float64).reshape(-1, 3)
    cdef Py_ssize_t n = rA.shape[0], i
    cdef Shape A = make_shape(kindA, pA, vA)
    cdef Shape B = make_shape(kindB, pB, vB)
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] o = out
    cdef int r
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            r = gjk_one(&A, &rA[i, 0], &xA[i, 0], &B, &rB[i, 0], &xB[i, 0], eps, max_iter)
            if r < 0:
                bad = i
                break
            o[i] = <unsigned char>r
    if bad >= 0:
        raise GJKNonConvergence(bad, max_iter)
    return out


def convolve_multi(ext, kernels):
    """Direct convolution ``out[k, i] = sum_m ext[i + width - 1 - m] w[k, m]``."""
    cdef const double[::1] e = np.ascontiguousarray(ext, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(kernels, dtype=np.float64)
    cdef Py_ssize_t nk = w.shape[0], width = w.shape[1]
    cdef Py_ssize_t n = e.shape[0] - width + 1
    out = np.zeros((nk, n))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t k, i, m
    cdef double acc
    with nogil:
        for k in range(nk):
            for i in range(n):
                acc = 0.0
                for m in range(width):
                    acc = acc + w[k, m] * e[i + width - 1 - m]
                o[k, i] = acc
    return out


def correlate_multi(ext, kernels):
    """Direct correlation ``out[i] = sum_k sum_m ext[k, i + m] w[k, m]``."""
    cdef const double[:, ::1] e = np.ascontiguousarray(ext, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(kernels, dtype=np.float64)
    cdef Py_ssize_t nk = w.shape[0], width = w.shape[1]
    cdef Py_ssize_t n = e.shape[1] - width + 1
    out = np.zeros(n)
    cdef double[::1] o = out
    cdef Py_ssize_t k, i, m
    cdef double acc, part
    with nogil:
        for i in range(n):
            acc = 0.0
            for m in range(width):
                part = 0.0
                for k in range(nk):
                    part = part + w[k, m] * e[k, i + m]
                acc = acc + part
            o[i] = acc
    return out
