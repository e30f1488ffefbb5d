"""Mesh generators, OFF / binary STL I/O and discrete curvature estimators."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .geometry import GeometryError, Mesh, TriangleMesh

__all__ = [
    "icosphere",
    "fibonacci_sphere",
    "hull_mesh",
    "torus",
    "read_off",
    "write_off",
    "read_stl",
    "write_stl",
    "load_mesh",
    "discrete_curvature",
]


def _orient_outward(points, tris, normals):
    p = points[tris]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", n, normals) < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def hull_mesh(points) -> Mesh:
    """Convex hull of a point cloud as an outward-oriented :class:`Mesh`."""
    points = np.asarray(points, dtype=float)
    hull = ConvexHull(points)
    used = np.unique(hull.simplices)
    remap = np.full(len(points), -1)
    remap[used] = np.arange(len(used))
    tris = _orient_outward(points, hull.simplices, hull.equations[:, :3])
    return Mesh(points[used], remap[tris])


def fibonacci_sphere(n_vertices, radius=1.0) -> Mesh:
    """Sphere mesh from a Fibonacci point set and its convex hull."""
    n = int(n_vertices)
    if n < 4:
        raise GeometryError("need at least 4 vertices")
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return hull_mesh(radius * pts)


def icosphere(subdivisions=2, radius=1.0) -> Mesh:
    """Geodesic sphere from a subdivided icosahedron."""
    t = (1.0 + 5.0**0.5) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    v /= np.linalg.norm(v, axis=1)[:, None]
    for _ in range(int(subdivisions)):
        nv = len(v)
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        key = np.minimum(e[:, 0], e[:, 1]) * nv + np.maximum(e[:, 0], e[:, 1])
        uk, inv = np.unique(key, return_inverse=True)
        a, b = uk // nv, uk % nv
        mid = v[a] + v[b]
        mid /= np.linalg.norm(mid, axis=1)[:, None]
        m = (inv + nv).reshape(3, -1).T  # midpoints of edges 01, 12, 20
        v = np.vstack([v, mid])
        f = np.concatenate([
            np.stack([f[:, 0], m[:, 0], m[:, 2]], 1),
            np.stack([f[:, 1], m[:, 1], m[:, 0]], 1),
            np.stack([f[:, 2], m[:, 2], m[:, 1]], 1),
            m,
        ])
    return Mesh(radius * v, f)


def torus(major=2.0, minor=0.7, n_major=32, n_minor=16) -> TriangleMesh:
    """Outward-oriented torus (a non-convex :class:`TriangleMesh`, chi = 0)."""
    u = 2 * np.pi * np.arange(n_major) / n_major
    w = 2 * np.pi * np.arange(n_minor) / n_minor
    U, W = np.meshgrid(u, w, indexing="ij")
    rr = major + minor * np.cos(W)
    v = np.stack([rr * np.cos(U), rr * np.sin(U), minor * np.sin(W)], -1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    i, j = i.ravel(), j.ravel()
    ip, jp = (i + 1) % n_major, (j + 1) % n_minor
    a, b = i * n_minor + j, ip * n_minor + j
    c, d = ip * n_minor + jp, i * n_minor + jp
    f = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return TriangleMesh(v, f)


# ---------------------------------------------------------------------------
# I/O


def read_off(path, convex=True):
    lines = []
    for raw in Path(path).read_text().splitlines():
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append(s)
    if not lines or not lines[0].startswith("OFF"):
        raise GeometryError(f"{path}: missing OFF header")
    head = lines[0][3:].split()
    body = lines[1:]
    if not head:
        head, body = body[0].split(), body[1:]
    nv, nf = int(head[0]), int(head[1])
    verts = np.array([[float(x) for x in body[k].split()[:3]] for k in range(nv)])
    tris = []
    for k in range(nf):
        tok = [int(x) for x in body[nv + k].split()]
        cnt, idx = tok[0], tok[1:1 + tok[0]]
        for q in range(1, cnt - 1):  # fan-triangulate polygons
            tris.append([idx[0], idx[q], idx[q + 1]])
    return (Mesh if convex else TriangleMesh)(verts, np.array(tris, dtype=np.int64))


def write_off(path, mesh):
    with open(path, "w") as fh:
        fh.write(f"OFF\n{len(mesh.vertices)} {len(mesh.triangles)} 0\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        np.savetxt(fh, np.hstack([np.full((len(mesh.triangles), 1), 3), mesh.triangles]), fmt="%d")


_STL_DTYPE = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def read_stl(path, convex=True):
    """Read a binary STL file, welding coincident vertices."""
    data = Path(path).read_bytes()
    if len(data) < 84:
        raise GeometryError(f"{path}: truncated STL")
    count = int(np.frombuffer(data, "<u4", 1, 80)[0])
    if len(data) != 84 + 50 * count:
        raise GeometryError(f"{path}: not a binary STL (size mismatch for {count} facets)")
    rec = np.frombuffer(data, _STL_DTYPE, count, 84)
    pts = rec["v"].reshape(-1, 3).astype(float)
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    return (Mesh if convex else TriangleMesh)(uniq, inv.reshape(-1, 3))


def write_stl(path, mesh):
    rec = np.zeros(len(mesh.triangles), _STL_DTYPE)
    rec["n"] = mesh.face_normals
    rec["v"] = mesh.corners
    with open(path, "wb") as fh:
        fh.write(b"fmt-engine binary stl".ljust(80, b" "))
        fh.write(np.uint32(len(rec)).tobytes())
        fh.write(rec.tobytes())


def load_mesh(path, convex=True):
    path = Path(path)
    suf = path.suffix.lower()
    if suf == ".off":
        return read_off(path, convex)
    if suf == ".stl":
        return read_stl(path, convex)
    raise GeometryError(f"unsupported mesh format {suf!r} (expected .off or .stl)")


# ---------------------------------------------------------------------------
# curvature


def _cot(a, b):
    return np.einsum("ij,ij->i", a, b) / np.linalg.norm(np.cross(a, b), axis=1)


def discrete_curvature(mesh: TriangleMesh):
    """Per-vertex curvature estimates on a closed triangle mesh.

    Gaussian curvature is the angle defect over the mixed Voronoi area,
    the mean curvature comes from the cotangent Laplacian, and principal
    directions from a least-squares fit of edge normal curvatures over the
    one-ring. The estimators are first-order accurate.

    Returns
    -------
    dict
        ``area, normal, H, K, kappa1, kappa2, dir1, dir2`` arrays.
    """
    v = mesh.vertices
    t = mesh.triangles
    nv = len(v)
    p = mesh.corners
    ang = mesh.corner_angles
    fa = mesh.face_areas

    # mixed Voronoi areas
    amix = np.zeros_like(ang)
    obtuse = ang > np.pi / 2
    any_obt = obtuse.any(axis=1)
    cots = np.empty_like(ang)
    for k in range(3):
        cots[:, k] = _cot(p[:, (k + 1) % 3] - p[:, k], p[:, (k + 2) % 3] - p[:, k])
    for k in range(3):
        i1, i2 = (k + 1) % 3, (k + 2) % 3
        l1 = np.sum((p[:, i1] - p[:, k]) ** 2, axis=1)
        l2 = np.sum((p[:, i2] - p[:, k]) ** 2, axis=1)
        vor = (l1 * cots[:, i2] + l2 * cots[:, i1]) / 8.0
        amix[:, k] = np.where(~any_obt, vor, np.where(obtuse[:, k], fa / 2.0, fa / 4.0))
    area = np.bincount(t.ravel(), amix.ravel(), nv)

    # angle-weighted vertex normals
    nrm = np.zeros((nv, 3))
    fn = mesh.face_normals
    for k in range(3):
        np.add.at(nrm, t[:, k], fn * ang[:, k:k + 1])
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]

    # cotangent Laplacian: lap_i = sum_j (cot a + cot b)(x_i - x_j) / (2 A_i) = 2 H n
    lap = np.zeros((nv, 3))
    for k in range(3):
        i, j = t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        d = (v[i] - v[j]) * cots[:, k:k + 1]
        np.add.at(lap, i, d)
        np.add.at(lap, j, -d)
    lap /= 2.0 * area[:, None]
    H = 0.5 * np.linalg.norm(lap, axis=1) * np.sign(np.einsum("ij,ij->i", lap, nrm))
    K = mesh.angle_defects() / area
    disc = np.sqrt(np.maximum(H * H - K, 0.0))
    k1, k2 = H + disc, H - disc

    # local tangent frame
    ref = np.where(np.abs(nrm[:, 0:1]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
    t1 = np.cross(nrm, ref)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(nrm, t1)

    # one-ring fit of kappa_n(psi) = A cos^2 + 2 B cos sin + C sin^2
    src = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    dst = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    d = v[dst] - v[src]
    ns = nrm[src]
    kn = -2.0 * np.einsum("ij,ij->i", d, ns) / np.einsum("ij,ij->i", d, d)
    x = np.einsum("ij,ij->i", d, t1[src])
    y = np.einsum("ij,ij->i", d, t2[src])
    r = np.hypot(x, y)
    x, y = x / r, y / r
    rows = np.stack([x * x, 2 * x * y, y * y], 1)
    G = np.zeros((nv, 3, 3))
    b = np.zeros((nv, 3))
    np.add.at(G, src, rows[:, :, None] * rows[:, None, :])
    np.add.at(b, src, rows * kn[:, None])
    G += 1e-12 * np.eye(3)
    coef = np.linalg.solve(G, b[..., None])[..., 0]
    II = np.stack([coef[:, [0, 1]], coef[:, [1, 2]]], 1)
    _, vecs = np.linalg.eigh(II)
    e = vecs[:, :, 1]  # eigenvector of the larger normal curvature
    dir1 = e[:, 0:1] * t1 + e[:, 1:2] * t2
    dir1 /= np.linalg.norm(dir1, axis=1)[:, None]
    dir2 = np.cross(nrm, dir1)
    return {"area": area, "normal": nrm, "H": H, "K": K,
            "kappa1": k1, "kappa2": k2, "dir1": dir1, "dir2": dir2}
