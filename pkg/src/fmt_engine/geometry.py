"""Convex bodies, surface quadrature and Minkowski measures.

Three body types are supported: :class:`Sphere`, :class:`Spheroid` (axis of
revolution along z) and :class:`Mesh` (closed convex triangulation). Every
body can be turned into a :class:`PatchSet`, a struct-of-arrays collection of
surface quadrature nodes carrying the local principal frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Union

import numpy as np

__all__ = [
    "GeometryError",
    "MeshValidationError",
    "Sphere",
    "Spheroid",
    "TriangleMesh",
    "Mesh",
    "SurfacePatch",
    "PatchSet",
    "MinkowskiMeasures",
    "surface_quadrature",
    "minkowski_measures",
    "euler_characteristic",
    "angle_defect_sum",
    "support_function",
    "support_point",
    "circumradius",
    "scale_body",
]


class GeometryError(ValueError):
    """Invalid geometric input (non-positive size, zero direction, ...)."""


class MeshValidationError(GeometryError):
    """A mesh failed a topological or convexity check.

    Attributes
    ----------
    kind : str
        One of ``"open"``, ``"nonmanifold"``, ``"orientation"``,
        ``"inward"``, ``"nonconvex"``, ``"degenerate"``, ``"index"``.
    edge : tuple of int or None
        Offending edge as a vertex index pair.
    vertex : int or None
        Offending vertex index.
    face : int or None
        Offending triangle index.
    """

    def __init__(self, kind, message, edge=None, vertex=None, face=None):
        self.kind = kind
        self.edge = None if edge is None else (int(edge[0]), int(edge[1]))
        self.vertex = None if vertex is None else int(vertex)
        self.face = None if face is None else int(face)
        loc = []
        if self.edge is not None:
            loc.append(f"edge={self.edge}")
        if self.vertex is not None:
            loc.append(f"vertex={self.vertex}")
        if self.face is not None:
            loc.append(f"face={self.face}")
        suffix = f" [{', '.join(loc)}]" if loc else ""
        super().__init__(f"{kind}: {message}{suffix}")


def _positive(name, x):
    x = float(x)
    if not (x > 0.0 and math.isfinite(x)):
        raise GeometryError(f"{name} must be finite and strictly positive, got {x!r}")
    return x


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "radius", _positive("radius", self.radius))

    @property
    def kind(self):
        return "sphere"


@dataclass(frozen=True)
class Spheroid:
    """Spheroid with equatorial semi-axis ``a`` and polar semi-axis ``c``."""

    a: float
    c: float

    def __post_init__(self):
        object.__setattr__(self, "a", _positive("a", self.a))
        object.__setattr__(self, "c", _positive("c", self.c))

    @property
    def kind(self):
        return "spheroid"


# ---------------------------------------------------------------------------
# triangle meshes


class TriangleMesh:
    """Closed, orientable, outward-oriented triangulated surface.

    No convexity is required here; the class serves topological queries
    such as :func:`euler_characteristic`. Use :class:`Mesh` for convex bodies.

    Parameters
    ----------
    vertices : array_like, shape (nv, 3)
    triangles : array_like of int, shape (nf, 3)
    """

    def __init__(self, vertices, triangles):
        v = np.array(vertices, dtype=float, copy=True)
        t = np.array(triangles, dtype=np.int64, copy=True)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 4:
            raise MeshValidationError("degenerate", "vertices must have shape (n>=4, 3)")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) < 4:
            raise MeshValidationError("degenerate", "triangles must have shape (m>=4, 3)")
        if not np.all(np.isfinite(v)):
            bad = int(np.argwhere(~np.isfinite(v).all(axis=1))[0, 0])
            raise MeshValidationError("degenerate", "non-finite coordinate", vertex=bad)
        if t.min() < 0 or t.max() >= len(v):
            f = int(np.argwhere((t < 0) | (t >= len(v)))[0, 0])
            raise MeshValidationError("index", "triangle references missing vertex", face=f)
        v.setflags(write=False)
        t.setflags(write=False)
        self.vertices = v
        self.triangles = t
        self._check_topology()

    kind = "mesh"

    def _check_topology(self):
        t = self.triangles
        for k, tri in enumerate(t):
            if tri[0] == tri[1] or tri[1] == tri[2] or tri[0] == tri[2]:
                raise MeshValidationError("degenerate", "triangle repeats a vertex", face=k)
        nv = len(self.vertices)
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        face_of = np.tile(np.arange(len(t)), 3)
        key = directed[:, 0] * nv + directed[:, 1]
        order = np.argsort(key, kind="stable")
        ks = key[order]
        dup = np.nonzero(ks[1:] == ks[:-1])[0]
        if len(dup):
            e = directed[order[dup[0]]]
            raise MeshValidationError(
                "orientation",
                "directed edge used twice (inconsistent orientation or non-manifold)",
                edge=e, face=face_of[order[dup[0] + 1]],
            )
        rkey = directed[:, 1] * nv + directed[:, 0]
        pos = np.searchsorted(ks, rkey)
        pos = np.minimum(pos, len(ks) - 1)
        missing = ks[pos] != rkey
        if np.any(missing):
            i = int(np.argmax(missing))
            raise MeshValidationError(
                "open", "edge has no opposite half-edge (boundary edge)",
                edge=directed[i], face=face_of[i],
            )
        used = np.zeros(nv, dtype=bool)
        used[t.ravel()] = True
        if not used.all():
            raise MeshValidationError(
                "degenerate", "vertex not referenced by any triangle",
                vertex=int(np.argmin(used)),
            )
        if self.signed_volume <= 0.0:
            raise MeshValidationError("inward", "mesh encloses non-positive volume (normals point inward)")

    # -- elementary quantities -------------------------------------------------
    @cached_property
    def corners(self):
        """Triangle corner coordinates, shape (nf, 3, 3)."""
        return self.vertices[self.triangles]

    @cached_property
    def face_normals_raw(self):
        p = self.corners
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals_raw, axis=1)

    @cached_property
    def face_normals(self):
        n = self.face_normals_raw
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def signed_volume(self):
        p = self.corners
        return float(np.einsum("ij,ij->", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0)

    @cached_property
    def corner_angles(self):
        """Interior angle at each triangle corner, shape (nf, 3)."""
        p = self.corners
        ang = np.empty(self.triangles.shape)
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            ang[:, k] = np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.einsum("ij,ij->i", a, b))
        return ang

    @cached_property
    def edges(self):
        """Unique undirected edges with their two adjacent faces.

        Returns
        -------
        edges : ndarray, shape (ne, 2)
            Vertex pairs ``(i, j)`` with ``i < j``.
        faces : ndarray, shape (ne, 2)
            Face on the side where the edge is traversed ``i -> j`` first,
            then the opposite face.
        """
        t = self.triangles
        nv = len(self.vertices)
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        face_of = np.tile(np.arange(len(t)), 3)
        fwd = directed[:, 0] < directed[:, 1]
        key = np.minimum(directed[:, 0], directed[:, 1]) * nv + np.maximum(directed[:, 0], directed[:, 1])
        order = np.lexsort((~fwd, key))
        d = directed[order]
        f = face_of[order]
        e = np.sort(d[0::2], axis=1)
        return e, np.stack([f[0::2], f[1::2]], axis=1)

    def angle_defects(self):
        nv = len(self.vertices)
        s = np.bincount(self.triangles.ravel(), weights=self.corner_angles.ravel(), minlength=nv)
        return 2.0 * np.pi - s

    @cached_property
    def bbox_diagonal(self):
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


class Mesh(TriangleMesh):
    """Closed convex triangulated body.

    Adds the convexity check: every vertex must lie on the non-positive side
    of every face plane, within ``1e-8`` times the bounding-box diagonal.
    """

    convex_rel_tol = 1e-8

    def __init__(self, vertices, triangles):
        super().__init__(vertices, triangles)
        self._check_convex()

    def _check_convex(self):
        eps = self.convex_rel_tol * self.bbox_diagonal
        v = self.vertices
        n = self.face_normals
        off = np.einsum("ij,ij->i", n, self.corners[:, 0])
        chunk = max(1, 4_000_000 // max(len(v), 1))
        for s in range(0, len(n), chunk):
            d = v @ n[s:s + chunk].T - off[s:s + chunk]
            if d.max() > eps:
                vi, fj = np.unravel_index(np.argmax(d), d.shape)
                raise MeshValidationError(
                    "nonconvex",
                    f"vertex lies {d[vi, fj]:.3e} outside a face plane (tol {eps:.1e})",
                    vertex=vi, face=s + fj,
                )

    @cached_property
    def mean_curvature_integral(self):
        """Edge formula M = 1/2 sum(length * exterior dihedral angle)."""
        e, f = self.edges
        v = self.vertices
        n = self.face_normals
        length = np.linalg.norm(v[e[:, 1]] - v[e[:, 0]], axis=1)
        n0, n1 = n[f[:, 0]], n[f[:, 1]]
        ang = np.arctan2(np.linalg.norm(np.cross(n0, n1), axis=1), np.einsum("ij,ij->i", n0, n1))
        return float(0.5 * np.sum(length * ang))


ConvexBody = Union[Sphere, Spheroid, Mesh]


def _canonical(body):
    if isinstance(body, Spheroid) and body.a == body.c:
        return Sphere(body.a)
    if not isinstance(body, (Sphere, Spheroid, Mesh)):
        raise GeometryError(f"not a convex body: {type(body).__name__}")
    return body


def scale_body(body, lam):
    """Return the body dilated by ``lam > 0`` about the origin."""
    lam = _positive("scale", lam)
    if isinstance(body, Sphere):
        return Sphere(body.radius * lam)
    if isinstance(body, Spheroid):
        return Spheroid(body.a * lam, body.c * lam)
    return Mesh(body.vertices * lam, body.triangles)


# ---------------------------------------------------------------------------
# patches


@dataclass(frozen=True)
class SurfacePatch:
    point: np.ndarray
    normal: np.ndarray
    kappa1: float
    kappa2: float
    dir1: np.ndarray
    dir2: np.ndarray
    area: float


class PatchSet:
    """Struct-of-arrays collection of :class:`SurfacePatch` nodes.

    Attributes
    ----------
    point, normal, dir1, dir2 : ndarray, shape (n, 3)
    kappa1, kappa2, area : ndarray, shape (n,)
    """

    def __init__(self, point, normal, kappa1, kappa2, dir1, dir2, area):
        self.point = np.ascontiguousarray(point, dtype=float)
        self.normal = np.ascontiguousarray(normal, dtype=float)
        self.kappa1 = np.ascontiguousarray(kappa1, dtype=float)
        self.kappa2 = np.ascontiguousarray(kappa2, dtype=float)
        self.dir1 = np.ascontiguousarray(dir1, dtype=float)
        self.dir2 = np.ascontiguousarray(dir2, dtype=float)
        self.area = np.ascontiguousarray(area, dtype=float)
        for a in vars(self).values():
            a.setflags(write=False)

    def __len__(self):
        return len(self.area)

    def __getitem__(self, i) -> SurfacePatch:
        return SurfacePatch(
            self.point[i], self.normal[i], float(self.kappa1[i]), float(self.kappa2[i]),
            self.dir1[i], self.dir2[i], float(self.area[i]),
        )

    def take(self, idx) -> "PatchSet":
        """Sub-collection selected by an index array or boolean mask."""
        return PatchSet(*(a[idx] for a in (self.point, self.normal, self.kappa1, self.kappa2,
                                            self.dir1, self.dir2, self.area)))

    def __iter__(self) -> Iterator[SurfacePatch]:
        for i in range(len(self)):
            yield self[i]

    @property
    def mean_curvature(self):
        return 0.5 * (self.kappa1 + self.kappa2)

    @property
    def gaussian_curvature(self):
        return self.kappa1 * self.kappa2

    @property
    def total_area(self):
        return float(self.area.sum())

    def cumulative_area(self):
        c = np.cumsum(self.area)
        return c / c[-1]


def _grid(resolution):
    nt = max(4, math.ceil(math.sqrt(resolution / 2.0)))
    nphi = 2 * nt
    u, wu = np.polynomial.legendre.leggauss(nt)
    x, wx = np.polynomial.legendre.leggauss(nphi)
    phi = np.pi * (x + 1.0)
    wphi = np.pi * wx
    U, P = np.meshgrid(u, phi, indexing="ij")
    W = np.outer(wu, wphi)
    return U.ravel(), P.ravel(), W.ravel()


def _sphere_patches(R, resolution):
    u, phi, w = _grid(resolution)
    st = np.sqrt(1.0 - u * u)
    cp, sp = np.cos(phi), np.sin(phi)
    n = np.stack([st * cp, st * sp, u], axis=1)
    e1 = np.stack([u * cp, u * sp, -st], axis=1)
    e2 = np.stack([-sp, cp, np.zeros_like(u)], axis=1)
    k = np.full(len(u), 1.0 / R)
    return PatchSet(R * n, n, k, k, e1, e2, R * R * w)


def _spheroid_patches(a, c, resolution):
    u, phi, w = _grid(resolution)
    st = np.sqrt(1.0 - u * u)
    cp, sp = np.cos(phi), np.sin(phi)
    W = np.sqrt(a * a * u * u + c * c * st * st)
    p = np.stack([a * st * cp, a * st * sp, c * u], axis=1)
    n = np.stack([c * st * cp, c * st * sp, a * u], axis=1) / W[:, None]
    e1 = np.stack([a * u * cp, a * u * sp, -c * st], axis=1) / W[:, None]
    e2 = np.stack([-sp, cp, np.zeros_like(u)], axis=1)
    k1 = a * c / W**3
    k2 = c / (a * W)
    return PatchSet(p, n, k1, k2, e1, e2, a * W * w)


def _mesh_patches(mesh: Mesh):
    from .meshes import discrete_curvature

    dc = discrete_curvature(mesh)
    return PatchSet(mesh.vertices, dc["normal"], dc["kappa1"], dc["kappa2"],
                    dc["dir1"], dc["dir2"], dc["area"])


def surface_quadrature(body, resolution=2048) -> PatchSet:
    """Quadrature nodes covering the body surface.

    Parameters
    ----------
    body : Sphere, Spheroid or Mesh
    resolution : int
        Node-count hint (``>= 32``). Analytic bodies use a product
        Gauss-Legendre grid in ``(cos theta, phi)`` of about this many nodes;
        meshes ignore it and return one node per vertex with mixed-Voronoi
        area weights and discrete curvature estimates (first-order accurate).

    Returns
    -------
    PatchSet
    """
    if int(resolution) < 32:
        raise GeometryError(f"resolution must be >= 32, got {resolution}")
    body = _canonical(body)
    if isinstance(body, Sphere):
        return _sphere_patches(body.radius, int(resolution))
    if isinstance(body, Spheroid):
        return _spheroid_patches(body.a, body.c, int(resolution))
    return _mesh_patches(body)


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True)
class MinkowskiMeasures:
    volume: float
    surface: float
    mean_curvature_integral: float
    euler_surface: float

    @property
    def euler_body(self):
        return 0.5 * self.euler_surface

    def as_dict(self):
        return {
            "volume": self.volume,
            "surface": self.surface,
            "mean_curvature_integral": self.mean_curvature_integral,
            "euler_surface": self.euler_surface,
        }


def _spheroid_closed_forms(a, c):
    V = 4.0 * np.pi * a * a * c / 3.0
    if c > a:
        k = math.sqrt(c * c - a * a)
        e = k / c
        S = 2.0 * np.pi * a * a * (1.0 + c / (a * e) * math.asin(e))
        M = 2.0 * np.pi * (c + a * a * math.atanh(k / c) / k)
    else:
        k = math.sqrt(a * a - c * c)
        e = k / a
        S = 2.0 * np.pi * a * a * (1.0 + (1.0 - e * e) / e * math.atanh(e))
        M = 2.0 * np.pi * (c + a * a * math.atan(k / c) / k)
    return V, S, M


def minkowski_measures(body) -> MinkowskiMeasures:
    """Volume, surface area, integrated mean curvature and Euler number.

    Closed forms are used for spheres and spheroids. For meshes ``V`` comes
    from the divergence theorem, ``S`` from triangle areas, ``M`` from the
    edge-dihedral formula and ``chi`` from the angle-defect sum.
    """
    body = _canonical(body)
    if isinstance(body, Sphere):
        R = body.radius
        return MinkowskiMeasures(4.0 * np.pi * R**3 / 3.0, 4.0 * np.pi * R * R, 4.0 * np.pi * R, 2.0)
    if isinstance(body, Spheroid):
        V, S, M = _spheroid_closed_forms(body.a, body.c)
        return MinkowskiMeasures(V, S, M, 2.0)
    return MinkowskiMeasures(
        body.signed_volume,
        float(body.face_areas.sum()),
        body.mean_curvature_integral,
        float(euler_characteristic(body)),
    )


def angle_defect_sum(mesh) -> float:
    """Total angle defect of a closed mesh divided by ``2 pi`` (unrounded)."""
    if not isinstance(mesh, TriangleMesh):
        mesh = TriangleMesh(*mesh)
    return float(np.sum(mesh.angle_defects()) / (2.0 * np.pi))


def euler_characteristic(mesh) -> int:
    """Euler characteristic of a closed orientable mesh by discrete Gauss-Bonnet.

    Parameters
    ----------
    mesh : TriangleMesh or (vertices, triangles)

    Returns
    -------
    int
    """
    x = angle_defect_sum(mesh)
    r = round(x)
    if abs(x - r) > 1e-6:
        raise GeometryError(f"angle-defect sum {x!r} is not close to an integer")
    return int(r)


# ---------------------------------------------------------------------------
# support maps


def _direction(u):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != 3:
        raise GeometryError("direction must have a trailing dimension of 3")
    nrm = np.linalg.norm(u, axis=-1)
    if np.any(~(nrm > 0.0)):
        raise GeometryError("support direction must be non-zero")
    return u, nrm


def support_function(body, direction):
    """Support function ``H(u) = max_{p in D} p . u``.

    Positively homogeneous of degree one in ``direction``; broadcasts over
    leading axes.
    """
    body = _canonical(body)
    u, nrm = _direction(direction)
    if isinstance(body, Sphere):
        h = body.radius * nrm
    elif isinstance(body, Spheroid):
        h = np.sqrt(body.a**2 * (u[..., 0] ** 2 + u[..., 1] ** 2) + body.c**2 * u[..., 2] ** 2)
    else:
        h = np.max(u @ body.vertices.T, axis=-1)
    return float(h) if np.ndim(h) == 0 else h


def support_point(body, direction):
    """Point of the body boundary maximising ``p . u``."""
    body = _canonical(body)
    u, nrm = _direction(direction)
    if isinstance(body, Sphere):
        return body.radius * u / nrm[..., None]
    if isinstance(body, Spheroid):
        A2 = np.array([body.a**2, body.a**2, body.c**2])
        h = np.sqrt(np.sum(A2 * u * u, axis=-1))
        return A2 * u / h[..., None]
    idx = np.argmax(u @ body.vertices.T, axis=-1)
    return body.vertices[idx]


def circumradius(body) -> float:
    """Radius of the smallest origin-centred ball containing the body."""
    body = _canonical(body)
    if isinstance(body, Sphere):
        return body.radius
    if isinstance(body, Spheroid):
        return max(body.a, body.c)
    return float(np.max(np.linalg.norm(body.vertices, axis=1)))
