"""Weight-function basis and Euler-form integrands for one, two and three bodies.

Weight functions are surface densities attached to a quadrature patch:

=========  ===============================  =====  ===================
tag        density                          rank   scaling dimension
=========  ===============================  =====  ===================
``chi``    kappa1 kappa2 / 4 pi             0      3
``kL``     kbar n^L / 4 pi                  L      2
``dL``     Delta n^(L-2) / 4 pi, L >= 2     L      2
``sL``     n^L                              L      1
``v``      indicator of the body            0      0
=========  ===============================  =====  ===================

with ``kbar = (kappa1 + kappa2)/2`` and the traceless curvature deviator
``Delta = (kappa1 - kappa2)/2 (nu1 nu1 - nu2 nu2)``. Stored values are capped
at rank 2; higher-rank contractions are evaluated as scalar dot-product chains.

All pair and triple functions broadcast: pass a :class:`SurfacePatch` for a
single evaluation or a :class:`PatchSet` (or anything exposing the same
array attributes) for a batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import minkowski_measures, surface_quadrature

__all__ = [
    "WeightIndex",
    "WeightValue",
    "WeightError",
    "DegenerateConfiguration",
    "EPS_PAR",
    "EPS_ANTI",
    "weight_at",
    "fundamental_measure",
    "delta_quadratic",
    "intersection_determinant",
    "two_body_euler_angle_form",
    "two_body_euler_tensor_form",
    "two_body_weight_expansion",
    "two_body_expansion_bound",
    "three_body_euler_form",
    "three_body_weight_expansion",
]

EPS_PAR = 1e-9
EPS_ANTI = 1e-9
FOUR_PI = 4.0 * math.pi


class WeightError(ValueError):
    pass


class DegenerateConfiguration(ArithmeticError):
    """Parallel or antipodal normals where the requested form is singular."""


_TAGS = ("chi", "v", "k", "d", "s")
SCALING_DIMENSION = {"chi": 3, "k": 2, "d": 2, "s": 1, "v": 0}


@dataclass(frozen=True)
class WeightIndex:
    """Multi-index ``(tag, L)`` of the weight basis.

    ``tag`` is one of ``chi, v, k, d, s`` (Gaussian curvature, volume,
    mean curvature, curvature deviator, normal tensors); ``L`` is the tensor
    rank and is ignored for ``chi`` and ``v``.
    """

    tag: str
    L: int = 0

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise WeightError(f"unknown weight tag {self.tag!r}")
        if self.tag in ("chi", "v"):
            object.__setattr__(self, "L", 0)
        elif int(self.L) < 0:
            raise WeightError("rank must be non-negative")
        if self.tag == "d" and int(self.L) < 2:
            raise WeightError("deviator weights carry rank >= 2")

    @classmethod
    def parse(cls, text):
        """Parse ``"chi"``, ``"v"``, ``"k0"``, ``"s2"``, ``"d2"`` ..."""
        text = text.strip()
        if text in ("chi", "v"):
            return cls(text)
        if len(text) >= 2 and text[0] in "kds" and text[1:].isdigit():
            return cls(text[0], int(text[1:]))
        raise WeightError(f"cannot parse weight index {text!r}")

    @property
    def rank(self):
        return 0 if self.tag in ("chi", "v") else self.L

    @property
    def scaling_dimension(self):
        return SCALING_DIMENSION[self.tag]

    def __str__(self):
        return self.tag if self.tag in ("chi", "v") else f"{self.tag}{self.L}"


@dataclass(frozen=True)
class WeightValue:
    rank: int
    data: np.ndarray


def _patch_arrays(p):
    n = np.asarray(p.normal, dtype=float)
    k1 = np.asarray(p.kappa1, dtype=float)
    k2 = np.asarray(p.kappa2, dtype=float)
    e1 = np.asarray(p.dir1, dtype=float)
    e2 = np.asarray(p.dir2, dtype=float)
    return n, k1, k2, e1, e2


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def weight_at(patch, index) -> WeightValue:
    """Surface density of weight ``index`` at ``patch``.

    Parameters
    ----------
    patch : SurfacePatch or PatchSet
    index : WeightIndex or str

    Returns
    -------
    WeightValue
        Scalar, vector or symmetric 3x3 tensor (with leading batch axes
        for a PatchSet). Integrate against ``patch.area``.
    """
    if isinstance(index, str):
        index = WeightIndex.parse(index)
    n, k1, k2, e1, e2 = _patch_arrays(patch)
    if index.tag == "v":
        raise WeightError("the volume weight is not a surface density; use fundamental_measure")
    if index.rank > 2:
        raise WeightError(f"rank {index.rank} exceeds the stored rank cap of 2")
    if index.tag == "chi":
        return WeightValue(0, k1 * k2 / FOUR_PI)
    if index.tag == "s":
        base = np.ones_like(k1)
        scale = base
    elif index.tag == "k":
        scale = 0.5 * (k1 + k2) / FOUR_PI
    else:  # d2
        half = 0.5 * (k1 - k2) / FOUR_PI
        D = half[..., None, None] * (_outer(e1, e1) - _outer(e2, e2))
        return WeightValue(2, D)
    if index.L == 0:
        return WeightValue(0, scale)
    if index.L == 1:
        return WeightValue(1, scale[..., None] * n)
    return WeightValue(2, scale[..., None, None] * _outer(n, n))


def fundamental_measure(body, index, resolution=4096) -> WeightValue:
    """Integral of a weight function over the body.

    For ``v`` this is the volume; for surface weights the patch quadrature
    of the density. Sum rules: ``chi -> 1``, ``k0 -> M / 4 pi``,
    ``s0 -> S``, ``s1 -> 0``.
    """
    if isinstance(index, str):
        index = WeightIndex.parse(index)
    if index.tag == "v":
        return WeightValue(0, np.asarray(minkowski_measures(body).volume))
    ps = surface_quadrature(body, resolution)
    w = weight_at(ps, index)
    data = np.tensordot(ps.area, w.data, axes=(0, 0))
    return WeightValue(w.rank, np.asarray(data))


def delta_quadratic(patch, u):
    """``u . Delta . u`` for the patch curvature deviator (without 1/4 pi)."""
    _, k1, k2, e1, e2 = _patch_arrays(patch)
    return 0.5 * (k1 - k2) * (_dot(u, e1) ** 2 - _dot(u, e2) ** 2)


def intersection_determinant(normals):
    """Gram determinant of two or three unit normals.

    Parameters
    ----------
    normals : array_like, shape (..., k, 3) with k in {2, 3}

    Returns
    -------
    ndarray or float
        ``M2 = 1 - c12^2`` or
        ``M3 = 1 - c12^2 - c13^2 - c23^2 + 2 c12 c13 c23``, clipped at 0.
    """
    n = np.asarray(normals, dtype=float)
    k = n.shape[-2]
    if k == 2:
        m = np.sum(np.cross(n[..., 0, :], n[..., 1, :]) ** 2, axis=-1)
    elif k == 3:
        m = _dot(n[..., 0, :], np.cross(n[..., 1, :], n[..., 2, :])) ** 2
    else:
        raise WeightError("intersection determinant defined for 2 or 3 normals")
    m = np.maximum(m, 0.0)
    return float(m) if m.ndim == 0 else m


# ---------------------------------------------------------------------------
# two-body forms


def _half_angle_tan(n1, n2):
    s = np.linalg.norm(np.cross(n1, n2), axis=-1)
    c = _dot(n1, n2)
    return np.tan(0.5 * np.arctan2(s, c)), s, c


def two_body_euler_angle_form(patch1, patch2):
    """Two-body Euler line density in the angle representation.

    ``tan(phi/2) (t K1 t + t K2 t)`` with ``t = n2 x n1 / |n2 x n1|`` and
    ``K = kappa1 nu1 nu1 + kappa2 nu2 nu2`` the curvature tensor. It equals
    the tensor form divided by ``|n1 x n2|``.

    Raises
    ------
    DegenerateConfiguration
        If ``|n1 x n2| <= 1e-9``; the tangent is then undefined.
    """
    n1, a1, b1, e11, e12 = _patch_arrays(patch1)
    n2, a2, b2, e21, e22 = _patch_arrays(patch2)
    tq, s, _ = _half_angle_tan(n1, n2)
    if np.any(s <= EPS_PAR):
        raise DegenerateConfiguration(
            "near-parallel normals: use two_body_euler_tensor_form for the regular combination")
    t = np.cross(n2, n1) / s[..., None]
    tkt1 = a1 * _dot(t, e11) ** 2 + b1 * _dot(t, e12) ** 2
    tkt2 = a2 * _dot(t, e21) ** 2 + b2 * _dot(t, e22) ** 2
    return tq * (tkt1 + tkt2)


def _tensor_parts(patch1, patch2):
    n1, a1, b1, _, _ = _patch_arrays(patch1)
    n2, a2, b2, _, _ = _patch_arrays(patch2)
    d = n1 - n2
    u = n1 + n2
    one_minus_c = 0.5 * _dot(d, d)
    one_plus_c = 0.5 * _dot(u, u)
    kbar = 0.5 * (a1 + b1) + 0.5 * (a2 + b2)
    # Delta_i n_i = 0, so n2 Delta1 n2 = u Delta1 u and n1 Delta2 n1 = u Delta2 u
    dsum = delta_quadratic(patch1, u) + delta_quadratic(patch2, u)
    return one_minus_c, one_plus_c, kbar, dsum


def two_body_euler_tensor_form(patch1, patch2):
    """Two-body Euler line density in the tensor representation.

    ``(1 - c)(kbar1 + kbar2) - (n1 Delta2 n1 + n2 Delta1 n2) / (1 + c)``
    with ``c = n1 . n2``, before the ``1 / |n1 x n2|`` Jacobian.

    Raises
    ------
    DegenerateConfiguration
        If ``1 + c <= 1e-9`` (antipodal normals).
    """
    omc, opc, kbar, dsum = _tensor_parts(patch1, patch2)
    if np.any(opc <= EPS_ANTI):
        raise DegenerateConfiguration("antipodal normals: blocking configuration")
    return omc * kbar - dsum / opc


def two_body_weight_expansion(patch1, patch2, L_max=2):
    """Truncated weight-basis expansion of the two-body tensor form.

    Evaluates the contraction
    ``k0(1) s0(2) - k1(1).s1(2) - sum_L (-1)^L d_{L+2}(1) : s_{L+2}(2) + (1<->2)``
    where ``d_{L+2} = Delta n^L / 4 pi`` is contracted with ``n'^{L+2}``:
    its two deviator slots against ``n'`` and its ``L`` normal slots giving
    ``(n . n')^L``. The overall ``1 / 4 pi`` of the weight normalisation is
    absorbed so the result converges to :func:`two_body_euler_tensor_form`
    as ``L_max -> inf`` for ``|n1 . n2| < 1``.
    """
    L_max = int(L_max)
    if L_max < 0:
        raise WeightError("L_max must be >= 0")
    n1 = np.asarray(patch1.normal, dtype=float)
    n2 = np.asarray(patch2.normal, dtype=float)
    c = _dot(n1, n2)
    k0_1 = weight_at(patch1, WeightIndex("k", 0)).data
    k0_2 = weight_at(patch2, WeightIndex("k", 0)).data
    # k0 s0 - k1.s1 pairs: s0 = 1, k1.s1 = k0 (n.n')
    total = k0_1 - k0_1 * c + k0_2 - k0_2 * c
    # rank-(L+2) deviator chains: (n' Delta n')(n . n')^L
    q12 = delta_quadratic(patch1, n2) / FOUR_PI
    q21 = delta_quadratic(patch2, n1) / FOUR_PI
    chain = np.ones_like(c)
    for L in range(L_max + 1):
        total = total - (-1.0) ** L * (q12 + q21) * chain
        chain = chain * c
    return FOUR_PI * total


def two_body_expansion_bound(patch1, patch2, L_max):
    """Geometric-series remainder bound ``|c|^(L_max+1) |Delta terms| / (1+c)``."""
    omc, opc, _, dsum = _tensor_parts(patch1, patch2)
    n1 = np.asarray(patch1.normal, dtype=float)
    n2 = np.asarray(patch2.normal, dtype=float)
    c = _dot(n1, n2)
    return np.abs(c) ** (int(L_max) + 1) * np.abs(dsum) / opc


# ---------------------------------------------------------------------------
# three-body forms


def _sorted_sum(*terms):
    s = np.sort(np.stack(np.broadcast_arrays(*terms), axis=0), axis=0)
    return s[0] + s[1] + s[2]


def three_body_euler_form(n1, n2, n3):
    """Symmetric product ``(1 - c12)(1 - c13)(1 - c23)``.

    Factors are multiplied in sorted order so that every permutation of the
    arguments yields the bit-identical result.
    """
    n1, n2, n3 = (np.asarray(x, dtype=float) for x in (n1, n2, n3))
    f = np.sort(np.stack(np.broadcast_arrays(1.0 - _dot(n1, n2), 1.0 - _dot(n1, n3),
                                             1.0 - _dot(n2, n3)), 0), axis=0)
    out = f[0] * f[1] * f[2]
    return float(out) if out.ndim == 0 else out


def three_body_weight_expansion(n1, n2, n3):
    """Eight-term expansion of the three-body Euler form in the sigma basis.

    ``s0 s0 s0 - sum_cyc s0(i) s1(j).s1(k) + sum_cyc s1(j).s2(i).s1(k)
    - tr(s2(1) s2(2) s2(3))`` with ``s0 = 1``, ``s1 = n``, ``s2 = n n``.
    Each cyclic group is summed in sorted order, which makes the result
    exactly invariant under permutations of the arguments.
    """
    ns = [np.asarray(x, dtype=float) for x in (n1, n2, n3)]
    S2 = [_outer(x, x) for x in ns]
    cyc = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    t1 = [_dot(ns[j], ns[k]) for i, j, k in cyc]
    t2 = [np.einsum("...a,...ab,...b->...", ns[j], S2[i], ns[k]) for i, j, k in cyc]
    t3 = [np.einsum("...ab,...bc,...ca->...", S2[i], S2[j], S2[k]) for i, j, k in cyc]
    out = 1.0 - _sorted_sum(*t1) + _sorted_sum(*t2) - _sorted_sum(*t3) / 3.0
    return float(out) if np.ndim(out) == 0 else out
