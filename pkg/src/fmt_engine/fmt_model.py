"""Zero-loop excess free-energy density in weighted densities.

Three variants share one interface (:meth:`FreeEnergyModel.phi` and
:meth:`FreeEnergyModel.gradient`):

* :class:`RosenfeldOriginal` - scalar/vector closed form.
* :class:`TarazonaTensor` - rank-2 tensor third-order term.
* :class:`Generalized` - a table of named monomials ``C_m P_m(n)`` contracted
  with derivatives of the generating function
  ``phi(x) = (1 - x) ln(1 - x) + x``; order-k monomials pair with the
  k-th derivative.

All functions accept arrays with leading grid axes and complex input
(used by :func:`virial_series_bulk`).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .geometry import minkowski_measures
from .weights import intersection_determinant, three_body_euler_form

__all__ = [
    "DomainError",
    "WeightedDensities",
    "FreeEnergyModel",
    "RosenfeldOriginal",
    "TarazonaTensor",
    "Generalized",
    "MONOMIALS",
    "phi_excess",
    "generating_phi",
    "spt_residual",
    "bulk_weighted_densities",
    "bulk_eos",
    "virial_series_bulk",
    "tarazona_phi3",
    "model_from_spec",
]

PI = math.pi


class DomainError(ArithmeticError):
    """Packing fraction outside the free-volume domain ``n_v < 1``."""


@dataclass(frozen=True)
class WeightedDensities:
    """Weighted densities with leading grid shape ``shape``.

    Scalars have shape ``shape``, vectors ``shape + (3,)``, tensors
    ``shape + (3, 3)``.
    """

    n_chi: np.ndarray
    n_k0: np.ndarray
    n_k1: np.ndarray
    n_d2: np.ndarray
    n_s0: np.ndarray
    n_s1: np.ndarray
    n_s2: np.ndarray
    n_v: np.ndarray

    @classmethod
    def zeros(cls, shape=(), dtype=float):
        s = tuple(np.atleast_1d(shape)) if shape != () else ()
        return cls(
            n_chi=np.zeros(s, dtype), n_k0=np.zeros(s, dtype), n_k1=np.zeros(s + (3,), dtype),
            n_d2=np.zeros(s + (3, 3), dtype), n_s0=np.zeros(s, dtype),
            n_s1=np.zeros(s + (3,), dtype), n_s2=np.zeros(s + (3, 3), dtype),
            n_v=np.zeros(s, dtype))

    @classmethod
    def make(cls, n_chi=0.0, n_k0=0.0, n_k1=None, n_d2=None, n_s0=0.0, n_s1=None, n_s2=None,
             n_v=0.0):
        """Build from partial input; missing vectors/tensors are zero."""
        sc = [np.asarray(x) for x in (n_chi, n_k0, n_s0, n_v)]
        shape = np.broadcast_shapes(*(a.shape for a in sc))
        dt = np.result_type(*sc, float)

        def vec(x):
            return np.zeros(shape + (3,), dt) if x is None else np.asarray(x)

        def ten(x):
            return np.zeros(shape + (3, 3), dt) if x is None else np.asarray(x)

        b = [np.broadcast_to(a, shape) for a in sc]
        return cls(n_chi=b[0], n_k0=b[1], n_k1=vec(n_k1), n_d2=ten(n_d2), n_s0=b[2],
                   n_s1=vec(n_s1), n_s2=ten(n_s2), n_v=b[3])

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def map(self, fn):
        return WeightedDensities(**{k: fn(v) for k, v in self.as_dict().items()})

    def contract(self, other):
        """Full contraction ``sum_A self_A * other_A`` over all components."""
        tot = 0
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            extra = np.ndim(a) - np.ndim(self.n_v)
            tot = tot + (np.sum(a * b, axis=tuple(range(-extra, 0))) if extra else a * b)
        return tot


FIELD_NAMES = tuple(f.name for f in fields(WeightedDensities))


def _check_domain(nv):
    if np.iscomplexobj(nv):
        return
    bad = ~(np.asarray(nv) < 1.0)
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise DomainError(f"n_v >= 1 (free volume exhausted) at index {tuple(int(i) for i in idx)}")


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _mv(T, v):
    return np.einsum("...ij,...j->...i", T, v)


def _mm(A, B):
    return np.einsum("...ij,...jk->...ik", A, B)


def _tr(A):
    return np.einsum("...ii->...", A)


def generating_phi(n_v):
    """Generating function and its first three derivatives.

    Returns
    -------
    tuple
        ``(phi, phi', phi'', phi''')`` with ``phi = (1-x) ln(1-x) + x``,
        ``phi' = -ln(1-x)``, ``phi'' = 1/(1-x)``, ``phi''' = 1/(1-x)^2``.
    """
    x = np.asarray(n_v)
    _check_domain(x)
    om = 1.0 - x
    lg = np.log(om)
    out = (om * lg + x, -lg, 1.0 / om, 1.0 / (om * om))
    if np.ndim(x) == 0 and not np.iscomplexobj(x):
        return tuple(float(o) for o in out)
    return out


def _phi_deriv(x, k):
    """k-th derivative of the generating function, k >= 1."""
    om = 1.0 - x
    if k == 1:
        return -np.log(om)
    return math.factorial(k - 2) / om ** (k - 1)


class FreeEnergyModel:
    name = "base"

    def phi(self, n: WeightedDensities):
        raise NotImplementedError

    def gradient(self, n: WeightedDensities) -> WeightedDensities:
        raise NotImplementedError

    def to_dict(self):
        return {"variant": self.name}

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))

    def __repr__(self):
        return f"{type(self).__name__}()"


def _zeros_like_vec(n):
    return np.zeros(np.shape(n.n_v) + (3,), dtype=np.result_type(n.n_v, float))


def _zeros_like_ten(n):
    return np.zeros(np.shape(n.n_v) + (3, 3), dtype=np.result_type(n.n_v, float))


class RosenfeldOriginal(FreeEnergyModel):
    """``-n_chi ln(1-n_v) + (n_k0 n_s0 - n_k1.n_s1)/(1-n_v)
    + (n_s0^3 - 3 n_s0 n_s1.n_s1) / (24 pi (1-n_v)^2)``."""

    name = "rosenfeld"

    def phi(self, n):
        _check_domain(n.n_v)
        om = 1.0 - n.n_v
        s11 = _dot(n.n_s1, n.n_s1)
        return (-n.n_chi * np.log(om) + (n.n_k0 * n.n_s0 - _dot(n.n_k1, n.n_s1)) / om
                + (n.n_s0**3 - 3.0 * n.n_s0 * s11) / (24.0 * PI * om * om))

    def gradient(self, n):
        _check_domain(n.n_v)
        om = 1.0 - n.n_v
        s11 = _dot(n.n_s1, n.n_s1)
        c3 = 1.0 / (24.0 * PI * om * om)
        two = n.n_k0 * n.n_s0 - _dot(n.n_k1, n.n_s1)
        three = n.n_s0**3 - 3.0 * n.n_s0 * s11
        return WeightedDensities(
            n_chi=-np.log(om),
            n_k0=n.n_s0 / om,
            n_k1=-n.n_s1 / om[..., None],
            n_d2=_zeros_like_ten(n),
            n_s0=n.n_k0 / om + c3 * (3.0 * n.n_s0**2 - 3.0 * s11),
            n_s1=-n.n_k1 / om[..., None] - (6.0 * c3 * n.n_s0)[..., None] * n.n_s1,
            n_s2=_zeros_like_ten(n),
            n_v=n.n_chi / om + two / om**2 + 2.0 * three / (24.0 * PI * om**3),
        )


class TarazonaTensor(FreeEnergyModel):
    """Rosenfeld's first two orders plus the tensor third-order term
    ``-(3/16 pi)[n_s0 n_s1.n_s1 - n_s1.n_s2.n_s1 + tr(n_s2^3) - n_s0 tr(n_s2^2)]
    / (1-n_v)^2``."""

    name = "tarazona"

    def _third(self, n):
        T = n.n_s2
        T2 = _mm(T, T)
        return (n.n_s0 * _dot(n.n_s1, n.n_s1) - _dot(n.n_s1, _mv(T, n.n_s1))
                + _tr(_mm(T2, T)) - n.n_s0 * _tr(T2))

    def phi(self, n):
        _check_domain(n.n_v)
        om = 1.0 - n.n_v
        return (-n.n_chi * np.log(om) + (n.n_k0 * n.n_s0 - _dot(n.n_k1, n.n_s1)) / om
                - 3.0 / (16.0 * PI) * self._third(n) / (om * om))

    def gradient(self, n):
        _check_domain(n.n_v)
        om = 1.0 - n.n_v
        c = -3.0 / (16.0 * PI) / (om * om)
        T = n.n_s2
        T2 = _mm(T, T)
        s1 = n.n_s1
        two = n.n_k0 * n.n_s0 - _dot(n.n_k1, s1)
        return WeightedDensities(
            n_chi=-np.log(om),
            n_k0=n.n_s0 / om,
            n_k1=-s1 / om[..., None],
            n_d2=_zeros_like_ten(n),
            n_s0=n.n_k0 / om + c * (_dot(s1, s1) - _tr(T2)),
            n_s1=-n.n_k1 / om[..., None] + c[..., None] * (2.0 * n.n_s0[..., None] * s1 - 2.0 * _mv(T, s1)),
            n_s2=c[..., None, None] * (-s1[..., :, None] * s1[..., None, :] + 3.0 * np.swapaxes(T2, -1, -2)
                                       - 2.0 * n.n_s0[..., None, None] * np.swapaxes(T, -1, -2)),
            n_v=n.n_chi / om + two / om**2 + 2.0 * (-3.0 / (16.0 * PI)) * self._third(n) / om**3,
        )


# ---------------------------------------------------------------------------
# generalized monomial table


def _m_chi(n):
    return n.n_chi, {"n_chi": np.ones_like(n.n_chi)}


def _m_k0s0(n):
    return n.n_k0 * n.n_s0, {"n_k0": n.n_s0, "n_s0": n.n_k0}


def _m_k1s1(n):
    return _dot(n.n_k1, n.n_s1), {"n_k1": n.n_s1, "n_s1": n.n_k1}


def _m_d2s2(n):
    return (np.einsum("...ij,...ij->...", n.n_d2, n.n_s2),
            {"n_d2": n.n_s2, "n_s2": n.n_d2})


def _m_s0cube(n):
    return n.n_s0**3, {"n_s0": 3.0 * n.n_s0**2}


def _m_s0s1s1(n):
    s11 = _dot(n.n_s1, n.n_s1)
    return n.n_s0 * s11, {"n_s0": s11, "n_s1": 2.0 * n.n_s0[..., None] * n.n_s1}


def _m_s1s2s1(n):
    Ts = _mv(n.n_s2, n.n_s1)
    Tts = _mv(np.swapaxes(n.n_s2, -1, -2), n.n_s1)
    return _dot(n.n_s1, Ts), {"n_s1": Ts + Tts, "n_s2": n.n_s1[..., :, None] * n.n_s1[..., None, :]}


def _m_trs2cube(n):
    T2 = _mm(n.n_s2, n.n_s2)
    return _tr(_mm(T2, n.n_s2)), {"n_s2": 3.0 * np.swapaxes(T2, -1, -2)}


def _m_s0trs2sq(n):
    tr2 = _tr(_mm(n.n_s2, n.n_s2))
    return n.n_s0 * tr2, {"n_s0": tr2, "n_s2": 2.0 * n.n_s0[..., None, None] * np.swapaxes(n.n_s2, -1, -2)}


MONOMIALS = {
    # name: (order, evaluator returning (value, partials))
    "chi": (1, _m_chi),
    "k0*s0": (2, _m_k0s0),
    "k1.s1": (2, _m_k1s1),
    "d2:s2": (2, _m_d2s2),
    "s0^3": (3, _m_s0cube),
    "s0*s1.s1": (3, _m_s0s1s1),
    "s1.s2.s1": (3, _m_s1s2s1),
    "tr(s2^3)": (3, _m_trs2cube),
    "s0*tr(s2^2)": (3, _m_s0trs2sq),
}

PRESETS = {
    "rosenfeld": {"chi": 1.0, "k0*s0": 1.0, "k1.s1": -1.0,
                  "s0^3": 1.0 / (24.0 * PI), "s0*s1.s1": -3.0 / (24.0 * PI)},
    "tarazona": {"chi": 1.0, "k0*s0": 1.0, "k1.s1": -1.0,
                 "s0*s1.s1": -3.0 / (16.0 * PI), "s1.s2.s1": 3.0 / (16.0 * PI),
                 "tr(s2^3)": -3.0 / (16.0 * PI), "s0*tr(s2^2)": 3.0 / (16.0 * PI)},
}


class Generalized(FreeEnergyModel):
    """``Phi = sum_m C_m P_m(n) phi^(k_m)(n_v)`` over named monomials.

    Parameters
    ----------
    coefficients : dict or str
        Monomial name to coefficient, or the name of a preset
        (``"rosenfeld"``, ``"tarazona"``). Monomials are symmetric in their
        weight indices by construction.
    dimension : int
        Embedding dimension ``D``; every monomial order must be ``<= D``.
    """

    name = "generalized"

    def __init__(self, coefficients="rosenfeld", dimension=3):
        if isinstance(coefficients, str):
            if coefficients not in PRESETS:
                raise ValueError(f"unknown preset {coefficients!r}")
            coefficients = PRESETS[coefficients]
        self.dimension = int(dimension)
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        coef = {}
        for k, v in coefficients.items():
            if k not in MONOMIALS:
                raise ValueError(f"unknown monomial {k!r}; known: {sorted(MONOMIALS)}")
            if MONOMIALS[k][0] > self.dimension:
                raise ValueError(f"monomial {k!r} has order {MONOMIALS[k][0]} > dimension {self.dimension}")
            coef[k] = float(v)
        self.coefficients = coef

    def to_dict(self):
        return {"variant": self.name, "dimension": self.dimension,
                "coefficients": dict(sorted(self.coefficients.items()))}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text) if isinstance(text, str) else text
        return cls(d["coefficients"], d.get("dimension", 3))

    def __repr__(self):
        return f"Generalized({self.coefficients!r}, dimension={self.dimension})"

    def phi(self, n):
        _check_domain(n.n_v)
        total = 0
        for name, c in self.coefficients.items():
            order, fn = MONOMIALS[name]
            val, _ = fn(n)
            total = total + c * val * _phi_deriv(n.n_v, order)
        return total + np.zeros_like(n.n_v)

    def gradient(self, n):
        _check_domain(n.n_v)
        g = {k: np.zeros_like(getattr(n, k), dtype=np.result_type(getattr(n, k), float))
             for k in FIELD_NAMES}
        for name, c in self.coefficients.items():
            order, fn = MONOMIALS[name]
            val, parts = fn(n)
            d = _phi_deriv(n.n_v, order)
            for k, p in parts.items():
                extra = np.ndim(p) - np.ndim(d)
                g[k] = g[k] + c * np.reshape(d, np.shape(d) + (1,) * extra) * p
            g["n_v"] = g["n_v"] + c * val * _phi_deriv(n.n_v, order + 1)
        return WeightedDensities(**g)


def model_from_spec(spec):
    """Build a model from a name or a config mapping."""
    if isinstance(spec, FreeEnergyModel):
        return spec
    if isinstance(spec, str):
        spec = {"variant": spec}
    v = spec.get("variant", "rosenfeld")
    if v == "rosenfeld":
        return RosenfeldOriginal()
    if v == "tarazona":
        return TarazonaTensor()
    if v == "generalized":
        return Generalized(spec.get("coefficients", spec.get("preset", "rosenfeld")),
                           spec.get("dimension", 3))
    raise ValueError(f"unknown model variant {v!r}")


# ---------------------------------------------------------------------------
# operations


def phi_excess(n: WeightedDensities, model: FreeEnergyModel):
    """Excess free-energy density (units of kT per volume)."""
    out = model.phi(n)
    return float(out) if np.ndim(out) == 0 and not np.iscomplexobj(out) else out


def spt_residual(n: WeightedDensities, model: FreeEnergyModel):
    """``Phi + dPhi/dn_v - sum_A n_A dPhi/dn_A - n_chi`` (sum includes ``v``)."""
    phi = model.phi(n)
    g = model.gradient(n)
    out = phi + g.n_v - n.contract(g) - n.n_chi
    return float(out) if np.ndim(out) == 0 else out


def bulk_weighted_densities(body, rho) -> WeightedDensities:
    """Uniform-density weighted densities ``n_A = rho * m_A``.

    In isotropic bulk the vector densities vanish and
    ``n_s2 = rho S I / 3``.
    """
    rho = np.asarray(rho)
    if np.any(np.real(rho) < 0) and not np.iscomplexobj(rho):
        raise ValueError("rho must be >= 0")
    m = minkowski_measures(body)
    eye = np.eye(3)
    return WeightedDensities.make(
        n_chi=rho * m.euler_body,
        n_k0=rho * m.mean_curvature_integral / (4.0 * PI),
        n_s0=rho * m.surface,
        n_v=rho * m.volume,
        n_s2=(rho * m.surface / 3.0)[..., None, None] * eye,
    )


def bulk_eos(body, eta, model):
    """Bulk compressibility factor and excess chemical potential.

    Returns
    -------
    dict
        ``Z`` (= beta p / rho), ``beta_p``, ``mu_ex`` (beta mu_ex) and ``rho``.
    """
    eta = float(eta)
    if not 0.0 <= eta < 1.0:
        raise DomainError(f"packing fraction must lie in [0, 1), got {eta}")
    V = minkowski_measures(body).volume
    rho = eta / V
    unit = bulk_weighted_densities(body, 1.0)
    n = bulk_weighted_densities(body, rho)
    phi = model.phi(n)
    g = model.gradient(n)
    mu_ex = float(unit.contract(g))
    p_ex = float(rho * mu_ex - phi)
    Z = 1.0 + (p_ex / rho if rho > 0 else 0.0)
    return {"Z": Z, "beta_p": rho + p_ex, "mu_ex": mu_ex, "rho": rho}


def virial_series_bulk(body, model, order=3, n_points=64, radius=0.1):
    """Reduced virial coefficients from the bulk excess free energy.

    The Taylor coefficients ``a_k`` of ``Phi(rho)`` are extracted by a
    trapezoidal Cauchy integral on the circle ``|rho| = radius / v``; then
    ``B_k = (k - 1) a_k`` and the reduced values ``B_k / v^(k-1)`` are
    returned.
    """
    order = int(order)
    if not 1 <= order <= 3:
        raise ValueError("order must be 1, 2 or 3")
    V = minkowski_measures(body).volume
    r = radius / V
    theta = 2.0 * PI * np.arange(n_points) / n_points
    rho = r * np.exp(1j * theta)
    phi = model.phi(bulk_weighted_densities(body, rho))
    out = {"B1": 1.0}
    for k in range(2, order + 1):
        a = np.mean(phi * np.exp(-1j * k * theta)) / r**k
        out[f"B{k}"] = float((k - 1) * a.real) / V ** (k - 1)
    return out


def tarazona_phi3(n1, n2, n3):
    """``(1/16 pi)[(1-c12)(1-c13)(1-c23) - M3]`` for unit normals."""
    n1, n2, n3 = (np.asarray(x, dtype=float) for x in (n1, n2, n3))
    M3 = intersection_determinant(np.stack(np.broadcast_arrays(n1, n2, n3), axis=-2))
    out = (three_body_euler_form(n1, n2, n3) - M3) / (16.0 * PI)
    return float(out) if np.ndim(out) == 0 else out
