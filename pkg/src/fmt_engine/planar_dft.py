"""Planar (one-dimensional) density functional theory for hard spheres.

Weights are projected onto the wall normal ``z``. For a sphere of radius
``R`` and ``|z| <= R`` the non-vanishing projected kernels are::

    v      pi (R^2 - z^2)          chi    1 / (2R)
    s0     2 pi R                  k0     1 / 2
    s1z    2 pi z                  k1z    z / (2R)
    s2zz   2 pi z^2 / R            s2xx = s2yy = pi (R^2 - z^2) / R

Each kernel is integrated exactly over grid cells, so the discrete sum
rules hold to rounding. Densities live on cell centres ``z_j = z0 + (j+1/2) dz``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .fmt_model import DomainError, WeightedDensities, bulk_eos, model_from_spec
from .geometry import Sphere

__all__ = [
    "Grid1D",
    "DensityProfile",
    "PlanarKernels",
    "SolverError",
    "planar_kernels",
    "weighted_density_fields",
    "mu_ex_field",
    "hard_wall",
    "picard_solve",
    "grand_potential",
    "contact_density",
    "KERNEL_NAMES",
]

KERNEL_NAMES = ("chi", "k0", "k1z", "s0", "s1z", "s2xx", "s2yy", "s2zz", "v")
_ODD = {"k1z", "s1z"}


class SolverError(RuntimeError):
    def __init__(self, message, history=None):
        self.history = list(history or [])
        super().__init__(message)


@dataclass(frozen=True)
class Grid1D:
    dz: float
    n_points: int
    origin: float = 0.0

    def __post_init__(self):
        if not self.dz > 0:
            raise ValueError("dz must be positive")
        if int(self.n_points) < 64:
            raise ValueError("n_points must be >= 64")

    @property
    def z(self):
        return self.origin + (np.arange(self.n_points) + 0.5) * self.dz

    @property
    def extent(self):
        return self.n_points * self.dz

    @classmethod
    def for_wall(cls, R, dz=None, extent_diameters=20.0):
        dz = R / 100.0 if dz is None else float(dz)
        n = int(math.ceil(extent_diameters * 2.0 * R / dz))
        return cls(dz, max(n, 64), 0.0)


@dataclass
class DensityProfile:
    grid: Grid1D
    rho: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def z(self):
        return self.grid.z


# antiderivatives of the polynomial kernels on [-R, R]
def _antiderivative(name, R, z):
    if name == "v":
        return math.pi * (R * R * z - z**3 / 3.0)
    if name == "s0":
        return 2.0 * math.pi * R * z
    if name == "s1z":
        return math.pi * z * z
    if name == "s2zz":
        return 2.0 * math.pi * z**3 / (3.0 * R)
    if name in ("s2xx", "s2yy"):
        return math.pi * (R * R * z - z**3 / 3.0) / R
    if name == "chi":
        return z / (2.0 * R)
    if name == "k0":
        return 0.5 * z
    if name == "k1z":
        return z * z / (4.0 * R)
    raise KeyError(name)


@dataclass(frozen=True)
class PlanarKernels:
    """Cell-integrated kernels ``w[name][m]`` for offsets ``m = -P..P``."""

    R: float
    dz: float
    P: int
    weights: dict

    def matrix(self, names=KERNEL_NAMES):
        return np.stack([self.weights[k] for k in names])

    def integral(self, name):
        return float(np.sum(self.weights[name]))


def planar_kernels(R, grid) -> PlanarKernels:
    """Cell-integrated planar projections of the hard-sphere weights.

    Parameters
    ----------
    R : float
        Sphere radius; must be resolved by at least three cells.
    grid : Grid1D or float
        Grid (or spacing ``dz``).
    """
    dz = grid.dz if isinstance(grid, Grid1D) else float(grid)
    R = float(R)
    if not R >= 3.0 * dz * (1 - 1e-12):
        raise ValueError(f"radius {R} under-resolved: need R >= 3 dz (dz = {dz})")
    P = int(math.ceil(R / dz - 0.5 - 1e-12))
    m = np.arange(-P, P + 1)
    lo = np.clip((m - 0.5) * dz, -R, R)
    hi = np.clip((m + 0.5) * dz, -R, R)
    w = {k: _antiderivative(k, R, hi) - _antiderivative(k, R, lo) for k in KERNEL_NAMES}
    return PlanarKernels(R, dz, P, w)


def hard_wall(grid: Grid1D, R):
    """External potential of a hard wall at ``z = 0``: infinite for centres ``z < R``."""
    V = np.zeros(grid.n_points)
    V[grid.z < R] = np.inf
    return V


def _pads(profile_rho, P, left, right):
    return np.concatenate([np.full(P, left), profile_rho, np.full(P, right)])


def weighted_density_fields(rho, kernels: PlanarKernels, left=0.0, right=None,
                            backend=None) -> WeightedDensities:
    """Weighted densities ``n_A(z_i) = sum_j rho_j w_A[i - j]`` on the grid.

    ``left`` and ``right`` are the density values assumed beyond the grid
    ends (default: 0 on the left, the last grid value on the right).
    """
    rho = np.asarray(rho, dtype=float)
    P = kernels.P
    if len(rho) < 2 * P + 1:
        raise ValueError("kernel support exceeds the grid extent")
    right = rho[-1] if right is None else right
    core = _backend.core if backend is None else _backend.get(backend)
    ext = _pads(rho, P, left, right)
    out = core.convolve_multi(ext, kernels.matrix())
    f = dict(zip(KERNEL_NAMES, out))
    n = len(rho)
    k1 = np.zeros((n, 3))
    k1[:, 2] = f["k1z"]
    s1 = np.zeros((n, 3))
    s1[:, 2] = f["s1z"]
    s2 = np.zeros((n, 3, 3))
    s2[:, 0, 0] = f["s2xx"]
    s2[:, 1, 1] = f["s2yy"]
    s2[:, 2, 2] = f["s2zz"]
    return WeightedDensities(n_chi=f["chi"], n_k0=f["k0"], n_k1=k1, n_d2=np.zeros((n, 3, 3)),
                             n_s0=f["s0"], n_s1=s1, n_s2=s2, n_v=f["v"])


def _gradient_components(g: WeightedDensities):
    return {
        "chi": g.n_chi, "k0": g.n_k0, "k1z": g.n_k1[..., 2], "s0": g.n_s0,
        "s1z": g.n_s1[..., 2], "s2xx": g.n_s2[..., 0, 0], "s2yy": g.n_s2[..., 1, 1],
        "s2zz": g.n_s2[..., 2, 2], "v": g.n_v,
    }


def mu_ex_field(n_fields: WeightedDensities, model, kernels: PlanarKernels, left=None, right=None,
                backend=None):
    """Excess chemical potential ``beta mu_ex(z_j) = sum_A sum_i dPhi/dn_A(z_i) w_A[i - j]``.

    This is the exact discrete adjoint of :func:`weighted_density_fields`
    (correlation, i.e. convolution with the mirrored kernel; odd kernels
    flip sign). ``left`` / ``right`` give the gradient values beyond the
    grid ends as dicts keyed by kernel name (default: zero on the left,
    the last grid value on the right).
    """
    model = model_from_spec(model)
    nv = np.asarray(n_fields.n_v)
    bad = ~(nv < 1.0)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise DomainError(f"n_v = {nv[j]:.6g} >= 1 at node {j}")
    g = _gradient_components(model.gradient(n_fields))
    P = kernels.P
    rows = []
    for k in KERNEL_NAMES:
        lv = 0.0 if left is None else left[k]
        rv = g[k][-1] if right is None else right[k]
        rows.append(_pads(g[k], P, lv, rv))
    core = _backend.core if backend is None else _backend.get(backend)
    return core.correlate_multi(np.stack(rows), kernels.matrix())


def _bulk_gradient(model, R, rho_b, kernels):
    ones = np.full(2 * kernels.P + 1, rho_b)
    n = weighted_density_fields(ones, kernels, rho_b, rho_b)
    g = _gradient_components(model.gradient(n))
    return {k: float(v[kernels.P]) for k, v in g.items()}


def picard_solve(model, V_ext, rho_b, R=0.5, grid=None, alpha=0.05, tol=1e-8, max_iter=100_000,
                 rho0=None, backend=None) -> DensityProfile:
    """Fixed-point iteration ``rho = rho_b exp(mu_b - mu_ex(z) - V_ext(z))`` with mixing.

    Parameters
    ----------
    model : FreeEnergyModel or str
    V_ext : ndarray or callable
        Reduced external potential on the grid nodes (``inf`` marks the
        excluded zone), or a callable ``V_ext(z)``.
    rho_b : float
        Bulk number density at the far (right) end.
    R : float
        Sphere radius.
    grid : Grid1D, optional
        Default: ``dz = R / 100`` over 20 diameters.
    alpha : float
        Initial mixing parameter in ``(0, 1]``; halved whenever the residual
        grows or the trial density leaves the domain.

    Returns
    -------
    DensityProfile
        ``info`` holds iterations, final residual, alpha and history.
    """
    model = model_from_spec(model)
    if not 0.0 < alpha <= 1.0:
        raise ValueError("mixing alpha must lie in (0, 1]")
    grid = Grid1D.for_wall(R) if grid is None else grid
    if grid.extent < 10 * 2 * R * (1 - 1e-12):
        raise ValueError("grid extent must cover at least 10 particle diameters")
    z = grid.z
    V = np.asarray(V_ext(z) if callable(V_ext) else V_ext, dtype=float)
    if V.shape != z.shape:
        raise ValueError("V_ext must have one value per grid node")
    kern = planar_kernels(R, grid)
    sphere = Sphere(R)
    eta_b = rho_b * 4.0 * math.pi * R**3 / 3.0
    mu_b = bulk_eos(sphere, eta_b, model)["mu_ex"]
    allowed = np.isfinite(V)
    boltz = np.where(allowed, np.exp(-np.where(allowed, V, 0.0)), 0.0)
    left_rho = rho_b if allowed[0] else 0.0
    gb = _bulk_gradient(model, R, rho_b, kern)
    gl = gb if allowed[0] else {k: 0.0 for k in KERNEL_NAMES}

    def update(rho):
        n = weighted_density_fields(rho, kern, left_rho, rho_b, backend)
        mu = mu_ex_field(n, model, kern, gl, gb, backend)
        return rho_b * boltz * np.exp(mu_b - mu)

    rho = np.where(allowed, rho_b, 0.0) if rho0 is None else np.asarray(rho0, dtype=float).copy()
    history = []
    new = update(rho)
    res = float(np.max(np.abs(new - rho)) / rho_b)
    history.append(res)
    it = 0
    while res >= tol:
        if it >= max_iter:
            raise SolverError(f"Picard did not converge in {max_iter} iterations (residual {res:.3e})",
                              history)
        it += 1
        trial = (1.0 - alpha) * rho + alpha * new
        try:
            tnew = update(trial)
            tres = float(np.max(np.abs(tnew - trial)) / rho_b)
            ok = np.isfinite(tres) and tres <= 2.0 * res
        except DomainError:
            ok = False
        if not ok:
            alpha *= 0.5
            if alpha < 1e-8:
                raise SolverError("mixing parameter underflow: iteration diverges", history)
            continue
        rho, new, res = trial, tnew, tres
        history.append(res)
    return DensityProfile(grid, rho, {"iterations": it, "residual": res, "alpha": alpha,
                                      "history": history, "R": R, "rho_b": rho_b,
                                      "model": model.to_dict(), "mu_ex_bulk": mu_b})


def grand_potential(profile: DensityProfile, model, mu, V_ext, R=None, right=None, left=0.0):
    """Grand potential per unit area ``Omega/A`` (units of kT).

    ``Omega = sum_j dz [rho (ln rho - 1) + Phi(n) - rho (mu - V_ext)]``
    with thermal wavelength 1 and ``0 ln 0 = 0``; ``mu`` is the total
    reduced chemical potential.
    """
    model = model_from_spec(model)
    R = profile.info.get("R") if R is None else R
    grid = profile.grid
    rho = np.asarray(profile.rho, dtype=float)
    V = np.asarray(V_ext(grid.z) if callable(V_ext) else V_ext, dtype=float)
    kern = planar_kernels(R, grid)
    n = weighted_density_fields(rho, kern, left, rho[-1] if right is None else right)
    phi = model.phi(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ideal = np.where(rho > 0, rho * (np.log(np.where(rho > 0, rho, 1.0)) - 1.0), 0.0)
        ext = np.where(rho > 0, rho * (mu - np.where(np.isfinite(V), V, 0.0)), 0.0)
    return float(grid.dz * np.sum(ideal + phi - ext))


def contact_density(profile: DensityProfile, R=None):
    """Density at contact ``z = R`` by quadratic extrapolation of the first three cells."""
    R = profile.info.get("R") if R is None else R
    z = profile.z
    j = int(np.searchsorted(z, R))
    zz = z[j:j + 3]
    rr = profile.rho[j:j + 3]
    c = np.polyfit(zz - R, rr, 2)
    return float(c[-1])
