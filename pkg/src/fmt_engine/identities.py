"""Random-configuration identity checks shared by the CLI and the test-suite."""
from __future__ import annotations

import numpy as np

from .fmt_model import RosenfeldOriginal, TarazonaTensor, WeightedDensities, spt_residual
from .geometry import PatchSet
from .weights import (_tensor_parts, three_body_euler_form, three_body_weight_expansion,
                      two_body_euler_angle_form, two_body_euler_tensor_form,
                      two_body_expansion_bound, two_body_weight_expansion)


def random_unit(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]


def random_patches(rng, n, kmax=2.0):
    """Random convex patches: uniform normals, curvatures in ``(0, kmax)``."""
    nrm = random_unit(rng, n)
    e1 = np.cross(nrm, random_unit(rng, n))
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(nrm, e1)
    k1 = kmax * rng.random(n)
    k2 = kmax * rng.random(n)
    return PatchSet(np.zeros((n, 3)), nrm, k1, k2, e1, e2, np.ones(n))


def random_densities(rng, n, nv_max=0.9):
    """Admissible random weighted-density tuples with full tensor structure."""
    s2 = rng.standard_normal((n, 3, 3))
    s2 = 0.5 * (s2 + np.swapaxes(s2, 1, 2))
    return WeightedDensities.make(
        n_chi=rng.random(n), n_k0=rng.random(n), n_k1=0.3 * rng.standard_normal((n, 3)),
        n_s0=3.0 * rng.random(n), n_s1=rng.standard_normal((n, 3)), n_s2=s2,
        n_v=nv_max * rng.random(n))


def angle_tensor(n, seed, chunk=250_000):
    """Angle form times ``|n1 x n2|`` against the tensor form.

    The relative error is measured against the magnitude of the two
    constituent terms ``|(1-c)(kbar1+kbar2)| + |Delta terms / (1+c)|``, which
    is the condition scale of the difference.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_plain = 0.0
    for s in range(0, n, chunk):
        m = min(chunk, n - s)
        p1, p2 = random_patches(rng, m), random_patches(rng, m)
        a = two_body_euler_angle_form(p1, p2)
        t = two_body_euler_tensor_form(p1, p2)
        sn = np.linalg.norm(np.cross(p1.normal, p2.normal), axis=1)
        omc, opc, kb, ds = _tensor_parts(p1, p2)
        scale = np.abs(omc * kb) + np.abs(ds / opc)
        d = np.abs(a * sn - t)
        worst = max(worst, float(np.max(d / scale)))
        worst_plain = max(worst_plain, float(np.max(d / np.abs(t))))
    return {"n": n, "seed": seed, "max_rel_err": worst, "max_rel_err_plain": worst_plain}


def expansion_convergence(n, seed, L_values=(0, 1, 2, 4, 6, 8)):
    """Deviation of the truncated weight expansion from the tensor form."""
    rng = np.random.default_rng(seed)
    p1, p2 = random_patches(rng, n), random_patches(rng, n)
    t = two_body_euler_tensor_form(p1, p2)
    devs, within = [], True
    for L in L_values:
        d = np.abs(two_body_weight_expansion(p1, p2, L) - t)
        b = two_body_expansion_bound(p1, p2, L)
        within &= bool(np.all(d <= b * (1 + 1e-9) + 1e-12 * (1 + np.abs(t))))
        devs.append(d)
    devs = np.array(devs)
    monotone = bool(np.all(np.diff(devs, axis=0) <= 1e-12 * (1 + np.abs(t))))
    return {"n": n, "seed": seed, "L": list(L_values),
            "mean_abs_dev": [float(x) for x in devs.mean(axis=1)],
            "monotone": monotone, "within_bound": within}


def three_body(n, seed, chunk=250_000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    cyclic = True
    for s in range(0, n, chunk):
        m = min(chunk, n - s)
        a, b, c = random_unit(rng, m), random_unit(rng, m), random_unit(rng, m)
        P = three_body_euler_form(a, b, c)
        X = three_body_weight_expansion(a, b, c)
        worst = max(worst, float(np.max(np.abs(P - X))))
        for perm in ((b, c, a), (c, a, b)):
            cyclic &= bool(np.array_equal(three_body_euler_form(*perm), P))
            cyclic &= bool(np.array_equal(three_body_weight_expansion(*perm), X))
    return {"n": n, "seed": seed, "max_abs_err": worst, "cyclic_exact": cyclic}


def spt(n, seed):
    rng = np.random.default_rng(seed)
    nd = random_densities(rng, n)
    out = {"n": n, "seed": seed}
    for model in (RosenfeldOriginal(), TarazonaTensor()):
        r = spt_residual(nd, model)
        out[model.name] = float(np.max(np.abs(r) / np.maximum(1.0, np.abs(model.phi(nd)))))
    return out
