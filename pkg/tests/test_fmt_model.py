import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fmt_engine.fmt_model import (FIELD_NAMES, MONOMIALS, PRESETS, DomainError, Generalized,
                                  RosenfeldOriginal, TarazonaTensor, WeightedDensities,
                                  bulk_eos, bulk_weighted_densities, generating_phi, model_from_spec,
                                  phi_excess, spt_residual, tarazona_phi3, virial_series_bulk)
from fmt_engine.geometry import Sphere, Spheroid
from fmt_engine.identities import random_densities, random_unit
from fmt_engine.weights import three_body_euler_form

MODELS = [RosenfeldOriginal(), TarazonaTensor(), Generalized("rosenfeld"), Generalized("tarazona")]


def spt_free_energy_per_particle(eta):
    """Scaled-particle (PY compressibility) excess free energy per particle."""
    return -math.log(1 - eta) + 3 * eta / (1 - eta) + 1.5 * eta**2 / (1 - eta) ** 2


def pick(nd, i):
    return nd.map(lambda a: a[i])


def test_zero_densities():
    z = WeightedDensities.zeros()
    for m in MODELS:
        assert phi_excess(z, m) == 0.0
        assert spt_residual(z, m) == 0.0


@pytest.mark.parametrize("model", MODELS, ids=lambda m: repr(m)[:20])
def test_bulk_value_matches_spt(model):
    eta = 0.3
    s = Sphere(1.0)
    rho = eta / (4 * math.pi / 3)
    phi = phi_excess(bulk_weighted_densities(s, rho), model)
    assert phi / rho == pytest.approx(spt_free_energy_per_particle(eta), rel=1e-13)


def test_bulk_variants_equal():
    n = bulk_weighted_densities(Sphere(0.5), 1.1)
    assert phi_excess(n, TarazonaTensor()) == pytest.approx(phi_excess(n, RosenfeldOriginal()), rel=1e-14)


def test_log_term_absent_without_chi():
    nd = random_densities(np.random.default_rng(0), 10)
    a = nd.map(lambda x: x)
    b = WeightedDensities(**{**a.as_dict(), "n_chi": np.zeros(10)})
    r = RosenfeldOriginal()
    diff = r.phi(a) - r.phi(b)
    assert np.allclose(diff, -a.n_chi * np.log(1 - a.n_v), rtol=1e-13)


def test_generating_phi():
    assert generating_phi(0.0) == (0.0, 0.0, 1.0, 1.0)
    p = generating_phi(0.5)
    assert p[0] == pytest.approx(0.5 * math.log(0.5) + 0.5, rel=1e-15)
    assert p[0] == pytest.approx(0.153426, abs=1e-6)
    assert p[1:] == pytest.approx((math.log(2), 2.0, 4.0))
    with pytest.raises(DomainError):
        generating_phi(1.0)


@given(st.floats(0.0, 0.95))
def test_generating_phi_derivatives_fd(x):
    h = 1e-6
    f = generating_phi
    for k in range(3):
        fd = (f(x + h)[k] - f(x - h)[k]) / (2 * h) if x > h else None
        if fd is not None:
            assert fd == pytest.approx(f(x)[k + 1], rel=1e-5, abs=1e-8)


def test_domain_error():
    n = WeightedDensities.make(n_chi=1.0, n_s0=1.0, n_v=1.0)
    for m in MODELS:
        with pytest.raises(DomainError):
            m.phi(n)


def test_generalized_equals_closed_forms():
    nd = random_densities(np.random.default_rng(1), 2000)
    for preset, closed in (("rosenfeld", RosenfeldOriginal()), ("tarazona", TarazonaTensor())):
        g = Generalized(preset)
        a, b = g.phi(nd), closed.phi(nd)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
        ga, gb = g.gradient(nd), closed.gradient(nd)
        for k in FIELD_NAMES:
            assert np.allclose(getattr(ga, k), getattr(gb, k), rtol=1e-11, atol=1e-11), k


def test_generalized_term_by_term():
    # each monomial times its phi derivative equals the printed closed-form term
    nd = random_densities(np.random.default_rng(2), 500)
    om = 1 - nd.n_v
    s1s1 = np.einsum("ni,ni->n", nd.n_s1, nd.n_s1)
    k1s1 = np.einsum("ni,ni->n", nd.n_k1, nd.n_s1)
    printed = {
        "chi": -nd.n_chi * np.log(om),
        "k0*s0": nd.n_k0 * nd.n_s0 / om,
        "k1.s1": k1s1 / om,
        "s0^3": nd.n_s0**3 / om**2,
        "s0*s1.s1": nd.n_s0 * s1s1 / om**2,
    }
    for name, want in printed.items():
        got = Generalized({name: 1.0}).phi(nd)
        assert np.allclose(got, want, rtol=1e-13, atol=1e-13), name


def test_generalized_json_roundtrip():
    g = Generalized({"chi": 1.0, "k0*s0": 0.9, "s0^3": 0.01})
    h = Generalized.from_json(g.to_json())
    assert h == g and h.to_json() == g.to_json()
    assert model_from_spec(json_dict := g.to_dict()) == g
    assert json_dict["variant"] == "generalized"


def test_generalized_validation():
    with pytest.raises(ValueError):
        Generalized({"bogus": 1.0})
    with pytest.raises(ValueError):
        Generalized({"s0^3": 1.0}, dimension=2)
    with pytest.raises(ValueError):
        Generalized("white-bear")
    assert set(PRESETS["tarazona"]) <= set(MONOMIALS)


def test_model_from_spec():
    assert model_from_spec("tarazona") == TarazonaTensor()
    assert model_from_spec({"variant": "generalized", "preset": "tarazona"}) == Generalized("tarazona")
    with pytest.raises(ValueError):
        model_from_spec("nope")


def test_spt_residual_rosenfeld_random():
    nd = random_densities(np.random.default_rng(3), 10_000)
    r = RosenfeldOriginal()
    res = spt_residual(nd, r)
    assert np.max(np.abs(res) / np.maximum(1, np.abs(r.phi(nd)))) <= 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.99))
def test_spt_residual_property(seed, nvmax):
    nd = random_densities(np.random.default_rng(seed), 32, nv_max=nvmax)
    for m in (RosenfeldOriginal(), Generalized("rosenfeld")):
        res = spt_residual(nd, m)
        assert np.all(np.abs(res) <= 1e-12 * np.maximum(1, np.abs(m.phi(nd))))


@given(st.floats(0.0, 5.0), st.floats(0.1, 2.0))
def test_spt_residual_tarazona_isotropic_bulk(rho, R):
    n = bulk_weighted_densities(Sphere(R), rho * 0.9 / (4 * math.pi * R**3 / 3) / 5.0)
    t = TarazonaTensor()
    assert abs(spt_residual(n, t)) <= 1e-12 * max(1, abs(t.phi(n)))


def test_tarazona_isotropic_equivalence_random():
    rng = np.random.default_rng(4)
    nd = random_densities(rng, 1000)
    iso = WeightedDensities(**{**nd.as_dict(), "n_k1": np.zeros((1000, 3)), "n_s1": np.zeros((1000, 3)),
                               "n_s2": nd.n_s0[:, None, None] / 3 * np.eye(3)})
    assert np.allclose(TarazonaTensor().phi(iso), RosenfeldOriginal().phi(iso), rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: repr(m)[:20])
def test_gradient_finite_difference(model):
    nd = random_densities(np.random.default_rng(5), 50, nv_max=0.5)
    g = model.gradient(nd)
    h = 1e-5
    for k in FIELD_NAMES:
        base = getattr(nd, k)
        G = getattr(g, k)
        comp_shape = base.shape[1:]
        for idx in np.ndindex(*comp_shape):
            def shifted(d):
                arr = np.array(base, dtype=float, copy=True)
                arr[(slice(None),) + idx] += d
                return WeightedDensities(**{**nd.as_dict(), k: arr})
            fd = (model.phi(shifted(h)) - model.phi(shifted(-h))) / (2 * h)
            an = G[(slice(None),) + idx]
            assert np.allclose(an, fd, rtol=1e-8, atol=1e-8), (k, idx)


def test_bulk_weighted_densities():
    rho = 0.2
    n = bulk_weighted_densities(Sphere(1.0), rho)
    assert float(n.n_v) == pytest.approx(rho * 4 * math.pi / 3)
    assert float(n.n_chi) == pytest.approx(rho)
    assert float(n.n_s0) == pytest.approx(rho * 4 * math.pi)
    assert float(n.n_k0) == pytest.approx(rho)
    assert np.allclose(n.n_s2, rho * 4 * math.pi / 3 * np.eye(3))
    assert np.all(n.n_s1 == 0) and np.all(n.n_k1 == 0)
    z = bulk_weighted_densities(Sphere(1.0), 0.0)
    assert all(np.all(v == 0) for v in z.as_dict().values())
    a = bulk_weighted_densities(Spheroid(1.0, 2.0), 0.1)
    b = bulk_weighted_densities(Spheroid(1.0, 2.0), 0.3)
    for k in FIELD_NAMES:
        assert np.allclose(3 * getattr(a, k), getattr(b, k), rtol=1e-14)
    with pytest.raises(ValueError):
        bulk_weighted_densities(Sphere(1.0), -1.0)


def test_bulk_eos_examples():
    for m in (RosenfeldOriginal(), TarazonaTensor()):
        assert bulk_eos(Sphere(1.0), 1e-12, m)["Z"] == pytest.approx(1.0, abs=1e-10)
        assert bulk_eos(Sphere(1.0), 0.0, m)["mu_ex"] == 0.0
        assert bulk_eos(Sphere(1.0), 0.3, m)["Z"] == pytest.approx(1.39 / 0.343, rel=1e-12)
    assert 1.39 / 0.343 == pytest.approx(4.052478, abs=1e-6)
    with pytest.raises(DomainError):
        bulk_eos(Sphere(1.0), 1.0, RosenfeldOriginal())


@pytest.mark.parametrize("eta", [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45])
@pytest.mark.parametrize("model", [RosenfeldOriginal(), TarazonaTensor()], ids=["ros", "tar"])
def test_bulk_eos_py_closed_form(eta, model):
    r = bulk_eos(Sphere(0.5), eta, model)
    Zpy = (1 + eta + eta * eta) / (1 - eta) ** 3
    assert abs(r["Z"] - Zpy) <= 1e-10 * Zpy
    # mu_ex: d Phi_bulk / d rho by a five-point central difference
    s = Sphere(0.5)
    x, h = r["rho"], 1e-3 * r["rho"]
    f = lambda y: model.phi(bulk_weighted_densities(s, y))
    fd = (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)
    assert abs(fd - r["mu_ex"]) <= 1e-8 * max(1, abs(r["mu_ex"]))
    # closed form of the scaled-particle excess chemical potential
    mu = -math.log(1 - eta) + (14 * eta - 13 * eta**2 + 5 * eta**3) / (2 * (1 - eta) ** 3)
    assert r["mu_ex"] == pytest.approx(mu, rel=1e-12)


def test_bulk_pressure_convex_and_Z_monotone():
    v = 4 * math.pi / 3
    rho = np.linspace(0, 0.9 / v, 200)[:-1]
    p = np.array([bulk_eos(Sphere(1.0), r * v, RosenfeldOriginal())["beta_p"] for r in rho])
    assert np.all(np.diff(p, 2) > 0)
    Z = np.array([bulk_eos(Sphere(1.0), r * v, RosenfeldOriginal())["Z"] for r in rho[1:]])
    assert np.all(np.diff(Z) > 0)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: repr(m)[:20])
def test_virial_series(model):
    out = virial_series_bulk(Sphere(1.0), model)
    assert out["B1"] == 1.0
    assert out["B2"] == pytest.approx(4.0, abs=1e-10)
    assert out["B3"] == pytest.approx(10.0, abs=1e-10)
    with pytest.raises(ValueError):
        virial_series_bulk(Sphere(1.0), model, order=4)


def test_virial_series_spheroid_b2_matches_kinematic():
    from fmt_engine.kinematic import second_virial

    sp = Spheroid(1.0, 2.0)
    v = 8 * math.pi / 3
    out = virial_series_bulk(sp, RosenfeldOriginal())
    assert out["B2"] * v == pytest.approx(second_virial(sp), rel=1e-10)


def test_tarazona_phi3_examples():
    e = np.eye(3)
    assert tarazona_phi3(*e) == pytest.approx(0.0, abs=1e-16)
    a, b = random_unit(np.random.default_rng(6), 2)
    assert tarazona_phi3(a, a, b) == pytest.approx(0.0, abs=1e-16)


@given(st.integers(0, 2**32 - 1))
def test_tarazona_phi3_product_half_of_three_body(seed):
    a, b, c = random_unit(np.random.default_rng(seed), 3)
    M3 = np.dot(a, np.cross(b, c)) ** 2
    prod_term = tarazona_phi3(a, b, c) + M3 / (16 * math.pi)
    assert prod_term == pytest.approx(0.5 * three_body_euler_form(a, b, c) / (8 * math.pi), abs=1e-15)
