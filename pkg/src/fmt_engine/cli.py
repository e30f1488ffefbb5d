"""Command-line front-end: ``fmt-engine <task> --config path [--out dir] [--threads n]``.

Exit status
-----------
0  success, all task-level validations passed
1  unexpected internal error
2  configuration or schema error
3  numeric domain error (packing fraction, solver divergence, overlap test)
4  a task-level validation failed
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _backend
from . import config as cfgmod
from .fmt_model import DomainError, bulk_eos, model_from_spec, virial_series_bulk
from .geometry import GeometryError, Sphere, Spheroid, minkowski_measures
from .kinematic import (KinematicError, OverlapNonConvergence, excluded_volume_analytic,
                        excluded_volume_mc, resolve_threads, second_virial, third_virial_mc,
                        third_virial_stack_mc)
from .meshes import load_mesh

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_DOMAIN, EXIT_VALIDATION = 0, 1, 2, 3, 4

B3_CONVENTION = ("B3 = (1/3) * integral of the triple pairwise-overlap indicator over the kinematic "
                 "measure of particles 2 and 3 (positive for hard bodies); reduced values are "
                 "B2/v and B3/v^2 with v the particle volume")


def _f(x):
    return repr(float(x))


def _body_label(decl):
    if "name" in decl:
        return decl["name"]
    if decl["shape"] == "sphere":
        return f"sphere(R={decl['radius']!r})"
    if decl["shape"] == "spheroid":
        return f"spheroid(a={decl['a']!r},c={decl['c']!r})"
    return f"mesh({decl['path']})"


def build_body(decl, base_dir="."):
    if decl["shape"] == "sphere":
        return Sphere(decl["radius"])
    if decl["shape"] == "spheroid":
        return Spheroid(decl["a"], decl["c"])
    p = Path(decl["path"])
    if not p.is_absolute():
        p = Path(base_dir) / p
    if not p.is_file():
        raise cfgmod.ConfigError([("bodies.path", f"mesh file not found: {p}")])
    return load_mesh(p)


def _is_sphere(body):
    return isinstance(body, Sphere) or (isinstance(body, Spheroid) and body.a == body.c)


class TaskResult:
    def __init__(self):
        self.files = {}
        self.checks = []

    def check(self, name, ok, detail=""):
        self.checks.append({"check": name, "pass": bool(ok), "detail": detail})

    def json(self, name, obj):
        self.files[name] = (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_f(x) if isinstance(x, (float, np.floating)) else x for x in r])
        self.files[name] = buf.getvalue().encode()

    @property
    def ok(self):
        return all(c["pass"] for c in self.checks)


# ---------------------------------------------------------------------------
# tasks


def task_measures(cfg, bodies, threads, res):
    rows = []
    for decl, b in zip(cfg["bodies"], bodies):
        m = minkowski_measures(b)
        rows.append([_body_label(decl), m.volume, m.surface, m.mean_curvature_integral,
                     m.euler_surface])
        res.check(f"positive measures {_body_label(decl)}",
                  m.volume > 0 and m.surface > 0 and m.mean_curvature_integral > 0)
        res.check(f"euler characteristic {_body_label(decl)}", m.euler_surface == 2.0)
    res.csv("measures.csv", ["body", "V", "S", "M", "chi"], rows)


def task_weights_check(cfg, bodies, threads, res):
    from .weights import fundamental_measure

    out = []
    reso = cfg["mc"].get("resolution", 4096)
    for decl, b in zip(cfg["bodies"], bodies):
        m = minkowski_measures(b)
        chi = float(fundamental_measure(b, "chi", reso).data)
        k0 = float(fundamental_measure(b, "k0", reso).data)
        s0 = float(fundamental_measure(b, "s0", reso).data)
        s1 = fundamental_measure(b, "s1", reso).data
        s2 = fundamental_measure(b, "s2", reso).data
        rec = {"body": _body_label(decl), "int_chi": chi, "int_k0": k0,
               "M_over_4pi": m.mean_curvature_integral / (4 * math.pi), "int_s0": s0, "S": m.surface,
               "int_s1": [float(x) for x in s1], "trace_int_s2": float(np.trace(s2))}
        out.append(rec)
        tol = 5e-3 if decl["shape"] == "mesh" else 1e-10
        res.check(f"sum rule chi {rec['body']}", abs(chi - 1.0) <= tol)
        res.check(f"sum rule k0 {rec['body']}", abs(k0 - rec["M_over_4pi"]) <= tol * max(1, k0))
        res.check(f"sum rule s0 {rec['body']}", abs(s0 - m.surface) <= tol * m.surface)
        res.check(f"sum rule s1 {rec['body']}", float(np.max(np.abs(s1))) <= tol * m.surface)
        res.check(f"trace s2 = S {rec['body']}", abs(np.trace(s2) - m.surface) <= tol * m.surface)
    res.json("weights.json", {"bodies": out})


def _pairs(bodies, decls):
    if len(bodies) == 1:
        return [(0, 0)]
    return [(i, j) for i in range(len(bodies)) for j in range(i, len(bodies))]


def task_excluded_volume(cfg, bodies, threads, res):
    mc = cfg["mc"]
    recs = []
    for i, j in _pairs(bodies, cfg["bodies"]):
        an = excluded_volume_analytic(bodies[i], bodies[j])
        e = excluded_volume_mc(bodies[i], bodies[j], mc["n_samples"], mc["seed"], threads=threads)
        labels = [_body_label(cfg["bodies"][i]), _body_label(cfg["bodies"][j])]
        recs.append({"estimator": "excluded_volume_analytic", "bodies": labels, "mean": an})
        rec = {"bodies": labels, **e.as_dict()}
        recs.append(rec)
        z = abs(e.mean - an) / e.stderr if e.stderr > 0 else 0.0
        res.check(f"MC within 3 stderr {labels}", z <= 3.0, f"z={z:.3f}")
    res.json("excluded_volume.json", {"records": recs})


def task_virial(cfg, bodies, threads, res):
    mc = cfg["mc"]
    model = model_from_spec(cfg["model"])
    recs = []
    for decl, b in zip(cfg["bodies"], bodies):
        v = minkowski_measures(b).volume
        label = _body_label(decl)
        b2a = second_virial(b, method="analytic")
        b2m = second_virial(b, method="mc", n_samples=mc["n_samples"], seed=mc["seed"], threads=threads)
        b3 = third_virial_mc(b, mc["n_samples"], mc["seed"], threads=threads)
        b3s = third_virial_stack_mc(b, mc["n_samples"], mc["seed"], threads=threads,
                                    kernel=mc["kernel"], L_max=mc["L_max"], resolution=mc["resolution"])
        rec = {
            "body": label,
            "B2_over_v_analytic": b2a / v,
            "B2_over_v_mc": {"mean": b2m.mean / v, "stderr": b2m.stderr / v, "n": b2m.n_samples,
                             "seed": b2m.seed},
            "B3_over_v2_exact_mc": {"mean": b3.mean / v**2, "stderr": b3.stderr / v**2,
                                    "n": b3.n_samples, "seed": b3.seed},
            "B3_over_v2_stack_mc": {"mean": b3s.mean / v**2, "stderr": b3s.stderr / v**2,
                                    "n": b3s.n_samples, "seed": b3s.seed, "kernel": mc["kernel"],
                                    "L_max": mc["L_max"]},
            "stack_minus_exact_over_v2": (b3s.mean - b3.mean) / v**2,
        }
        if _is_sphere(b):
            ser = virial_series_bulk(b, model)
            rec["series"] = {"model": model.to_dict(), "B2_over_v": ser["B2"], "B3_over_v2": ser["B3"]}
            res.check(f"B2/v = 4 analytic {label}", abs(b2a / v - 4.0) <= 1e-10)
            for key, target in (("B2_over_v_mc", 4.0), ("B3_over_v2_exact_mc", 10.0),
                                ("B3_over_v2_stack_mc", 10.0)):
                e = rec[key]
                z = abs(e["mean"] - target) / e["stderr"]
                res.check(f"{key} vs {target} {label}", z <= 3.0, f"z={z:.3f}")
            res.check(f"series B3/v^2 = 10 {label}", abs(ser["B3"] - 10.0) <= 1e-10)
        recs.append(rec)
    res.json("virial.json", {"convention": B3_CONVENTION, "records": recs})


def task_eos(cfg, bodies, threads, res):
    model = model_from_spec(cfg["model"])
    body = bodies[0]
    rows = []
    zs = []
    for eta in cfg["eos"]["eta"]:
        r = bulk_eos(body, eta, model)
        py = (1 + eta + eta * eta) / (1 - eta) ** 3
        rows.append([float(eta), r["Z"], py, r["mu_ex"], r["beta_p"]])
        zs.append(r["Z"])
        if _is_sphere(body):
            res.check(f"Z closed form eta={eta}", abs(r["Z"] - py) <= 1e-10 * py)
    order = np.argsort(cfg["eos"]["eta"])
    res.check("Z monotone in eta", bool(np.all(np.diff(np.array(zs)[order]) > 0)))
    res.csv("eos.csv", ["eta", "Z", "Z_closed_form", "beta_mu_ex", "beta_p_v"], rows)


def task_profile(cfg, bodies, threads, res):
    from .planar_dft import Grid1D, contact_density, hard_wall, mu_ex_field, picard_solve
    from .planar_dft import planar_kernels, weighted_density_fields

    model = model_from_spec(cfg["model"])
    p = cfg["profile"]
    R = p["radius"]
    grid = Grid1D.for_wall(R, cfg["grid"].get("dz"), cfg["grid"]["extent_diameters"])
    rho_b = p["eta"] / (4 * math.pi * R**3 / 3)
    V = hard_wall(grid, R) if p["wall"] == "hard" else np.zeros(grid.n_points)
    prof = picard_solve(model, V, rho_b, R=R, grid=grid, alpha=p["alpha"], tol=p["tol"],
                        max_iter=p["max_iter"])
    kern = planar_kernels(R, grid)
    left = 0.0 if p["wall"] == "hard" else rho_b
    n = weighted_density_fields(prof.rho, kern, left, rho_b)
    mu = mu_ex_field(n, model, kern)
    res.csv("profile.csv", ["z", "rho", "n_v", "mu_ex"],
            [[float(a), float(b), float(c), float(d)] for a, b, c, d in zip(prof.z, prof.rho, n.n_v, mu)])
    bp = bulk_eos(Sphere(R), p["eta"], model)["beta_p"]
    meta = {"model": model.to_dict(), "eta": p["eta"], "radius": R, "rho_bulk": rho_b,
            "grid": {"dz": grid.dz, "n_points": grid.n_points, "origin": grid.origin},
            "wall": p["wall"], "wall_convention": "hard wall at z=0 excludes centres z < R",
            "iterations": prof.info["iterations"], "residual": prof.info["residual"],
            "alpha_final": prof.info["alpha"], "beta_p_bulk": bp}
    if p["wall"] == "hard":
        c = contact_density(prof)
        meta["contact_density"] = c
        meta["contact_rel_err"] = abs(c - bp) / bp
        res.check("contact theorem within 0.5%", meta["contact_rel_err"] <= 5e-3,
                  f"rel={meta['contact_rel_err']:.3e}")
    res.json("profile_meta.json", meta)


def task_identity_suite(cfg, bodies, threads, res):
    from . import identities

    n = cfg["identity"]["n_configs"]
    seed = cfg["mc"]["seed"]
    ab = identities.angle_tensor(n, seed)
    ex = identities.expansion_convergence(min(n, 100_000), seed + 1)
    tb = identities.three_body(n, seed + 2)
    sp = identities.spt(min(n, 10_000), seed + 3)
    res.check("angle-tensor identity 1e-12", ab["max_rel_err"] <= 1e-12, f"{ab['max_rel_err']:.3e}")
    res.check("expansion monotone", ex["monotone"])
    res.check("expansion within tail bound", ex["within_bound"])
    res.check("three-body identity 1e-12", tb["max_abs_err"] <= 1e-12, f"{tb['max_abs_err']:.3e}")
    res.check("three-body cyclic exact", tb["cyclic_exact"])
    res.check("SPT residual rosenfeld", sp["rosenfeld"] <= 1e-12, f"{sp['rosenfeld']:.3e}")
    res.json("identities.json", {"angle_tensor": ab, "expansion": ex, "three_body": tb, "spt": sp})


TASKS = {
    "measures": task_measures,
    "weights-check": task_weights_check,
    "excluded-volume": task_excluded_volume,
    "virial": task_virial,
    "eos": task_eos,
    "profile": task_profile,
    "identity-suite": task_identity_suite,
}


def versions():
    import scipy

    return {"fmt_engine": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "backend": _backend.BACKEND}


def run(cfg, out_dir, threads=None, base_dir="."):
    """Execute a normalised config; returns ``(exit_code, TaskResult)``."""
    t0 = time.perf_counter()
    threads = resolve_threads(threads)
    bodies = [build_body(d, base_dir) for d in cfg["bodies"]]
    res = TaskResult()
    TASKS[cfg["task"]](cfg, bodies, threads, res)
    res.json("checks.json", {"task": cfg["task"], "checks": res.checks, "pass": res.ok})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    import hashlib

    for name, data in res.files.items():
        (out / name).write_bytes(data)
    manifest = {
        "schema": cfgmod.SCHEMA_ID,
        "task": cfg["task"],
        "config": cfg,
        "config_sha256": cfgmod.config_hash(cfg),
        "versions": versions(),
        "threads": threads,
        "wall_time_s": time.perf_counter() - t0,
        "outputs": {n: hashlib.sha256(d).hexdigest() for n, d in sorted(res.files.items())},
        "pass": res.ok,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return (EXIT_OK if res.ok else EXIT_VALIDATION), res


def main(argv=None):
    ap = argparse.ArgumentParser(prog="fmt-engine", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("task", choices=sorted(TASKS))
    ap.add_argument("--config", required=True, help="TOML config or manifest.json to replay")
    ap.add_argument("--out", default="fmt-engine-out", help="output directory")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: $FMT_ENGINE_THREADS or 1)")
    args = ap.parse_args(argv)
    try:
        cfg = cfgmod.load(args.config, args.task)
        code, res = run(cfg, args.out, args.threads, Path(args.config).parent)
    except cfgmod.ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, KinematicError) as exc:
        print(f"config error ({args.task}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, OverlapNonConvergence, ArithmeticError) as exc:
        print(f"numeric domain error ({args.task}): {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except RuntimeError as exc:  # solver failures carry history
        print(f"numeric error ({args.task}): {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error ({args.task}): {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for c in res.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['check']}  {c['detail']}".rstrip())
    print(f"wrote {len(res.files) + 1} files to {args.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
