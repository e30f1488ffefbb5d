import csv
import hashlib
import json
import math

import numpy as np
import pytest

from fmt_engine import config as cfgmod
from fmt_engine.cli import EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, EXIT_VALIDATION, main
from fmt_engine.meshes import icosphere, write_off


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


HEADER = 'schema = "fmt-engine/1"\n'


# ---------------------------------------------------------------------------
# config


def test_defaults_filled():
    cfg = cfgmod.normalize({"schema": "fmt-engine/1", "task": "eos"})
    assert cfg["model"] == {"variant": "rosenfeld"}
    assert cfg["eos"]["eta"][0] == 0.05 and cfg["eos"]["eta"][-1] == 0.45


def test_schema_errors_have_paths():
    bad = {"schema": "fmt-engine/1", "task": "virial", "mc": {"seed": -1, "n_samples": 5},
           "bodies": [{"shape": "sphere"}]}
    with pytest.raises(cfgmod.ConfigError) as ei:
        cfgmod.normalize(bad)
    paths = {p for p, _ in ei.value.errors}
    assert {"mc.seed", "mc.n_samples", "bodies.0"} <= paths


def test_unknown_key_rejected():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.normalize({"schema": "fmt-engine/1", "task": "eos", "oops": 1})


def test_wrong_schema_version():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.normalize({"schema": "fmt-engine/0", "task": "eos"})


@pytest.mark.parametrize("task", cfgmod.MC_TASKS)
def test_mc_tasks_require_seed(task):
    with pytest.raises(cfgmod.ConfigError) as ei:
        cfgmod.normalize({"schema": "fmt-engine/1", "task": task})
    assert ei.value.errors[0][0] == "mc.seed"


def test_task_mismatch(tmp_path):
    p = write(tmp_path, "c.toml", HEADER + 'task = "eos"\n')
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load(p, "measures")
    assert cfgmod.load(p, "eos")["task"] == "eos"


def test_toml_parse_error(tmp_path):
    p = write(tmp_path, "c.toml", "schema = \n")
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.load(p, "eos")


def test_config_hash_canonical():
    a = cfgmod.normalize({"schema": "fmt-engine/1", "task": "eos", "eos": {"eta": [0.1]}})
    b = cfgmod.normalize({"eos": {"eta": [0.1]}, "task": "eos", "schema": "fmt-engine/1"})
    assert cfgmod.config_hash(a) == cfgmod.config_hash(b)


# ---------------------------------------------------------------------------
# CLI


def test_measures_sphere_row(tmp_path, capsys):
    p = write(tmp_path, "m.toml", HEADER + "[[bodies]]\nshape='sphere'\nradius=1.0\n")
    assert main(["measures", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_OK
    rows = list(csv.reader(open(tmp_path / "o" / "measures.csv")))
    assert rows[0] == ["body", "V", "S", "M", "chi"]
    vals = [float(x) for x in rows[1][1:]]
    assert vals == pytest.approx([4.18879, 12.56637, 12.56637, 2.0], abs=1e-5)
    assert "PASS" in capsys.readouterr().out


def test_mesh_path_relative_to_config(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    write_off(sub / "ico.off", icosphere(3))
    p = write(sub, "m.toml", HEADER + "[[bodies]]\nshape='mesh'\npath='ico.off'\n")
    assert main(["measures", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_OK


def test_missing_mesh_is_config_error(tmp_path):
    p = write(tmp_path, "m.toml", HEADER + "[[bodies]]\nshape='mesh'\npath='nope.off'\n")
    assert main(["measures", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_schema_violation_exit_and_paths(tmp_path, capsys):
    p = write(tmp_path, "v.toml", HEADER + "[[bodies]]\nshape='spheroid'\na=-1\n[mc]\nseed=1\n")
    assert main(["virial", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "bodies.0.a" in err and "bodies.0" in err


def test_missing_seed_exit(tmp_path):
    p = write(tmp_path, "v.toml", HEADER)
    assert main(["virial", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_solver_failure_exit_domain(tmp_path, capsys):
    p = write(tmp_path, "p.toml", HEADER + "[grid]\ndz=0.05\nextent_diameters=10\n[profile]\neta=0.3\nmax_iter=3\n")
    assert main(["profile", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_DOMAIN
    assert "profile" in capsys.readouterr().err


def test_validation_failure_exit(tmp_path):
    write_off(tmp_path / "ico.off", icosphere(1))
    p = write(tmp_path, "w.toml", HEADER + "[[bodies]]\nshape='mesh'\npath='ico.off'\n")
    assert main(["weights-check", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    checks = json.loads((tmp_path / "o" / "checks.json").read_text())
    assert checks["pass"] is False


VIRIAL = HEADER + "[[bodies]]\nshape='sphere'\nradius=1.0\n[mc]\nn_samples=100000\nseed=42\n"


def _run(tmp_path, name, task, text, *extra):
    p = write(tmp_path, f"{name}.toml", text)
    out = tmp_path / name
    code = main([task, "--config", str(p), "--out", str(out), *extra])
    return code, out


def test_virial_byte_identical_and_threads(tmp_path):
    c1, o1 = _run(tmp_path, "a", "virial", VIRIAL, "--threads", "1")
    c2, o2 = _run(tmp_path, "b", "virial", VIRIAL, "--threads", "1")
    c3, o3 = _run(tmp_path, "c", "virial", VIRIAL, "--threads", "3")
    assert c1 == c2 == c3 == EXIT_OK
    for name in ("virial.json", "checks.json"):
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes() == (o3 / name).read_bytes()
    v = json.loads((o1 / "virial.json").read_text())
    assert "positive" in v["convention"]
    assert v["records"][0]["B2_over_v_analytic"] == pytest.approx(4.0)


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("FMT_ENGINE_THREADS", "2")
    c, o = _run(tmp_path, "a", "virial", VIRIAL)
    assert c == EXIT_OK
    assert json.loads((o / "manifest.json").read_text())["threads"] == 2


def test_manifest_replay(tmp_path):
    c, o = _run(tmp_path, "a", "virial", VIRIAL)
    man = json.loads((o / "manifest.json").read_text())
    assert man["config_sha256"] == cfgmod.config_hash(man["config"])
    for name, digest in man["outputs"].items():
        assert hashlib.sha256((o / name).read_bytes()).hexdigest() == digest
    assert {"numpy", "scipy", "python", "fmt_engine", "backend"} <= set(man["versions"])
    assert man["wall_time_s"] >= 0
    assert main(["virial", "--config", str(o / "manifest.json"), "--out", str(tmp_path / "r")]) == EXIT_OK
    for name in man["outputs"]:
        assert (o / name).read_bytes() == (tmp_path / "r" / name).read_bytes()


def test_eos_sweep(tmp_path):
    c, o = _run(tmp_path, "e", "eos", HEADER)
    assert c == EXIT_OK
    rows = list(csv.DictReader(open(o / "eos.csv")))
    eta = np.array([float(r["eta"]) for r in rows])
    Z = np.array([float(r["Z"]) for r in rows])
    assert np.allclose(eta, [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45])
    assert np.all(np.diff(Z) > 0)
    assert np.allclose(Z, (1 + eta + eta**2) / (1 - eta) ** 3, rtol=1e-10)


def test_profile_task(tmp_path):
    c, o = _run(tmp_path, "p", "profile",
                HEADER + "[grid]\ndz=0.02\nextent_diameters=10\n[profile]\neta=0.1\n")
    assert c == EXIT_OK
    meta = json.loads((o / "profile_meta.json").read_text())
    assert meta["contact_rel_err"] < 5e-3 and "wall_convention" in meta
    rows = list(csv.DictReader(open(o / "profile.csv")))
    assert list(rows[0]) == ["z", "rho", "n_v", "mu_ex"]
    c2, o2 = _run(tmp_path, "q", "profile",
                  HEADER + "[grid]\ndz=0.02\nextent_diameters=10\n[profile]\neta=0.1\n")
    assert (o / "profile.csv").read_bytes() == (o2 / "profile.csv").read_bytes()


def test_identity_suite_task(tmp_path):
    c, o = _run(tmp_path, "i", "identity-suite", HEADER + "[mc]\nseed=3\n[identity]\nn_configs=20000\n")
    assert c == EXIT_OK
    r = json.loads((o / "identities.json").read_text())
    assert r["angle_tensor"]["max_rel_err"] <= 1e-12 and r["three_body"]["cyclic_exact"]


def test_excluded_volume_and_weights_tasks(tmp_path):
    body = "[[bodies]]\nshape='spheroid'\na=1.0\nc=2.0\n"
    c, o = _run(tmp_path, "x", "excluded-volume", HEADER + body + "[mc]\nseed=5\nn_samples=100000\n")
    assert c == EXIT_OK
    recs = json.loads((o / "excluded_volume.json").read_text())["records"]
    assert {r["estimator"] for r in recs} == {"excluded_volume_analytic", "excluded_volume_mc"}
    c, o = _run(tmp_path, "w", "weights-check", HEADER + body)
    assert c == EXIT_OK
    w = json.loads((o / "weights.json").read_text())["bodies"][0]
    assert w["int_chi"] == pytest.approx(1.0, abs=1e-10)
    assert w["int_k0"] == pytest.approx(w["M_over_4pi"], rel=1e-10)


def test_console_script_help(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["--help"])
    assert ei.value.code == 0
    assert "Exit status" in capsys.readouterr().out
