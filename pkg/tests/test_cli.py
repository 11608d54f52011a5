import copy
import json
from pathlib import Path

import numpy as np
import pytest

from modalwave import artifacts
from modalwave.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def load(name):
    return json.loads((CONFIGS / name).read_text())


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def csv_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(Path(out).glob("*.csv"))}


def small_fit_config():
    cfg = load("fit_desk.json")
    cfg["fit"]["epochs"] = 5
    cfg["train_grid"].update(nx=5, ny=5)
    cfg["test_grid"].update(nx=6, ny=6)
    return cfg


def small_beam_config():
    cfg = load("beam_extrapolate.json")
    cfg["random_scene"]["count"] = 3
    cfg["grid"].update(nx=6, ny=6)
    return cfg


def small_compare_config():
    cfg = load("solver_compare.json")
    cfg["iterations"] = 5
    return cfg


def small_addition_config():
    cfg = load("verify_addition.json")
    cfg["slice"] = {"half_width": 1.5, "n": 8}
    return cfg


@pytest.mark.parametrize("command,make", [
    ("verify-addition", small_addition_config),
    ("forward", lambda: load("forward.json")),
    ("solver-compare", small_compare_config),
    ("fit", small_fit_config),
    ("beam-extrapolate", small_beam_config),
])
def test_manifest_replay_is_byte_identical(tmp_path, command, make):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main([command, "--config", write(tmp_path, make()), "--out", str(out1)]) == 0
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["command"] == command
    for name, digest in manifest["outputs"].items():
        assert artifacts.sha256_file(out1 / name) == digest
    assert main([command, "--config", str(out1 / "manifest.json"), "--out", str(out2)]) == 0
    first, second = csv_bytes(out1), csv_bytes(out2)
    assert first and first == second


def test_seed_flag_overrides_config(tmp_path):
    cfg = small_beam_config()
    main(["beam-extrapolate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "a")])
    main(["beam-extrapolate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "b"), "--seed", "5"])
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 5
    assert csv_bytes(tmp_path / "a")["metrics.csv"] != csv_bytes(tmp_path / "b")["metrics.csv"]


def test_manifest_for_other_command_is_rejected(tmp_path, capsys):
    main(["forward", "--config", str(CONFIGS / "forward.json"), "--out", str(tmp_path / "f")])
    code = main(["fit", "--config", str(tmp_path / "f" / "manifest.json"), "--out", str(tmp_path / "g")])
    assert code == 2
    assert "forward" in capsys.readouterr().err


def test_zero_t_forward_has_no_scattering(tmp_path):
    cfg = load("forward.json")
    for s in cfg["scatterers"]:
        s["t_diag"] = [[0.0, 0.0]] * 4
    assert main(["forward", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    _, v = artifacts.read_radiomap_csv(tmp_path / "o" / "radiomap_g0_b0.csv")
    assert not np.any(v)


def test_fit_with_zero_epochs(tmp_path):
    cfg = small_fit_config()
    cfg["fit"]["epochs"] = 0
    assert main(["fit", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and len(lines) == 2


@pytest.mark.parametrize("mutate,field", [
    (lambda c: c["fit"].pop("gamma"), "config.fit.gamma"),
    (lambda c: c["fit"].pop("offset_radius"), "config.fit.offset_radius"),
    (lambda c: c["fit"].update(mode="greedy"), "config.fit.mode"),
    (lambda c: c["train_grid"].update(nx=0), "config.train_grid.nx"),
    (lambda c: c["truth"]["random_scene"].update(corner_min=[0, 0]), "corner_min"),
    (lambda c: c["model"].update(virtual={"L2": 4, "replicas": 2}), "config.model.virtual"),
])
def test_config_errors_exit_2(tmp_path, capsys, mutate, field):
    cfg = small_fit_config()
    mutate(cfg)
    assert main(["fit", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_unreadable_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert main(["forward", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["forward", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2


def test_beam_config_errors(tmp_path, capsys):
    cfg = small_beam_config()
    cfg["r0"] = 10.0
    assert main(["beam-extrapolate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "far field" in capsys.readouterr().err
    cfg = small_beam_config()
    cfg["test_beams"] = [{"theta0_deg": 10}]
    assert main(["beam-extrapolate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_monotonicity_violation_exit_1(tmp_path):
    cfg = small_addition_config()
    cfg["orders"] = [15, 7]
    assert main(["verify-addition", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1
    assert (tmp_path / "o" / "addition_summary.csv").exists()


def test_slice_outside_convergence_region(tmp_path, capsys):
    cfg = small_addition_config()
    cfg["slice"]["half_width"] = 20.0
    assert main(["verify-addition", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "convergence region" in capsys.readouterr().err


def test_divergent_forward_exit_3(tmp_path):
    cfg = load("forward.json")
    for s in cfg["scatterers"]:
        s["t_diag"] = [[60.0, 0.0]] * 4
    cfg["solver"] = {"method": "jacobi", "max_iters": 300}
    assert main(["forward", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    lines = (tmp_path / "o" / "residuals.csv").read_text().splitlines()
    assert lines[0] == "iteration,method,residual" and len(lines) > 1


def test_unregularised_rank_deficient_beams_are_flagged(tmp_path):
    cfg = small_beam_config()
    cfg["mu"] = [0.0, 1e-4]
    assert main(["beam-extrapolate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "metrics.csv").read_text().splitlines()[1:]
    assert [r.split(",")[-1] for r in rows] == ["ill_posed", "ill_posed", "ok", "ok"]
    assert not (tmp_path / "o" / "radiomap_mu0_test0.csv").exists()


def test_solver_compare_outputs(tmp_path):
    assert main(["solver-compare", "--config", write(tmp_path, small_compare_config()),
                 "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "convergence.csv").read_text().splitlines()
    assert rows[0] == "iteration,method,residual" and len(rows) == 16
    rho = (tmp_path / "o" / "spectral_radius.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rho[1:]] == ["jacobi", "gauss_seidel", "sor(0.5)"]


def test_total_component_is_direct_plus_scattered(tmp_path):
    vals = {}
    for comp in ("direct", "scattered", "total"):
        cfg = load("forward.json")
        cfg["components"] = comp
        assert main(["forward", "--config", write(tmp_path, cfg), "--out", str(tmp_path / comp)]) == 0
        vals[comp] = artifacts.read_radiomap_csv(tmp_path / comp / "radiomap_g0_b1.csv")[1]
    np.testing.assert_allclose(vals["total"], vals["direct"] + vals["scattered"], rtol=1e-12, atol=1e-15)


def test_single_order_addition_exits_zero(tmp_path):
    cfg = small_addition_config()
    cfg["orders"] = [7]
    assert main(["verify-addition", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "addition_summary.csv").read_text().splitlines()) == 2


def test_single_scatterer_compare_converges_in_one_step(tmp_path):
    cfg = small_compare_config()
    cfg["random_scene"]["count"] = 1
    cfg["methods"] = ["jacobi", "gauss_seidel", {"method": "sor", "omega": 1.0}, {"method": "sor", "omega": 0.5}]
    assert main(["solver-compare", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    rows = [r.split(",") for r in (tmp_path / "o" / "convergence.csv").read_text().splitlines()[1:]]
    first = {m: float(r) for i, m, r in rows if i == "1"}
    assert first["jacobi"] == first["gauss_seidel"] == first["sor(1)"] == 0.0
    # a relaxed sweep only moves halfway toward the exact solution
    assert first["sor(0.5)"] == pytest.approx(0.5)
