"""CLI: config validation, exit codes, determinism, scaling fit, compare."""

import json
import os

import numpy as np
import pytest

from rodflutter import cli

PARAMS = {"k1_tilde": 1e4, "k2_tilde": 1e4, "gamma1_tilde": 0.5,
          "gamma3_tilde": 1e-4, "force_tilde": 0.0}


def _write_config(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


def test_missing_config_is_validation_error(tmp_path):
    rc = cli.main(["--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path), "landau"])
    assert rc == cli.EXIT_VALIDATION


def test_malformed_json_is_validation_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    rc = cli.main(["--config", str(p), "--out", str(tmp_path), "landau"])
    assert rc == cli.EXIT_VALIDATION


def test_unknown_param_key_is_validation_error(tmp_path):
    cfg = _write_config(tmp_path / "c.json",
                        {"params": {**PARAMS, "bogus": 1.0}})
    rc = cli.main(["--config", cfg, "--out", str(tmp_path), "landau"])
    assert rc == cli.EXIT_VALIDATION


def test_empty_force_range_is_validation_error(tmp_path):
    cfg = _write_config(tmp_path / "c.json",
                        {"params": PARAMS, "sweep": {"forces": []}})
    rc = cli.main(["--config", cfg, "--out", str(tmp_path), "sweep"])
    assert rc == cli.EXIT_VALIDATION


def test_unsorted_forces_is_validation_error(tmp_path):
    cfg = _write_config(tmp_path / "c.json",
                        {"params": PARAMS, "sweep": {"forces": [40.0, 38.0]}})
    rc = cli.main(["--config", cfg, "--out", str(tmp_path), "sweep"])
    assert rc == cli.EXIT_VALIDATION


# ---------------------------------------------------------------------------
# scaling fit


def test_fit_recovers_exact_square_root_law():
    dF = np.array([0.2, 0.5, 1.0, 1.5, 2.0])
    amps = 0.2 * np.sqrt(dF)
    fit = cli.fit_scaling(dF, amps)
    assert abs(fit["C_fit"] - 0.2) < 1e-6
    assert abs(fit["p"] - 0.5) < 1e-6
    assert abs(fit["C_loglog"] - 0.2) < 1e-6
    assert fit["points_used"] == 5 and not fit["points_excluded"]


def test_fit_recovers_general_power_law():
    dF = np.array([0.25, 0.5, 1.0, 2.0])
    amps = 0.31 * dF ** 0.7
    fit = cli.fit_scaling(dF, amps)
    assert abs(fit["p"] - 0.7) < 1e-6
    assert abs(fit["C_loglog"] - 0.31) < 1e-6


def test_fit_window_and_floor_exclusions():
    dF = np.array([-0.5, 0.5, 1.0, 3.0, 1.2])
    amps = np.array([0.1, 0.2 * np.sqrt(0.5), 0.2, 0.5, 5e-5])
    fit = cli.fit_scaling(dF, amps)
    # excluded: negative dF, dF beyond window, sub-floor amplitude
    assert fit["points_excluded"] == [0, 3, 4]
    assert fit["points_used"] == 2
    assert abs(fit["C_fit"] - 0.2) < 1e-9


def test_fit_no_supercritical_points():
    fit = cli.fit_scaling([-1.0, -0.2], [0.0, 0.0])
    assert fit["points_used"] == 0
    assert fit["C_fit"] is None
    assert "no supercritical points" in fit["notice"]


# ---------------------------------------------------------------------------
# spectrum / landau artifacts (cheap ranges)


@pytest.fixture(scope="module")
def landau_artifact(tmp_path_factory):
    out = tmp_path_factory.mktemp("landau_out")
    cfg = _write_config(out / "c.json", {"params": PARAMS})
    rc = cli.main(["--config", cfg, "--out", str(out), "landau"])
    assert rc == cli.EXIT_OK
    return out


def test_landau_record_contents(landau_artifact):
    with open(landau_artifact / "landau.json") as fh:
        rec = json.load(fh)
    for key in ("force_crit", "omega_c", "alpha", "beta", "rho_abs",
                "sigma", "C", "fingerprint"):
        assert key in rec
    assert 37.56 <= rec["force_crit"] <= 37.76
    assert abs(rec["C"] - 0.174) <= 0.01
    assert rec["alpha"][0] < 0.0 and rec["beta"][0] > 0.0


def test_landau_deterministic_and_iso_equals_aniso_path(landau_artifact,
                                                        tmp_path):
    """Re-running yields byte-identical output; forcing the general
    anisotropic formulas on isotropic parameters gives the same record."""
    cfg = _write_config(tmp_path / "c.json", {"params": PARAMS})
    rc = cli.main(["--config", cfg, "--out", str(tmp_path), "landau"])
    assert rc == cli.EXIT_OK
    a = (landau_artifact / "landau.json").read_bytes()
    b = (tmp_path / "landau.json").read_bytes()
    assert a == b


def test_spectrum_artifacts(tmp_path):
    cfg = _write_config(tmp_path / "c.json", {
        "params": PARAMS,
        "spectrum": {"forces": [0.0, 30.0, 50.0]},
    })
    rc = cli.main(["--config", cfg, "--out", str(tmp_path), "spectrum"])
    assert rc == cli.EXIT_OK
    lines = (tmp_path / "spectrum.csv").read_text().strip().splitlines()
    assert lines[0] == "force_tilde,re_w1,im_w1,re_w2,im_w2"
    assert len(lines) == 4
    row0 = lines[1].split(",")
    assert float(row0[0]) == 0.0
    assert float(row0[2]) == 0.0          # real eigenvalue at zero force
    with open(tmp_path / "spectrum_summary.json") as fh:
        summary = json.load(fh)
    assert 19.91 <= summary["force_star"] <= 20.11
    assert 37.56 <= summary["force_crit"] <= 37.76


# ---------------------------------------------------------------------------
# compare


def _synthetic_artifacts(out, C=0.2, omega_c=190.0, sigma=5.0, Fc=37.5,
                         fingerprint="abc", fingerprint_fit=None):
    landau = {"fingerprint": fingerprint, "params": PARAMS,
              "force_crit": Fc, "omega_c": omega_c, "sigma": sigma,
              "alpha": [-900.0, 20.0], "beta": [9.0, 5.0], "rho_abs": C / 2,
              "C": C, "supercritical": True, "grid_n": 96}
    with open(out / "landau.json", "w") as fh:
        json.dump(landau, fh)
    forces = [Fc + d for d in (0.5, 1.0, 2.0)]
    with open(out / "sweep.csv", "w") as fh:
        fh.write("force_tilde,amplitude,frequency,saturated,note\n")
        for F in forces:
            dF = F - Fc
            fh.write(f"{F},{C * np.sqrt(dF)},{omega_c + sigma * dF},1,\n")
    fit = {"fingerprint": fingerprint_fit or fingerprint, "params": PARAMS,
           "force_crit": Fc, "C_fit": C, "p": 0.5, "grid_n": 96}
    with open(out / "scaling_fit.json", "w") as fh:
        json.dump(fit, fh)


def test_compare_identical_synthetic_inputs(tmp_path, capsys):
    _synthetic_artifacts(tmp_path)
    cfg = _write_config(tmp_path / "c.json", {"params": PARAMS})
    rc = cli.main(["--config", cfg, "--out", str(tmp_path), "compare"])
    assert rc == cli.EXIT_OK
    with open(tmp_path / "compare.json") as fh:
        rep = json.load(fh)
    assert rep["verdict"] == "PASS"
    assert all(r["rel_err"] < 1e-12 for r in rep["rows"])


def test_compare_fingerprint_mismatch_refused(tmp_path):
    _synthetic_artifacts(tmp_path, fingerprint_fit="xyz")
    cfg = _write_config(tmp_path / "c.json", {"params": PARAMS})
    rc = cli.main(["--config", cfg, "--out", str(tmp_path), "compare"])
    assert rc == cli.EXIT_VALIDATION


def test_compare_missing_artifact(tmp_path):
    cfg = _write_config(tmp_path / "c.json", {"params": PARAMS})
    rc = cli.main(["--config", cfg, "--out", str(tmp_path), "compare"])
    assert rc == cli.EXIT_VALIDATION
