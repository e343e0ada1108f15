"""Weakly nonlinear expansion: dual solves, forcing assembly, Landau model."""

import dataclasses
import json
import os

import numpy as np
import pytest

import rodflutter as rf
from rodflutter import landau as ln
from rodflutter import spectrum as sp

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def test_reference_coefficients(landau_model):
    assert landau_model.alpha.real < 0.0
    assert landau_model.beta.real > 0.0
    assert landau_model.supercritical
    assert abs(landau_model.C - 0.174) <= 0.01


def test_dual_method_agreement(mode, params_c, grid96):
    """Collocation and closed-form longitudinal solves agree to 1e-8."""
    q0, q2, b0, b2, _ = ln.quadratic_forcings(mode, params_c, grid96)
    X0_col = ln._solve_longitudinal(q0, b0, 0.0, params_c, grid96)
    X0_cf = ln.solve_X0_closed_form(q0, b0, params_c, grid96)
    scale0 = max(np.abs(X0_col).max(), 1.0)
    assert np.abs(X0_col - X0_cf).max() / scale0 < 1e-8
    shift = 2j * mode.omega_c * params_c.gamma1_tilde
    lam = np.sqrt(-shift / params_c.k1_tilde)
    X2_col = ln._solve_longitudinal(q2, b2, shift, params_c, grid96)
    X2_cf = ln.solve_X2_closed_form(q2, b2, lam, params_c, grid96)
    scale2 = max(np.abs(X2_col).max(), 1.0)
    assert np.abs(X2_col - X2_cf).max() / scale2 < 1e-8


def test_manufactured_longitudinal_solution(params_c, grid96):
    """Both solvers recover an analytically known solution."""
    u = grid96.nodes
    k1 = params_c.k1_tilde
    # X = u^3: k1 X'' = 6 k1 u, X'(1) = 3, zero shift
    X = ln._solve_longitudinal(6.0 * k1 * u + 0j, 3.0, 0.0, params_c, grid96)
    assert np.abs(X - u ** 3).max() < 1e-9
    Xcf = ln.solve_X0_closed_form(6.0 * k1 * u + 0j, 3.0, params_c, grid96)
    assert np.abs(Xcf - u ** 3).max() < 1e-9
    # X = u with shift s: k1 X'' - s X = -s u, X'(1) = 1
    s = 2j * 50.0 * params_c.gamma1_tilde
    X = ln._solve_longitudinal(-s * u, 1.0, s, params_c, grid96)
    assert np.abs(X - u).max() < 1e-9
    lam = np.sqrt(-s / k1)
    Xcf = ln.solve_X2_closed_form(-s * u, 1.0, lam, params_c, grid96)
    assert np.abs(Xcf - u).max() < 1e-9


def test_lambda_branch_invariance(mode, params_c, grid96):
    """The closed form is even in lambda: both square-root branches agree."""
    _, q2, _, b2, _ = ln.quadratic_forcings(mode, params_c, grid96)
    lam = np.sqrt(-2j * mode.omega_c * params_c.gamma1_tilde / params_c.k1_tilde)
    Xp = ln.solve_X2_closed_form(q2, b2, lam, params_c, grid96)
    Xm = ln.solve_X2_closed_form(q2, b2, -lam, params_c, grid96)
    assert np.abs(Xp - Xm).max() / max(np.abs(Xp).max(), 1.0) < 1e-12


def test_dual_method_guard_raises(mode, params_c, grid96):
    with pytest.raises(ln.ConsistencyError):
        ln.solve_X0(mode, params_c, grid96, oracle_tol=1e-30)


def test_isotropic_reduction(mode, corrections, params_c, grid96):
    """Anisotropic forcing formulas reduce to the isotropic ones at k1 = k2."""
    fa = ln.assemble_forcing(mode, corrections, params_c, grid96,
                             form="anisotropic")
    fi = ln.assemble_forcing(mode, corrections, params_c, grid96,
                             form="isotropic")
    for name in ("G_cubic", "G_chi", "G_dAdT"):
        a = getattr(fa, name)
        b = getattr(fi, name)
        scale = max(np.abs(a).max(), np.abs(b).max(), 1.0)
        assert np.abs(a - b).max() / scale < 1e-10


def test_isotropic_reduction_of_coefficients(mode, adjoint, corrections,
                                             params_c, grid96, landau_model):
    forced = ln.landau_coefficients(mode, adjoint, corrections, params_c,
                                    grid96, form="anisotropic")
    assert abs(forced.alpha - landau_model.alpha) / abs(landau_model.alpha) < 1e-10
    assert abs(forced.beta - landau_model.beta) / abs(landau_model.beta) < 1e-10


def test_gauge_invariance(mode, adjoint, params_c, grid96, landau_model):
    """Coefficients are invariant under mode phase and adjoint scaling."""
    z = np.exp(0.37j)
    mode2 = dataclasses.replace(mode, Y=z * mode.Y, Theta=z * mode.Theta)
    adj2 = dataclasses.replace(adjoint, PsiY=(2.0 - 1.0j) * adjoint.PsiY,
                               PsiTheta=(2.0 - 1.0j) * adjoint.PsiTheta)
    corr2 = ln.quadratic_corrections(mode2, params_c, grid96)
    m2 = ln.landau_coefficients(mode2, adj2, corr2, params_c, grid96)
    assert abs(m2.alpha - landau_model.alpha) / abs(landau_model.alpha) < 1e-9
    assert abs(m2.beta - landau_model.beta) / abs(landau_model.beta) < 1e-9


def test_solvability_residual(mode, adjoint, corrections, landau_model,
                              grid96, params_c):
    res = ln.solvability_residual(mode, adjoint, corrections, landau_model,
                                  grid96, params=params_c)
    assert res < 1e-8
    for ch in ("cubic", "chi"):
        res_ch = ln.solvability_residual(mode, adjoint, corrections,
                                         landau_model, grid96,
                                         params=params_c, channels=(ch,))
        assert res_ch < 1e-8
    # a 1% perturbation of alpha must produce a proportional residual
    res_pert = ln.solvability_residual(mode, adjoint, corrections,
                                       landau_model, grid96, params=params_c,
                                       alpha=landau_model.alpha * 1.01)
    assert res_pert > 1e-4


def test_predict_tip(landau_model):
    amp, freq = ln.predict_tip(landau_model, landau_model.force_crit + 1.0)
    assert amp == pytest.approx(landau_model.C)
    assert freq == pytest.approx(landau_model.omega_c + landau_model.sigma)
    amp0, freq0 = ln.predict_tip(landau_model, landau_model.force_crit - 1.0)
    assert amp0 == 0.0
    sub = dataclasses.replace(landau_model, alpha=1.0 + 0j, rho_abs=None)
    with pytest.raises(ln.NotApplicableError):
        ln.predict_tip(sub, 40.0)


def test_degenerate_normalization_guard(mode, adjoint, corrections,
                                        params_c, grid96):
    """An adjoint Gamma-orthogonal to the mode trips the degeneracy gate."""
    from rodflutter.model import GammaWeights
    gw = GammaWeights.from_params(params_c)
    xi = sp.mode_vector(mode)
    rng = np.random.default_rng(5)
    n = grid96.n
    r = np.zeros(3 * n, dtype=complex)
    r[n:] = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
    # orthogonalize r against the mode in the Gamma inner product
    coef = sp.gamma_inner(grid96, gw, r, xi) / sp.gamma_inner(grid96, gw, xi, xi)
    psi = r - np.conj(coef) * xi
    bad = dataclasses.replace(adjoint, PsiY=psi[n:2 * n], PsiTheta=psi[2 * n:])
    with pytest.raises(ln.DegenerateNormalizationError):
        ln.landau_coefficients(mode, bad, corrections, params_c, grid96)


def test_grid_convergence_of_coefficients(landau_model, landau_144):
    _, m144 = landau_144
    assert abs(m144.alpha - landau_model.alpha) / abs(landau_model.alpha) < 1e-6
    assert abs(m144.beta - landau_model.beta) / abs(landau_model.beta) < 1e-6


def test_grid_stability_of_threshold(hopf, landau_144):
    h144, _ = landau_144
    assert abs(h144.force_crit - hopf.force_crit) < 1e-6


def test_golden_x0_profile(corrections):
    with open(os.path.join(GOLDEN_DIR, "x0_profile.json")) as fh:
        ref = json.load(fh)
    X0 = corrections.X0
    assert len(X0) == len(ref["real"])
    assert np.abs(X0.real - np.array(ref["real"])).max() < 1e-9
    assert np.abs(X0.imag - np.array(ref["imag"])).max() < 1e-9


def test_golden_anisotropic_record(grid96):
    """Regression record for a genuinely anisotropic rod (k2 = k1/2)."""
    with open(os.path.join(GOLDEN_DIR, "landau_aniso.json")) as fh:
        ref = json.load(fh)
    params = rf.make_params(1e4, 5e3, 0.5, 1e-4, 0.0)
    hopf = sp.find_hopf_threshold(params, grid96)
    pc = params.with_force(hopf.force_crit)
    mode = sp.critical_mode(sp.assemble_operator(pc, grid96),
                            omega_c=hopf.omega_c)
    adj = sp.adjoint_mode(sp.assemble_adjoint_operator(pc, grid96),
                          omega_c=hopf.omega_c)
    corr = ln.quadratic_corrections(mode, pc, grid96)
    model = ln.landau_coefficients(mode, adj, corr, pc, grid96)
    assert hopf.force_crit == pytest.approx(ref["force_crit"], rel=1e-8)
    assert model.omega_c == pytest.approx(ref["omega_c"], rel=1e-8)
    assert model.alpha.real == pytest.approx(ref["alpha"][0], rel=1e-7)
    assert model.alpha.imag == pytest.approx(ref["alpha"][1], rel=1e-7)
    assert model.beta.real == pytest.approx(ref["beta"][0], rel=1e-7)
    assert model.beta.imag == pytest.approx(ref["beta"][1], rel=1e-7)
