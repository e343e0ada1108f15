"""Shared fixtures: the reference parameter set and the Hopf-point pipeline.

Session-scoped so the expensive objects (thresholds, refined modes, Landau
coefficients) are computed once and shared across test modules.
"""

import numpy as np
import pytest

import rodflutter as rf
from rodflutter import landau as ln
from rodflutter import spectrum as sp


@pytest.fixture(scope="session")
def params0():
    """Reference parameters (isotropic, kappa = 1e4) at zero force."""
    return rf.make_params(1e4, 1e4, 0.5, 1e-4, 0.0)


@pytest.fixture(scope="session")
def grid96():
    return rf.make_grid(96)


@pytest.fixture(scope="session")
def hopf(params0, grid96):
    return sp.find_hopf_threshold(params0, grid96)


@pytest.fixture(scope="session")
def params_c(params0, hopf):
    return params0.with_force(hopf.force_crit)


@pytest.fixture(scope="session")
def op_c(params_c, grid96):
    return sp.assemble_operator(params_c, grid96)


@pytest.fixture(scope="session")
def op_adj(params_c, grid96):
    return sp.assemble_adjoint_operator(params_c, grid96)


@pytest.fixture(scope="session")
def mode(op_c, hopf):
    return sp.critical_mode(op_c, omega_c=hopf.omega_c)


@pytest.fixture(scope="session")
def adjoint(op_adj, hopf):
    return sp.adjoint_mode(op_adj, omega_c=hopf.omega_c)


@pytest.fixture(scope="session")
def corrections(mode, params_c, grid96):
    return ln.quadratic_corrections(mode, params_c, grid96)


@pytest.fixture(scope="session")
def landau_model(mode, adjoint, corrections, params_c, grid96):
    return ln.landau_coefficients(mode, adjoint, corrections, params_c, grid96)


@pytest.fixture(scope="session")
def landau_144(params0):
    """Hopf point and Landau model recomputed on a finer grid (n = 144)."""
    grid = rf.make_grid(144)
    hopf = sp.find_hopf_threshold(params0, grid)
    pc = params0.with_force(hopf.force_crit)
    mode = sp.critical_mode(sp.assemble_operator(pc, grid),
                            omega_c=hopf.omega_c)
    adj = sp.adjoint_mode(sp.assemble_adjoint_operator(pc, grid),
                          omega_c=hopf.omega_c)
    corr = ln.quadratic_corrections(mode, pc, grid)
    return hopf, ln.landau_coefficients(mode, adj, corr, pc, grid)
