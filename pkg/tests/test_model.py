"""Core model: parameters, serialization, grid, base state, constitutive law."""

import numpy as np
import pytest

import rodflutter as rf
from rodflutter.model import GammaWeights, RodParams, ValidationError


def test_params_properties(params0):
    assert params0.nu == 1.0
    assert params0.isotropic
    p = params0.with_force(40.0)
    assert p.nu == pytest.approx(1.0 - 40.0 / 1e4)
    assert p.mu == pytest.approx(1e4 * p.nu + 40.0)
    # original untouched (frozen)
    assert params0.force_tilde == 0.0


@pytest.mark.parametrize("bad", [
    {"k1_tilde": -1.0},
    {"k2_tilde": 0.0},
    {"gamma1_tilde": float("nan")},
    {"gamma3_tilde": float("inf")},
    {"force_tilde": float("nan")},
])
def test_params_validation(bad):
    doc = {"k1_tilde": 1e4, "k2_tilde": 1e4, "gamma1_tilde": 0.5,
           "gamma3_tilde": 1e-4, "force_tilde": 0.0}
    doc.update(bad)
    with pytest.raises(ValidationError):
        RodParams.from_dict(doc)


def test_params_json_roundtrip(params0):
    assert RodParams.from_json(params0.to_json()) == params0


def test_params_rejects_unknown_and_missing_keys():
    doc = {"k1_tilde": 1e4, "k2_tilde": 1e4, "gamma1_tilde": 0.5,
           "gamma3_tilde": 1e-4, "force_tilde": 0.0}
    with pytest.raises(ValidationError, match="unknown"):
        RodParams.from_dict({**doc, "nu": 0.99})
    short = dict(doc)
    del short["force_tilde"]
    with pytest.raises(ValidationError, match="missing"):
        RodParams.from_dict(short)


def test_grid_nodes(grid96):
    u = grid96.nodes
    assert u[0] == 0.0 and u[-1] == 1.0
    assert np.all(np.diff(u) > 0)
    assert len(u) == 96


def test_grid_differentiation_exact_on_polynomials(grid96):
    u = grid96.nodes
    f = u ** 5 - 3.0 * u ** 2 + 2.0
    df = 5.0 * u ** 4 - 6.0 * u
    d2f = 20.0 * u ** 3 - 6.0
    assert np.abs(grid96.diff1 @ f - df).max() < 1e-9
    assert np.abs(grid96.diff2 @ f - d2f).max() < 1e-6


def test_grid_quadrature(grid96):
    u = grid96.nodes
    w = grid96.quad_weights
    assert w @ np.ones_like(u) == pytest.approx(1.0, abs=1e-14)
    assert w @ u ** 7 == pytest.approx(1.0 / 8.0, abs=1e-13)
    assert w @ np.sin(np.pi * u) == pytest.approx(2.0 / np.pi, abs=1e-13)


def test_grid_arrays_read_only(grid96):
    with pytest.raises(ValueError):
        grid96.nodes[0] = 0.5


def test_base_state(params0, grid96):
    p = params0.with_force(40.0)
    cfg = rf.base_state(p, grid96)
    assert np.allclose(cfg.x, p.nu * grid96.nodes)
    assert not cfg.y.any() and not cfg.theta.any()


def test_constitutive(params0):
    F1, F2, M = rf.constitutive(np.array([1.0, 1.1]), np.array([0.0, 0.2]),
                                np.array([0.3, 0.4]), params0)
    assert np.allclose(F1, [0.0, 1e3])
    assert np.allclose(F2, [0.0, 2e3])
    assert np.allclose(M, [0.3, 0.4])


def test_gamma_weights(params0):
    gw = GammaWeights.from_params(params0)
    assert (gw.gamma1, gw.gamma2, gw.gamma3) == (0.5, 1.0, 1e-4)
    s = gw.stacked(4)
    assert len(s) == 12 and s[0] == 0.5 and s[4] == 1.0 and s[8] == 1e-4
    with pytest.raises(ValidationError):
        GammaWeights(0.0, 1.0, 1.0)


def test_configuration_shape_mismatch():
    with pytest.raises(ValidationError):
        rf.Configuration(x=np.zeros(4), y=np.zeros(4), theta=np.zeros(5))
