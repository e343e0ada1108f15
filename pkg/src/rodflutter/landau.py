"""Weakly nonlinear reduction: quadratic corrections and Stuart-Landau coefficients.

At second order in the mode amplitude the transverse oscillation drives the
longitudinal displacement at frequencies 0 and 2*omega_c.  The mode shapes
X0 and X2 solve

    k1 X0''                      = q0,   q0 = conj(Theta)*(i w g1 Y - k1 Y'') + (k2-k1) Theta' conj(H2)
    k1 X2'' - 2 i w g1 X2        = q2,   q2 =      Theta *(i w g1 Y - k1 Y'') + (k2-k1) Theta' H2

with X(0) = 0 and X0'(1) = -nu |Theta(1)|^2 / 2, X2'(1) = -nu Theta(1)^2 / 2,
and H2 = Y' - nu*Theta.  The isotropic case is k1 = k2 (the extra forcing
vanishes).  Each BVP is solved by spectral collocation (primary) and by the
closed-form quadrature (oracle); disagreement raises ConsistencyError.

At third order the resonant forcing vector G is projected onto the adjoint
mode under the Gamma-inner product (Fredholm solvability), which yields the
Stuart-Landau equation dA/dT = alpha |A|^2 A + beta chi A.  The 1/gamma3 in
G's third row cancels against Gamma's gamma3 inside the projection; the
cancellation is never done by hand.
"""

from dataclasses import dataclass

import numpy as np

from .model import GammaWeights
from .spectrum import gamma_inner, mode_vector, stack_fields


class ConsistencyError(RuntimeError):
    """Closed-form and collocation solutions of a quadratic BVP disagree."""


class DegenerateNormalizationError(RuntimeError):
    """|(Psi, xi_c)_Gamma| is too small for the Fredholm projection."""


class NotApplicableError(RuntimeError):
    """Prediction requested for subcritical or degenerate Landau coefficients."""


@dataclass(frozen=True)
class QuadraticCorrections:
    """Second-order longitudinal mode shapes and stress corrections."""

    X0: np.ndarray
    X2: np.ndarray
    P0: np.ndarray
    P2: np.ndarray
    lam: complex


@dataclass(frozen=True)
class ForcingAssembly:
    """Resonant forcing columns and the anisotropic auxiliaries behind them.

    G_cubic, G_chi, G_dAdT are stacked (x, y, theta)-row vectors multiplying
    |A|^2 A, chi A and dA/dT in the third-order forcing.
    """

    G_cubic: np.ndarray
    G_chi: np.ndarray
    G_dAdT: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    g4: np.ndarray
    H2: np.ndarray
    mu: float
    q0: np.ndarray
    q2: np.ndarray
    b0: complex
    b2: complex


@dataclass(frozen=True)
class LandauModel:
    alpha: complex
    beta: complex
    normalization: complex
    omega_c: float
    force_crit: float
    rho_abs: float
    sigma: float
    phi: float = 0.0

    @property
    def supercritical(self):
        return self.alpha.real < 0.0 and self.beta.real > 0.0

    @property
    def C(self):
        return 2.0 * self.rho_abs if self.rho_abs is not None else None

    def to_dict(self):
        return {"force_crit": self.force_crit,
                "omega_c": self.omega_c,
                "alpha": [self.alpha.real, self.alpha.imag],
                "beta": [self.beta.real, self.beta.imag],
                "rho_abs": self.rho_abs,
                "sigma": self.sigma,
                "C": self.C}


def _antiderivative_matrix_solver(grid):
    """Return a function computing the antiderivative vanishing at u = 0."""
    Dmod = grid.diff1.astype(complex).copy()
    Dmod[0, :] = 0.0
    Dmod[0, 0] = 1.0

    def antideriv(f):
        rhs = np.asarray(f, dtype=complex).copy()
        rhs[0] = 0.0
        return np.linalg.solve(Dmod, rhs)

    return antideriv


def quadratic_forcings(mode, params, grid):
    """Forcings q0, q2 and boundary data of the X0/X2 problems (general case)."""
    D, D2 = grid.diff1, grid.diff2
    w = mode.omega_c
    g1 = params.gamma1_tilde
    k1, k2 = params.k1_tilde, params.k2_tilde
    nu = params.nu
    Y, Th = mode.Y, mode.Theta
    core = 1j * w * g1 * Y - k1 * (D2 @ Y)
    H2 = (D @ Y) - nu * Th
    Tp = D @ Th
    q0 = np.conj(Th) * core + (k2 - k1) * Tp * np.conj(H2)
    q2 = Th * core + (k2 - k1) * Tp * H2
    b0 = -0.5 * nu * abs(Th[-1]) ** 2
    b2 = -0.5 * nu * Th[-1] ** 2
    return q0, q2, complex(b0), complex(b2), H2


def _solve_longitudinal(q, b_end, shift, params, grid):
    """Collocation solve of k1 X'' - shift*X = q, X(0)=0, X'(1)=b_end."""
    n = grid.n
    k1 = params.k1_tilde
    A = k1 * grid.diff2.astype(complex) - shift * np.eye(n)
    A[0, :] = 0.0
    A[0, 0] = 1.0
    A[-1, :] = k1 * grid.diff1[-1]
    b = np.asarray(q, dtype=complex).copy()
    b[0] = 0.0
    b[-1] = k1 * b_end
    return np.linalg.solve(A, b)


def solve_X0_closed_form(q0, b0, params, grid):
    """Double-quadrature closed form: X0 = b0*u + (1/k1) int_0^u int_1^s q0."""
    antideriv = _antiderivative_matrix_solver(grid)
    G = antideriv(q0)
    inner = G - G[-1]
    return b0 * grid.nodes + antideriv(inner) / params.k1_tilde


def solve_X2_closed_form(q2, b2, lam, params, grid):
    """Variation-of-parameters closed form of the Helmholtz-type X2 problem."""
    k1 = params.k1_tilde
    u = grid.nodes
    antideriv = _antiderivative_matrix_solver(grid)
    Ic = antideriv(np.cos(lam * u) * q2)
    Is = antideriv(np.sin(lam * u) * q2)
    conv = np.sin(lam * u) * Ic - np.cos(lam * u) * Is
    bterm = b2 - (grid.quad_weights @ (np.cos(lam * (1.0 - u)) * q2)) / k1
    return np.sin(lam * u) / (lam * np.cos(lam)) * bterm + conv / (lam * k1)


def solve_X0(mode, params, grid, oracle_tol=1e-6):
    """O(eps^2) mean longitudinal mode shape (dual-method solve)."""
    q0, _, b0, _, _ = quadratic_forcings(mode, params, grid)
    X0 = _solve_longitudinal(q0, b0, 0.0, params, grid)
    X0_cf = solve_X0_closed_form(q0, b0, params, grid)
    scale = max(np.abs(X0).max(), 1e-30)
    gap = np.abs(X0 - X0_cf).max()
    if gap > oracle_tol * max(scale, 1.0):
        raise ConsistencyError(f"X0 dual-method disagreement {gap:.3e}")
    return X0


def solve_X2(mode, params, grid, oracle_tol=1e-6):
    """O(eps^2) second-harmonic mode shape and branch constant lambda."""
    _, q2, _, b2, _ = quadratic_forcings(mode, params, grid)
    lam = np.sqrt(-2j * mode.omega_c * params.gamma1_tilde / params.k1_tilde)
    X2 = _solve_longitudinal(q2, b2, 2j * mode.omega_c * params.gamma1_tilde,
                             params, grid)
    X2_cf = solve_X2_closed_form(q2, b2, lam, params, grid)
    scale = max(np.abs(X2).max(), 1e-30)
    gap = np.abs(X2 - X2_cf).max()
    if gap > oracle_tol * max(scale, 1.0):
        raise ConsistencyError(f"X2 dual-method disagreement {gap:.3e}")
    return X2, complex(lam)


def stress_corrections(X0, X2, mode, params, grid):
    """Longitudinal stress corrections P0, P2 from the solved mode shapes."""
    D = grid.diff1
    k1 = params.k1_tilde
    nu = params.nu
    Y, Th = mode.Y, mode.Theta
    H2 = (D @ Y) - nu * Th
    P0 = k1 * ((D @ X0) + np.conj(Th) * H2 + 0.5 * nu * np.abs(Th) ** 2)
    P2 = k1 * ((D @ X2) + Th * H2 + 0.5 * nu * Th ** 2)
    return P0, P2


def quadratic_corrections(mode, params, grid):
    """Solve both longitudinal BVPs and assemble the stress corrections."""
    X0 = solve_X0(mode, params, grid)
    X2, lam = solve_X2(mode, params, grid)
    P0, P2 = stress_corrections(X0, X2, mode, params, grid)
    return QuadraticCorrections(X0=X0, X2=X2, P0=P0, P2=P2, lam=lam)


def assemble_forcing(mode, corrections, params, grid, form="anisotropic"):
    """Resonant third-order forcing columns G_cubic, G_chi, G_dAdT.

    form="anisotropic" uses the general g1..g4 profiles; form="isotropic"
    uses the k1 = k2 formulas directly.  Both stack as (0, g_y, g_th/gamma3).
    """
    D = grid.diff1
    n = grid.n
    w = mode.omega_c
    k1, k2 = params.k1_tilde, params.k2_tilde
    gam1, gam3 = params.gamma1_tilde, params.gamma3_tilde
    nu = params.nu
    mu = params.mu
    Y, Th = mode.Y, mode.Theta
    Tp = D @ Th
    H2 = (D @ Y) - nu * Th
    X2, P0, P2 = corrections.X2, corrections.P0, corrections.P2
    cubic_core = 2.0 * X2 * np.conj(Th) - np.conj(Y) * Th ** 2 + 2.0 * Y * np.abs(Th) ** 2
    q0, q2, b0, b2, _ = quadratic_forcings(mode, params, grid)
    if form == "isotropic":
        if not params.isotropic:
            raise ValueError("isotropic forcing requested for k1 != k2")
        g1v = 1j * w * (1.0 - gam1) * cubic_core
        g2v = (1j * w / k1) * Th[-1] * grid.nodes
        g3v = (np.conj(Th) * (Tp ** 2 - P2)
               + 2.0 * Th * (np.abs(Tp) ** 2 - P0.real))
        g4v = Th - Th[-1]
    elif form == "anisotropic":
        r = k2 / k1
        g1v = (1j * w * (1.0 - r * gam1) * cubic_core
               + (1.0 - r) * (np.conj(Tp) * (P2 + k2 * H2)
                              + 2.0 * Tp * (P2 + k2 * H2).real))
        g2v = (1j * w / k1) * Th[-1] * grid.nodes - (1.0 - r) * Tp
        g3v = (np.conj(Th) * (Tp ** 2 - (mu / k1) * P2)
               + 2.0 * Th * (np.abs(Tp) ** 2 - (mu / k1) * P0.real)
               - (1.0 - r) * (P2 * np.conj(H2) + 2.0 * H2 * P0.real))
        g4v = (mu / k1) * (Th - Th[-1]) + (1.0 - r) * H2
    else:
        raise ValueError(f"unknown forcing form {form!r}")
    z = np.zeros(n, dtype=complex)
    return ForcingAssembly(G_cubic=stack_fields(z, g1v, g3v / gam3),
                           G_chi=stack_fields(z, g2v, g4v / gam3),
                           G_dAdT=mode_vector(mode),
                           g1=g1v, g2=g2v, g3=g3v, g4=g4v,
                           H2=H2, mu=float(mu), q0=q0, q2=q2, b0=b0, b2=b2)


def landau_coefficients(mode, adjoint, corrections, params, grid, form=None):
    """Stuart-Landau coefficients from the Gamma-weighted Fredholm projection."""
    if form is None:
        form = "isotropic" if params.isotropic else "anisotropic"
    forcing = assemble_forcing(mode, corrections, params, grid, form=form)
    gw = GammaWeights.from_params(params)
    psi = mode_vector(adjoint)
    xi = mode_vector(mode)
    norm = gamma_inner(grid, gw, psi, xi)
    psi_unit = np.sqrt(abs(gamma_inner(grid, gw, psi, psi)))
    xi_unit = np.sqrt(abs(gamma_inner(grid, gw, xi, xi)))
    if abs(norm) / (psi_unit * xi_unit) < 1e-10:
        raise DegenerateNormalizationError(f"|N| = {abs(norm):.3e} after unit scaling")
    alpha = gamma_inner(grid, gw, psi, forcing.G_cubic) / norm
    beta = gamma_inner(grid, gw, psi, forcing.G_chi) / norm
    if alpha.real < 0.0 and beta.real > 0.0:
        rho_abs = float(np.sqrt(-beta.real / alpha.real))
    else:
        rho_abs = None
    sigma = float(-alpha.imag * (beta.real / alpha.real) + beta.imag)
    return LandauModel(alpha=alpha, beta=beta, normalization=norm,
                       omega_c=mode.omega_c, force_crit=params.force_tilde,
                       rho_abs=rho_abs, sigma=sigma)


def predict_tip(landau, force_tilde):
    """Near-threshold tip prediction (amplitude, angular frequency)."""
    if not landau.supercritical:
        raise NotApplicableError("Landau coefficients are not supercritical")
    dF = force_tilde - landau.force_crit
    amplitude = 2.0 * landau.rho_abs * np.sqrt(dF) if dF > 0.0 else 0.0
    frequency = landau.omega_c + dF * landau.sigma
    return float(amplitude), float(frequency)


def solvability_residual(mode, adjoint, corrections, landau, grid, params=None,
                         channels=("cubic", "chi"), alpha=None, beta=None):
    """Normalized residual of the Fredholm condition with dA/dT substituted.

    With the computed coefficients this is zero up to roundoff; the channels
    argument restricts the check to a single forcing column (isolating alpha
    or beta consistency) and alpha/beta may be overridden to probe response.
    """
    params = params if params is not None else mode.params
    form = "isotropic" if params.isotropic else "anisotropic"
    forcing = assemble_forcing(mode, corrections, params, grid, form=form)
    gw = GammaWeights.from_params(params)
    psi = mode_vector(adjoint)
    alpha = landau.alpha if alpha is None else alpha
    beta = landau.beta if beta is None else beta
    dAdT = 0.0
    G = np.zeros(3 * grid.n, dtype=complex)
    if "cubic" in channels:
        G = G + forcing.G_cubic
        dAdT += alpha
    if "chi" in channels:
        G = G + forcing.G_chi
        dAdT += beta
    G = G - dAdT * forcing.G_dAdT
    resid = gamma_inner(grid, gw, psi, G)
    scale = abs(landau.normalization) * max(abs(landau.alpha), abs(landau.beta))
    return float(abs(resid) / scale)
