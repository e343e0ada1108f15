"""Linearized operator, leading spectrum, instability thresholds, critical modes.

The linearization about the compressed base state block-decouples the
longitudinal field x from the transverse pair (y, theta):

    gamma1 dx/dt = k1 x''
           dy/dt = k2 y'' - mu theta'
    gamma3 dth/dt = theta'' + mu (y' - nu theta)

with mu = k2*nu + F, clamped conditions at u = 0 and linearized traction
conditions x' = 0, y' - nu*theta = 0, theta' = 0 at u = 1.

Boundary conditions are enforced by row replacement, giving a generalized
pencil (K, B) with a singular diagonal B; the infinite spurious eigenvalues
this creates are filtered.  Eigenpairs from the float64 QZ solve are refined
by Newton iteration against a longdouble assembly of the pencil, and
optionally certified with mpmath residual evaluation (the mode is then stored
in double-double format: a float64 value plus a float64 tail).

The adjoint problem is discretized directly from the continuous adjoint
system (same interior operator, adjoint traction rows
k2 PsiY' - mu PsiTheta = 0 and PsiTheta' + F PsiY = 0 at u = 1), which keeps
the adjoint eigenfunction spectrally smooth; Gamma-biorthogonality against
the direct modes is then a verified property rather than a construction.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import mpmath as mp
from scipy.optimize import brentq

from .model import GammaWeights, make_grid

_LD = np.longdouble
_CLD = np.clongdouble

SPURIOUS_CUTOFF = 1e8


class EigenSolverError(RuntimeError):
    """QZ failure, reported with a condition estimate of the pencil."""


class BracketError(RuntimeError):
    """Threshold search bracket does not contain the sought transition."""


class StaleThresholdError(RuntimeError):
    """Operator was not assembled at the critical force it is being used at."""


class DiscretizationError(RuntimeError):
    """Adjoint discretization failed its a-posteriori boundary-condition check."""


def _mp_from_ld(x):
    """Exact mpf from a longdouble scalar."""
    hi = float(x)
    return mp.mpf(hi) + mp.mpf(float(x - _LD(hi)))


def _mp_from_dd(hi, lo):
    return mp.mpc(mp.mpf(float(hi.real)) + mp.mpf(float(lo.real)),
                  mp.mpf(float(hi.imag)) + mp.mpf(float(lo.imag)))


def _dd_split(z):
    """Round an mpc to double-double: (complex head, complex tail)."""
    hi = complex(float(z.real), float(z.imag))
    lo = complex(float(z.real - mp.mpf(hi.real)), float(z.imag - mp.mpf(hi.imag)))
    return hi, lo


@dataclass(frozen=True)
class LinearOperator:
    """Discrete pencil (K, B) for d/dt B q = K q on stacked (x, y, theta) values."""

    params: object
    grid: object
    K: np.ndarray
    B: np.ndarray
    K_ld: np.ndarray = field(repr=False)
    B_diag_ld: np.ndarray = field(repr=False)
    bc_rows: dict = field(repr=False)
    adjoint: bool = False
    _mp_cache: dict = field(repr=False, default_factory=dict)

    @property
    def size(self):
        return self.K.shape[0]

    def _mp_rows(self):
        """Sparse mpmath view of K rows and the diagonal of B (built lazily)."""
        if "rows" not in self._mp_cache:
            rows = []
            for r in range(self.size):
                idx = np.nonzero(self.K_ld[r])[0]
                rows.append([(int(j), _mp_from_ld(self.K_ld[r, j])) for j in idx])
            self._mp_cache["rows"] = rows
            self._mp_cache["bdiag"] = [_mp_from_ld(b) for b in self.B_diag_ld]
        return self._mp_cache["rows"], self._mp_cache["bdiag"]


@dataclass(frozen=True)
class EigenPair:
    """Refined eigenpair; mode stored as double-double (mode + mode_tail)."""

    eigenvalue: complex
    mode: np.ndarray
    eigenvalue_tail: complex = 0.0
    mode_tail: np.ndarray = None
    residual: float = None


@dataclass(frozen=True)
class HopfPoint:
    force_star: float
    force_crit: float
    omega_c: float


@dataclass(frozen=True)
class CriticalMode:
    """Critical transverse eigenmode (0, Y, Theta) at +i*omega_c, Y(1) = 1."""

    Y: np.ndarray
    Theta: np.ndarray
    omega_c: float
    grid: object
    params: object
    residual: float = None


@dataclass(frozen=True)
class AdjointMode:
    """Adjoint eigenmode (0, PsiY, PsiTheta) at -i*omega_c."""

    PsiY: np.ndarray
    PsiTheta: np.ndarray
    eigenvalue: complex
    grid: object
    params: object
    residual: float = None


def _assemble_pencil_ld(params, grid, adjoint):
    n = grid.n
    u, D, D2 = grid.nodes_ld, grid.diff1_ld, grid.diff2_ld
    k1 = _LD(params.k1_tilde)
    k2 = _LD(params.k2_tilde)
    g1 = _LD(params.gamma1_tilde)
    g3 = _LD(params.gamma3_tilde)
    F = _LD(params.force_tilde)
    nu = _LD(1) - F / k1
    mu = k2 * nu + F
    Z = np.zeros((n, n), dtype=_LD)
    I = np.eye(n, dtype=_LD)
    K = np.block([[k1 * D2, Z, Z],
                  [Z, k2 * D2, -mu * D],
                  [Z, mu * D, D2 - mu * nu * I]])
    bdiag = np.concatenate([np.full(n, g1), np.full(n, _LD(1)), np.full(n, g3)])
    bc_rows = {"clamped": (0, n, 2 * n),
               "traction": (n - 1, 2 * n - 1, 3 * n - 1)}
    for r in (0, n, 2 * n):
        K[r, :] = _LD(0)
        bdiag[r] = _LD(0)
        K[r, r] = _LD(1)
    r = n - 1                      # x'(1) = 0 (same row for direct and adjoint)
    K[r, :] = _LD(0)
    bdiag[r] = _LD(0)
    K[r, 0:n] = D[-1]
    r = 2 * n - 1
    K[r, :] = _LD(0)
    bdiag[r] = _LD(0)
    if adjoint:                    # k2 PsiY'(1) - mu PsiTheta(1) = 0
        K[r, n:2 * n] = k2 * D[-1]
        K[r, 3 * n - 1] = -mu
    else:                          # y'(1) - nu theta(1) = 0
        K[r, n:2 * n] = D[-1]
        K[r, 3 * n - 1] = -nu
    r = 3 * n - 1
    K[r, :] = _LD(0)
    bdiag[r] = _LD(0)
    K[r, 2 * n:3 * n] = D[-1]
    if adjoint:                    # PsiTheta'(1) + F PsiY(1) = 0
        K[r, 2 * n - 1] = F
    return K, bdiag, bc_rows


def assemble_operator(params, grid):
    """Discretized linearized operator with boundary rows replaced."""
    K_ld, bdiag_ld, bc_rows = _assemble_pencil_ld(params, grid, adjoint=False)
    return LinearOperator(params=params, grid=grid,
                          K=K_ld.astype(float), B=np.diag(bdiag_ld.astype(float)),
                          K_ld=K_ld, B_diag_ld=bdiag_ld, bc_rows=bc_rows)


def assemble_adjoint_operator(params, grid):
    """Collocation of the continuous adjoint system with adjoint traction rows."""
    K_ld, bdiag_ld, bc_rows = _assemble_pencil_ld(params, grid, adjoint=True)
    return LinearOperator(params=params, grid=grid,
                          K=K_ld.astype(float), B=np.diag(bdiag_ld.astype(float)),
                          K_ld=K_ld, B_diag_ld=bdiag_ld, bc_rows=bc_rows,
                          adjoint=True)


def _raw_spectrum(op):
    """Filtered, sorted float64 QZ spectrum of the pencil."""
    try:
        w, V = sla.eig(op.K, op.B)
    except sla.LinAlgError as exc:
        cond = np.linalg.cond(op.K)
        raise EigenSolverError(f"QZ failed (cond(K) ~ {cond:.2e})") from exc
    keep = np.isfinite(w) & (np.abs(w) < SPURIOUS_CUTOFF)
    w, V = w[keep], V[:, keep]
    order = np.argsort(-w.real)
    return w[order], V[:, order]


def _polish_ld(op, w0, v0, iters=4, c=None):
    """Newton-refine an eigenpair in longdouble against the longdouble pencil.

    c is the (real or complex) normalization functional; Newton enforces
    c @ v = 1.  The bordered Jacobian is factored once in float64.
    """
    N = op.size
    v0 = np.asarray(v0, dtype=complex)
    if c is None:
        c = v0.conj() / (v0.conj() @ v0)
    else:
        scale = c @ v0
        if scale == 0:
            raise EigenSolverError("degenerate normalization functional")
        v0 = v0 / scale
    bdiag = op.B_diag_ld.astype(float)
    J = np.zeros((N + 1, N + 1), dtype=complex)
    J[:N, :N] = op.K - complex(w0) * np.diag(bdiag)
    J[:N, N] = -(bdiag * v0)
    J[N, :N] = c
    lu = sla.lu_factor(J)
    Kl = op.K_ld.astype(_CLD)
    bl = op.B_diag_ld.astype(_CLD)
    cl = np.asarray(c, dtype=complex).astype(_CLD)
    v = v0.astype(_CLD)
    w = _CLD(complex(w0))
    for _ in range(iters):
        r = np.empty(N + 1, dtype=_CLD)
        r[:N] = Kl @ v - w * (bl * v)
        r[N] = cl @ v - 1.0
        d = sla.lu_solve(lu, r.astype(complex))
        v = v - d[:N].astype(_CLD)
        w = w - _CLD(d[N])
    return w, v, lu, c


def _refine_mp(op, w_ld, v_ld, lu, c, dps=35, max_iters=3, target=1e-10):
    """mpmath Newton correction plus certified interior residual.

    Returns (eigenvalue head, eigenvalue tail, mode head, mode tail, residual)
    where the residual is ||L xi - w xi||_inf / ||xi||_inf evaluated exactly
    (at dps digits) for the double-double values actually returned.
    """
    rows, bdiag_mp = op._mp_rows()
    N = op.size
    interior = np.nonzero(op.B_diag_ld)[0]
    with mp.workdps(dps):
        v_mp = [mp.mpc(_mp_from_ld(z.real), _mp_from_ld(z.imag)) for z in v_ld]
        w_mp = mp.mpc(_mp_from_ld(w_ld.real), _mp_from_ld(w_ld.imag))
        c_mp = np.asarray(c, dtype=complex)
        res = None
        for _ in range(max_iters):
            Kv = [sum(kij * v_mp[j] for j, kij in rows[i]) for i in range(N)]
            resid = [Kv[i] - w_mp * bdiag_mp[i] * v_mp[i] for i in range(N)]
            vmax = max(abs(z) for z in v_mp)
            res = max(abs(resid[i]) / bdiag_mp[i] for i in interior) / vmax
            if res < target:
                break
            r = np.empty(N + 1, dtype=complex)
            for i in range(N):
                r[i] = complex(float(resid[i].real), float(resid[i].imag))
            rn = sum(ci * vi for ci, vi in zip(c_mp, v_mp)) - 1
            r[N] = complex(float(rn.real), float(rn.imag))
            d = sla.lu_solve(lu, r)
            for i in range(N):
                v_mp[i] -= mp.mpc(d[i])
            w_mp -= mp.mpc(d[N])
            res = None
        if res is None:   # residual of the final iterate
            Kv = [sum(kij * v_mp[j] for j, kij in rows[i]) for i in range(N)]
            vmax = max(abs(z) for z in v_mp)
            res = max(abs(Kv[i] - w_mp * bdiag_mp[i] * v_mp[i]) / bdiag_mp[i]
                      for i in interior) / vmax
        w_hi, w_lo = _dd_split(w_mp)
        pairs = [_dd_split(z) for z in v_mp]
        v_hi = np.array([p[0] for p in pairs], dtype=complex)
        v_lo = np.array([p[1] for p in pairs], dtype=complex)
        # certify the rounded (double-double) pair, which is what we return
        v_dd = [_mp_from_dd(h, l) for h, l in zip(v_hi, v_lo)]
        w_dd = _mp_from_dd(np.complex128(w_hi), np.complex128(w_lo))
        Kv = [sum(kij * v_dd[j] for j, kij in rows[i]) for i in range(N)]
        vmax = max(abs(z) for z in v_dd)
        res = max(abs(Kv[i] - w_dd * bdiag_mp[i] * v_dd[i]) / bdiag_mp[i]
                  for i in interior) / vmax
    return w_hi, w_lo, v_hi, v_lo, float(res)


def _certified_pair(op, w0, v0, c=None):
    w_ld, v_ld, lu, c_used = _polish_ld(op, w0, v0, c=c)
    w_hi, w_lo, v_hi, v_lo, res = _refine_mp(op, w_ld, v_ld, lu, c_used)
    return EigenPair(eigenvalue=w_hi, mode=v_hi,
                     eigenvalue_tail=w_lo, mode_tail=v_lo, residual=res)


def leading_spectrum(op, count, certify=True):
    """The count leading eigenpairs, sorted by descending real part.

    With certify=True (default) each returned pair is Newton-refined in
    extended precision and carries a certified interior residual.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    w, V = _raw_spectrum(op)
    count = min(count, len(w))
    pairs = []
    for i in range(count):
        if certify:
            pairs.append(_certified_pair(op, w[i], V[:, i]))
        else:
            w_ld, v_ld, _, _ = _polish_ld(op, w[i], V[:, i])
            pairs.append(EigenPair(eigenvalue=complex(w_ld),
                                   mode=v_ld.astype(complex)))
    pairs.sort(key=lambda p: -p.eigenvalue.real)
    return pairs


def eigen_residual(op, pair, dps=35):
    """Exact-evaluation interior residual of a stored (double-double) eigenpair."""
    rows, bdiag_mp = op._mp_rows()
    N = op.size
    interior = np.nonzero(op.B_diag_ld)[0]
    tail = pair.mode_tail if pair.mode_tail is not None else np.zeros(N, complex)
    with mp.workdps(dps):
        v = [_mp_from_dd(h, l) for h, l in zip(pair.mode, tail)]
        w = _mp_from_dd(np.complex128(pair.eigenvalue),
                        np.complex128(pair.eigenvalue_tail))
        Kv = [sum(kij * v[j] for j, kij in rows[i]) for i in range(N)]
        vmax = max(abs(z) for z in v)
        res = max(abs(Kv[i] - w * bdiag_mp[i] * v[i]) / bdiag_mp[i]
                  for i in interior) / vmax
    return float(res)


def _leading_fast(params, grid, count=2):
    """Raw (unrefined) leading eigenvalues; used inside threshold searches."""
    op = assemble_operator(params, grid)
    w, _ = _raw_spectrum(op)
    return w[:count]


def _polished_leading(params, grid):
    """Longdouble-polished leading eigenvalue with positive imaginary part."""
    op = assemble_operator(params, grid)
    w, V = _raw_spectrum(op)
    i = 0 if w[0].imag >= 0 else 1
    w_ld, _, _, _ = _polish_ld(op, w[i], V[:, i])
    return complex(w_ld)


def find_flutter_onset(params_template, grid=None, bracket=(0.0, 200.0), tol=1e-6):
    """Force at which the two leading real eigenvalues merge into a complex pair."""
    grid = grid if grid is not None else make_grid()

    def merged(F):
        w = _leading_fast(params_template.with_force(F), grid, 2)
        return abs(w[0].imag) > 1e-9 * max(1.0, abs(w[0]))

    a, b = bracket
    if merged(a) or not merged(b):
        raise BracketError(f"no real-to-complex merging found in {bracket}")
    while b - a > tol:
        m = 0.5 * (a + b)
        if merged(m):
            b = m
        else:
            a = m
    return 0.5 * (a + b)


def find_hopf_threshold(params_template, grid=None, bracket=(0.0, 200.0),
                        re_tol=1e-9):
    """Hopf threshold: leading complex pair crosses the imaginary axis.

    Coarse bracketing by brentq on the raw QZ real part, then secant iteration
    on the longdouble-polished real part until |Re| < re_tol.
    """
    grid = grid if grid is not None else make_grid()
    force_star = find_flutter_onset(params_template, grid, bracket)

    def maxre_raw(F):
        return _leading_fast(params_template.with_force(F), grid, 1)[0].real

    lo, hi = force_star + 1e-3, bracket[1]
    if maxre_raw(lo) >= 0 or maxre_raw(hi) <= 0:
        raise BracketError("leading real part does not change sign in bracket")
    Fc = brentq(maxre_raw, lo, hi, xtol=1e-7)

    def maxre(F):
        return _polished_leading(params_template.with_force(F), grid).real

    F0, F1 = Fc - 5e-5, Fc + 5e-5
    r0, r1 = maxre(F0), maxre(F1)
    for _ in range(60):
        if abs(r1) < re_tol or r1 == r0:
            break
        F0, r0, F1 = F1, r1, F1 - r1 * (F1 - F0) / (r1 - r0)
        r1 = maxre(F1)
    if abs(r1) >= re_tol:
        raise BracketError("secant refinement of the Hopf threshold stalled")
    omega_c = abs(_polished_leading(params_template.with_force(F1), grid).imag)
    return HopfPoint(force_star=float(force_star), force_crit=float(F1),
                     omega_c=float(omega_c))


def critical_mode(op, omega_c=None):
    """Critical transverse eigenmode at +i*omega_c, normalized to Y(1) = 1.

    The normalization is enforced through the Newton constraint, so Y at the
    tip node is exactly 1 + 0i in the returned arrays.
    """
    n = op.grid.n
    w, V = _raw_spectrum(op)
    i = 0 if w[0].imag > 0 else 1
    w_ld, _, _, _ = _polish_ld(op, w[i], V[:, i])
    w_pol = complex(w_ld)
    if abs(w_pol.real) > 1e-6 or (omega_c is not None
                                  and abs(w_pol.imag - omega_c) > 1e-6):
        raise StaleThresholdError(
            f"leading eigenvalue {w_pol:.6g} is not i*omega_c; "
            "operator not assembled at the Hopf threshold")
    c = np.zeros(3 * n)
    c[2 * n - 1] = 1.0            # tip value of Y
    pair = _certified_pair(op, w[i], V[:, i], c=c)
    Y = pair.mode[n:2 * n].copy()
    Theta = pair.mode[2 * n:3 * n].copy()
    Y[-1] = 1.0 + 0.0j
    return CriticalMode(Y=Y, Theta=Theta, omega_c=float(pair.eigenvalue.imag),
                        grid=op.grid, params=op.params, residual=pair.residual)


def adjoint_mode(op_adjoint, gamma_weights=None, omega_c=None, bc_tol=1e-4):
    """Adjoint eigenmode at -i*omega_c with a-posteriori adjoint BC validation."""
    if not op_adjoint.adjoint:
        raise ValueError("adjoint_mode needs the adjoint operator")
    n = op_adjoint.grid.n
    params = op_adjoint.params
    w, V = _raw_spectrum(op_adjoint)
    i = 0 if w[0].imag < 0 else 1
    w_ld, _, _, _ = _polish_ld(op_adjoint, w[i], V[:, i])
    w_pol = complex(w_ld)
    if abs(w_pol.real) > 1e-6 or (omega_c is not None
                                  and abs(w_pol.imag + omega_c) > 1e-6):
        raise StaleThresholdError(
            f"leading adjoint eigenvalue {w_pol:.6g} is not -i*omega_c")
    j = int(np.argmax(np.abs(V[:, i])))
    c = np.zeros(3 * n)
    c[j] = 1.0
    pair = _certified_pair(op_adjoint, w[i], V[:, i], c=c)
    PsiY = pair.mode[n:2 * n].copy()
    PsiTheta = pair.mode[2 * n:3 * n].copy()
    D_end = op_adjoint.grid.diff1[-1]
    scale = max(np.abs(PsiY).max(), np.abs(PsiTheta).max())
    mu = params.mu
    bc1 = abs(params.k2_tilde * (D_end @ PsiY) - mu * PsiTheta[-1]) / (abs(mu) * scale)
    bc2 = (abs((D_end @ PsiTheta) + params.force_tilde * PsiY[-1])
           / (max(abs(params.force_tilde), 1.0) * scale))
    if max(bc1, bc2) > bc_tol:
        raise DiscretizationError(
            f"adjoint boundary-condition residuals {bc1:.3e}, {bc2:.3e}")
    return AdjointMode(PsiY=PsiY, PsiTheta=PsiTheta,
                       eigenvalue=pair.eigenvalue, grid=op_adjoint.grid,
                       params=params, residual=pair.residual)


def gamma_inner(grid, gamma_weights, psi, xi):
    """Gamma-weighted inner product of stacked (x, y, theta) nodal vectors.

    Sesquilinear, conjugate-linear in the first argument:
    (psi, xi) = int_0^1 conj(psi)^T Gamma xi du via the grid quadrature.
    """
    psi = np.asarray(psi)
    xi = np.asarray(xi)
    if psi.shape != xi.shape or psi.shape != (3 * grid.n,):
        raise ValueError("gamma_inner needs two stacked vectors of length 3n")
    gam = gamma_weights.stacked(grid.n)
    qw3 = np.concatenate([grid.quad_weights] * 3)
    return complex(np.sum(np.conj(psi) * gam * qw3 * xi))


def stack_fields(x, y, theta):
    """Stack three nodal fields into the (3n,) layout used by the operators."""
    return np.concatenate([np.asarray(x), np.asarray(y), np.asarray(theta)])


def mode_vector(mode):
    """Stacked (0, Y, Theta) vector of a CriticalMode or AdjointMode."""
    if isinstance(mode, CriticalMode):
        y, t = mode.Y, mode.Theta
    else:
        y, t = mode.PsiY, mode.PsiTheta
    return stack_fields(np.zeros(len(y)), y, t)
