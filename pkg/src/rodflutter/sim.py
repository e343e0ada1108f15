"""Direct time integration of the full nonlinear planar Cosserat rod.

State is carried in deviation variables (w, y, theta) with w = x - nu*u, on
the interior collocation nodes; the boundary nodal values are slaved to the
traction conditions at u = 1 in closed form:

    theta'(1) = 0          ->  theta(1)
    h1(1) = nu  (F1 = -F)  ->  w'(1) = nu (cos theta(1) - 1)
    h2(1) = 0   (F2 =  0)  ->  y'(1) = nu sin theta(1)

Writing the longitudinal stress as F1 + F = k1 (h1 - nu) makes the base
state an exact fixed point of the discrete right-hand side (all terms vanish
identically, not merely to truncation).

Time stepping is a trapezoidal rule with Newton iterations against the
analytic Jacobian of the reduced right-hand side, refreshed every accepted
step; step size is adapted by step-doubling (one full step against two half
steps) with relative tolerance rtol.  A semi-implicit scheme whose implicit
part is frozen at the base-state linearization is unstable here at any
practical step size once the amplitude grows: its explicit remainder carries
the stiff amplitude-dependent stresses, and the resulting instability caps
the oscillation at a spurious, dt-dependent amplitude.  The state-dependent
Jacobian refresh removes that failure mode while the linear solves stay the
dominant cost.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .model import Configuration, ValidationError, make_grid


class StiffnessError(RuntimeError):
    """Newton failure or time-step underflow in the implicit integrator."""


class InsufficientDataError(RuntimeError):
    """Too few oscillation peaks in the analysis window."""


@dataclass(frozen=True)
class SimConfig:
    """Nonlinear run configuration."""

    params: object
    n: int = 96
    t_max: float = 4.0
    dt0: float = None
    delta: float = 1e-3
    perturbation: str = "mode"
    rtol: float = 1e-7
    atol: float = 1e-12
    sat_drift: float = 1e-3
    sat_periods: int = 5
    decay_floor: float = 1e-6
    snapshot_every: int = 0

    def __post_init__(self):
        if self.t_max <= 0.0:
            raise ValidationError("t_max must be positive")
        if not (0.0 < self.delta <= 0.1):
            raise ValidationError("perturbation amplitude must lie in (0, 0.1]")
        if self.dt0 is not None and self.dt0 <= 0.0:
            raise ValidationError("dt0 must be positive")
        if self.perturbation not in ("mode", "bump"):
            raise ValidationError("perturbation must be 'mode' or 'bump'")


@dataclass
class SimRecord:
    """Output of a nonlinear run."""

    times: np.ndarray
    tip_x: np.ndarray
    tip_y: np.ndarray
    saturated: bool
    amplitude: float = None
    frequency: float = None
    snapshots: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    config: SimConfig = None


class _Workspace:
    """Precomputed discrete operators for one (params, n) combination."""

    def __init__(self, params, n):
        self.params = params
        self.n = n
        self.grid = make_grid(n)
        self.D = self.grid.diff1
        self.Db = self.D[-1]
        self.nu = params.nu
        self.F = params.force_tilde
        self.k1 = params.k1_tilde
        self.k2 = params.k2_tilde
        self.g1 = params.gamma1_tilde
        self.g3 = params.gamma3_tilde
        ni = n - 2
        self.ni = ni
        self.sl_w = slice(0, ni)
        self.sl_y = slice(ni, 2 * ni)
        self.sl_t = slice(2 * ni, 3 * ni)
        # constant embedding Jacobians (interior values -> full fields)
        tb = -self.Db[1:-1] / self.Db[-1]
        self.tb_row = tb                      # d theta(1) / d q_theta
        Tth = np.zeros((n, ni))
        Tth[1:-1] = np.eye(ni)
        Tth[-1] = tb
        Tw = np.zeros((n, ni))
        Tw[1:-1] = np.eye(ni)
        Tw[-1] = -self.Db[1:-1] / self.Db[-1]
        self.Tth = Tth
        self.DTth = self.D @ Tth              # d Pi / d q_theta
        self.DDTth = self.D @ self.DTth
        self.DTw = self.D @ Tw                # d w_u / d q_w (also d y_u / d q_y)
        self.Dcol = self.D[:, -1].copy()      # column hit by the slaved node
        self.L0 = self._reduced_linop()
        self.I = np.eye(3 * ni)

    def _reduced_linop(self):
        n, ni = self.n, self.ni
        nu, mu = self.nu, self.params.mu
        D, D2 = self.D, self.grid.diff2
        idx = np.arange(1, n - 1)
        E = np.zeros((3 * n, 3 * ni))
        for f in range(3):
            E[f * n + idx, f * ni + np.arange(ni)] = 1.0
        th_b = np.zeros(3 * ni)
        th_b[2 * ni:] = self.tb_row
        E[3 * n - 1] = th_b
        x_b = np.zeros(3 * ni)
        x_b[:ni] = self.tb_row
        E[n - 1] = x_b
        y_b = np.zeros(3 * ni)
        y_b[ni:2 * ni] = self.tb_row
        y_b += (nu / self.Db[-1]) * th_b
        E[2 * n - 1] = y_b
        Z = np.zeros((n, n))
        I = np.eye(n)
        Lfull = np.block([
            [(self.k1 / self.g1) * D2, Z, Z],
            [Z, self.k2 * D2, -mu * D],
            [Z, (mu / self.g3) * D, (D2 - mu * nu * I) / self.g3],
        ])
        rows = np.concatenate([idx, n + idx, 2 * n + idx])
        return (Lfull @ E)[rows, :]

    # -- field reconstruction with boundary slaving -------------------------
    def fields(self, q):
        n = self.n
        Db = self.Db
        w = np.zeros(n)
        y = np.zeros(n)
        th = np.zeros(n)
        w[1:-1] = q[self.sl_w]
        y[1:-1] = q[self.sl_y]
        th[1:-1] = q[self.sl_t]
        th[-1] = -(Db[:-1] @ th[:-1]) / Db[-1]
        ct_b, st_b = np.cos(th[-1]), np.sin(th[-1])
        w[-1] = (self.nu * (ct_b - 1.0) - Db[:-1] @ w[:-1]) / Db[-1]
        y[-1] = (self.nu * st_b - Db[:-1] @ y[:-1]) / Db[-1]
        return w, y, th

    def rhs_fields(self, w, y, th):
        """Time derivatives (x_dot, y_dot, theta_dot) on the full grid."""
        D = self.D
        wu = D @ w
        yu = D @ y
        Pi = D @ th
        ct, st = np.cos(th), np.sin(th)
        xu = self.nu + wu
        h1 = ct * xu + st * yu
        h2 = -st * xu + ct * yu
        F1d = self.k1 * (h1 - self.nu)       # F1 = -F + F1d
        F2 = self.k2 * h2
        v1 = (D @ F1d - Pi * F2) / self.g1
        v2 = D @ F2 + Pi * (F1d - self.F)
        Om = (D @ Pi + h1 * F2 - h2 * (F1d - self.F)) / self.g3
        xdot = v1 * ct - v2 * st
        ydot = v1 * st + v2 * ct
        xdot[0] = ydot[0] = Om[0] = 0.0
        return xdot, ydot, Om

    def rhs_reduced(self, q):
        w, y, th = self.fields(q)
        xdot, ydot, Om = self.rhs_fields(w, y, th)
        return np.concatenate([xdot[1:-1], ydot[1:-1], Om[1:-1]])

    def jac_reduced(self, q):
        """Analytic Jacobian of rhs_reduced (equals L0 at the base state)."""
        n, ni = self.n, self.ni
        D = self.D
        w, y, th = self.fields(q)
        wu = D @ w
        yu = D @ y
        Pi = D @ th
        ct, st = np.cos(th), np.sin(th)
        xu = self.nu + wu
        h1 = ct * xu + st * yu
        h2 = -st * xu + ct * yu
        F1d = self.k1 * (h1 - self.nu)
        F2 = self.k2 * h2
        v1 = (D @ F1d - Pi * F2) / self.g1
        v2 = D @ F2 + Pi * (F1d - self.F)
        xdot = v1 * ct - v2 * st
        ydot = v1 * st + v2 * ct
        ct_b, st_b = np.cos(th[-1]), np.sin(th[-1])
        # slaved-node contributions are rank one in the theta dofs
        t_w = (-self.nu * st_b / self.Db[-1]) * self.tb_row
        t_y = (self.nu * ct_b / self.Db[-1]) * self.tb_row
        Zn = np.zeros((n, ni))
        dwu = (self.DTw, Zn, np.outer(self.Dcol, t_w))
        dyu = (Zn, self.DTw, np.outer(self.Dcol, t_y))
        dth = (Zn, Zn, self.Tth)
        dh1, dh2, dF1, dF2, dPi = [], [], [], [], []
        for i in range(3):
            a = ct[:, None] * dwu[i] + st[:, None] * dyu[i] + h2[:, None] * dth[i]
            b = -st[:, None] * dwu[i] + ct[:, None] * dyu[i] - h1[:, None] * dth[i]
            dh1.append(a)
            dh2.append(b)
            dF1.append(self.k1 * a)
            dF2.append(self.k2 * b)
        dPi = (Zn, Zn, self.DTth)
        rows_x, rows_y, rows_t = [], [], []
        for i in range(3):
            dv1 = (D @ dF1[i] - F2[:, None] * dPi[i] - Pi[:, None] * dF2[i]) / self.g1
            dv2 = D @ dF2[i] + (F1d - self.F)[:, None] * dPi[i] + Pi[:, None] * dF1[i]
            dOm = (self.DDTth if i == 2 else Zn)
            dOm = (dOm + F2[:, None] * dh1[i] + h1[:, None] * dF2[i]
                   - (F1d - self.F)[:, None] * dh2[i] - h2[:, None] * dF1[i]) / self.g3
            dxd = ct[:, None] * dv1 - st[:, None] * dv2 - ydot[:, None] * dth[i]
            dyd = st[:, None] * dv1 + ct[:, None] * dv2 + xdot[:, None] * dth[i]
            rows_x.append(dxd[1:-1])
            rows_y.append(dyd[1:-1])
            rows_t.append(dOm[1:-1])
        return np.block([rows_x, rows_y, rows_t])

    def tip(self, q):
        """(x_tip, y_tip) deviation of the rod tip from the base state."""
        w, y, th = self.fields(q)
        return w[-1], y[-1]


_WORKSPACES = {}


def get_workspace(params, n=96):
    key = (params, n)
    if key not in _WORKSPACES:
        _WORKSPACES[key] = _Workspace(params, n)
    return _WORKSPACES[key]


# ---------------------------------------------------------------------------
# public rhs / step on full configurations


def rhs(configuration, params, grid):
    """Time derivative of a configuration (traction BCs enforced by slaving).

    The boundary nodal values at u = 1 are recomputed from the follower
    conditions F1(1) = -F, F2(1) = 0, M(1) = 0 (boundary-row replacement)
    before the balance laws are evaluated.
    """
    ws = get_workspace(params, grid.n)
    w = configuration.x - params.nu * grid.nodes
    q = np.concatenate([w[1:-1], configuration.y[1:-1], configuration.theta[1:-1]])
    wf, yf, thf = ws.fields(q)
    xdot, ydot, thdot = ws.rhs_fields(wf, yf, thf)
    return xdot, ydot, thdot


def _trap_substep(ws, q, fq, dt, lu, newton_tol=1e-12, max_iter=12):
    """One trapezoidal step with Newton iterations on a factored Jacobian.

    The factored matrix may be slightly stale (older state, nearby dt); it is
    only the iteration matrix, so staleness costs iterations, not accuracy.
    Returns (q_new, f(q_new), iterations) or (None, None, iterations) on
    divergence.
    """
    qn = q + dt * sla.lu_solve(lu, fq)      # semi-implicit Euler predictor
    prev = np.inf
    stall = 0
    for it in range(max_iter):
        fn = ws.rhs_reduced(qn)
        res = qn - q - 0.5 * dt * (fq + fn)
        if not np.all(np.isfinite(res)):
            return None, None, it + 1
        dq = sla.lu_solve(lu, res)
        qn = qn - dq
        d = np.abs(dq).max()
        scale = max(1.0, np.abs(qn).max())
        if d <= newton_tol * scale:
            return qn, ws.rhs_reduced(qn), it + 1
        # accept a stall at the roundoff floor (dq stops contracting while
        # already far below any meaningful accuracy level)
        if d > 0.5 * prev:
            stall += 1
            if stall >= 2 and d <= 1e-9 * scale:
                return qn, ws.rhs_reduced(qn), it + 1
        else:
            stall = 0
        prev = d
    return None, None, max_iter


def step(state, dt, params, grid):
    """Advance a full Configuration by one trapezoidal step of size dt."""
    ws = get_workspace(params, grid.n)
    w = state.x - params.nu * grid.nodes
    q = np.concatenate([w[1:-1], state.y[1:-1], state.theta[1:-1]])
    fq = ws.rhs_reduced(q)
    J = ws.jac_reduced(q)
    lu = sla.lu_factor(ws.I - 0.5 * dt * J)
    qn, _, _ = _trap_substep(ws, q, fq, dt, lu)
    if qn is None:
        raise StiffnessError(f"Newton failed at dt = {dt:.3e}")
    wf, yf, thf = ws.fields(qn)
    return Configuration(x=wf + params.nu * grid.nodes, y=yf.copy(), theta=thf.copy())


def initial_state(ws, config):
    """Reduced initial perturbation (critical-mode shape or transverse bump)."""
    if config.perturbation == "mode":
        vals, vecs = np.linalg.eig(ws.L0)
        lead = np.argsort(-vals.real)[0]
        v = vecs[:, lead].real
        scale = np.abs(v).max()
        if scale > 0:
            return config.delta * v / scale
    q = np.zeros(3 * ws.ni)
    q[ws.sl_y] = config.delta * np.sin(0.5 * np.pi * ws.grid.nodes[1:-1])
    return q


def _find_peaks(times, values):
    """Local maxima refined by a parabola through three (t, y) samples."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(y) < 3:
        return np.empty(0), np.empty(0)
    i = np.where((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]))[0] + 1
    if len(i) == 0:
        return np.empty(0), np.empty(0)
    t0, t1, t2 = t[i - 1], t[i], t[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
    denom[denom == 0.0] = np.inf
    a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
    b = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0) + t0 * t0 * (y1 - y2)) / denom
    c = y1 - a * t1 * t1 - b * t1
    good = a < 0.0
    ts = np.where(good, -b / (2.0 * np.where(good, a, 1.0)), t1)
    vs = np.where(good, a * ts * ts + b * ts + c, y1)
    return ts, vs


def _saturation_check(times, tip, drift_tol, n_periods):
    """Relative drift of successive oscillation peaks over the trailing periods."""
    t_pk, v_pk = _find_peaks(np.asarray(times), np.asarray(tip))
    if len(t_pk) < n_periods + 1:
        return False
    t_last = t_pk[-1]
    period = np.diff(t_pk[-(n_periods + 1):]).mean()
    window = t_pk > t_last - n_periods * period - 0.5 * period
    v = v_pk[window]
    if len(v) < n_periods:
        return False
    mean = np.abs(v).mean()
    if mean <= 0.0:
        return False
    return (v.max() - v.min()) / mean < drift_tol


def run(config):
    """Integrate to t_max or saturation; record the tip trajectory."""
    ws = get_workspace(config.params, config.n)
    q = initial_state(ws, config)
    vals = np.linalg.eigvals(ws.L0)
    lead = vals[np.argsort(-vals.real)[0]]
    omega_est = abs(lead.imag) if abs(lead.imag) > 1e-8 else None
    period = 2.0 * np.pi / omega_est if omega_est else config.t_max / 50.0
    dt = config.dt0 if config.dt0 is not None else period / 100.0
    t = 0.0
    times = [0.0]
    tx0, ty0 = ws.tip(q)
    tip_x, tip_y = [tx0], [ty0]
    snapshots, snap_times = [], []
    init_amp = max(np.abs(q).max(), 1e-30)
    saturated = False
    accepted = 0
    fq = ws.rhs_reduced(q)
    # lazy iteration matrix: refresh the Jacobian only when Newton struggles
    # or periodically; refactor the LU pair only when dt actually changes
    lu_full = lu_half = None
    steps_since_jac = 0
    J = None

    def refresh(jac_too):
        nonlocal J, lu_full, lu_half, steps_since_jac
        if jac_too or J is None:
            J = ws.jac_reduced(q)
            steps_since_jac = 0
        lu_full = sla.lu_factor(ws.I - 0.5 * dt * J)
        lu_half = sla.lu_factor(ws.I - 0.25 * dt * J)

    refresh(jac_too=True)
    while t < config.t_max:
        if t + dt > config.t_max:
            dt = config.t_max - t
            refresh(jac_too=False)
        if dt < 1e-12:
            raise StiffnessError("time step underflow (dt < 1e-12)")
        q_full, _, it1 = _trap_substep(ws, q, fq, dt, lu_full)
        q_h2 = None
        it2 = it3 = 0
        if q_full is not None:
            q_h, f_h, it2 = _trap_substep(ws, q, fq, 0.5 * dt, lu_half)
            if q_h is not None:
                q_h2, f_h2, it3 = _trap_substep(ws, q_h, f_h, 0.5 * dt, lu_half)
        if q_h2 is None:
            if steps_since_jac > 0:
                refresh(jac_too=True)      # retry with a fresh Jacobian first
            else:
                dt *= 0.25
                refresh(jac_too=False)
            continue
        err = np.abs(q_full - q_h2).max() / 3.0
        tol = config.atol + config.rtol * max(np.abs(q_h2).max(), init_amp)
        if err <= tol:
            q = q_h2
            fq = f_h2
            t += dt
            accepted += 1
            steps_since_jac += 1
            tx, ty = ws.tip(q)
            times.append(t)
            tip_x.append(tx)
            tip_y.append(ty)
            if config.snapshot_every and accepted % config.snapshot_every == 0:
                wf, yf, thf = ws.fields(q)
                snapshots.append(Configuration(
                    x=wf + ws.nu * ws.grid.nodes, y=yf.copy(), theta=thf.copy()))
                snap_times.append(t)
            check_interval = max(10, int(round(period / dt)))
            if accepted % check_interval == 0:
                win = 2 * int(round((config.sat_periods + 2) * period / dt)) + 10
                if omega_est and _saturation_check(times[-win:], tip_y[-win:],
                                                   config.sat_drift,
                                                   config.sat_periods):
                    saturated = True
                    break
                if np.abs(q).max() < config.decay_floor * init_amp:
                    break
            if steps_since_jac >= 100 or it1 + it2 + it3 > 15:
                refresh(jac_too=True)
            growth = 0.9 * (tol / max(err, 1e-300)) ** (1.0 / 3.0)
            if growth > 1.3:               # dt freeze: keep the LU pair warm
                dt *= min(2.0, growth)
                refresh(jac_too=False)
        else:
            growth = 0.9 * (tol / err) ** (1.0 / 3.0)
            dt *= max(0.3, min(0.9, growth))
            refresh(jac_too=False)
    record = SimRecord(times=np.array(times), tip_x=np.array(tip_x),
                       tip_y=np.array(tip_y), saturated=saturated,
                       snapshots=snapshots, snapshot_times=snap_times,
                       config=config)
    if saturated:
        # window wide enough for the trailing saturated periods even when
        # saturation stops the run well before t_max
        frac = 0.2
        if omega_est and t > 0.0:
            frac = min(0.9, max(0.2, (config.sat_periods + 2) * period / t))
        record.amplitude, record.frequency = extract_cycle(record, window_frac=frac)
    return record


def extract_cycle(record, window_frac=0.2, min_peaks=5):
    """Amplitude and frequency of the saturated tail of a tip series.

    Amplitude is half the peak-to-peak excursion over the final window
    (parabola-refined extrema); frequency comes from the mean zero-up-crossing
    interval of the mean-removed signal.
    """
    times = np.asarray(record.times, dtype=float)
    tip = np.asarray(record.tip_y, dtype=float)
    m = len(times)
    lo = int((1.0 - window_frac) * m)
    t_w, y_w = times[lo:], tip[lo:]
    t_pk, v_pk = _find_peaks(t_w, y_w)
    t_tr, v_tr = _find_peaks(t_w, -y_w)
    if len(t_pk) < min_peaks or len(t_tr) < min_peaks:
        raise InsufficientDataError(
            f"only {len(t_pk)} peaks in the analysis window (need {min_peaks})")
    amplitude = 0.5 * (v_pk.mean() + v_tr.mean())
    y0 = y_w - y_w.mean()
    s = np.sign(y0)
    up = np.where((s[:-1] < 0) & (s[1:] > 0))[0]
    if len(up) < 2:
        raise InsufficientDataError("fewer than two zero up-crossings in window")
    t_cross = t_w[up] - y0[up] * (t_w[up + 1] - t_w[up]) / (y0[up + 1] - y0[up])
    frequency = 2.0 * np.pi / np.diff(t_cross).mean()
    return float(amplitude), float(frequency)
