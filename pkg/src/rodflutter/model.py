"""Core model types: parameters, spectral grid, configurations, constitutive law.

All quantities are dimensionless.  The rod occupies the material coordinate
u in [0, 1], is clamped at u = 0, and carries a tangential (follower)
compressive load F at u = 1.  Bending stiffness and transverse drag are both
1 by the choice of time scale and are not parameters.
"""

import json
from dataclasses import dataclass, field

import numpy as np

_LD = np.longdouble

PARAM_KEYS = ("k1_tilde", "k2_tilde", "gamma1_tilde", "gamma3_tilde", "force_tilde")


class ValidationError(ValueError):
    """Raised for invalid parameters or malformed configuration input."""


@dataclass(frozen=True)
class RodParams:
    """Dimensionless rod parameters.

    k1_tilde   : stretch stiffness (kappa in the isotropic case)
    k2_tilde   : shear stiffness
    gamma1_tilde : longitudinal/transverse drag ratio
    gamma3_tilde : rotational drag ratio
    force_tilde  : follower force F
    """

    k1_tilde: float
    k2_tilde: float
    gamma1_tilde: float
    gamma3_tilde: float
    force_tilde: float

    def __post_init__(self):
        for name in ("k1_tilde", "k2_tilde", "gamma1_tilde", "gamma3_tilde"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0.0:
                raise ValidationError(f"{name} must be positive and finite, got {v!r}")
        if not np.isfinite(self.force_tilde):
            raise ValidationError(f"force_tilde must be finite, got {self.force_tilde!r}")

    @property
    def nu(self):
        """Base-state compression nu = 1 - F/k1 (always derived, never stored)."""
        return 1.0 - self.force_tilde / self.k1_tilde

    @property
    def isotropic(self):
        return self.k1_tilde == self.k2_tilde

    @property
    def mu(self):
        """Coupling constant mu = k2*nu + F of the linearized transverse system."""
        return self.k2_tilde * self.nu + self.force_tilde

    def with_force(self, force_tilde):
        """Copy of these parameters at a different follower force."""
        return RodParams(self.k1_tilde, self.k2_tilde, self.gamma1_tilde,
                         self.gamma3_tilde, float(force_tilde))

    def to_dict(self):
        return {k: float(getattr(self, k)) for k in PARAM_KEYS}

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - set(PARAM_KEYS)
        if unknown:
            raise ValidationError(f"unknown parameter keys: {sorted(unknown)}")
        missing = set(PARAM_KEYS) - set(doc)
        if missing:
            raise ValidationError(f"missing parameter keys: {sorted(missing)}")
        return cls(**{k: float(doc[k]) for k in PARAM_KEYS})

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def make_params(k1_tilde, k2_tilde, gamma1_tilde, gamma3_tilde, force_tilde):
    """Validated RodParams constructor."""
    return RodParams(float(k1_tilde), float(k2_tilde), float(gamma1_tilde),
                     float(gamma3_tilde), float(force_tilde))


@dataclass(frozen=True)
class GammaWeights:
    """Diagonal drag tensor entries (gamma1, 1, gamma3) for the Gamma-inner product."""

    gamma1: float
    gamma2: float
    gamma3: float

    def __post_init__(self):
        if min(self.gamma1, self.gamma2, self.gamma3) <= 0.0:
            raise ValidationError("Gamma weights must be positive")

    @classmethod
    def from_params(cls, params):
        return cls(params.gamma1_tilde, 1.0, params.gamma3_tilde)

    def stacked(self, n):
        """Weight vector over a stacked (x, y, theta) nodal vector of length 3n."""
        return np.concatenate([np.full(n, self.gamma1),
                               np.full(n, self.gamma2),
                               np.full(n, self.gamma3)])


def _cheb_nodes_ld(n):
    k = np.arange(n, dtype=_LD)
    return (_LD(1) - np.cos(np.pi * k / _LD(n - 1))) / _LD(2)


def _diffmat_ld(u):
    """Barycentric differentiation matrix on arbitrary nodes (longdouble)."""
    m = len(u)
    X = u[:, None] - u[None, :]
    np.fill_diagonal(X, _LD(1))
    c = np.prod(X, axis=1)
    D = (c[:, None] / c[None, :]) / X
    np.fill_diagonal(D, _LD(0))
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def _clenshaw_curtis(n):
    """Clenshaw-Curtis weights for n Chebyshev-Lobatto nodes mapped to [0, 1]."""
    N = n - 1
    theta = np.pi * np.arange(n) / N
    w = np.ones(n)
    for i in range(n):
        s = 0.0
        for j in range(1, N // 2 + 1):
            b = 2.0 if 2 * j < N else 1.0
            s += b / (4.0 * j * j - 1.0) * np.cos(2.0 * j * theta[i])
        w[i] -= s
    w *= 2.0 / N
    w[0] /= 2.0
    w[-1] /= 2.0
    return w / 2.0


@dataclass(frozen=True)
class Grid:
    """Chebyshev-Gauss-Lobatto collocation grid on [0, 1].

    float64 operators are rounded views of the longdouble ones used for
    eigenpair refinement (nodes_ld, diff1_ld, diff2_ld).
    """

    n: int
    nodes: np.ndarray
    diff1: np.ndarray
    diff2: np.ndarray
    quad_weights: np.ndarray
    nodes_ld: np.ndarray = field(repr=False, default=None)
    diff1_ld: np.ndarray = field(repr=False, default=None)
    diff2_ld: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        for arr in (self.nodes, self.diff1, self.diff2, self.quad_weights,
                    self.nodes_ld, self.diff1_ld, self.diff2_ld):
            if arr is not None:
                arr.setflags(write=False)


def make_grid(n=96):
    """Build the collocation grid with nodes increasing from 0 to 1."""
    if n < 4:
        raise ValidationError("grid needs at least 4 nodes")
    u_ld = _cheb_nodes_ld(n)
    u_ld[0] = _LD(0)
    u_ld[-1] = _LD(1)
    D_ld = _diffmat_ld(u_ld)
    D2_ld = D_ld @ D_ld
    return Grid(n=n,
                nodes=u_ld.astype(float),
                diff1=D_ld.astype(float),
                diff2=D2_ld.astype(float),
                quad_weights=_clenshaw_curtis(n),
                nodes_ld=u_ld, diff1_ld=D_ld, diff2_ld=D2_ld)


@dataclass(frozen=True)
class Configuration:
    """Nodal values of the planar fields (x, y, theta) on a Grid."""

    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        nx, ny, nt = len(self.x), len(self.y), len(self.theta)
        if not (nx == ny == nt):
            raise ValidationError("field arrays must share one grid")
        for arr in (self.x, self.y, self.theta):
            arr.setflags(write=False)


def base_state(params, grid):
    """Compressed straight rod: x = nu*u, y = 0, theta = 0."""
    nu = params.nu
    return Configuration(x=nu * grid.nodes.copy(),
                         y=np.zeros(grid.n),
                         theta=np.zeros(grid.n))


def constitutive(h1, h2, Pi, params):
    """Linear constitutive law: F1 = k1*(h1 - 1), F2 = k2*h2, M = Pi."""
    F1 = params.k1_tilde * (np.asarray(h1) - 1.0)
    F2 = params.k2_tilde * np.asarray(h2)
    M = np.asarray(Pi).copy() if np.ndim(Pi) else Pi
    return F1, F2, M
