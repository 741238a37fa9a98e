"""Nonlinear radiative transfer in a 1D slab:

    eps v dI/dx = T^4 - I,          eps^2 T'' = T^4 - <I>,

with incoming intensities prescribed at the slab ends and Dirichlet
temperatures.  The intensity equation is integrated per velocity ray by the
exponential-fitted (integrating-factor) scheme that is exact for sources
linear in x; the temperature equation uses the three-point stencil with a
bracketed damped Newton.  The two are alternated in a fixed-point loop on T,
optionally Anderson-accelerated (the intensity is slaved to T).

Equilibrium states I = T^4 = const are reproduced exactly by construction:
the transport coefficients of each step sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .elliptic import SolverFailure

__all__ = [
    "RteTrace",
    "RteField",
    "FixedPointOpts",
    "transport_coeffs",
    "transport_sweep",
    "temperature_solve",
    "velocity_average",
    "solve_local_rte",
    "rte_field_norm",
    "rte_trace_norm",
    "field_weights",
    "trace_weights",
]

_SERIES_CUT = 1e-4


@dataclass
class RteTrace:
    """Incoming boundary data of a slab interval.

    g_plus:  intensities for v > 0 imposed at the left end (length nv/2,
             ordered by ascending velocity, i.e. matching v[nv/2:]).
    g_minus: intensities for v < 0 imposed at the right end (length nv/2,
             matching v[:nv/2]).
    theta1 / theta2: temperatures at the left / right end.
    """

    g_minus: np.ndarray
    g_plus: np.ndarray
    theta1: float
    theta2: float

    def pack(self) -> np.ndarray:
        """Canonical vector [g_minus, g_plus, theta1, theta2] (the order of
        the weighted trace norm)."""
        return np.concatenate([self.g_minus, self.g_plus, [self.theta1, self.theta2]])

    @classmethod
    def unpack(cls, vec: np.ndarray, nv: int) -> "RteTrace":
        half = nv // 2
        return cls(g_minus=np.asarray(vec[:half], dtype=float),
                   g_plus=np.asarray(vec[half:nv], dtype=float),
                   theta1=float(vec[nv]), theta2=float(vec[nv + 1]))

    @classmethod
    def equilibrium(cls, c: float, nv: int) -> "RteTrace":
        half = nv // 2
        return cls(g_minus=np.full(half, c ** 4), g_plus=np.full(half, c ** 4),
                   theta1=c, theta2=c)


@dataclass
class RteField:
    """Intensity I[node, velocity] and temperature T[node] on an interval."""

    I: np.ndarray
    T: np.ndarray
    dx: float

    def __post_init__(self):
        if self.I.shape[0] != self.T.shape[0]:
            raise ValueError("intensity and temperature node counts disagree")


@dataclass
class FixedPointOpts:
    tol: float = 1e-10           # relative T-change in the discrete L2 norm
    max_iter: int = 500
    anderson_depth: int = 5      # 0 disables acceleration
    anderson_damping: float = 1.0
    newton_tol: float = 1e-11
    newton_max_iter: int = 60


def transport_coeffs(mu):
    """Step weights (E, c1, c0) of the exponential scheme for cell ratio
    mu = dx / (eps |v|):  I_next = E I_prev + c1 s_next + c0 s_prev.

    Exact for sources linear in x; E + c1 + c0 = 1, all nonnegative.  Small
    mu evaluates the series forms of (1 - E)/mu combinations to dodge
    cancellation.
    """
    scalar = np.isscalar(mu) or np.ndim(mu) == 0
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    E = np.exp(-mu)
    c1 = np.empty_like(mu)
    c0 = np.empty_like(mu)
    small = mu < _SERIES_CUT
    big = ~small
    q = (1.0 - E[big]) / mu[big]
    c1[big] = 1.0 - q
    c0[big] = q - E[big]
    m = mu[small]
    c1[small] = m / 2 - m ** 2 / 6 + m ** 3 / 24 - m ** 4 / 120
    c0[small] = m / 2 - m ** 2 / 3 + m ** 3 / 8 - m ** 4 / 30
    if scalar:
        return float(E[0]), float(c1[0]), float(c0[0])
    return E, c1, c0


def transport_sweep(T: np.ndarray, g_plus: np.ndarray, g_minus: np.ndarray,
                    eps: float, dx: float, v: np.ndarray) -> np.ndarray:
    """March the intensity equation along every velocity ray.

    Positive velocities sweep left to right seeded by ``g_plus``; negative
    ones right to left seeded by ``g_minus``.  Returns I of shape
    (len(T), len(v)).
    """
    nv = v.shape[0]
    half = nv // 2
    nn = T.shape[0]
    s = T.astype(float) ** 4
    I = np.empty((nn, nv))

    mu_p = dx / (eps * v[half:])
    Ep, c1p, c0p = transport_coeffs(mu_p)
    I[0, half:] = g_plus
    for i in range(nn - 1):
        I[i + 1, half:] = Ep * I[i, half:] + c1p * s[i + 1] + c0p * s[i]

    mu_m = dx / (eps * (-v[:half]))
    Em, c1m, c0m = transport_coeffs(mu_m)
    I[nn - 1, :half] = g_minus
    for i in range(nn - 2, -1, -1):
        I[i, :half] = Em * I[i + 1, :half] + c1m * s[i] + c0m * s[i + 1]
    return I


def velocity_average(I: np.ndarray, w: np.ndarray) -> np.ndarray:
    """<I>(x) = (1/2) integral of I over v, by the Gauss-Legendre rule."""
    return 0.5 * (I @ w)


def temperature_solve(mean_i: np.ndarray, theta1: float, theta2: float,
                      eps: float, dx: float, t0: np.ndarray | None = None,
                      tol: float = 1e-11, max_iter: int = 60) -> np.ndarray:
    """Solve eps^2 (T_{i-1} - 2 T_i + T_{i+1}) / dx^2 = T_i^4 - <I>_i with
    Dirichlet ends by damped Newton, iterates clamped to the sub/super-solution
    bracket [0, max(theta1, theta2, max <I>^{1/4})].

    In float64 the three-point stencil cannot be evaluated below roughly
    (eps/dx)^2 * eps_mach * |T|, so the acceptance threshold is the maximum of
    ``tol`` and that floor.
    """
    nn = mean_i.shape[0]
    T = np.empty(nn)
    T[0], T[-1] = theta1, theta2
    if nn == 2:
        return T
    hi = max(theta1, theta2, float(np.max(mean_i)) ** 0.25 if np.max(mean_i) > 0 else 0.0)
    interior = (np.linspace(theta1, theta2, nn)[1:-1] if t0 is None
                else np.clip(np.asarray(t0, dtype=float)[1:-1], 0.0, hi))
    c = (eps / dx) ** 2

    def resid(ti):
        full = np.concatenate([[theta1], ti, [theta2]])
        return c * (full[:-2] - 2 * ti + full[2:]) - ti ** 4 + mean_i[1:-1]

    r = resid(interior)
    rnorm = np.max(np.abs(r))
    floor = 64.0 * np.finfo(float).eps * max(1.0, c) * max(1.0, theta1, theta2, hi)
    ab = np.empty((3, nn - 2))
    for _ in range(max_iter):
        if rnorm <= tol:
            break
        ab[0, :] = c
        ab[1, :] = -2.0 * c - 4.0 * interior ** 3
        ab[2, :] = c
        ab[0, 0] = ab[2, -1] = 0.0
        step = sla.solve_banded((1, 1), ab, -r)
        lam = 1.0
        for _ in range(11):
            cand = np.clip(interior + lam * step, 0.0, hi)
            rc = resid(cand)
            cnorm = np.max(np.abs(rc))
            if cnorm < rnorm or cnorm <= tol:
                break
            lam *= 0.5
        if cnorm >= rnorm and rnorm <= max(tol, floor):
            break  # at the float64 evaluation floor of the stencil
        interior, r, rnorm = cand, rc, cnorm
    else:
        if rnorm > max(tol, floor):
            raise SolverFailure(f"temperature Newton stalled at residual {rnorm:.3e}", rnorm)
    T[1:-1] = interior
    return T


def _x_weights(nn: int, dx: float) -> np.ndarray:
    wx = np.full(nn, dx)
    wx[0] = wx[-1] = 0.5 * dx
    return wx


def field_weights(nn: int, nv: int, dx: float, w: np.ndarray) -> np.ndarray:
    """Quadrature weights of the squared discrete field norm, packed like
    ``pack_field``: intensity block (node-major), then temperature block."""
    wx = _x_weights(nn, dx)
    return np.concatenate([(wx[:, None] * w[None, :]).ravel(), wx])


def pack_field(f: RteField) -> np.ndarray:
    return np.concatenate([f.I.ravel(), f.T])


def unpack_field(vec: np.ndarray, nn: int, nv: int, dx: float) -> RteField:
    return RteField(I=vec[: nn * nv].reshape(nn, nv).copy(), T=vec[nn * nv:].copy(), dx=dx)


def rte_field_norm(f: RteField, w: np.ndarray) -> float:
    """Discrete L2 norm of (I, T): trapezoid in x (half-weighted end rows),
    Gauss-Legendre in v."""
    wx = _x_weights(f.T.shape[0], f.dx)
    return float(np.sqrt(np.sum(wx[:, None] * w[None, :] * f.I ** 2) + np.sum(wx * f.T ** 2)))


def trace_weights(nv: int, w: np.ndarray) -> np.ndarray:
    """Weights of the squared trace norm for packed [g_minus, g_plus, t1, t2]."""
    return np.concatenate([w, [1.0, 1.0]])


def rte_trace_norm(trace: RteTrace, w: np.ndarray) -> float:
    vec = trace.pack()
    return float(np.sqrt(np.sum(trace_weights(len(w), w) * vec ** 2)))


def solve_local_rte(interval, dx: float, quadrature, trace: RteTrace, eps: float,
                    opts: FixedPointOpts | None = None) -> RteField:
    """Fixed-point solve of the coupled system on [t, s].

    Alternates a transport sweep (given T) with a temperature solve (given
    <I>) until the relative T-update drops below ``opts.tol`` in the discrete
    L2 norm; Anderson acceleration of the configured depth acts on the T map.
    Returns the converged field with intensity consistent with the final T.
    """
    opts = opts or FixedPointOpts()
    v, w = quadrature
    t, s = interval
    nn = int(round((s - t) / dx)) + 1
    if nn < 2:
        raise ValueError("interval must span at least one cell")
    wx = _x_weights(nn, dx)

    def t_norm(tv):
        return float(np.sqrt(np.sum(wx * tv ** 2)))

    def g_map(tv):
        I = transport_sweep(tv, trace.g_plus, trace.g_minus, eps, dx, v)
        return temperature_solve(velocity_average(I, w), trace.theta1, trace.theta2,
                                 eps, dx, t0=tv, tol=opts.newton_tol,
                                 max_iter=opts.newton_max_iter)

    x = np.linspace(trace.theta1, trace.theta2, nn)
    hist_x: list[np.ndarray] = []
    hist_g: list[np.ndarray] = []
    history = []
    beta = opts.anderson_damping
    for it in range(opts.max_iter):
        g = g_map(x)
        f = g - x
        upd = t_norm(f) / max(t_norm(g), 1e-300)
        history.append(upd)
        if upd <= opts.tol:
            I = transport_sweep(g, trace.g_plus, trace.g_minus, eps, dx, v)
            return RteField(I=I, T=g, dx=dx)
        hist_x.append(x)
        hist_g.append(g)
        m = min(opts.anderson_depth, len(hist_x) - 1)
        if m > 0:
            FK = np.column_stack([(hist_g[-1] - hist_x[-1]) - (hist_g[-2 - j] - hist_x[-2 - j])
                                  for j in range(m)])
            GK = np.column_stack([hist_g[-1] - hist_g[-2 - j] for j in range(m)])
            XK = np.column_stack([hist_x[-1] - hist_x[-2 - j] for j in range(m)])
            gamma, *_ = np.linalg.lstsq(FK, f, rcond=1e-12)
            x_new = x - XK @ gamma + beta * (f - FK @ gamma)
        else:
            x_new = x + beta * f
        x = x_new
        if len(hist_x) > opts.anderson_depth + 1:
            hist_x.pop(0)
            hist_g.pop(0)
    raise SolverFailure(
        f"fixed point did not reach {opts.tol:.1e} in {opts.max_iter} iterations "
        f"(last update {history[-1]:.3e})", history[-1])
