"""Dissipative compressible MHD on the periodic box, pseudo-spectral in space.

Unknowns are the velocity ``u``, entropy ``b``, magnetic potential ``a_pot``
(``B = curl a_pot``) and density ``d``. Vectors always carry three
components; on a 2D grid they describe fields on T^3 that do not depend on the
third coordinate. The diffusion terms ``mu_i Lap`` are integrated exactly per
Fourier mode (Lawson integrating-factor RK4); everything else is explicit.

    du/dt = -u.grad u - grad p / D - (B x curl B) / D + mu1 Lap u
            + (mu1 - mu4) u Lap D / D + 2 mu1 <grad log D, grad u>
    db/dt = -u.grad b + mu2 Lap b
    dA/dt = -u_j d_j A - A_j grad u_j + mu3 Lap A
    dD/dt = -div(D u) + mu4 Lap D
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import spectral as sp
from .lie import ContractError
from .spectral import Grid

D_FLOOR = 1e-8
CFL = 0.5


@dataclass(frozen=True)
class EOS:
    """Polytropic ``p = kappa D^gamma`` or, with ``entropy``, ``p = kappa D^gamma exp(b (gamma - 1))``."""

    gamma: float = 1.4
    kappa: float = 1.0
    entropy: bool = False

    def __post_init__(self):
        if self.gamma <= 1 or self.kappa <= 0:
            raise ContractError("need gamma > 1 and kappa > 0")

    def _s(self, b):
        return np.exp(b * (self.gamma - 1.0)) if self.entropy else 1.0

    def pressure(self, d, b=0.0):
        return self.kappa * d ** self.gamma * self._s(b)

    def internal_energy(self, d, b=0.0):
        return self.kappa * d ** (self.gamma - 1.0) * self._s(b) / (self.gamma - 1.0)

    def temperature(self, d, b=0.0):
        """``de/db`` at fixed density."""
        if not self.entropy:
            return np.zeros_like(np.asarray(d, dtype=float))
        return self.kappa * d ** (self.gamma - 1.0) * self._s(b)

    def sound_speed(self, d, b=0.0):
        return np.sqrt(self.gamma * self.kappa * d ** (self.gamma - 1.0) * self._s(b))


@dataclass(frozen=True)
class Viscosities:
    mu1: float = 0.0
    mu2: float = 0.0
    mu3: float = 0.0
    mu4: float = 0.0

    def __post_init__(self):
        if min(self.mu1, self.mu2, self.mu3, self.mu4) < 0:
            raise ContractError("viscosities must be nonnegative")


@dataclass(frozen=True)
class MHDState:
    grid: Grid
    u: np.ndarray
    b: np.ndarray
    a_pot: np.ndarray
    d: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        g = self.grid
        for name, rank in (("u", 1), ("b", 0), ("a_pot", 1), ("d", 0)):
            f = g.check(getattr(self, name), rank)
            if rank and f.shape[0] != 3:
                raise ContractError(f"{name} must have 3 components")
            object.__setattr__(self, name, f)

    @property
    def B(self):
        return sp.curl(self.grid, self.a_pot)

    def fields(self):
        return self.u, self.b, self.a_pot, self.d

    def with_fields(self, u, b, a, d, t):
        return replace(self, u=u, b=b, a_pot=a, d=d, t=t)


def _check_density(state: MHDState, t=None):
    dmin = float(state.d.min())
    if not np.isfinite(dmin) or dmin <= D_FLOOR:
        when = state.t if t is None else t
        raise FloatingPointError(f"density reached {dmin:.3e} at t={when:.6g}; run aborted")


def _cross(a, b):
    return np.stack([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def explicit_terms(state: MHDState, eos: EOS, visc: Viscosities, log_d_term=True):
    """Everything except the ``mu_i Lap`` diffusion of each unknown."""
    g = state.grid
    u, b, a, d = state.fields()
    _check_density(state)
    B = sp.curl(g, a)
    J = sp.curl(g, B)
    inv_d = 1.0 / d
    p = eos.pressure(d, b)
    grad_p = sp.grad(g, p)
    grad_p = np.concatenate([grad_p, np.zeros((3 - g.dims,) + g.shape)])
    du = -sp.directional(g, u, u) - sp.dealias(g, (grad_p + _cross(B, J)) * inv_d)
    if visc.mu1 != visc.mu4:
        du = du + (visc.mu1 - visc.mu4) * sp.dealias(g, u * sp.laplacian(g, d) * inv_d)
    if log_d_term and visc.mu1:
        grad_logd = sp.grad(g, np.log(d))
        du = du + 2.0 * visc.mu1 * sp.directional(g, grad_logd, u)
    db = -sp.directional(g, u, b)
    da = sp.one_form_rhs(g, u, a)
    dd = -sp.div(g, sp.dealias(g, d * u))
    return du, db, da, dd


def mhd_rhs(state: MHDState, eos: EOS, visc: Viscosities, log_d_term=True):
    """Full time derivative ``(du, db, dA, dD)``."""
    g = state.grid
    du, db, da, dd = explicit_terms(state, eos, visc, log_d_term)
    lap = lambda f: sp.laplacian(g, f)   # noqa: E731
    return (du + visc.mu1 * lap(state.u), db + visc.mu2 * lap(state.b),
            da + visc.mu3 * lap(state.a_pot), dd + visc.mu4 * lap(state.d))


def momentum_form_defect(state: MHDState, eos: EOS, visc: Viscosities):
    """Max mismatch between ``D du/dt + u dD/dt`` and the momentum-form rhs.

    The momentum form is ``d(Du)/dt = -(Du.grad) u - u div(Du) - B x curl B
    - grad p + mu1 Lap(Du)``; the two agree up to dealiasing.
    """
    g = state.grid
    u, b, a, d = state.fields()
    du, _, _, dd = mhd_rhs(state, eos, visc)
    lhs = d * du + u * dd
    m = d * u
    B = sp.curl(g, a)
    grad_p = np.concatenate([sp.grad(g, eos.pressure(d, b)), np.zeros((3 - g.dims,) + g.shape)])
    rhs = (-np.stack([sum(m[j] * sp.partial(g, u[i], j) for j in range(g.dims)) for i in range(3)])
           - u * sp.div(g, m) - _cross(B, sp.curl(g, B)) - grad_p + visc.mu1 * sp.laplacian(g, m))
    return float(np.abs(lhs - rhs).max())


# -- time stepping ---------------------------------------------------------------

def _decay(g: Grid, f, mu, t):
    if not mu:
        return f
    return g.ifft(np.exp(-mu * g.k2 * t) * g.fft(f))


def cfl_limit(state: MHDState, eos: EOS, courant=CFL):
    g = state.grid
    speeds = [np.sqrt((state.u ** 2).sum(axis=0)).max(),
              eos.sound_speed(state.d, state.b).max(),
              np.sqrt((state.B ** 2).sum(axis=0)).max()]
    top = max(float(s) for s in speeds)
    return np.inf if top == 0 else courant * g.dx / top


def _lawson_rk4(state, dt, rates, nonlin):
    """One Lawson RK4 step for ``dy/dt = -mu k^2 y + N(y)`` on a tuple of fields."""
    g = state.grid
    y0 = state.fields()
    half = lambda fs, s=0.5: tuple(_decay(g, f, mu, s * dt) for f, mu in zip(fs, rates))   # noqa: E731
    axpy = lambda y, k, c: tuple(a + c * b for a, b in zip(y, k))   # noqa: E731
    t0 = state.t
    k1 = nonlin(state.with_fields(*y0, t0))
    y2 = half(axpy(y0, k1, 0.5 * dt))
    k2 = nonlin(state.with_fields(*y2, t0 + 0.5 * dt))
    y3 = axpy(half(y0), k2, 0.5 * dt)
    k3 = nonlin(state.with_fields(*y3, t0 + 0.5 * dt))
    y4 = axpy(half(y0, 1.0), half(k3), dt)
    k4 = nonlin(state.with_fields(*y4, t0 + dt))
    out = tuple(_decay(g, a + dt / 6.0 * b, mu, dt) for a, b, mu in zip(y0, k1, rates))
    out = tuple(o + dt / 6.0 * (2 * _decay(g, b + c, mu, 0.5 * dt) + e)
                for o, b, c, e, mu in zip(out, k2, k3, k4, rates))
    return state.with_fields(*out, t0 + dt)


def step(state: MHDState, dt, eos: EOS, visc: Viscosities, log_d_term=True, warn_cfl=True):
    """Advance one step; diffusion is exact per mode, the rest is RK4."""
    _check_density(state)
    if warn_cfl:
        lim = cfl_limit(state, eos)
        if dt > lim:
            warnings.warn(f"dt={dt:g} exceeds the CFL estimate; suggested dt <= {lim:.3g}", stacklevel=2)
    rates = (visc.mu1, visc.mu2, visc.mu3, visc.mu4)
    new = _lawson_rk4(state, dt, rates, lambda s: explicit_terms(s, eos, visc, log_d_term))
    _check_density(new)
    return new


# -- diagnostics -----------------------------------------------------------------

def energy(state: MHDState, eos: EOS):
    g = state.grid
    u, b, _, d = state.fields()
    B = state.B
    dens = 0.5 * d * (u ** 2).sum(axis=0) + d * eos.internal_energy(d, b) + 0.5 * (B ** 2).sum(axis=0)
    return g.integrate(dens)


def mass(state: MHDState):
    return state.grid.integrate(state.d)


def div_b(state: MHDState):
    return float(np.abs(sp.div(state.grid, state.B)).max())


DIAG_COLUMNS = ("t", "E", "M", "div_b", "max_u", "min_D")


def diagnostics_row(state: MHDState, eos: EOS):
    return (state.t, energy(state, eos), mass(state), div_b(state),
            float(np.sqrt((state.u ** 2).sum(axis=0)).max()), float(state.d.min()))


@dataclass
class RunResult:
    state: MHDState
    rows: list

    def column(self, name):
        return np.array([r[DIAG_COLUMNS.index(name)] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DIAG_COLUMNS)
            for r in self.rows:
                w.writerow([repr(float(x)) for x in r])


def run(state: MHDState, dt, t_final, eos: EOS, visc: Viscosities, every=1, log_d_term=True,
        stepper=None, snapshot=None):
    """Integrate to ``t_final`` collecting diagnostics every ``every`` steps."""
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ContractError(f"dt={dt} does not divide T={t_final}")
    stepper = stepper or (lambda s: step(s, dt, eos, visc, log_d_term))
    rows = [diagnostics_row(state, eos)]
    for k in range(n):
        state = stepper(state)
        if (k + 1) % every == 0 or k + 1 == n:
            rows.append(diagnostics_row(state, eos))
            if snapshot is not None:
                snapshot(state)
    return RunResult(state, rows)


# -- incompressible special case ------------------------------------------------------

def _incompressible_terms(state: MHDState):
    g = state.grid
    u, a = state.u, state.a_pot
    B = sp.curl(g, a)
    force = -sp.directional(g, u, u) - sp.dealias(g, _cross(B, sp.curl(g, B)))
    zero = np.zeros(g.shape)
    return sp.leray(g, force), zero, sp.one_form_rhs(g, u, a), zero


def check_solenoidal(state: MHDState, tol=1e-10):
    dv = float(np.abs(sp.div(state.grid, state.u)).max())
    if dv > tol * max(1.0, float(np.abs(state.u).max())):
        raise ContractError(f"initial velocity is not divergence free (max |div u| = {dv:.3e})")


def incompressible_step(state: MHDState, dt, visc: Viscosities, check=True):
    """Leray-projected step with ``D = 1``, ``b = 1``; viscosity ``mu1``, resistivity ``mu3``."""
    if check:
        check_solenoidal(state)
    rates = (visc.mu1, 0.0, visc.mu3, 0.0)
    return _lawson_rk4(state, dt, rates, _incompressible_terms)


# -- initial conditions ------------------------------------------------------------

def _vec(g, *comps):
    zero = np.zeros(g.shape)
    return np.stack([zero + c for c in comps] + [zero] * (3 - len(comps)))


def taylor_green(g: Grid, amplitude=1.0, b_amp=0.0, d0=1.0):
    """Planar Taylor-Green vortex ``(sin x cos y, -cos x sin y, 0)``; optional ``A_3 = b_amp cos x cos y``."""
    x, y = g.coords[0], g.coords[1]
    u = _vec(g, amplitude * np.sin(x) * np.cos(y), -amplitude * np.cos(x) * np.sin(y))
    a = _vec(g, 0.0, 0.0, b_amp * np.cos(x) * np.cos(y))
    return MHDState(g, u, np.ones(g.shape), a, d0 * np.ones(g.shape))


def orszag_tang_like(g: Grid, u0=0.3, b0=0.3, rho_pert=0.05):
    """Smooth Orszag-Tang-type vortex with a mild density perturbation."""
    x, y = g.coords[0], g.coords[1]
    u = _vec(g, -u0 * np.sin(y), u0 * np.sin(x))
    a = _vec(g, 0.0, 0.0, b0 * (np.cos(y) + 0.5 * np.cos(2 * x)))
    d = 1.0 + rho_pert * np.cos(x + y)
    return MHDState(g, u, np.zeros(g.shape), a, d)


def density_shear(g: Grid):
    """Graded density riding on a compressive flow; energy decays only with the log-D term."""
    x = g.coords[0]
    u = _vec(g, 1.0 + 0.5 * np.cos(x))
    d = 1.0 - 0.5 * np.cos(x)
    return MHDState(g, u, np.zeros(g.shape), _vec(g), d)
