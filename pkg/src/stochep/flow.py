"""Stochastic particle flows on the torus and Monte Carlo checks of the
pull-back representation.

Particles follow ``dy = u(t, y) dt + sqrt(2 nu) dW`` (Euler-Maruyama) and carry
the Jacobian ``V = dy/dtheta`` through ``dV = grad u(t, y) V dt``. A one-form
seeded as ``A0(theta)`` is carried to ``V^{-T} A0(theta)`` at ``y(theta)``;
integrating against test forms with the weight ``det V`` turns path averages
into weak-form values of the PDE solutions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import rng
from . import spectral as sp
from .lie import ContractError
from .spectral import Grid

TWO_PI = 2.0 * np.pi


# -- velocity fields -----------------------------------------------------------------

class TaylorGreen:
    """Frozen planar vortex ``a (sin x cos y, -cos x sin y)``."""

    dims = 2

    def __init__(self, amplitude=1.0):
        self.a = float(amplitude)

    def __call__(self, t, y):
        x, z = y[:, 0], y[:, 1]
        sx, cx, sz, cz = np.sin(x), np.cos(x), np.sin(z), np.cos(z)
        a = self.a
        u = np.stack([a * sx * cz, -a * cx * sz], axis=1)
        du = np.empty((len(y), 2, 2))
        du[:, 0, 0] = a * cx * cz
        du[:, 0, 1] = -a * sx * sz
        du[:, 1, 0] = a * sx * sz
        du[:, 1, 1] = -a * cx * cz
        return u, du

    def field(self, grid: Grid, t=0.0):
        x, z = grid.coords[0], grid.coords[1]
        return np.stack([self.a * np.sin(x) * np.cos(z), -self.a * np.cos(x) * np.sin(z)])


class LinearVelocity:
    """``u(y) = M y`` on the lifted (unwrapped) coordinates."""

    lifted = True

    def __init__(self, matrix):
        self.M = np.asarray(matrix, dtype=float)
        self.dims = self.M.shape[0]

    def __call__(self, t, y):
        return y @ self.M.T, np.broadcast_to(self.M, (len(y),) + self.M.shape)


class ZeroVelocity:
    def __init__(self, dims=2):
        self.dims = dims

    def __call__(self, t, y):
        return np.zeros_like(y), np.zeros((len(y), self.dims, self.dims))

    def field(self, grid: Grid, t=0.0):
        return np.zeros((self.dims,) + grid.shape)


class SpectralVelocity:
    """Grid velocity evaluated off-grid by summing its retained Fourier modes."""

    def __init__(self, grid: Grid, u, tol=1e-13):
        u = np.asarray(u, dtype=float)[: grid.dims]
        self.grid = grid
        self.dims = grid.dims
        self._u = u
        fh = np.fft.fftn(u, axes=grid.axes) / grid.n ** grid.dims
        keep = np.abs(fh).max(axis=0) > tol * max(1e-300, np.abs(fh).max())
        idx = np.nonzero(keep)
        k = np.fft.fftfreq(grid.n, 1.0 / grid.n)
        self.k = np.stack([k[i] for i in idx], axis=1)            # (modes, d)
        self.k[np.abs(self.k) == grid.n // 2] = 0.0
        self.coef = fh[(slice(None),) + idx].T                     # (modes, d)

    def __call__(self, t, y):
        ph = np.exp(1j * (y @ self.k.T))                            # (N, modes)
        u = (ph @ self.coef).real
        du = np.einsum("nm,mi,mj->nij", ph, self.coef, 1j * self.k).real
        return u, du

    def field(self, grid: Grid, t=0.0):
        return self._u


class SnapshotVelocity:
    """Piecewise-linear interpolation in time between stored spectral snapshots."""

    def __init__(self, times, velocities):
        self.times = np.asarray(times, dtype=float)
        self.vels = list(velocities)
        self.dims = self.vels[0].dims

    def __call__(self, t, y):
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        u0, d0 = self.vels[k](t, y)
        u1, d1 = self.vels[k + 1](t, y)
        return (1 - w) * u0 + w * u1, (1 - w) * d0 + w * d1


# -- particles -------------------------------------------------------------------------

@dataclass
class ParticleSet:
    theta0: np.ndarray
    y: np.ndarray
    V: np.ndarray
    ids: np.ndarray
    t: float = 0.0
    step: int = 0
    div_integral: np.ndarray = field(default=None)

    @classmethod
    def seed(cls, theta0, ids=None):
        theta0 = np.asarray(theta0, dtype=float)
        n, d = theta0.shape
        ids = np.arange(n, dtype=np.uint64) if ids is None else np.asarray(ids, dtype=np.uint64)
        return cls(theta0, theta0.copy(), np.broadcast_to(np.eye(d), (n, d, d)).copy(), ids,
                   div_integral=np.zeros(n))

    @classmethod
    def uniform(cls, n, dims, seed, stream="theta0", offset=0):
        ids = np.arange(offset, offset + n, dtype=np.uint64)
        theta = TWO_PI * rng.uniforms(seed, rng.stream_id(stream), ids, 0, dims)
        return cls.seed(theta, ids)

    @classmethod
    def lattice(cls, n, dims, seed, stream="lattice-shift", offset=0):
        """About ``n`` particles on a regular lattice under one random shift.

        The side is ``round(n ** (1/dims))``; the shift keeps cell-weight
        quadrature unbiased while removing the seeding variance.
        """
        side = max(1, int(round(n ** (1.0 / dims))))
        shift = TWO_PI * rng.uniforms(seed, rng.stream_id(stream), 0, 0, dims)
        axes = np.meshgrid(*([TWO_PI * np.arange(side) / side] * dims), indexing="ij")
        theta = np.mod(np.stack([a.ravel() for a in axes], axis=1) + shift, TWO_PI)
        return cls.seed(theta, np.arange(offset, offset + len(theta), dtype=np.uint64))

    @property
    def dims(self):
        return self.theta0.shape[1]

    def wrapped(self):
        return np.mod(self.y, TWO_PI)

    def det(self):
        return np.linalg.det(self.V)


def advance_particles(ps: ParticleSet, velocity, nu, dt, seed=0, stream="flow"):
    """One Euler-Maruyama step of positions and Jacobians (in place; returns ``ps``)."""
    lifted = getattr(velocity, "lifted", False)
    pos = ps.y if lifted else np.mod(ps.y, TWO_PI)
    u, du = velocity(ps.t, pos)
    ps.div_integral += np.trace(du, axis1=1, axis2=2) * dt
    ps.V = ps.V + dt * (du @ ps.V)
    ps.y = ps.y + dt * u
    if nu:
        dW = rng.brownian_increments(seed, rng.stream_id(stream), ps.ids, ps.step, ps.dims, dt)
        ps.y = ps.y + np.sqrt(2.0 * nu) * dW
    if not lifted:
        ps.y = np.mod(ps.y, TWO_PI)
    ps.t += dt
    ps.step += 1
    return ps


def run_particles(ps: ParticleSet, velocity, nu, dt, t_final, seed=0, stream="flow"):
    n = int(round(t_final / dt))
    if abs(n * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ContractError(f"dt={dt} does not divide T={t_final}")
    for _ in range(n):
        advance_particles(ps, velocity, nu, dt, seed, stream)
    return ps


def pullback_sample(ps: ParticleSet, a0, tol=1e-12):
    """``V^{-T} A0(theta)`` per particle; singular Jacobians are returned as NaN rows."""
    a0 = np.asarray(a0, dtype=float)
    det = ps.det()
    bad = np.abs(det) < tol
    Vs = np.where(bad[:, None, None], np.eye(ps.dims), ps.V)
    out = np.linalg.solve(np.swapaxes(Vs, 1, 2), a0[..., None])[..., 0]
    out[bad] = np.nan
    return out, int(bad.sum())


# -- PDE side ---------------------------------------------------------------------------

def integrate_if_rk4(grid: Grid, nonlinear, f0, nu, t_final, dt):
    """Lawson RK4 for ``df/dt = N(t, f) + nu Lap f``; diffusion exact per mode."""
    n = int(round(t_final / dt))
    E = np.exp(-nu * grid.k2 * 0.5 * dt)
    half = lambda f: grid.ifft(E * grid.fft(f))   # noqa: E731
    f = np.asarray(f0, dtype=float)
    t = 0.0
    for _ in range(n):
        k1 = nonlinear(t, f)
        k2 = nonlinear(t + 0.5 * dt, half(f + 0.5 * dt * k1))
        hf = half(f)
        k3 = nonlinear(t + 0.5 * dt, hf + 0.5 * dt * k2)
        k4 = nonlinear(t + dt, half(hf) + dt * half(k3))
        f = half(half(f + dt / 6.0 * k1)) + dt / 6.0 * (2 * half(k2 + k3) + k4)
        t += dt
    return f


def solve_one_form(grid, velocity, A0, nu, t_final, dt):
    u = velocity.field(grid)
    return integrate_if_rk4(grid, lambda t, A: sp.one_form_rhs(grid, u, A), A0, nu, t_final, dt)


def solve_scalar(grid, velocity, b0, nu, t_final, dt):
    u = velocity.field(grid)
    return integrate_if_rk4(grid, lambda t, b: -sp.directional(grid, u, b), b0, nu, t_final, dt)


def solve_density(grid, velocity, d0, nu, t_final, dt):
    u = velocity.field(grid)
    return integrate_if_rk4(grid, lambda t, d: -sp.div(grid, sp.dealias(grid, d * u)), d0, nu, t_final, dt)


# -- weak-form comparisons -------------------------------------------------------------------

@dataclass
class WeakReport:
    form_ids: list
    mc: np.ndarray
    pde: np.ndarray
    stderr: np.ndarray
    tolerance: np.ndarray
    excluded: int = 0

    @property
    def defect(self):
        return np.abs(self.mc - self.pde)

    @property
    def relative_defect(self):
        return self.defect / np.maximum(np.abs(self.pde), 1e-300)

    @property
    def passed(self):
        return bool(np.all(self.defect <= self.tolerance))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["form", "monte_carlo", "pde", "stderr", "verdict"])
            for i, fid in enumerate(self.form_ids):
                ok = self.defect[i] <= self.tolerance[i]
                w.writerow([fid, repr(float(self.mc[i])), repr(float(self.pde[i])),
                            repr(float(self.stderr[i])), "PASS" if ok else "FAIL"])


def _weak_stats(samples, exact, ids, c, dt, n):
    """Per-form mean and standard error of per-particle contributions."""
    m = samples.shape[1]
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    tol = 3.0 * se + c * (dt + float(n) ** -2) * np.maximum(1.0, np.abs(exact))
    return WeakReport(list(ids) if ids is not None else list(range(m)), mean, exact, se, tol)


def one_form_weak_values(grid: Grid, a0_fn, velocity, nu, forms, t_final, dt):
    """``int f . A(t)`` for each test form, with ``A`` from the spectral one-form PDE."""
    pts = grid.coords.reshape(grid.dims, -1).T
    A0 = a0_fn(pts).T.reshape((grid.dims,) + grid.shape)
    A = solve_one_form(grid, velocity, A0, nu, t_final, dt).reshape(grid.dims, -1)
    return np.array([grid.integrate(np.einsum("nd,dn->n", f(pts), A)) for f in forms])


def weak_form_compare(ps: ParticleSet, a0_fn, velocity, nu, forms, t_final, dt, grid: Grid,
                      seed=0, pde_dt=None, c=1.0, form_ids=None, exact=None):
    """Monte Carlo ``E[f(y) . V^{-T} A0 det V] vol`` against ``int f . A(t)``.

    ``a0_fn(points)`` and each ``f(points)`` map ``(N, d)`` positions to
    ``(N, d)`` covectors. Particles start at ``ps.theta0``. The standard error
    treats the particles as independent, which overstates it for lattice seeds.
    Pass ``exact`` to reuse PDE values across batches.
    """
    a0_pts = a0_fn(ps.theta0)
    run_particles(ps, velocity, nu, dt, t_final, seed)
    tilde, excluded = pullback_sample(ps, a0_pts)
    w = ps.det() * grid.volume
    pos = ps.wrapped()
    ok = np.isfinite(tilde).all(axis=1)
    samples = np.stack([np.einsum("nd,nd->n", f(pos), tilde)[ok] * w[ok] for f in forms], axis=1)
    if exact is None:
        exact = one_form_weak_values(grid, a0_fn, velocity, nu, forms, t_final, pde_dt or dt)
    rep = _weak_stats(samples, np.asarray(exact, dtype=float), form_ids, c, dt, grid.n)
    rep.excluded = excluded
    return rep


def _grid_values(grid, fn):
    return fn(grid.coords.reshape(grid.dims, -1).T).reshape(grid.shape)


def scalar_oracle(ps: ParticleSet, b0_fn, velocity, nu, tests, t_final, dt, grid: Grid, seed=0, c=1.0):
    """Transport: ``E[f(y) b0(theta) det V] vol`` against ``int f b(t)``."""
    b0 = b0_fn(ps.theta0)
    run_particles(ps, velocity, nu, dt, t_final, seed)
    w = ps.det() * grid.volume
    pos = ps.wrapped()
    samples = np.stack([f(pos) * b0 * w for f in tests], axis=1)
    b = solve_scalar(grid, velocity, _grid_values(grid, b0_fn), nu, t_final, dt)
    exact = np.array([grid.integrate(_grid_values(grid, f) * b) for f in tests])
    return _weak_stats(samples, exact, None, c, dt, grid.n)


def sample_density(d0_fn, n, dims, seed, d_max, stream="density", offset=0):
    """Rejection sampling of ``n`` points from the density ``d0_fn`` bounded by ``d_max``."""
    out = np.empty((0, dims))
    ids = np.arange(n, dtype=np.uint64) + np.uint64(offset)
    attempt = 0
    s = rng.stream_id(stream)
    while len(out) < n:
        u = rng.uniforms(seed, s, ids, attempt, dims + 1)
        pts = TWO_PI * u[:, :dims]
        accept = u[:, dims] * d_max <= d0_fn(pts)
        out = np.concatenate([out, pts[accept]])
        attempt += 1
        if attempt > 1000:
            raise ContractError("rejection sampling is not making progress")
    return out[:n]


def stratified_density(marginals, n, seed, stream="density-shift", table=4096):
    """Seeds from a product density ``prod_i m_i(theta_i)`` by inverse CDF of a shifted lattice.

    ``marginals`` are vectorised positive functions on [0, 2pi).
    """
    dims = len(marginals)
    base = ParticleSet.lattice(n, dims, seed, stream).theta0 / TWO_PI
    x = np.linspace(0.0, TWO_PI, table + 1)
    out = np.empty_like(base)
    for i, m in enumerate(marginals):
        vals = m(x)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(x))])
        out[:, i] = np.interp(base[:, i] * cdf[-1], cdf, x)
    return out


def density_oracle(theta0, d0_fn, velocity, nu, tests, t_final, dt, grid: Grid, seed=0, c=1.0):
    """Fokker-Planck: ``M E[f(y)]`` for particles seeded from ``D0`` against ``int f D(t)``."""
    d0 = _grid_values(grid, d0_fn)
    mass = grid.integrate(d0)
    ps = ParticleSet.seed(theta0)
    run_particles(ps, velocity, nu, dt, t_final, seed)
    pos = ps.wrapped()
    samples = np.stack([f(pos) * mass for f in tests], axis=1)
    D = solve_density(grid, velocity, d0, nu, t_final, dt)
    exact = np.array([grid.integrate(_grid_values(grid, f) * D) for f in tests])
    return _weak_stats(samples, exact, None, c, dt, grid.n)


def replicate_defects(make_report, n_particles, replicates):
    """RMS weak-form defect over independent particle batches."""
    errs = []
    for r in range(replicates):
        rep = make_report(n_particles, r)
        errs.append(rep.defect)
    return np.sqrt(np.mean(np.square(errs), axis=0))
