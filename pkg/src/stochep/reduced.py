"""Deterministic reduced (Euler-Poincare) equations with noise-induced dissipation.

The state is the momentum ``mu = dl/du`` together with the advected
covector ``alpha``; ``u`` is recovered through ``Lagrangian.u_from_momentum``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dissipation import Dissipation, NoiseBasis, correction
from .lie import LEFT, Connection, ContractError, _sign
from .semidirect import Representation


@dataclass(frozen=True)
class Lagrangian:
    """Reduced Lagrangian ``l(u, alpha)`` with its partial derivatives."""

    value: Callable
    dl_du: Callable
    dl_dalpha: Callable
    u_from_momentum: Callable

    def derivative_defect(self, u, alpha, h=1e-6):
        """Max mismatch of the supplied derivatives against central differences."""
        u = np.asarray(u, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        worst = 0.0
        for x, grad, slot in ((u, self.dl_du(u, alpha), 0), (alpha, self.dl_dalpha(u, alpha), 1)):
            for i in range(x.size):
                step = np.zeros_like(x)
                step[i] = h
                args_p = (x + step, alpha) if slot == 0 else (u, x + step)
                args_m = (x - step, alpha) if slot == 0 else (u, x - step)
                fd = (self.value(*args_p) - self.value(*args_m)) / (2 * h)
                worst = max(worst, abs(fd - grad[i]))
        return worst


def quadratic_lagrangian(inertia, potential=None) -> Lagrangian:
    """``l = 1/2 u.I u - <alpha, potential>`` with constant inertia ``I``.

    ``potential`` is the U-vector ``chi`` of a linear potential (heavy top:
    ``m g l chi``); ``None`` gives a free rigid body.
    """
    inertia = np.asarray(inertia, dtype=float)
    if inertia.ndim == 1:
        inertia = np.diag(inertia)
    try:
        inv = np.linalg.inv(inertia)
    except np.linalg.LinAlgError as exc:
        raise ContractError("inertia is singular") from exc
    chi = None if potential is None else np.asarray(potential, dtype=float)

    def value(u, alpha):
        kin = 0.5 * np.einsum("...i,ij,...j->...", u, inertia, u)
        return kin if chi is None else kin - np.asarray(alpha) @ chi

    def dl_dalpha(u, alpha):
        alpha = np.asarray(alpha, dtype=float)
        return np.zeros_like(alpha) if chi is None else np.broadcast_to(-chi, alpha.shape).copy()

    return Lagrangian(
        value=value,
        dl_du=lambda u, alpha: np.asarray(u, dtype=float) @ inertia.T,
        dl_dalpha=dl_dalpha,
        u_from_momentum=lambda mu, alpha: np.asarray(mu, dtype=float) @ inv.T,
    )


@dataclass(frozen=True)
class EPVariant:
    """Which reduced system: chirality and whether drifts carry the connection correction."""

    chirality: str = LEFT
    connection_correction: bool = True

    @property
    def label(self):
        return f"{self.chirality}-{'corrected' if self.connection_correction else 'plain'}"


ALL_VARIANTS = tuple(EPVariant(ch, corr) for ch in ("left", "right") for corr in (True, False))


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray

    def __len__(self):
        return len(self.t)

    def diagnostics(self, lag: Lagrangian | None = None):
        diag = {"mu_norm": np.linalg.norm(self.mu, axis=1),
                "alpha_norm": np.linalg.norm(self.alpha, axis=1)}
        if self.mu.shape[1] == self.alpha.shape[1]:
            diag["mu_dot_alpha"] = np.einsum("ki,ki->k", self.mu, self.alpha)
        if lag is not None:
            diag["energy"] = (np.einsum("ki,ki->k", self.mu, self.u)
                              - np.array([lag.value(u, a) for u, a in zip(self.u, self.alpha)]))
        return diag

    def to_csv(self, path, lag: Lagrangian | None = None):
        diag = self.diagnostics(lag)
        header = (["t"] + [f"u_{i + 1}" for i in range(self.u.shape[1])]
                  + [f"alpha_{i + 1}" for i in range(self.alpha.shape[1])] + list(diag))
        cols = [self.t[:, None], self.u, self.alpha] + [d[:, None] for d in diag.values()]
        rows = np.hstack(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(x)) for x in row])


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """Reduced equations for one variant and one set of (noise, connection, rep)."""

    lag: Lagrangian
    variant: EPVariant
    noise: NoiseBasis
    conn: Connection
    rep: Representation

    def __post_init__(self):
        ch = self.variant.chirality
        if self.conn.chirality != ch or self.rep.chirality != ch:
            raise ContractError(
                f"chirality mismatch: variant {ch}, connection {self.conn.chirality}, "
                f"representation {self.rep.chirality}")
        n = self.conn.dim
        for h in (self.noise.h1, self.noise.h2):
            if len(h) and h.shape[1] != n:
                raise ContractError("noise vectors do not match the algebra dimension")
        object.__setattr__(self, "_k", Dissipation(self.noise.h1, self.conn))
        corr = self.variant.connection_correction
        object.__setattr__(self, "_c1", correction(self.noise.h1, self.conn) if corr else np.zeros(n))
        object.__setattr__(self, "_c2", correction(self.noise.h2, self.conn) if corr else np.zeros(n))
        m = self.rep.dim_u
        diff = np.zeros((m, m))
        for H in self.noise.h2:
            D = self.rep.dual_matrix(H)
            diff += 0.5 * D @ D
        object.__setattr__(self, "_alpha_diffusion", diff)

    @property
    def sign(self):
        return _sign(self.variant.chirality)

    @property
    def K(self) -> Dissipation:
        return self._k

    def drift1(self, u):
        return u - self._c1

    def drift2(self, u):
        return u - self._c2

    def rhs(self, mu, alpha):
        """Return ``(dmu/dt, dalpha/dt)``."""
        u = self.lag.u_from_momentum(mu, alpha)
        s = self.sign
        alg = self.conn.algebra
        dmu = (s * alg.ad_star(self.drift1(u), mu)
               + self.rep.diamond(self.lag.dl_dalpha(u, alpha), alpha)
               + s * self._k(mu))
        dalpha = self._alpha_diffusion @ alpha - self.rep.act_dual(self.drift2(u), alpha)
        return dmu, dalpha

    def alpha_rhs(self, u, alpha):
        """Advection equation alone, for a prescribed ``u``."""
        return self._alpha_diffusion @ alpha - self.rep.act_dual(self.drift2(u), alpha)

    def integrate(self, u0, alpha0, T, dt, t0=0.0) -> Trajectory:
        """Classical RK4 in ``(mu, alpha)``, sampled at every step."""
        nsteps = _n_steps(T, dt)
        alpha = np.asarray(alpha0, dtype=float).copy()
        mu = np.asarray(self.lag.dl_du(np.asarray(u0, dtype=float), alpha), dtype=float)
        mus = np.empty((nsteps + 1, mu.size))
        alphas = np.empty((nsteps + 1, alpha.size))
        mus[0], alphas[0] = mu, alpha
        for k in range(nsteps):
            k1 = self.rhs(mu, alpha)
            k2 = self.rhs(mu + 0.5 * dt * k1[0], alpha + 0.5 * dt * k1[1])
            k3 = self.rhs(mu + 0.5 * dt * k2[0], alpha + 0.5 * dt * k2[1])
            k4 = self.rhs(mu + dt * k3[0], alpha + dt * k3[1])
            mu = mu + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            alpha = alpha + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(alpha))):
                raise FloatingPointError(f"reduced integration blew up at t={t0 + (k + 1) * dt}")
            mus[k + 1], alphas[k + 1] = mu, alpha
        t = t0 + dt * np.arange(nsteps + 1)
        u = np.array([self.lag.u_from_momentum(m, a) for m, a in zip(mus, alphas)])
        return Trajectory(t, u, mus, alphas)

    def rhs_defect(self, traj: Trajectory):
        """Max-norm defect of a sampled trajectory against the equations."""
        mu = self.lag.dl_du(traj.u, traj.alpha)
        dmu = np.gradient(mu, traj.t, axis=0, edge_order=2)
        dal = np.gradient(traj.alpha, traj.t, axis=0, edge_order=2)
        worst = 0.0
        for k in range(len(traj)):
            r_mu, r_al = self.rhs(mu[k], traj.alpha[k])
            worst = max(worst, np.abs(dmu[k] - r_mu).max(), np.abs(dal[k] - r_al).max())
        return worst

    def variation_residual(self, traj: Trajectory, v, vdot=None):
        """First variation of ``int l dt`` along the constrained variations.

        ``v`` is sampled on ``traj.t`` and must vanish at both ends. Without an
        explicit ``vdot`` the derivative is taken by second-order differences;
        the integral uses the trapezoid rule.
        """
        v = np.asarray(v, dtype=float)
        if v.shape != traj.u.shape:
            raise ContractError(f"variation has shape {v.shape}, expected {traj.u.shape}")
        scale = max(1.0, float(np.abs(v).max()))
        if np.abs(v[0]).max() > 1e-12 * scale or np.abs(v[-1]).max() > 1e-12 * scale:
            raise ContractError("variation must vanish at both endpoints")
        if vdot is None:
            vdot = np.gradient(v, traj.t, axis=0, edge_order=2)
        s = self.sign
        alg = self.conn.algebra
        mu = self.lag.dl_du(traj.u, traj.alpha)
        du = vdot + s * alg.bracket(self.drift1(traj.u), v) + s * self._k.adjoint(v)
        dalpha = -self.rep.act_dual(v, traj.alpha)
        dl_dalpha = self.lag.dl_dalpha(traj.u, traj.alpha)
        integrand = np.einsum("ki,ki->k", mu, du) + np.einsum("ka,ka->k", dalpha, dl_dalpha)
        return float(np.trapezoid(integrand, traj.t))


def _n_steps(T, dt):
    if dt <= 0 or T < 0:
        raise ContractError("need dt > 0 and T >= 0")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-12 * max(T, dt) * 10:
        raise ContractError(f"dt={dt} does not divide T={T}")
    return n


def ep_rhs(state, lag, variant, noise, conn, rep):
    """Functional form: ``state = (u, alpha)``; returns ``(dmu/dt, dalpha/dt)``."""
    u, alpha = state
    system = ReducedSystem(lag, variant, noise, conn, rep)
    return system.rhs(lag.dl_du(np.asarray(u, dtype=float), alpha), np.asarray(alpha, dtype=float))


def sine_variation(t, coeffs, T=None):
    """Smooth variation ``v(t) = sum_m c_m sin(m pi t / T)`` and its derivative.

    ``coeffs`` has shape ``(modes, dim)``.
    """
    t = np.asarray(t, dtype=float)
    T = t[-1] - t[0] if T is None else T
    coeffs = np.asarray(coeffs, dtype=float)
    m = np.arange(1, coeffs.shape[0] + 1)
    phase = np.pi * np.outer(t - t[0], m) / T
    v = np.sin(phase) @ coeffs
    vdot = (np.cos(phase) * (np.pi * m / T)) @ coeffs
    v[0] = 0.0
    v[-1] = 0.0
    return v, vdot


def random_variations(rng, n, dim, modes=3):
    return [rng.standard_normal((modes, dim)) for _ in range(n)]


def integrate_advection(rep: Representation, h2, drift, alpha0, T, dt):
    """RK4 for ``dalpha/dt = 1/2 sum_j H_j(H_j alpha) - w(t) alpha`` with prescribed drift ``w``.

    ``drift`` is a callable ``t -> w(t)``; pass the corrected drift for the
    corrected variants. Returns ``(t, alpha)`` sampled every step.
    """
    nsteps = _n_steps(T, dt)
    m = rep.dim_u
    diff = np.zeros((m, m))
    for H in np.asarray(h2, dtype=float).reshape(-1, rep.algebra.dim):
        D = rep.dual_matrix(H)
        diff += 0.5 * D @ D

    def f(t, a):
        return diff @ a - rep.act_dual(drift(t), a)

    a = np.asarray(alpha0, dtype=float).copy()
    out = np.empty((nsteps + 1, m))
    out[0] = a
    for k in range(nsteps):
        t = k * dt
        k1 = f(t, a)
        k2 = f(t + 0.5 * dt, a + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, a + 0.5 * dt * k2)
        k4 = f(t + dt, a + dt * k3)
        a = a + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = a
    return dt * np.arange(nsteps + 1), out
