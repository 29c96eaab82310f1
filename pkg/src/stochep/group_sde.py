"""Monte Carlo for Lie-group SDEs and the deterministic action functional.

The SDE ``dg = g (sum_j H_j o dW_j + w dt)`` (left) or ``dg = (...) g``
(right) is stepped with the Lie exponential Euler scheme

    g_{k+1} = g_k exp(sum_j H_j dW_j + w(t_k) dt),

which is consistent with the Stratonovich form and has weak order one. The
drift ``w`` is ``u - 1/2 sum nabla_H H`` for the corrected equations and ``u``
otherwise.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .dissipation import correction
from .lie import LEFT, RIGHT, Connection, ContractError, LieAlgebra
from .reduced import ReducedSystem, Trajectory, _n_steps
from .semidirect import Representation

CHUNK = 1024
REORTHO_EVERY = 100


@dataclass(frozen=True)
class EnsembleSpec:
    n_traj: int
    dt: float
    t_final: float
    seed: int = 0
    scheme: str = "lie-exponential-euler"
    stream: str = "g2"

    def __post_init__(self):
        if self.n_traj <= 0:
            raise ContractError("n_traj must be positive")
        if self.scheme != "lie-exponential-euler":
            raise ContractError(f"unknown scheme {self.scheme!r}")
        _n_steps(self.t_final, self.dt)

    @property
    def n_steps(self):
        return _n_steps(self.t_final, self.dt)


@dataclass
class GroupPath:
    samples: np.ndarray
    t: np.ndarray
    traj_id: int


@dataclass
class GroupPaths:
    """Sampled group trajectories, ``samples[traj, time]`` square matrices."""

    samples: np.ndarray
    t: np.ndarray
    traj_ids: np.ndarray
    chirality: str = LEFT

    def __len__(self):
        return len(self.traj_ids)

    def path(self, i) -> GroupPath:
        return GroupPath(self.samples[i], self.t, int(self.traj_ids[i]))


def _drift_table(u_curve, t, n):
    if callable(u_curve):
        w = np.array([np.asarray(u_curve(tk), dtype=float) for tk in t])
    else:
        w = np.asarray(u_curve, dtype=float)
        if w.ndim == 1:
            w = np.broadcast_to(w, (len(t), n))
    if w.shape != (len(t), n):
        raise ContractError(f"drift table has shape {w.shape}, expected {(len(t), n)}")
    return w


def scheme_drift(u_curve, h, conn: Connection | None, connection_correction=True):
    """The drift handed to the exponential scheme for the chosen equation form."""
    if not connection_correction or conn is None or len(h) == 0:
        return u_curve
    shift = correction(h, conn)
    if callable(u_curve):
        return lambda t: np.asarray(u_curve(t), dtype=float) - shift
    return np.asarray(u_curve, dtype=float) - shift


def simulate_group_sde(algebra: LieAlgebra, u_curve, h, spec: EnsembleSpec, chirality=LEFT,
                       conn: Connection | None = None, connection_correction=True,
                       record_every=1, traj_ids=None, threads=1) -> GroupPaths:
    """Simulate an ensemble of group paths started at the identity.

    ``u_curve`` is a callable ``t -> u`` or a table over the step times. When
    ``conn`` is given and ``connection_correction`` is set, the drift is
    shifted by ``-1/2 sum nabla_H H``.
    """
    if not algebra.has_matrices:
        raise ContractError("simulation needs a matrix representation of the algebra")
    if chirality not in (LEFT, RIGHT):
        raise ContractError(f"unknown chirality {chirality!r}")
    h = np.asarray(h, dtype=float).reshape(-1, algebra.dim) if np.size(h) else np.zeros((0, algebra.dim))
    nsteps = spec.n_steps
    t_steps = spec.dt * np.arange(nsteps)
    w = _drift_table(scheme_drift(u_curve, h, conn, connection_correction), t_steps, algebra.dim)
    ids = np.arange(spec.n_traj, dtype=np.uint64) if traj_ids is None else np.asarray(traj_ids, dtype=np.uint64)
    rec = np.arange(0, nsteps + 1, record_every)
    if rec[-1] != nsteps:
        rec = np.append(rec, nsteps)
    m = algebra.basis.shape[1]
    out = np.empty((len(ids), len(rec), m, m))
    stream = rng.stream_id(spec.stream)
    k = len(h)

    def run(lo):
        chunk = ids[lo:lo + CHUNK]
        g = np.broadcast_to(np.eye(m), (len(chunk), m, m)).copy()
        out[lo:lo + len(chunk), 0] = g
        slot = 1
        for step in range(nsteps):
            x = np.broadcast_to(w[step] * spec.dt, (len(chunk), algebra.dim))
            if k:
                dW = rng.brownian_increments(spec.seed, stream, chunk, step, k, spec.dt)
                x = x + dW @ h
            E = algebra.exp(x)
            g = g @ E if chirality == LEFT else E @ g
            if (step + 1) % REORTHO_EVERY == 0:
                g = algebra.reorthonormalize(g)
            if slot < len(rec) and rec[slot] == step + 1:
                out[lo:lo + len(chunk), slot] = g
                slot += 1

    starts = range(0, len(ids), CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(run, starts))
    else:
        for lo in starts:
            run(lo)
    return GroupPaths(out, spec.dt * rec, ids, chirality)


def _mean_and_se(x):
    x = np.ascontiguousarray(np.moveaxis(x, 0, -1))
    n = x.shape[-1]
    mean = x.sum(axis=-1) / n
    if n < 2:
        return mean, np.zeros_like(mean)
    var = ((x - mean[..., None]) ** 2).sum(axis=-1) / (n - 1)
    return mean, np.sqrt(var / n)


@dataclass
class AdvectedEnsemble:
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_traj: int = 0


def advected_mean(paths: GroupPaths, alpha0, rep: Representation) -> AdvectedEnsemble:
    """Ensemble mean and standard error of the advected covector ``g^{-1} alpha0``."""
    if rep.group_action is None:
        raise ContractError("representation carries no group action")
    dets = np.linalg.det(paths.samples)
    if np.any(np.abs(dets) < 1e-12):
        raise ContractError("singular group matrix in the ensemble")
    samples = rep.pull_back(paths.samples, np.asarray(alpha0, dtype=float))
    mean, se = _mean_and_se(samples)
    return AdvectedEnsemble(paths.t, mean, se, len(paths))


@dataclass
class DriftEstimate:
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    excluded: int = 0


def drift_estimate(paths: GroupPaths, algebra: LieAlgebra, conn: Connection | None = None, h=()):
    """Estimate the generalized derivative from consecutive samples.

    Averages ``log(g_k^{-1} g_{k+1}) / dt`` (left) and adds back
    ``1/2 sum nabla_H H`` so that the result estimates ``u`` itself.
    """
    g = paths.samples
    dt = np.diff(paths.t)
    ginv = np.linalg.inv(g[:, :-1])
    rel = ginv @ g[:, 1:] if paths.chirality == LEFT else g[:, 1:] @ ginv
    if algebra.name == "so3":
        cos = (np.trace(rel, axis1=-2, axis2=-1) - 1.0) / 2.0
        bad = cos < -1.0 + 1e-10
    else:
        bad = np.zeros(rel.shape[:2], dtype=bool)
    logs = algebra.log(rel) / dt[None, :, None]
    excluded = int(bad.sum())
    if excluded:
        warnings.warn(f"{excluded} increments near the cut locus were excluded", stacklevel=2)
        logs = np.where(bad[..., None], np.nan, logs)
        mean = np.nanmean(logs, axis=0)
        cnt = (~bad).sum(axis=0)[:, None]
        se = np.nanstd(logs, axis=0, ddof=1) / np.sqrt(cnt)
    else:
        mean, se = _mean_and_se(logs)
    h = np.asarray(h, dtype=float).reshape(-1, algebra.dim) if np.size(h) else np.zeros((0, algebra.dim))
    if conn is not None and len(h):
        mean = mean + correction(h, conn)
    return DriftEstimate(paths.t[:-1], mean, se, excluded)


def _directional(algebra, f, g, X, chirality, h):
    """First and second derivatives of ``s -> f(g exp(sX))`` at ``s = 0``."""
    Ep = algebra.exp(h * X)
    Em = algebra.exp(-h * X)
    if chirality == LEFT:
        fp, fm = f(g @ Ep), f(g @ Em)
    else:
        fp, fm = f(Ep @ g), f(Em @ g)
    f0 = f(g)
    return (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h)


@dataclass
class GeneratorReport:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    stderr: np.ndarray
    tolerance: np.ndarray
    passed: bool
    extra: dict = field(default_factory=dict)


def generator_test(paths: GroupPaths, f, algebra: LieAlgebra, h, drift, window=5,
                   c_dt=1.0, fd_step=1e-3, stride=None) -> GeneratorReport:
    """Check ``d/dt E f(g) = E[(1/2 sum H~H~ f + w~ f)(g)]`` along the ensemble.

    ``drift`` is the drift actually fed to the scheme (callable or table on
    the sample times). The time derivative is a central difference over
    ``window`` samples on each side, evaluated path by path so the standard
    error accounts for the correlation between both sides.
    """
    if len(paths) < 1000:
        raise ContractError("generator_test needs at least 1000 paths")
    h = np.asarray(h, dtype=float).reshape(-1, algebra.dim) if np.size(h) else np.zeros((0, algebra.dim))
    t = paths.t
    dt = t[1] - t[0]
    idx = np.arange(window, len(t) - window, stride or window)
    w = _drift_table(drift, t, algebra.dim)
    lhs_samples, rhs_samples = [], []
    for k in idx:
        g = paths.samples[:, k]
        d_time = (f(paths.samples[:, k + window]) - f(paths.samples[:, k - window])) / (t[k + window] - t[k - window])
        Lf = np.zeros(len(paths))
        for H in h:
            _, d2 = _directional(algebra, f, g, H, paths.chirality, fd_step)
            Lf += 0.5 * d2
        if np.any(w[k]):
            d1, _ = _directional(algebra, f, g, w[k], paths.chirality, fd_step)
            Lf += d1
        lhs_samples.append(d_time)
        rhs_samples.append(Lf)
    lhs_s = np.array(lhs_samples)
    rhs_s = np.array(rhs_samples)
    diff_mean, diff_se = _mean_and_se((lhs_s - rhs_s).T)
    lhs, _ = _mean_and_se(lhs_s.T)
    rhs, _ = _mean_and_se(rhs_s.T)
    tol = 3.0 * diff_se + c_dt * dt
    return GeneratorReport(t[idx], lhs, rhs, diff_se, tol, bool(np.all(np.abs(diff_mean) <= tol)),
                           {"defect": diff_mean})


# -- deterministic action functional -------------------------------------------

class SineVariation:
    """``v(t) = sum_m c_m sin(m pi (t - t0) / T)``; vanishes at ``t0`` and ``t0 + T``."""

    def __init__(self, coeffs, T, t0=0.0):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.T = float(T)
        self.t0 = float(t0)
        self._m = np.arange(1, self.coeffs.shape[0] + 1)

    def __call__(self, t):
        ph = np.pi * np.multiply.outer(np.asarray(t, dtype=float) - self.t0, self._m) / self.T
        return np.sin(ph) @ self.coeffs

    def derivative(self, t):
        ph = np.pi * np.multiply.outer(np.asarray(t, dtype=float) - self.t0, self._m) / self.T
        return (np.cos(ph) * (np.pi * self._m / self.T)) @ self.coeffs

    @classmethod
    def random(cls, rng_, dim, T, modes=3, t0=0.0):
        return cls(rng_.standard_normal((modes, dim)), T, t0)


def deformation_flow(algebra: LieAlgebra, v: SineVariation, t, epsilon, chirality=LEFT):
    """RK4 solution of ``de/dt = eps e vdot`` (left) or ``eps vdot e`` (right), ``e(0) = I``."""
    m = algebra.basis.shape[1]
    t = np.asarray(t, dtype=float)
    X = epsilon * algebra.hat(v.derivative(t))
    Xmid = epsilon * algebra.hat(v.derivative(0.5 * (t[1:] + t[:-1])))
    out = np.empty((len(t), m, m))
    e = np.eye(m)
    out[0] = e
    mul = (lambda e, A: e @ A) if chirality == LEFT else (lambda e, A: A @ e)

    for k in range(len(t) - 1):
        dt = t[k + 1] - t[k]
        k1 = mul(e, X[k])
        k2 = mul(e + 0.5 * dt * k1, Xmid[k])
        k3 = mul(e + 0.5 * dt * k2, Xmid[k])
        k4 = mul(e + dt * k3, X[k + 1])
        e = e + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = e
    return out


def action_value(traj: Trajectory, system: ReducedSystem, epsilon, v: SineVariation):
    """``J(eps) = int l(perturbed drift, perturbed alpha) dt`` for deformation direction ``v``.

    Left case: the deformed generalized derivative is
    ``1/2 sum nabla_{H_eps} H_eps + Ad_{e^{-1}} w + eps vdot`` with
    ``H_eps = Ad_{e^{-1}} H`` and ``w`` the scheme drift; the right case uses
    ``Ad_e``. For the uncorrected equations the constant
    ``1/2 sum nabla_H H`` is removed so that ``eps = 0`` returns ``u``.
    The advected variable is ``alpha`` pulled back by ``e``.
    """
    t = traj.t
    v0, vT = v(t[0]), v(t[-1])
    if np.abs(v0).max() > 1e-10 or np.abs(vT).max() > 1e-10:
        raise ContractError("variation must vanish at both endpoints")
    alg = system.conn.algebra
    ch = system.variant.chirality
    e = deformation_flow(alg, v, t, epsilon, ch)
    einv = np.linalg.inv(e)
    A, Ainv = (einv, e) if ch == LEFT else (e, einv)
    h1 = system.noise.h1
    w = system.drift1(traj.u)
    drift = alg.vee(A @ alg.hat(w) @ Ainv) + epsilon * v.derivative(t)
    if len(h1):
        base = correction(h1, system.conn)
        Heps = alg.vee(A[:, None] @ alg.hat(h1)[None] @ Ainv[:, None])   # (time, j, n)
        drift = drift + 0.5 * system.conn.nabla(Heps, Heps).sum(axis=1)
        if not system.variant.connection_correction:
            drift = drift - base
    alpha = system.rep.pull_back(e, traj.alpha)
    vals = np.asarray(system.lag.value(drift, alpha), dtype=float)
    if vals.shape != t.shape:
        vals = np.array([system.lag.value(d, a) for d, a in zip(drift, alpha)])
    return float(np.trapezoid(vals, t))


@dataclass
class CriticalityReport:
    derivatives: np.ndarray
    max_abs: float
    threshold: float
    passed: bool


def criticality_check(traj: Trajectory, system: ReducedSystem, n_directions=20, seed=0,
                      epsilon=1e-4, threshold=1e-3, modes=3, directions=None) -> CriticalityReport:
    """Central-difference ``dJ/deps`` at 0 over random smooth directions."""
    T = traj.t[-1] - traj.t[0]
    if directions is None:
        gen = np.random.default_rng(seed)
        directions = [SineVariation.random(gen, system.conn.dim, T, modes, traj.t[0]) for _ in range(n_directions)]
    d = np.array([(action_value(traj, system, epsilon, v) - action_value(traj, system, -epsilon, v)) / (2 * epsilon)
                  for v in directions])
    worst = float(np.abs(d).max())
    return CriticalityReport(d, worst, threshold, worst <= threshold)
