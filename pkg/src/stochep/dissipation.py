"""Noise directions, drift corrections and the dissipation operator K."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lie import Connection, ContractError, _coords


@dataclass(frozen=True, eq=False)
class NoiseBasis:
    """Constant noise directions: ``h1`` drives momentum, ``h2`` advection."""

    h1: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    h2: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        for name in ("h1", "h2"):
            h = np.array(getattr(self, name), dtype=float)
            if h.size == 0:
                h = h.reshape(0, h.shape[-1] if h.ndim == 2 else 0)
            if h.ndim != 2:
                raise ContractError(f"{name} must be a (k, dim) array")
            h.setflags(write=False)
            object.__setattr__(self, name, h)

    @classmethod
    def scaled_basis(cls, dim, sigma1, sigma2=None):
        sigma2 = sigma1 if sigma2 is None else sigma2
        return cls(sigma1 * np.eye(dim) if sigma1 else np.zeros((0, dim)),
                   sigma2 * np.eye(dim) if sigma2 else np.zeros((0, dim)))


def _check(h, conn):
    h = np.asarray(h, dtype=float).reshape(-1, conn.dim) if np.size(h) else np.zeros((0, conn.dim))
    return h


def correction(h, conn: Connection):
    """``1/2 sum_j nabla_{H_j} H_j``."""
    h = _check(h, conn)
    return 0.5 * conn.nabla(h, h).sum(axis=0) if len(h) else np.zeros(conn.dim)


def u_tilde(u, h, conn: Connection):
    """Drift corrected by the connection: ``u - 1/2 sum_j nabla_{H_j} H_j``."""
    return _coords(u, conn.dim) - correction(h, conn)


def k_star_matrix(h, conn: Connection):
    """Matrix of ``K*``: ``v -> -1/2 sum_j (nabla_{[v,H_j]} H_j + nabla_{H_j} [v,H_j])``.

    Assembled column by column over the basis.
    """
    h = _check(h, conn)
    n = conn.dim
    alg = conn.algebra
    M = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        col = np.zeros(n)
        for H in h:
            adH = alg.bracket(e, H)
            col += conn.nabla(adH, H) + conn.nabla(H, adH)
        M[:, i] = -0.5 * col
    return M


@dataclass(frozen=True, eq=False)
class Dissipation:
    """Cached ``K`` for a fixed (noise, connection) pair."""

    h1: np.ndarray
    conn: Connection

    def __post_init__(self):
        if len(_check(self.h1, self.conn)) and not self.conn.torsion_free:
            warnings.warn("K is built from a connection that is not torsion free", stacklevel=3)

    @cached_property
    def kstar(self):
        m = k_star_matrix(self.h1, self.conn)
        m.setflags(write=False)
        return m

    @cached_property
    def k(self):
        m = np.ascontiguousarray(self.kstar.T)
        m.setflags(write=False)
        return m

    def __call__(self, mu):
        return np.einsum("ij,...j->...i", self.k, _coords(mu, self.conn.dim, "covector"))

    def adjoint(self, v):
        return np.einsum("ij,...j->...i", self.kstar, _coords(v, self.conn.dim))


def k_operator(mu, noise: NoiseBasis, conn: Connection):
    """``K(mu)``, defined by ``<K mu, v> = <mu, K* v>`` for every ``v``."""
    return Dissipation(noise.h1, conn)(mu)


def k_star(v, noise: NoiseBasis, conn: Connection):
    return Dissipation(noise.h1, conn).adjoint(v)


def k_curvature_form(u, noise: NoiseBasis, conn: Connection, tol=1e-12):
    """``-1/2 sum_i (nabla_{H_i} nabla_{H_i} u + R(u, H_i) H_i)``.

    Only meaningful for a Levi-Civita connection whose noise directions are
    self-parallel; both conditions are checked.
    """
    u = _coords(u, conn.dim)
    h = _check(noise.h1, conn)
    if not conn.torsion_free:
        raise ContractError("hypothesis of the curvature form fails: connection has torsion")
    for H in h:
        if np.abs(conn.nabla(H, H)).max() > tol:
            raise ContractError("hypothesis of the curvature form fails: nabla_H H != 0")
    out = np.zeros(conn.dim)
    for H in h:
        out += conn.nabla(H, conn.nabla(H, u)) + conn.curvature(u, H, H)
    return -0.5 * out
