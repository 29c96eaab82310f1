"""Finite-dimensional Lie algebras, matrix groups and invariant connections.

Everything here works on coordinate arrays in a fixed basis ``e_1..e_n``:

* structure constants ``c[i, j, k]`` with ``[e_i, e_j] = sum_k c[i, j, k] e_k``
* connection coefficients ``gamma[i, j, k]`` with
  ``nabla_{e_i} e_j = sum_k gamma[i, j, k] e_k``
* the dual pairing is the coordinate dot product.

Matrices (a faithful representation ``basis[i]`` of ``e_i``) are optional and
only needed for group-valued computations (exp, log, Ad).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

LEFT = "left"
RIGHT = "right"
CHIRALITIES = (LEFT, RIGHT)


class ContractError(ValueError):
    """Raised when an operation is called outside its contract."""


def _coords(x, dim, what="vector"):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ContractError(f"{what} has dimension {x.shape[-1]}, expected {dim}")
    return x


def _sign(chirality):
    if chirality not in CHIRALITIES:
        raise ContractError(f"unknown chirality {chirality!r}")
    return 1.0 if chirality == LEFT else -1.0


@dataclass(frozen=True, eq=False)
class LieAlgebra:
    """A Lie algebra given by structure constants, optionally with matrices."""

    c: np.ndarray
    basis: np.ndarray | None = None
    name: str = "custom"
    _vee_pinv: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise ContractError(f"structure constants must be (n, n, n), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        if self.basis is not None:
            basis = np.array(self.basis, dtype=float)
            if basis.ndim != 3 or basis.shape[0] != c.shape[0] or basis.shape[1] != basis.shape[2]:
                raise ContractError(f"basis must be (n, m, m), got {basis.shape}")
            basis.setflags(write=False)
            object.__setattr__(self, "basis", basis)
            flat = basis.reshape(basis.shape[0], -1).T
            object.__setattr__(self, "_vee_pinv", np.linalg.pinv(flat))

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def has_matrices(self) -> bool:
        return self.basis is not None

    # -- algebra -------------------------------------------------------------
    def bracket(self, u, v):
        u = _coords(u, self.dim)
        v = _coords(v, self.dim)
        return np.einsum("...i,...j,ijk->...k", u, v, self.c)

    def ad_matrix(self, u):
        """Matrix of ``v -> [u, v]``."""
        u = _coords(u, self.dim)
        return np.einsum("i,ijk->kj", u, self.c)

    def ad_star(self, u, mu):
        """Coadjoint action with ``<ad*_u mu, v> = <mu, [u, v]>``."""
        u = _coords(u, self.dim)
        mu = _coords(mu, self.dim, "covector")
        return np.einsum("...i,...k,ijk->...j", u, mu, self.c)

    def jacobi_defect(self) -> float:
        c = self.c
        t = (np.einsum("ijm,mkl->ijkl", c, c)
             + np.einsum("jkm,mil->ijkl", c, c)
             + np.einsum("kim,mjl->ijkl", c, c))
        return float(np.abs(t).max(initial=0.0))

    def antisymmetry_defect(self) -> float:
        return float(np.abs(self.c + self.c.transpose(1, 0, 2)).max(initial=0.0))

    def validate(self, tol=1e-12):
        if self.antisymmetry_defect() > tol:
            raise ContractError(f"{self.name}: structure constants are not antisymmetric")
        if self.jacobi_defect() > tol:
            raise ContractError(f"{self.name}: structure constants violate the Jacobi identity")
        if self.basis is not None:
            comm = np.einsum("iab,jbc->ijac", self.basis, self.basis)
            comm = comm - comm.transpose(1, 0, 2, 3)
            expected = np.einsum("ijk,kac->ijac", self.c, self.basis)
            if np.abs(comm - expected).max() > tol:
                raise ContractError(f"{self.name}: matrices do not realise the structure constants")
        return self

    # -- matrices and the group ---------------------------------------------
    def _require_matrices(self):
        if self.basis is None:
            raise ContractError(f"algebra {self.name!r} has no matrix representation")

    def hat(self, u):
        self._require_matrices()
        return np.einsum("...i,iab->...ab", _coords(u, self.dim), self.basis)

    def vee(self, X):
        self._require_matrices()
        X = np.asarray(X, dtype=float)
        m = self.basis.shape[1]
        return X.reshape(X.shape[:-2] + (m * m,)) @ self._vee_pinv.T

    def identity(self):
        self._require_matrices()
        return np.eye(self.basis.shape[1])

    def exp(self, u):
        """Group exponential; accepts a batch of coordinate vectors."""
        u = _coords(u, self.dim)
        if self.name == "so3":
            return _so3_exp(u)
        return scipy.linalg.expm(self.hat(u))

    def log(self, g):
        g = np.asarray(g, dtype=float)
        if self.name == "so3":
            return _so3_log(g)
        if g.ndim == 2:
            return self.vee(np.real(scipy.linalg.logm(g)))
        flat = g.reshape((-1,) + g.shape[-2:])
        out = np.array([self.vee(np.real(scipy.linalg.logm(x))) for x in flat])
        return out.reshape(g.shape[:-2] + (self.dim,))

    def adjoint(self, g, u):
        """``Ad_g u`` by conjugation in the matrix representation."""
        g = np.asarray(g, dtype=float)
        try:
            ginv = np.linalg.inv(g)
        except np.linalg.LinAlgError as exc:
            raise ContractError("group element is not invertible") from exc
        return self.vee(g @ self.hat(u) @ ginv)

    def reorthonormalize(self, g):
        """Project back onto the group after accumulated round-off (SO(3) only)."""
        if self.name != "so3":
            return g
        U, _, Vt = np.linalg.svd(g)
        return U @ Vt


def _skew(w):
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def _so3_exp(w):
    theta = np.linalg.norm(w, axis=-1)[..., None, None]
    K = _skew(w)
    small = theta < 1e-4
    t2 = theta * theta
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(safe)) / (safe * safe))
    return np.eye(3) + a * K + b * (K @ K)


def _so3_log(R):
    cos = np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos)
    v = np.stack([R[..., 2, 1] - R[..., 1, 2],
                  R[..., 0, 2] - R[..., 2, 0],
                  R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    scale = np.where(small, 0.5 + theta**2 / 12.0, safe / (2.0 * np.sin(safe)))
    return scale[..., None] * v


@dataclass(frozen=True, eq=False)
class Connection:
    """Left- or right-invariant linear connection on a Lie group.

    ``gamma[i, j]`` holds ``nabla_{e_i} e_j`` evaluated at the identity for the
    invariant vector fields of the given chirality.
    """

    algebra: LieAlgebra
    gamma: np.ndarray
    chirality: str = LEFT
    torsion_free: bool = False

    def __post_init__(self):
        gamma = np.array(self.gamma, dtype=float)
        n = self.algebra.dim
        if gamma.shape != (n, n, n):
            raise ContractError(f"connection coefficients must be {(n, n, n)}, got {gamma.shape}")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        _sign(self.chirality)
        if self.torsion_free and self.torsion_defect() > 1e-12:
            raise ContractError("connection claims to be torsion free but is not")

    @property
    def dim(self):
        return self.algebra.dim

    def field_bracket(self, u, v):
        """Jacobi-Lie bracket of the invariant vector fields, at the identity.

        Left-invariant fields reproduce the algebra bracket; right-invariant
        ones its negative.
        """
        return _sign(self.chirality) * self.algebra.bracket(u, v)

    def torsion_defect(self) -> float:
        g = self.gamma
        return float(np.abs(g - g.transpose(1, 0, 2) - _sign(self.chirality) * self.algebra.c).max())

    def nabla(self, u, v):
        u = _coords(u, self.dim)
        v = _coords(v, self.dim)
        return np.einsum("...i,...j,ijk->...k", u, v, self.gamma)

    def nabla_matrix(self, u):
        """Matrix of ``v -> nabla_u v``."""
        return np.einsum("i,ijk->kj", _coords(u, self.dim), self.gamma)

    def curvature(self, u, v, w):
        """``R(u, v) w = nabla_u nabla_v w - nabla_v nabla_u w - nabla_[u,v] w``."""
        return (self.nabla(u, self.nabla(v, w)) - self.nabla(v, self.nabla(u, w))
                - self.nabla(self.field_bracket(u, v), w))


# -- shipped algebras --------------------------------------------------------

def so3() -> LieAlgebra:
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    return LieAlgebra(eps, _skew(np.eye(3)), name="so3").validate()


def se2() -> LieAlgebra:
    # basis: rotation J, translations P1, P2 as 3x3 homogeneous matrices
    E = np.zeros((3, 3, 3))
    E[0, 0, 1], E[0, 1, 0] = -1.0, 1.0
    E[1, 0, 2] = 1.0
    E[2, 1, 2] = 1.0
    c = np.zeros((3, 3, 3))
    c[0, 1, 2], c[1, 0, 2] = 1.0, -1.0
    c[0, 2, 1], c[2, 0, 1] = -1.0, 1.0
    return LieAlgebra(c, E, name="se2").validate()


def abelian(n: int) -> LieAlgebra:
    E = np.zeros((n, n + 1, n + 1))
    for i in range(n):
        E[i, i, n] = 1.0
    return LieAlgebra(np.zeros((n, n, n)), E, name=f"abelian{n}").validate()


def heisenberg() -> LieAlgebra:
    E = np.zeros((3, 3, 3))
    E[0, 0, 1] = 1.0
    E[1, 1, 2] = 1.0
    E[2, 0, 2] = 1.0
    c = np.zeros((3, 3, 3))
    c[0, 1, 2], c[1, 0, 2] = 1.0, -1.0
    return LieAlgebra(c, E, name="heisenberg").validate()


# -- shipped connections -----------------------------------------------------

def flat_connection(algebra: LieAlgebra, chirality=LEFT) -> Connection:
    n = algebra.dim
    torsion_free = algebra.antisymmetry_defect() == 0.0 and not algebra.c.any()
    return Connection(algebra, np.zeros((n, n, n)), chirality, torsion_free)


def bi_invariant_connection(algebra: LieAlgebra, chirality=LEFT) -> Connection:
    """The symmetric connection ``nabla_u v = 1/2 [u, v]`` of the invariant fields."""
    return Connection(algebra, 0.5 * _sign(chirality) * algebra.c, chirality, True)


def levi_civita(algebra: LieAlgebra, metric, chirality=LEFT) -> Connection:
    """Levi-Civita connection of an invariant metric, via the Koszul formula.

    For invariant fields the metric terms are constant, so
    ``g(nabla_X Y, Z) = 1/2 (g([X,Y],Z) - g([Y,Z],X) + g([Z,X],Y))``
    with ``[.,.]`` the bracket of the invariant vector fields.
    """
    metric = np.asarray(metric, dtype=float)
    if metric.ndim == 1:
        metric = np.diag(metric)
    n = algebra.dim
    if metric.shape != (n, n):
        raise ContractError(f"metric must be {(n, n)}")
    if np.abs(metric - metric.T).max() > 1e-14 or np.linalg.eigvalsh(metric).min() <= 0:
        raise ContractError("metric must be symmetric positive definite")
    c = _sign(chirality) * algebra.c
    # lowered structure constants: cl[i, j, l] = g([e_i, e_j], e_l)
    cl = np.einsum("ijk,kl->ijl", c, metric)
    lowered = 0.5 * (cl - cl.transpose(2, 0, 1) + cl.transpose(1, 2, 0))
    gamma = np.einsum("ijl,lk->ijk", lowered, np.linalg.inv(metric))
    return Connection(algebra, gamma, chirality, True)


def load_json(path):
    """Load ``{"dim", "c", "gamma", "rep", ...}`` into algebra and connection.

    ``rep`` holds the matrices of the basis vectors. Returns
    ``(algebra, connection_or_None, document)``; the raw document is handed
    back so callers can pick up the U-representation (``rho``).
    """
    doc = json.loads(Path(path).read_text())
    n = int(doc["dim"])
    c = np.asarray(doc["c"], dtype=float)
    if c.shape != (n, n, n):
        raise ContractError(f"'c' must have shape {(n, n, n)}")
    basis = doc.get("rep")
    algebra = LieAlgebra(c, None if basis is None else np.asarray(basis, dtype=float),
                         name=doc.get("name", "custom")).validate()
    conn = None
    if "gamma" in doc:
        conn = Connection(algebra, np.asarray(doc["gamma"], dtype=float),
                          doc.get("chirality", LEFT), bool(doc.get("torsion_free", False)))
    return algebra, conn, doc
