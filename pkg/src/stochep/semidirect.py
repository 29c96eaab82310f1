"""Representations of a Lie algebra on ``U`` and ``U*`` and the diamond map."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lie import LEFT, RIGHT, ContractError, LieAlgebra, _coords, _sign


@dataclass(frozen=True, eq=False)
class Representation:
    """Infinitesimal action ``v . a = sum_i v_i rho[i] @ a`` of the algebra on U.

    For a right representation ``rho`` holds the right-action generators
    (``a v``), which satisfy ``rho([u, v]) = -[rho(u), rho(v)]``.
    ``group_action`` maps a group matrix ``g`` to the matrix of ``a -> g a``
    (left) or ``a -> a g`` (right).
    """

    algebra: LieAlgebra
    rho: np.ndarray
    chirality: str = LEFT
    group_action: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        n = self.algebra.dim
        if rho.ndim != 3 or rho.shape[0] != n or rho.shape[1] != rho.shape[2]:
            raise ContractError(f"rho must be ({n}, m, m), got {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        _sign(self.chirality)

    @property
    def dim_u(self) -> int:
        return self.rho.shape[1]

    def matrix(self, v):
        return np.einsum("...i,iab->...ab", _coords(v, self.algebra.dim), self.rho)

    def dual_matrix(self, v):
        """Matrix of the induced action on U*: minus the transpose."""
        return -np.swapaxes(self.matrix(v), -1, -2)

    def act_algebra(self, v, a):
        a = _coords(a, self.dim_u, "U-vector")
        return np.einsum("...ab,...b->...a", self.matrix(v), a)

    def act_dual(self, v, alpha):
        alpha = _coords(alpha, self.dim_u, "U*-covector")
        return np.einsum("...ab,...b->...a", self.dual_matrix(v), alpha)

    def diamond(self, a, alpha):
        """The covector with ``<a diamond alpha, v> = <alpha, v . a>``."""
        a = _coords(a, self.dim_u, "U-vector")
        alpha = _coords(alpha, self.dim_u, "U*-covector")
        return np.einsum("...a,iab,...b->...i", alpha, self.rho, a)

    def homomorphism_defect(self) -> float:
        rho, c = self.rho, self.algebra.c
        comm = np.einsum("iab,jbc->ijac", rho, rho)
        comm = comm - comm.transpose(1, 0, 2, 3)
        lhs = np.einsum("ijk,kac->ijac", c, rho)
        return float(np.abs(lhs - _sign(self.chirality) * comm).max(initial=0.0))

    def validate(self, tol=1e-12):
        if self.homomorphism_defect() > tol:
            raise ContractError(f"{self.chirality} representation is not a homomorphism")
        return self

    def pull_back(self, g, alpha):
        """Advect ``alpha`` by ``g``: ``g^{-1} alpha`` (left) or ``alpha g^{-1}`` (right).

        Both reduce to the transpose of the U-action matrix of ``g``.
        """
        if self.group_action is None:
            raise ContractError("representation carries no group action")
        G = self.group_action(np.asarray(g, dtype=float))
        return np.einsum("...ba,...b->...a", G, _coords(alpha, self.dim_u, "U*-covector"))


def trivial_representation(algebra: LieAlgebra, dim_u: int, chirality=LEFT) -> Representation:
    def action(g):
        g = np.asarray(g)
        return np.broadcast_to(np.eye(dim_u), g.shape[:-2] + (dim_u, dim_u))
    return Representation(algebra, np.zeros((algebra.dim, dim_u, dim_u)), chirality, action)


def defining_representation(algebra: LieAlgebra) -> Representation:
    """Left action of the matrix group on column vectors (so(3) on R^3)."""
    if not algebra.has_matrices:
        raise ContractError("defining representation needs algebra matrices")
    return Representation(algebra, algebra.basis, LEFT, lambda g: g).validate()


def mirrored(rep: Representation) -> Representation:
    """Right representation ``a g := g^{-1} a`` built from a left one."""
    if rep.chirality != LEFT:
        raise ContractError("mirror a left representation")
    left_action = rep.group_action
    action = None if left_action is None else (lambda g: left_action(np.linalg.inv(g)))
    return Representation(rep.algebra, -rep.rho, RIGHT, action).validate()


def from_document(algebra: LieAlgebra, doc: dict) -> Representation | None:
    """Build the U-representation stored under ``rho`` in an algebra document."""
    if "rho" not in doc:
        return None
    chirality = doc.get("rep_chirality", LEFT)
    rho = np.asarray(doc["rho"], dtype=float)
    action = None
    if algebra.has_matrices and rho.shape[1] == algebra.basis.shape[1] and np.allclose(
            rho, algebra.basis if chirality == LEFT else -algebra.basis):
        action = (lambda g: g) if chirality == LEFT else (lambda g: np.linalg.inv(g))
    return Representation(algebra, rho, chirality, action).validate()
