"""Ready-made finite-dimensional systems used by the experiments and tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lie
from .dissipation import NoiseBasis
from .reduced import EPVariant, Lagrangian, ReducedSystem, quadratic_lagrangian
from .semidirect import Representation, defining_representation, mirrored, trivial_representation

RIGID_BODY_INERTIA = (1.0, 2.0, 3.0)
HEAVY_TOP_INERTIA = (1.0, 1.5, 2.5)
HEAVY_TOP_MGL = 1.0
HEAVY_TOP_CHI = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class Preset:
    system: ReducedSystem
    u0: np.ndarray
    alpha0: np.ndarray


def _rep(algebra, chirality):
    rep = defining_representation(algebra)
    return mirrored(rep) if chirality == lie.RIGHT else rep


def rigid_body(sigma=0.0, variant=EPVariant(), inertia=RIGID_BODY_INERTIA, noise_frame=None) -> Preset:
    """Free rigid body on SO(3); the advected slot is a dummy trivial R^1."""
    alg = lie.so3()
    conn = lie.levi_civita(alg, inertia, variant.chirality)
    h = sigma * (np.eye(3) if noise_frame is None else np.asarray(noise_frame, dtype=float))
    noise = NoiseBasis(h if sigma else np.zeros((0, 3)), np.zeros((0, 3)))
    rep = trivial_representation(alg, 1, variant.chirality)
    system = ReducedSystem(quadratic_lagrangian(inertia), variant, noise, conn, rep)
    return Preset(system, np.array([1.0, 0.4, -0.7]), np.zeros(1))


def heavy_top(sigma1=0.0, sigma2=None, variant=EPVariant(), inertia=HEAVY_TOP_INERTIA,
              mgl=HEAVY_TOP_MGL, chi=HEAVY_TOP_CHI, noise_frame=None) -> Preset:
    """Heavy top: ``l = 1/2 u.I u - mgl Gamma.chi`` with ``Gamma`` advected in R^3.

    Noise directions are ``sigma * noise_frame`` (rows), the standard basis by
    default; the connection is the Levi-Civita connection of the inertia metric.
    """
    sigma2 = sigma1 if sigma2 is None else sigma2
    alg = lie.so3()
    conn = lie.levi_civita(alg, inertia, variant.chirality)
    frame = np.eye(3) if noise_frame is None else np.asarray(noise_frame, dtype=float)
    noise = NoiseBasis(sigma1 * frame if sigma1 else np.zeros((0, 3)),
                       sigma2 * frame if sigma2 else np.zeros((0, 3)))
    rep = _rep(alg, variant.chirality)
    lag = quadratic_lagrangian(inertia, mgl * np.asarray(chi, dtype=float))
    system = ReducedSystem(lag, variant, noise, conn, rep)
    gamma0 = np.array([np.sin(0.3), 0.0, np.cos(0.3)])
    return Preset(system, np.array([0.3, -0.2, 2.0]), gamma0)


def tilted_frame(angle=0.7, weights=(1.0, 0.6, 0.3)):
    """Unequally weighted rows of a rotated frame.

    Sums such as ``sum nabla_H H`` and ``K`` are quadratic in the frame and so
    vanish for any orthonormal frame when they vanish for the standard one;
    unequal weights off the principal axes make both nonzero.
    """
    rot = lie.so3().exp(np.array([angle, 0.5 * angle, -0.3 * angle]))
    return np.asarray(weights, dtype=float)[:, None] * rot.T


def so3_advected(sigma2=0.3, chirality=lie.LEFT):
    """SO(3) acting on R^3 with advection-only noise, for the ensemble experiments."""
    alg = lie.so3()
    conn = lie.bi_invariant_connection(alg, chirality)
    rep = _rep(alg, chirality)
    noise = NoiseBasis(np.zeros((0, 3)), sigma2 * np.eye(3))
    return alg, conn, rep, noise


def acceptance_drift(t):
    """Prescribed velocity ``u(t) = (sin t, 0.5, 0)``."""
    t = np.asarray(t, dtype=float)
    return np.stack([np.sin(t), 0.5 * np.ones_like(t), np.zeros_like(t)], axis=-1)


__all__ = ["Preset", "rigid_body", "heavy_top", "tilted_frame", "so3_advected",
           "acceptance_drift", "Lagrangian", "Representation"]
