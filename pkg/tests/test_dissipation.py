import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochep import lie
from stochep.dissipation import (Dissipation, NoiseBasis, correction, k_curvature_form, k_operator, k_star,
                                 k_star_matrix, u_tilde)
from stochep.lie import LEFT, RIGHT, ContractError

SO3 = lie.so3()
INERTIA = np.array([1.0, 2.0, 3.0])
vec3 = arrays(np.float64, 3, elements=st.floats(-3, 3))


def k_star_oracle(v, h, conn):
    """Direct sum over noise vectors, no matrix assembly."""
    out = np.zeros(conn.dim)
    for H in h:
        w = conn.algebra.bracket(v, H)
        out -= 0.5 * (conn.nabla(w, H) + conn.nabla(H, w))
    return out


def test_u_tilde_examples():
    u = np.array([0.5, -1.0, 2.0])
    bi = lie.bi_invariant_connection(SO3)
    assert np.allclose(u_tilde(u, np.zeros((0, 3)), bi), u)
    assert np.allclose(u_tilde(u, np.eye(3), bi), u)
    gamma = np.random.default_rng(0).standard_normal((3, 3, 3))
    conn = lie.Connection(lie.abelian(3), gamma)
    h = np.array([[1.0, 0.0, 2.0], [0.0, -1.0, 1.0]])
    oracle = u - 0.5 * sum(np.einsum("i,j,ijk->k", H, H, gamma) for H in h)
    assert np.allclose(u_tilde(u, h, conn), oracle)


def test_k_empty_noise_is_zero():
    conn = lie.levi_civita(SO3, INERTIA)
    noise = NoiseBasis(np.zeros((0, 3)), np.zeros((0, 3)))
    assert np.allclose(k_operator([1, 2, 3], noise, conn), 0.0)
    assert np.allclose(k_star([1, 2, 3], noise, conn), 0.0)
    assert np.allclose(k_curvature_form([1, 2, 3], noise, conn), 0.0)


@pytest.mark.parametrize("chirality", [LEFT, RIGHT])
def test_k_vanishes_for_bi_invariant(chirality):
    conn = lie.bi_invariant_connection(SO3, chirality)
    noise = NoiseBasis(0.7 * np.eye(3), np.zeros((0, 3)))
    assert np.allclose(Dissipation(noise.h1, conn).k, 0.0, atol=1e-15)


@pytest.mark.parametrize("chirality", [LEFT, RIGHT])
def test_k_star_matches_direct_sum(chirality):
    conn = lie.levi_civita(SO3, INERTIA, chirality)
    h = np.random.default_rng(1).standard_normal((2, 3))
    rng = np.random.default_rng(2)
    for _ in range(10):
        v = rng.standard_normal(3)
        assert np.allclose(Dissipation(h, conn).adjoint(v), k_star_oracle(v, h, conn), atol=1e-13)


@settings(max_examples=50)
@given(vec3, vec3)
def test_k_adjoint_pairing(mu, v):
    conn = lie.levi_civita(SO3, INERTIA)
    h = np.array([[1.0, 0.3, 0.0], [0.0, 0.5, -0.2]])
    d = Dissipation(h, conn)
    assert np.isclose(d(mu) @ v, mu @ d.adjoint(v), atol=1e-10)


@given(vec3, vec3, st.floats(-3, 3), st.floats(-3, 3))
def test_k_linear(mu, nu, a, b):
    conn = lie.levi_civita(SO3, INERTIA)
    d = Dissipation(np.eye(3) / np.sqrt(INERTIA)[:, None], conn)
    assert np.allclose(d(a * mu + b * nu), a * d(mu) + b * d(nu), atol=1e-10)


def test_k_star_matrix_columns():
    conn = lie.levi_civita(SO3, INERTIA)
    h = np.eye(3)
    M = k_star_matrix(h, conn)
    for i in range(3):
        assert np.allclose(M[:, i], k_star_oracle(np.eye(3)[i], h, conn))


def test_curvature_form_single_direction_expansion():
    conn = lie.levi_civita(SO3, INERTIA, RIGHT)
    H = np.array([1.0, 0.0, 0.0]) / np.sqrt(INERTIA[0])
    noise = NoiseBasis(H[None, :], np.zeros((0, 3)))
    u = H
    expected = -0.5 * (conn.nabla(H, conn.nabla(H, u)) + conn.curvature(u, H, H))
    assert np.allclose(k_curvature_form(u, noise, conn), expected)
    # with u = H the curvature term vanishes and nabla_H H = 0
    assert np.allclose(expected, 0.0)


def test_curvature_form_identity_right_invariant():
    """Metric-lowered curvature form equals K for the right Levi-Civita connection."""
    conn = lie.levi_civita(SO3, INERTIA, RIGHT)
    noise = NoiseBasis(np.eye(3) / np.sqrt(INERTIA)[:, None], np.zeros((0, 3)))
    G = np.diag(INERTIA)
    rng = np.random.default_rng(7)
    for _ in range(10):
        u = rng.standard_normal(3)
        assert np.allclose(k_operator(G @ u, noise, conn), G @ k_curvature_form(u, noise, conn), atol=1e-12)


def test_curvature_form_left_invariant_sign():
    """For left-invariant fields the same two arrays agree up to an overall sign."""
    conn = lie.levi_civita(SO3, INERTIA, LEFT)
    noise = NoiseBasis(np.eye(3) / np.sqrt(INERTIA)[:, None], np.zeros((0, 3)))
    G = np.diag(INERTIA)
    u = np.array([0.4, -1.1, 0.7])
    assert np.allclose(k_operator(G @ u, noise, conn), -G @ k_curvature_form(u, noise, conn), atol=1e-12)


def test_curvature_form_hypotheses_enforced():
    conn = lie.levi_civita(SO3, INERTIA)
    tilted = NoiseBasis(np.array([[1.0, 1.0, 0.0]]), np.zeros((0, 3)))
    with pytest.raises(ContractError, match="hypothesis"):
        k_curvature_form([1, 0, 0], tilted, conn)
    twisted = lie.Connection(SO3, np.zeros((3, 3, 3)))
    with pytest.raises(ContractError, match="hypothesis"):
        k_curvature_form([1, 0, 0], NoiseBasis(np.eye(3), np.zeros((0, 3))), twisted)


def test_torsion_warning():
    conn = lie.Connection(SO3, np.zeros((3, 3, 3)))
    with pytest.warns(UserWarning):
        Dissipation(np.eye(3), conn)


def test_correction_zero_for_self_parallel_noise():
    conn = lie.levi_civita(SO3, INERTIA)
    assert np.allclose(correction(np.eye(3), conn), 0.0)
    assert np.abs(correction(np.array([[1.0, 1.0, 0.0]]), conn)).max() > 1e-3
