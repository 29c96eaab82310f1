import numpy as np
import pytest
import scipy.linalg

from stochep import lie, systems
from stochep.dissipation import NoiseBasis
from stochep.lie import LEFT, RIGHT, ContractError
from stochep.reduced import (ALL_VARIANTS, EPVariant, ReducedSystem, Trajectory, ep_rhs, integrate_advection,
                             quadratic_lagrangian, sine_variation)
from stochep.semidirect import defining_representation, mirrored, trivial_representation

SO3 = lie.so3()
I = np.array([1.0, 2.0, 3.0])


def test_lagrangian_derivatives():
    lag = quadratic_lagrangian([1.0, 1.5, 2.5], np.array([0.0, 0.0, 1.0]))
    assert lag.derivative_defect(np.array([0.3, -0.2, 1.0]), np.array([0.1, 0.5, 0.8])) < 1e-8


def test_euler_equations_oracle():
    conn = lie.levi_civita(SO3, I)
    system = ReducedSystem(quadratic_lagrangian(I), EPVariant(), NoiseBasis(np.zeros((0, 3)), np.zeros((0, 3))),
                           conn, trivial_representation(SO3, 1))
    u = np.array([0.3, -1.0, 0.5])
    mu = I * u
    dmu, dal = system.rhs(mu, np.zeros(1))
    assert np.allclose(dmu, np.cross(mu, u))
    assert np.allclose(dal, 0.0)


def test_heavy_top_equations_oracle():
    p = systems.heavy_top(0.0)
    u = np.array([0.3, -0.2, 2.0])
    gamma = np.array([0.1, 0.3, 0.9])
    mu = np.array(systems.HEAVY_TOP_INERTIA) * u
    dmu, dgamma = p.system.rhs(mu, gamma)
    chi = np.array(systems.HEAVY_TOP_CHI)
    assert np.allclose(dmu, np.cross(mu, u) + systems.HEAVY_TOP_MGL * np.cross(gamma, chi))
    assert np.allclose(dgamma, np.cross(gamma, u))
    state_rhs = ep_rhs((u, gamma), p.system.lag, p.system.variant, p.system.noise, p.system.conn, p.system.rep)
    assert np.allclose(state_rhs[0], dmu)


def test_advection_noise_matrix_exponential():
    eps = 0.4
    rep = defining_representation(SO3)
    noise = NoiseBasis(np.zeros((0, 3)), eps * np.eye(3))
    system = ReducedSystem(quadratic_lagrangian(I), EPVariant(), noise, lie.bi_invariant_connection(SO3), rep)
    alpha0 = np.array([1.0, -0.5, 0.25])
    # with u = 0 the advected equation is linear with matrix 1/2 eps^2 sum rho_j rho_j = -eps^2 Id
    M = 0.5 * eps ** 2 * sum(r @ r for r in SO3.basis)
    t, a = integrate_advection(rep, noise.h2, lambda t: np.zeros(3), alpha0, 1.0, 1e-2)
    assert np.allclose(a[-1], scipy.linalg.expm(M) @ alpha0, atol=1e-10)
    assert np.allclose(system.alpha_rhs(np.zeros(3), alpha0), M @ alpha0)


def test_zero_rhs_constant_trajectory():
    alg = lie.abelian(2)
    system = ReducedSystem(quadratic_lagrangian([1.0, 1.0]), EPVariant(), NoiseBasis(np.zeros((0, 2)), np.zeros((0, 2))),
                           lie.flat_connection(alg), trivial_representation(alg, 1))
    traj = system.integrate([0.5, -0.2], [1.0], 1.0, 0.1)
    assert np.allclose(traj.u, [0.5, -0.2])


def test_rigid_body_casimir():
    p = systems.rigid_body()
    traj = p.system.integrate(p.u0, p.alpha0, 10.0, 1e-3)
    norms = np.linalg.norm(traj.mu, axis=1)
    assert np.abs(norms - norms[0]).max() <= 1e-8


def test_heavy_top_casimirs():
    p = systems.heavy_top(0.0)
    traj = p.system.integrate(p.u0, p.alpha0, 5.0, 1e-3)
    d = traj.diagnostics(p.system.lag)
    assert np.abs(d["alpha_norm"] - d["alpha_norm"][0]).max() <= 1e-8
    assert np.abs(d["mu_dot_alpha"] - d["mu_dot_alpha"][0]).max() <= 1e-8
    assert np.abs(d["energy"] - d["energy"][0]).max() <= 1e-8


def test_heavy_top_self_convergence():
    p = systems.heavy_top(0.2)
    T = 2.0
    ref = p.system.integrate(p.u0, p.alpha0, T, 1e-3 / 8).mu[-1]
    e1 = np.abs(p.system.integrate(p.u0, p.alpha0, T, 1e-2).mu[-1] - ref).max()
    e2 = np.abs(p.system.integrate(p.u0, p.alpha0, T, 5e-3).mu[-1] - ref).max()
    assert e1 / e2 >= 12


def test_dt_must_divide_horizon():
    p = systems.rigid_body()
    with pytest.raises(ContractError):
        p.system.integrate(p.u0, p.alpha0, 1.0, 0.3)


def test_chirality_mismatch_rejected():
    with pytest.raises(ContractError, match="chirality"):
        ReducedSystem(quadratic_lagrangian(I), EPVariant(RIGHT), NoiseBasis(np.zeros((0, 3)), np.zeros((0, 3))),
                      lie.levi_civita(SO3, I, LEFT), mirrored(defining_representation(SO3)))


def _directions(traj, n, seed=0):
    rng = np.random.default_rng(seed)
    return [sine_variation(traj.t, rng.standard_normal((3, 3))) for _ in range(n)]


@pytest.mark.parametrize("variant", ALL_VARIANTS, ids=lambda v: v.label)
def test_variation_residual_small_on_solutions(variant):
    p = systems.heavy_top(0.2, variant=variant, noise_frame=systems.tilted_frame())
    traj = p.system.integrate(p.u0, p.alpha0, 2.0, 1e-3)
    res = [abs(p.system.variation_residual(traj, v, vdot)) for v, vdot in _directions(traj, 5)]
    assert max(res) <= 1e-4
    assert p.system.variation_residual(traj, np.zeros_like(traj.u)) == 0.0


def test_variation_residual_contrast():
    p = systems.heavy_top(0.2)
    traj = p.system.integrate(p.u0, p.alpha0, 2.0, 1e-3)
    bumped_u = traj.u + 0.1 * np.outer(np.sin(traj.t), [1.0, 0.0, 0.0])
    bumped = Trajectory(traj.t, bumped_u, p.system.lag.dl_du(bumped_u, traj.alpha), traj.alpha)
    for v, vdot in _directions(traj, 5, seed=3):
        good = abs(p.system.variation_residual(traj, v, vdot))
        bad = abs(p.system.variation_residual(bumped, v, vdot))
        assert bad >= 10 * good


def test_variation_residual_tracks_rhs_defect():
    """Residual is small exactly when the trajectory solves the equations."""
    p = systems.heavy_top(0.2)
    traj = p.system.integrate(p.u0, p.alpha0, 2.0, 1e-3)
    assert p.system.rhs_defect(traj) < 1e-4
    wrong = systems.heavy_top(0.0)
    assert wrong.system.rhs_defect(traj) > 1e-3


def test_variation_endpoint_contract():
    p = systems.heavy_top(0.0)
    traj = p.system.integrate(p.u0, p.alpha0, 1.0, 1e-2)
    with pytest.raises(ContractError):
        p.system.variation_residual(traj, np.ones_like(traj.u))


def test_mirrored_rigid_body():
    """Left trajectory from mu0 maps to the right trajectory from -mu0 by mu -> -mu."""
    left = systems.rigid_body(variant=EPVariant(LEFT))
    right = systems.rigid_body(variant=EPVariant(RIGHT))
    tl = left.system.integrate(left.u0, left.alpha0, 3.0, 1e-3)
    tr = right.system.integrate(-left.u0, right.alpha0, 3.0, 1e-3)
    assert np.allclose(tr.mu, -tl.mu, atol=1e-12)


def test_advection_only_noise_has_no_k_term():
    p = systems.heavy_top(0.0, 0.3)
    assert np.allclose(p.system.K.k, 0.0)
    u = np.array([0.2, 0.1, 0.3])
    gamma = np.array([0.0, 0.6, 0.8])
    dmu, _ = p.system.rhs(np.array(systems.HEAVY_TOP_INERTIA) * u, gamma)
    quiet = systems.heavy_top(0.0, 0.0)
    dmu0, _ = quiet.system.rhs(np.array(systems.HEAVY_TOP_INERTIA) * u, gamma)
    assert np.allclose(dmu, dmu0)


def test_csv_output(tmp_path):
    p = systems.heavy_top(0.1)
    traj = p.system.integrate(p.u0, p.alpha0, 0.1, 1e-2)
    path = tmp_path / "traj.csv"
    traj.to_csv(path, p.system.lag)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("t,u_1,u_2,u_3,alpha_1")
    assert len(lines) == 12
