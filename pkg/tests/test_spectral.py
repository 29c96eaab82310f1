import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochep import spectral as sp
from stochep.lie import ContractError
from stochep.spectral import Grid

G2 = Grid(2, 32)
G3 = Grid(3, 16)


def test_grid_contract():
    with pytest.raises(ContractError):
        Grid(1, 32)
    with pytest.raises(ContractError):
        Grid(2, 24)
    with pytest.raises(ContractError):
        G2.check(np.zeros((3, 16, 16)), 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(-10, 10), st.integers(-10, 10), st.floats(0, 6.28))
def test_single_mode_derivatives_exact(kx, ky, phase):
    f = G2.mode([kx, ky], phase)
    x, y = G2.coords
    ph = kx * x + ky * y + phase
    gr = sp.grad(G2, f)
    assert np.allclose(gr[0], -kx * np.sin(ph), atol=1e-11)
    assert np.allclose(gr[1], -ky * np.sin(ph), atol=1e-11)
    assert np.allclose(sp.laplacian(G2, f), -(kx ** 2 + ky ** 2) * f, atol=1e-10)


def test_nyquist_removed_from_first_derivatives():
    f = G2.mode([16, 0])
    assert np.allclose(sp.grad(G2, f), 0.0)
    assert np.allclose(sp.laplacian(G2, f), -256 * f, atol=1e-9)


@pytest.mark.parametrize("grid", [G2, G3], ids=["2d", "3d"])
def test_vector_identities(grid):
    rng = np.random.default_rng(0)
    v = sp.random_band_limited(grid, rng, 3)
    f = sp.random_band_limited(grid, rng)
    assert np.abs(sp.div(grid, sp.curl(grid, v))).max() <= 1e-12
    assert np.abs(sp.curl(grid, np.concatenate([sp.grad(grid, f), np.zeros((3 - grid.dims,) + grid.shape)]))).max() <= 1e-12
    # mixed partials commute
    assert np.allclose(sp.partial(grid, sp.partial(grid, f, 0), 1), sp.partial(grid, sp.partial(grid, f, 1), 0),
                       atol=1e-12)


def test_curl_of_2d_potential():
    x, y = G2.coords
    A = np.stack([np.zeros(G2.shape), np.zeros(G2.shape), np.cos(x) * np.cos(y)])
    B = sp.curl(G2, A)
    assert np.allclose(B[0], -np.cos(x) * np.sin(y), atol=1e-12)
    assert np.allclose(B[1], np.sin(x) * np.cos(y), atol=1e-12)
    assert np.allclose(B[2], 0.0)


def test_parseval():
    f = sp.random_band_limited(G3, np.random.default_rng(1))
    assert np.isclose(G3.l2_norm(f), G3.spectral_l2_norm(f), rtol=1e-12)
    g = np.random.default_rng(2).standard_normal(G2.shape)
    assert np.isclose(G2.l2_norm(g), G2.spectral_l2_norm(g), rtol=1e-12)


def test_dealiased_product_has_no_aliasing():
    """Modes 8 and 9 multiply into 17 and 1; 17 folds to 15 on 32 points and must be removed."""
    a, b = G2.mode([8, 0]), G2.mode([9, 0])
    prod = sp.nonlinear_product(G2, a, b)
    assert np.allclose(prod, 0.5 * G2.mode([1, 0]), atol=1e-13)
    assert not np.allclose(a * b, 0.5 * G2.mode([1, 0]), atol=1e-3)
    low = sp.nonlinear_product(G2, G2.mode([3, 1]), G2.mode([2, 4]))
    assert np.allclose(low, G2.mode([3, 1]) * G2.mode([2, 4]), atol=1e-13)


def test_leray_projection():
    rng = np.random.default_rng(3)
    v = sp.random_band_limited(G3, rng, 3)
    p = sp.leray(G3, v)
    assert np.abs(sp.div(G3, p)).max() <= 1e-12
    assert np.allclose(sp.leray(G3, p), p, atol=1e-13)
    f = sp.random_band_limited(G3, rng)
    assert np.abs(sp.leray(G3, sp.grad(G3, f))).max() <= 1e-12
    assert np.isclose(G3.integrate(p[0]), G3.integrate(v[0]))


def test_one_form_rhs_matches_vector_identity():
    rng = np.random.default_rng(4)
    g = Grid(3, 32)
    u = sp.random_band_limited(g, rng, 3, kmax=3)
    A = sp.random_band_limited(g, rng, 3, kmax=3)
    alt = np.cross(u, sp.curl(g, A), axis=0) - sp.grad(g, (u * A).sum(axis=0))
    assert np.allclose(sp.one_form_rhs(g, u, A), alt, atol=1e-11)


def test_dump_roundtrip(tmp_path):
    v = sp.random_band_limited(G2, np.random.default_rng(5), 3)
    meta = sp.dump_field(tmp_path / "v.bin", v, G2, time=0.25)
    assert meta == {"dims": 2, "n": 32, "components": 3, "time": 0.25}
    assert (tmp_path / "v.bin").stat().st_size == 8 * v.size
    back, grid, t = sp.load_field(tmp_path / "v.bin")
    assert np.array_equal(back, v) and grid == G2 and t == 0.25
