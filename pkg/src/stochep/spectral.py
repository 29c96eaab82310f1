"""Pseudo-spectral calculus on the periodic box [0, 2pi)^d, d = 2 or 3.

Fields are plain arrays: a scalar has shape ``grid.shape`` and a vector
``(c,) + grid.shape``. On a 2D grid a 3-component vector stands for a field on
T^3 that does not depend on the third coordinate, so ``curl`` always returns
three components.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .lie import ContractError


@dataclass(frozen=True)
class Grid:
    dims: int
    n: int

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ContractError("grid must be 2D or 3D")
        if self.n < 8 or self.n & (self.n - 1):
            raise ContractError("points per dimension must be a power of two, at least 8")

    @property
    def shape(self):
        return (self.n,) * self.dims

    @property
    def axes(self):
        return tuple(range(-self.dims, 0))

    @property
    def dx(self):
        return 2 * np.pi / self.n

    @property
    def cell_volume(self):
        return self.dx ** self.dims

    @property
    def volume(self):
        return (2 * np.pi) ** self.dims

    @cached_property
    def coords(self):
        """Mesh of coordinates, shape ``(dims,) + shape``."""
        x = self.dx * np.arange(self.n)
        return np.stack(np.meshgrid(*([x] * self.dims), indexing="ij"))

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers on the half spectrum, broadcastable, one per axis."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n)
        half = np.fft.rfftfreq(self.n, 1.0 / self.n)
        ks = []
        for ax in range(self.dims):
            k = half if ax == self.dims - 1 else full
            shape = [1] * self.dims
            shape[ax] = len(k)
            ks.append(k.reshape(shape))
        return ks

    @cached_property
    def ik(self):
        """``i k`` per axis with the Nyquist mode removed (odd derivatives)."""
        out = []
        for k in self.wavenumbers:
            k = np.where(np.abs(k) == self.n // 2, 0.0, k)
            out.append(1j * k)
        return out

    @cached_property
    def k2(self):
        return sum(k.astype(float) ** 2 for k in self.wavenumbers)

    @cached_property
    def dealias_mask(self):
        """2/3 rule: keep modes with every ``|k_i| <= n/3``."""
        cut = self.n // 3
        m = np.ones(self.spectral_shape, dtype=bool)
        for k in self.wavenumbers:
            m = m & (np.abs(k) <= cut)
        return m

    @property
    def spectral_shape(self):
        return (self.n,) * (self.dims - 1) + (self.n // 2 + 1,)

    # -- transforms ----------------------------------------------------------
    def fft(self, f):
        return sfft.rfftn(f, axes=self.axes)

    def ifft(self, fh):
        return sfft.irfftn(fh, s=self.shape, axes=self.axes)

    def check(self, f, rank):
        f = np.asarray(f, dtype=float)
        extra = f.ndim - self.dims
        if f.shape[extra:] != self.shape or extra != rank:
            raise ContractError(f"expected a rank-{rank} field on {self.shape}, got shape {f.shape}")
        return f

    def integrate(self, f):
        return float(np.sum(f) * self.cell_volume)

    def l2_norm(self, f):
        return float(np.sqrt(np.sum(np.asarray(f) ** 2) * self.cell_volume))

    def spectral_l2_norm(self, f):
        """L2 norm from the half spectrum (Parseval)."""
        fh = self.fft(f)
        w = np.full(self.spectral_shape[-1], 2.0)
        w[0] = 1.0
        if self.n % 2 == 0:
            w[-1] = 1.0
        tot = np.sum(np.abs(fh) ** 2 * w, axis=tuple(range(-self.dims, 0)))
        return float(np.sqrt(np.sum(tot) * self.volume) / self.n ** self.dims)

    def mode(self, k, phase=0.0):
        """``cos(k . theta + phase)`` for an integer wavevector ``k``."""
        return np.cos(np.tensordot(np.asarray(k, dtype=float), self.coords, axes=1) + phase)


# -- differential operators ----------------------------------------------------

def _deriv(grid, f, axis):
    return grid.ifft(grid.ik[axis] * grid.fft(f))


def grad(grid: Grid, f):
    f = grid.check(f, 0)
    fh = grid.fft(f)
    return np.stack([grid.ifft(ik * fh) for ik in grid.ik])


def partial(grid: Grid, f, axis):
    """``d f / d theta_axis`` componentwise; zero for the third axis of a 2D grid."""
    if axis >= grid.dims:
        return np.zeros_like(f)
    return _deriv(grid, f, axis)


def div(grid: Grid, v):
    v = grid.check(v, 1)
    return sum(partial(grid, v[i], i) for i in range(v.shape[0]))


def curl(grid: Grid, v):
    v = grid.check(v, 1)
    if v.shape[0] == 2:
        v = np.concatenate([v, np.zeros((1,) + grid.shape)])
    if v.shape[0] != 3:
        raise ContractError("curl needs 2 or 3 components")
    d = lambda i, ax: partial(grid, v[i], ax)   # noqa: E731
    return np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])


def laplacian(grid: Grid, f):
    f = np.asarray(f, dtype=float)
    return grid.ifft(-grid.k2 * grid.fft(f))


def directional(grid: Grid, u, f):
    """``(u . grad) f`` for scalar or vector ``f``, dealiased."""
    f = np.asarray(f, dtype=float)
    if f.ndim == grid.dims:
        return dealias(grid, sum(u[j] * partial(grid, f, j) for j in range(min(grid.dims, u.shape[0]))))
    return np.stack([directional(grid, u, fi) for fi in f])


def dealias(grid: Grid, f):
    return grid.ifft(grid.fft(f) * grid.dealias_mask)


def nonlinear_product(grid: Grid, a, b):
    """Pointwise product followed by 2/3-rule truncation."""
    return dealias(grid, np.asarray(a, dtype=float) * np.asarray(b, dtype=float))


def leray(grid: Grid, v):
    """Projection onto divergence-free fields (mean kept)."""
    v = grid.check(v, 1)
    vh = grid.fft(v)
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    ks = list(grid.ik) + [0.0] * (v.shape[0] - grid.dims)
    dv = sum(ks[i] * vh[i] for i in range(v.shape[0]))
    out = np.stack([vh[i] + ks[i] * dv / k2 if i < grid.dims else vh[i] for i in range(v.shape[0])])
    return grid.ifft(out)


def one_form_rhs(grid: Grid, u, A, nu=0.0):
    """``dA_i/dt = -u_j d_j A_i - A_j d_i u_j + nu Lap A_i``.

    Equivalent to ``u x curl A - grad(u . A) + nu Lap A``.
    """
    A = grid.check(A, 1)
    adv = directional(grid, u, A)
    stretch = np.stack([
        dealias(grid, sum(A[j] * partial(grid, u[j], i) for j in range(min(A.shape[0], u.shape[0]))))
        for i in range(A.shape[0])])
    out = -adv - stretch
    if nu:
        out = out + nu * laplacian(grid, A)
    return out


def random_band_limited(grid: Grid, rng, components=None, kmax=4):
    """Random smooth real field with modes ``|k_i| <= kmax``."""
    shape = grid.shape if components is None else (components,) + grid.shape
    fh = grid.fft(rng.standard_normal(shape))
    keep = np.ones(grid.spectral_shape, dtype=bool)
    for k in grid.wavenumbers:
        keep = keep & (np.abs(k) <= kmax)
    return grid.ifft(fh * keep)


# -- field dumps ---------------------------------------------------------------

def dump_field(path, f, grid: Grid, time=0.0):
    """Write ``f`` as little-endian float64, row-major, with a JSON sidecar."""
    path = Path(path)
    f = np.asarray(f, dtype="<f8")
    comps = 1 if f.ndim == grid.dims else f.shape[0]
    path.write_bytes(np.ascontiguousarray(f).tobytes(order="C"))
    meta = {"dims": grid.dims, "n": grid.n, "components": comps, "time": float(time)}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, sort_keys=True))
    return meta


def load_field(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    shape = (meta["n"],) * meta["dims"]
    if meta["components"] > 1:
        shape = (meta["components"],) + shape
    data = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(shape)
    return data, Grid(meta["dims"], meta["n"]), meta["time"]
