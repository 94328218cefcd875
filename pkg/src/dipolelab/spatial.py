"""Periodic tensor grids, wavefunctions, and spectral operations.

Discrete L2 convention: the norm carries the volume element, so grid
refinement leaves norms invariant.  The Fourier pair is unitary between the
position measure (prod dx) and the momentum measure (prod dk, dk = 2*pi/L).
Boxes are centered: coordinates run over [-L/2, L/2).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import erfc

from .errors import ConfigError

MEMORY_CAP_POINTS = 1 << 22

SNAPSHOT_MAGIC = b"DPLW"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Grid:
    """Periodic tensor-product grid; axes may be grouped into particles."""

    shape: tuple[int, ...]
    lengths: tuple[float, ...]
    particles: int = 1

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def per_particle_dim(self) -> int:
        return self.dim // self.particles

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(l / n for l, n in zip(self.lengths, self.shape))

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def momentum_cell_volume(self) -> float:
        return float(np.prod([2.0 * np.pi / l for l in self.lengths]))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        dx = self.spacing[axis]
        return -0.5 * self.lengths[axis] + dx * np.arange(n)

    def mesh(self, axis: int) -> np.ndarray:
        """Coordinate array along one axis, shaped for broadcasting."""
        x = self.axis_coordinates(axis)
        shape = [1] * self.dim
        shape[axis] = self.shape[axis]
        return x.reshape(shape)

    def k_axis(self, axis: int) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.shape[axis], d=self.spacing[axis])

    def k_mesh(self, axis: int) -> np.ndarray:
        k = self.k_axis(axis)
        shape = [1] * self.dim
        shape[axis] = self.shape[axis]
        return k.reshape(shape)

    @cached_property
    def k_square(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for axis in range(self.dim):
            out = out + self.k_mesh(axis) ** 2
        return out


def make_grid(dim: int, points, lengths, particles: int = 1,
              memory_cap: int = MEMORY_CAP_POINTS) -> Grid:
    """Validated grid constructor: powers of two, >= 8 points per axis."""
    if isinstance(points, (int, np.integer)):
        points = [int(points)] * dim
    if isinstance(lengths, (int, float, np.floating)):
        lengths = [float(lengths)] * dim
    points = [int(p) for p in points]
    lengths = [float(l) for l in lengths]
    if len(points) != dim or len(lengths) != dim:
        raise ConfigError("points and lengths must match the grid dimension")
    for p in points:
        if p < 8 or (p & (p - 1)) != 0:
            raise ConfigError(f"points per axis must be a power of two >= 8, got {p}")
    for l in lengths:
        if not l > 0:
            raise ConfigError("box lengths must be positive")
    if particles < 1 or dim % particles != 0:
        raise ConfigError("particle count must divide the grid dimension")
    total = int(np.prod(points))
    if total > memory_cap:
        raise ConfigError(f"grid of {total} points exceeds the memory cap {memory_cap}")
    return Grid(shape=tuple(points), lengths=tuple(lengths), particles=particles)


class WaveFunction:
    """Complex amplitudes on a grid, in position or momentum space."""

    __slots__ = ("grid", "values", "space")

    def __init__(self, grid: Grid, values: np.ndarray, space: str = "position"):
        values = np.asarray(values, dtype=complex)
        if values.shape != grid.shape:
            raise ConfigError("values shape does not match grid shape")
        if space not in ("position", "momentum"):
            raise ConfigError(f"unknown space {space!r}")
        if not np.all(np.isfinite(values.view(float))):
            raise ConfigError("wavefunction amplitudes must be finite")
        self.grid = grid
        self.values = values
        self.space = space

    def copy(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.values.copy(), self.space)

    @property
    def measure(self) -> float:
        return (self.grid.cell_volume if self.space == "position"
                else self.grid.momentum_cell_volume)


def inner_product(phi: WaveFunction, psi: WaveFunction) -> complex:
    """<phi, psi> with the volume element; exact trapezoid on a periodic grid."""
    if phi.grid is not psi.grid and (phi.grid.shape != psi.grid.shape
                                     or phi.grid.lengths != psi.grid.lengths):
        raise ConfigError("inner product of states on different grids")
    if phi.space != psi.space:
        raise ConfigError("inner product across position/momentum spaces")
    return complex(np.vdot(phi.values, psi.values) * phi.measure)


def norm(psi: WaveFunction) -> float:
    return float(np.linalg.norm(psi.values.ravel()) * np.sqrt(psi.measure))


def normalize(psi: WaveFunction) -> WaveFunction:
    n = norm(psi)
    if n == 0.0:
        raise ConfigError("cannot normalize the zero state")
    return WaveFunction(psi.grid, psi.values / n, psi.space)


def gaussian_packet(grid: Grid, center, sigma: float, momentum=None) -> WaveFunction:
    """Normalized Gaussian exp(-(x-c)^2/(2 sigma^2) + i k0.x).

    <x> = center, <p> = k0, <x_i^2 about center> = sigma^2/2 per axis.
    """
    center = np.broadcast_to(np.atleast_1d(np.asarray(center, float)), (grid.dim,))
    if momentum is None:
        momentum = np.zeros(grid.dim)
    momentum = np.broadcast_to(np.atleast_1d(np.asarray(momentum, float)), (grid.dim,))
    sigma = float(sigma)
    max_dx = max(grid.spacing)
    if sigma <= 2.0 * max_dx:
        raise ConfigError(f"sigma {sigma} too small for grid spacing {max_dx}")
    tail = 0.0
    for axis in range(grid.dim):
        half = 0.5 * grid.lengths[axis]
        for wall in (half - center[axis], half + center[axis]):
            if wall <= 0:
                raise ConfigError("packet center outside the box")
            tail += 0.5 * erfc(wall / sigma)
    if tail > 1e-12:
        raise ConfigError(f"packet tail mass {tail:.2e} at the boundary exceeds 1e-12")
    phase = np.zeros(grid.shape)
    r2 = np.zeros(grid.shape)
    for axis in range(grid.dim):
        x = grid.mesh(axis) - center[axis]
        r2 = r2 + x * x
        phase = phase + momentum[axis] * grid.mesh(axis)
    values = np.exp(-r2 / (2.0 * sigma * sigma) + 1j * phase)
    return normalize(WaveFunction(grid, values))


def to_momentum(psi: WaveFunction) -> WaveFunction:
    if psi.space != "position":
        raise ConfigError("to_momentum expects a position-space state")
    scale = psi.grid.cell_volume / (2.0 * np.pi) ** (psi.grid.dim / 2.0)
    return WaveFunction(psi.grid, np.fft.fftn(psi.values) * scale, space="momentum")


def from_momentum(psi_hat: WaveFunction) -> WaveFunction:
    if psi_hat.space != "momentum":
        raise ConfigError("from_momentum expects a momentum-space state")
    scale = (2.0 * np.pi) ** (psi_hat.grid.dim / 2.0) / psi_hat.grid.cell_volume
    return WaveFunction(psi_hat.grid, np.fft.ifftn(psi_hat.values * scale))


def spectral_axis_derivative(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """d/dx_axis via the Fourier multiplier i*k (raw array in, raw array out)."""
    vhat = np.fft.fft(values, axis=axis)
    k = grid.k_axis(axis)
    shape = [1] * grid.dim
    shape[axis] = grid.shape[axis]
    return np.fft.ifft(vhat * (1j * k.reshape(shape)), axis=axis)


def spectral_gradient(psi: WaveFunction) -> tuple[WaveFunction, ...]:
    vhat = np.fft.fftn(psi.values)
    out = []
    for axis in range(psi.grid.dim):
        out.append(WaveFunction(
            psi.grid, np.fft.ifftn(vhat * (1j * psi.grid.k_mesh(axis)))))
    return tuple(out)


def spectral_laplacian(psi: WaveFunction) -> WaveFunction:
    vhat = np.fft.fftn(psi.values)
    return WaveFunction(psi.grid, np.fft.ifftn(-psi.grid.k_square * vhat))


def expectations(psi: WaveFunction) -> dict:
    """{<x> per axis, <p> per axis, <x^2> summed, <p^2> summed} for reports."""
    g = psi.grid
    dens = np.abs(psi.values) ** 2 * g.cell_volume
    total = float(dens.sum())
    x_mean = np.array([float((g.mesh(a) * dens).sum()) for a in range(g.dim)]) / total
    x2 = sum(float(((g.mesh(a) - x_mean[a]) ** 2 * dens).sum()) for a in range(g.dim)) / total
    vhat = np.fft.fftn(psi.values)
    dens_k = np.abs(vhat) ** 2
    wk = float(dens_k.sum())
    p_mean = np.array([float((g.k_mesh(a) * dens_k).sum()) for a in range(g.dim)]) / wk
    p2 = float((g.k_square * dens_k).sum()) / wk
    return {"x": x_mean, "p": p_mean, "x2": x2, "p2": p2}


def write_snapshot(path, psi: WaveFunction) -> None:
    """Binary state dump: magic 'DPLW', version, dims, lengths, (re, im) pairs."""
    g = psi.grid
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<II", SNAPSHOT_VERSION, g.dim))
        fh.write(struct.pack(f"<{g.dim}I", *g.shape))
        fh.write(struct.pack(f"<{g.dim}d", *g.lengths))
        inter = np.empty(g.shape + (2,))
        inter[..., 0] = psi.values.real
        inter[..., 1] = psi.values.imag
        fh.write(inter.astype("<f8").tobytes(order="C"))


def read_snapshot(path, particles: int = 1) -> WaveFunction:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ConfigError(f"bad snapshot magic {magic!r}")
        version, dim = struct.unpack("<II", fh.read(8))
        if version != SNAPSHOT_VERSION:
            raise ConfigError(f"unsupported snapshot version {version}")
        shape = struct.unpack(f"<{dim}I", fh.read(4 * dim))
        lengths = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        n = int(np.prod(shape))
        raw = np.frombuffer(fh.read(16 * n), dtype="<f8").reshape(shape + (2,))
    grid = Grid(shape=tuple(shape), lengths=tuple(lengths), particles=particles)
    return WaveFunction(grid, raw[..., 0] + 1j * raw[..., 1])
