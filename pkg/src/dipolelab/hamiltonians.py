"""Potentials and the generators of the dynamics, applied matrix-free.

Units: hbar = e = 1, m = 1/2, so the kinetic operator is -Laplacian with unit
coefficient and a hydrogen-like attraction reads -2Z/r (softened on grids).

Three generator kinds:

  full            (-i grad - b(r,t))^2 + V,  b(r,t) = (1/omega) a(r/lam, omega t)
  dipole_velocity (-i grad - b(t))^2 + V,    b(t)   = (1/omega) a(0, omega t)
  dipole_length   -Laplacian + V + da/dt(0, omega t).r

expanded in Coulomb gauge as -Lap + 2i b.grad + |b|^2 + V.  Vector components
of b beyond the grid dimension (transverse geometries) cannot act through the
gradient; they contribute through |b|^2 only, which is exactly the reduction
of the transverse-momentum zero sector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .fields import (ScaledField, grid_ray_coordinate, is_commensurate,
                     profile_derivative, profile_value)
from .spatial import Grid, WaveFunction, inner_product

FULL = "full"
DIPOLE_VELOCITY = "dipole_velocity"
DIPOLE_LENGTH = "dipole_length"

SOFT_CORE = "soft_core"
GAUSSIAN_WELL = "gaussian_well"
NBODY_SOFT_CORE = "nbody_soft_core"
ZERO_POTENTIAL = "zero"


@dataclass(frozen=True)
class PotentialModel:
    kind: str
    z: float = 0.0
    eps: float = 1.0
    depth: float = 0.0
    width: float = 1.0
    n_particles: int = 1


def soft_core_coulomb(z: float = 1.0, eps: float = 1.0) -> PotentialModel:
    """V(x) = -2Z / sqrt(|x|^2 + eps^2); eps > 0 regularizes the singularity."""
    if eps <= 0:
        raise ConfigError("softening length must be positive")
    return PotentialModel(SOFT_CORE, z=float(z), eps=float(eps))


def gaussian_well(depth: float, width: float) -> PotentialModel:
    """V(x) = -depth * exp(-|x|^2 / (2 width^2))."""
    if depth <= 0 or width <= 0:
        raise ConfigError("well depth and width must be positive")
    return PotentialModel(GAUSSIAN_WELL, depth=float(depth), width=float(width))


def n_body_soft_core(n_particles: int, eps: float = 1.0) -> PotentialModel:
    """Atom with N electrons: -sum_k 2N/|r_k| + sum_{k<l} 2/|r_k - r_l|, softened."""
    if n_particles < 1:
        raise ConfigError("particle count must be >= 1")
    if eps <= 0:
        raise ConfigError("softening length must be positive")
    return PotentialModel(NBODY_SOFT_CORE, eps=float(eps), n_particles=int(n_particles))


def zero_potential() -> PotentialModel:
    return PotentialModel(ZERO_POTENTIAL)


def build_nbody(n_particles: int, eps: float, grid: Grid) -> PotentialModel:
    """n_body_soft_core validated against a product grid."""
    if grid.particles != n_particles:
        raise ConfigError(
            f"grid holds {grid.particles} particles, requested {n_particles}")
    return n_body_soft_core(n_particles, eps)


_potential_cache: dict = {}


def potential_on_grid(pot: PotentialModel, grid: Grid) -> np.ndarray:
    """Sampled potential values, cached per (potential, grid geometry)."""
    key = (pot, grid.shape, grid.lengths, grid.particles)
    hit = _potential_cache.get(key)
    if hit is not None:
        return hit
    out = _sample_potential(pot, grid)
    if not np.all(np.isfinite(out)):
        raise ConfigError("potential samples are not finite")
    out.setflags(write=False)
    _potential_cache[key] = out
    return out


def _radius_sq(grid: Grid, particle: int) -> np.ndarray:
    d = grid.per_particle_dim
    r2 = np.zeros((1,) * grid.dim)
    for i in range(d):
        x = grid.mesh(particle * d + i)
        r2 = r2 + x * x
    return r2


def _sample_potential(pot: PotentialModel, grid: Grid) -> np.ndarray:
    if pot.kind == ZERO_POTENTIAL:
        return np.zeros(grid.shape)
    if pot.kind == SOFT_CORE:
        r2 = np.zeros(grid.shape)
        for axis in range(grid.dim):
            x = grid.mesh(axis)
            r2 = r2 + x * x
        return -2.0 * pot.z / np.sqrt(r2 + pot.eps ** 2)
    if pot.kind == GAUSSIAN_WELL:
        r2 = np.zeros(grid.shape)
        for axis in range(grid.dim):
            x = grid.mesh(axis)
            r2 = r2 + x * x
        return -pot.depth * np.exp(-r2 / (2.0 * pot.width ** 2))
    if pot.kind == NBODY_SOFT_CORE:
        n = pot.n_particles
        if grid.particles != n:
            raise ConfigError("grid particle structure does not match the potential")
        d = grid.per_particle_dim
        eps2 = pot.eps ** 2
        v = np.zeros(grid.shape)
        for p in range(n):
            v = v - 2.0 * n / np.sqrt(_radius_sq(grid, p) + eps2)
        for p in range(n):
            for q in range(p + 1, n):
                sep2 = np.zeros((1,) * grid.dim)
                for i in range(d):
                    diff = grid.mesh(p * d + i) - grid.mesh(q * d + i)
                    sep2 = sep2 + diff * diff
                v = v + 2.0 / np.sqrt(sep2 + eps2)
        return v
    raise ConfigError(f"unknown potential kind {pot.kind!r}")


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """Which generator (full / dipole velocity / dipole length) plus V."""

    kind: str
    field: ScaledField
    potential: PotentialModel

    def __post_init__(self):
        if self.kind not in (FULL, DIPOLE_VELOCITY, DIPOLE_LENGTH):
            raise ConfigError(f"unknown Hamiltonian kind {self.kind!r}")


def full_coupling(field: ScaledField, potential: PotentialModel) -> HamiltonianSpec:
    return HamiltonianSpec(FULL, field, potential)


def dipole_velocity(field: ScaledField, potential: PotentialModel) -> HamiltonianSpec:
    return HamiltonianSpec(DIPOLE_VELOCITY, field, potential)


def dipole_length(field: ScaledField, potential: PotentialModel) -> HamiltonianSpec:
    return HamiltonianSpec(DIPOLE_LENGTH, field, potential)


def dipole_coupling(field: ScaledField, t: float, grid: Grid):
    """Spatially constant coupling b(t) = (1/omega) a(0, omega t).

    Returns (b_axis, b_sq_total): the on-grid component per grid axis
    (repeating over particles) and the summed full |b|^2 over particles.
    """
    env = field.envelope
    f0 = float(profile_value(env.kind, -field.omega * t))
    scale = env.amplitude * f0 / field.omega
    d = grid.per_particle_dim
    b_axis = np.zeros(grid.dim)
    for p in range(grid.particles):
        for i in range(d):
            eps_i = env.eps_hat[i] if i < env.field_dim else 0.0
            b_axis[p * d + i] = scale * eps_i
    b_sq_total = grid.particles * scale * scale
    return b_axis, b_sq_total


def length_gauge_term(field: ScaledField, t: float, grid: Grid) -> np.ndarray:
    """(d/dt a)(0, omega t) . r  ==  -E(0,t) . r, on-grid components."""
    env = field.envelope
    # a(0, s) = E f(-s) eps_hat, so d/ds a(0, s) = -E f'(-s) eps_hat.
    adot = -env.amplitude * float(profile_derivative(env.kind, -field.omega * t, 1))
    d = grid.per_particle_dim
    term = np.zeros((1,) * grid.dim)
    for p in range(grid.particles):
        for i in range(d):
            eps_i = env.eps_hat[i] if i < env.field_dim else 0.0
            if eps_i == 0.0:
                continue
            term = term + adot * eps_i * grid.mesh(p * d + i)
    return np.broadcast_to(term, grid.shape) if term.shape != grid.shape else term


def full_coupling_arrays(field: ScaledField, t: float, grid: Grid):
    """Sampled b(r,t) for the full generator.

    Returns (b_axes, b_sq): a list of (axis, broadcastable array) for grid
    axes with a nonzero polarization component, and the full |b|^2 summed over
    particles (always including off-grid polarization components).
    """
    env = field.envelope
    d = grid.per_particle_dim
    amp = env.amplitude / field.omega
    b_axes = []
    b_sq = np.zeros((1,) * grid.dim)
    for p in range(grid.particles):
        u = grid_ray_coordinate(env, grid, p, field.lam, field.omega * t)
        f = profile_value(env.kind, u)
        bp = amp * f
        b_sq = b_sq + bp * bp
        for i in range(d):
            eps_i = env.eps_hat[i] if i < env.field_dim else 0.0
            if eps_i != 0.0:
                b_axes.append((p * d + i, bp * eps_i))
    return b_axes, b_sq


def hamiltonian_apply_fn(spec: HamiltonianSpec, t: float,
                         grid: Grid) -> Callable[[np.ndarray], np.ndarray]:
    """Closure applying H(t) to raw value arrays; field data frozen at t."""
    v = potential_on_grid(spec.potential, grid)
    k_sq = grid.k_square

    if spec.kind == DIPOLE_LENGTH:
        v_eff = v + length_gauge_term(spec.field, t, grid)

        def apply_length(values: np.ndarray) -> np.ndarray:
            vhat = np.fft.fftn(values)
            return np.fft.ifftn(k_sq * vhat) + v_eff * values

        return apply_length

    if spec.kind == DIPOLE_VELOCITY:
        b_axis, b_sq_total = dipole_coupling(spec.field, t, grid)
        v_eff = v + b_sq_total
        sym = k_sq.copy()
        for axis in range(grid.dim):
            if b_axis[axis] != 0.0:
                sym = sym - 2.0 * b_axis[axis] * grid.k_mesh(axis)

        def apply_velocity(values: np.ndarray) -> np.ndarray:
            vhat = np.fft.fftn(values)
            return np.fft.ifftn(sym * vhat) + v_eff * values

        return apply_velocity

    # full coupling
    if not is_commensurate(spec.field.envelope, grid, spec.field.lam):
        raise ConfigError(
            "full-coupling generator requires a commensurate field on the grid")
    b_axes, b_sq = full_coupling_arrays(spec.field, t, grid)
    v_eff = v + b_sq

    def apply_full(values: np.ndarray) -> np.ndarray:
        vhat = np.fft.fftn(values)
        out = np.fft.ifftn(k_sq * vhat) + v_eff * values
        for axis, b in b_axes:
            grad = np.fft.ifftn(vhat * (1j * grid.k_mesh(axis)))
            out = out + 2j * b * grad
        return out

    return apply_full


def apply_hamiltonian(spec: HamiltonianSpec, t: float, psi: WaveFunction) -> WaveFunction:
    """H(t) psi on psi's grid."""
    if psi.space != "position":
        raise ConfigError("apply_hamiltonian expects a position-space state")
    fn = hamiltonian_apply_fn(spec, t, psi.grid)
    return WaveFunction(psi.grid, fn(psi.values))


def random_probes(grid: Grid, count: int, seed: int) -> list[WaveFunction]:
    """Normalized complex Gaussian noise states (deterministic per seed)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        n = np.linalg.norm(vals.ravel()) * np.sqrt(grid.cell_volume)
        out.append(WaveFunction(grid, vals / n))
    return out


def hermiticity_defect(spec: HamiltonianSpec, t: float, grid: Grid,
                       probes=None, count: int = 8, seed: int = 7041) -> float:
    """max |<phi, H psi> - <H phi, psi>| over a probe set (discrete self-adjointness)."""
    if probes is None:
        probes = random_probes(grid, max(count, 8), seed)
    fn = hamiltonian_apply_fn(spec, t, grid)
    applied = [WaveFunction(grid, fn(p.values)) for p in probes]
    worst = 0.0
    for i, phi in enumerate(probes):
        for j, psi in enumerate(probes):
            if j < i:
                continue
            lhs = inner_product(phi, applied[j])
            rhs = inner_product(applied[i], psi)
            worst = max(worst, abs(lhs - rhs))
    return worst
