"""Unitary map between the velocity- and length-gauge dipole evolutions.

The map multiplies by exp(-i b(t).r) with b(t) = (1/omega) a(0, omega t),
using the on-grid components of b.  It conjugates (-i grad - b)^2 to the bare
Laplacian, so the length-gauge generator carries the -E(0,t).r term instead;
any off-grid |b|^2 remainder is spatially constant and therefore a pure global
phase, which is why state comparison here is phase-insensitive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fields import ScaledField
from .hamiltonians import dipole_coupling
from .spatial import WaveFunction, inner_product, norm

VELOCITY_TO_LENGTH = "velocity_to_length"
LENGTH_TO_VELOCITY = "length_to_velocity"


def _phase_field(field: ScaledField, t: float, grid) -> np.ndarray:
    b_axis, _ = dipole_coupling(field, t, grid)
    phase = np.zeros((1,) * grid.dim)
    for axis in range(grid.dim):
        if b_axis[axis] != 0.0:
            phase = phase + b_axis[axis] * grid.mesh(axis)
    return phase


def velocity_to_length(psi_v: WaveFunction, field: ScaledField, t: float) -> WaveFunction:
    """psi_L(t) = exp(-i b(t).r) psi_V(t); norm-preserving to roundoff."""
    phase = _phase_field(field, t, psi_v.grid)
    return WaveFunction(psi_v.grid, psi_v.values * np.exp(-1j * phase))


def length_to_velocity(psi_l: WaveFunction, field: ScaledField, t: float) -> WaveFunction:
    """Inverse multiplier exp(+i b(t).r)."""
    phase = _phase_field(field, t, psi_l.grid)
    return WaveFunction(psi_l.grid, psi_l.values * np.exp(1j * phase))


@dataclass(frozen=True, eq=False)
class GaugeMap:
    """Directional wrapper around the multiplier; involutive with its inverse."""

    field: ScaledField
    direction: str

    def __post_init__(self):
        if self.direction not in (VELOCITY_TO_LENGTH, LENGTH_TO_VELOCITY):
            raise ConfigError(f"unknown gauge direction {self.direction!r}")

    def apply(self, psi: WaveFunction, t: float) -> WaveFunction:
        if self.direction == VELOCITY_TO_LENGTH:
            return velocity_to_length(psi, self.field, t)
        return length_to_velocity(psi, self.field, t)

    def inverse(self) -> "GaugeMap":
        other = (LENGTH_TO_VELOCITY if self.direction == VELOCITY_TO_LENGTH
                 else VELOCITY_TO_LENGTH)
        return GaugeMap(self.field, other)


def phase_fidelity(psi1: WaveFunction, psi2: WaveFunction) -> float:
    """|<psi1, psi2>| / (||psi1|| ||psi2||): 1 iff equal up to a global phase."""
    n1 = norm(psi1)
    n2 = norm(psi2)
    if n1 == 0.0 or n2 == 0.0:
        raise ConfigError("phase fidelity of a zero state")
    return abs(inner_product(psi1, psi2)) / (n1 * n2)
