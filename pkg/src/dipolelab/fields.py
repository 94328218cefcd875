"""Laser envelopes, the wavelength scaling of the vector potential, and Maxwell checks.

An envelope is a dimensionless transverse vector field

    a(x, t) = E * f(u) * eps_hat,    u = 2*pi*k_hat.x - t,

with profile f(u) = sin(u) for a continuous wave and f(u) = F(u) (the
quadrature primitive of exp(-u^2)*cos(u), integrated down from +infinity) for a
Gaussian pulse.  A ``ScaledField`` realizes the physical coupling at wavelength
``lam`` and angular frequency ``omega``: the vector potential divided by the
speed of light is (1/omega) * a(r/lam, omega*t), so the speed of light never
appears as an independent parameter (c_derived = omega*lam/(2*pi) is reporting
metadata only).

Geometry convention: propagation and polarization vectors live in a "field
space" whose dimension may exceed the simulation grid's.  Grid coordinates
embed as the leading field coordinates (padded with zeros).  A 1D run along
the propagation axis therefore carries a polarization pointing off-grid; its
coupling survives only through |a|^2.  Two-dimensional single-particle runs
can hold both vectors in-plane and exercise the gradient coupling as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import ConfigError

CW = "cw"
PULSE = "pulse"
ZERO = "zero"

UNIT_TOL = 1e-12

# Window and spacing of the tabulated pulse primitive.  Outside the window the
# profile is constant to ~1e-30, so clamping is exact for double precision.
PULSE_WINDOW = 8.0
_PULSE_SPACING = 1.0 / 512.0
_PULSE_QUAD_ABSTOL = 1e-12

_pulse_spline: CubicSpline | None = None


def _pulse_integrand(s):
    return np.exp(-s * s) * np.cos(s)


def _build_pulse_table() -> CubicSpline:
    """Tabulate F(u) = -int_u^inf exp(-s^2) cos(s) ds on a dense lattice."""
    n = int(round(2 * PULSE_WINDOW / _PULSE_SPACING))
    us = -PULSE_WINDOW + _PULSE_SPACING * np.arange(n + 1)
    left, _ = quad(_pulse_integrand, -PULSE_WINDOW, np.inf,
                   epsabs=_PULSE_QUAD_ABSTOL, limit=400)
    segments = np.empty(n)
    for j in range(n):
        segments[j], _ = quad(_pulse_integrand, us[j], us[j + 1],
                              epsabs=_PULSE_QUAD_ABSTOL)
    vals = np.empty(n + 1)
    vals[0] = -left
    vals[1:] = -left + np.cumsum(segments)
    return CubicSpline(us, vals)


def _pulse_primitive() -> CubicSpline:
    global _pulse_spline
    if _pulse_spline is None:
        _pulse_spline = _build_pulse_table()
    return _pulse_spline


def profile_value(kind: str, u):
    """Scalar profile f(u); vectorized over u."""
    u = np.asarray(u, dtype=float)
    if kind == CW:
        return np.sin(u)
    if kind == PULSE:
        return _pulse_primitive()(np.clip(u, -PULSE_WINDOW, PULSE_WINDOW))
    if kind == ZERO:
        return np.zeros_like(u)
    raise ConfigError(f"unknown envelope kind {kind!r}")


def profile_derivative(kind: str, u, order: int = 1):
    """d^order f / du^order, closed form; vectorized over u."""
    u = np.asarray(u, dtype=float)
    if order not in (1, 2):
        raise ConfigError(f"derivative order must be 1 or 2, got {order}")
    if kind == CW:
        return np.cos(u) if order == 1 else -np.sin(u)
    if kind == PULSE:
        g = np.exp(-u * u)
        if order == 1:
            return g * np.cos(u)
        return -g * (2.0 * u * np.cos(u) + np.sin(u))
    if kind == ZERO:
        return np.zeros_like(u)
    raise ConfigError(f"unknown envelope kind {kind!r}")


@dataclass(frozen=True, eq=False)
class LaserEnvelope:
    """Dimensionless envelope a(x,t): kind, strength E, and unit vectors.

    Invariants (enforced by the factory constructors, measured by
    ``check_transversality``): |k_hat| = |eps_hat| = 1 and k_hat.eps_hat = 0
    to 1e-12.  Direct construction skips validation so broken fixtures can be
    built for negative-control tests.
    """

    kind: str
    amplitude: float
    k_hat: np.ndarray
    eps_hat: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k_hat, dtype=float).copy()
        e = np.asarray(self.eps_hat, dtype=float).copy()
        k.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "k_hat", k)
        object.__setattr__(self, "eps_hat", e)

    @property
    def field_dim(self) -> int:
        return self.k_hat.shape[0]


def validate_envelope(env: LaserEnvelope) -> None:
    if env.kind not in (CW, PULSE, ZERO):
        raise ConfigError(f"unknown envelope kind {env.kind!r}")
    if env.k_hat.ndim != 1 or env.eps_hat.shape != env.k_hat.shape:
        raise ConfigError("k_hat and eps_hat must be 1D vectors of equal length")
    if env.kind == ZERO:
        return
    if abs(np.linalg.norm(env.k_hat) - 1.0) > UNIT_TOL:
        raise ConfigError("k_hat is not a unit vector")
    if abs(np.linalg.norm(env.eps_hat) - 1.0) > UNIT_TOL:
        raise ConfigError("eps_hat is not a unit vector")
    if abs(float(np.dot(env.k_hat, env.eps_hat))) > UNIT_TOL:
        raise ConfigError("k_hat and eps_hat are not transversal")
    if not np.isfinite(env.amplitude):
        raise ConfigError("amplitude must be finite")


def plane_wave_cw(amplitude: float, k_hat: Sequence[float],
                  eps_hat: Sequence[float]) -> LaserEnvelope:
    env = LaserEnvelope(CW, float(amplitude), np.asarray(k_hat, float),
                        np.asarray(eps_hat, float))
    validate_envelope(env)
    return env


def gaussian_pulse(amplitude: float, k_hat: Sequence[float],
                   eps_hat: Sequence[float]) -> LaserEnvelope:
    env = LaserEnvelope(PULSE, float(amplitude), np.asarray(k_hat, float),
                        np.asarray(eps_hat, float))
    validate_envelope(env)
    return env


def zero_envelope(field_dim: int = 2) -> LaserEnvelope:
    k = np.zeros(field_dim)
    e = np.zeros(field_dim)
    return LaserEnvelope(ZERO, 0.0, k, e)


def transverse_envelope(kind: str, amplitude: float, grid_dim: int) -> LaserEnvelope:
    """Propagation along grid axis 1, polarization pointing off-grid.

    Field space has grid_dim + 1 components; the envelope has no on-grid
    vector component, so only |a|^2 couples to the dynamics.
    """
    if kind == ZERO:
        return zero_envelope(grid_dim + 1)
    k = np.zeros(grid_dim + 1)
    k[0] = 1.0
    e = np.zeros(grid_dim + 1)
    e[-1] = 1.0
    env = LaserEnvelope(kind, float(amplitude), k, e)
    validate_envelope(env)
    return env


def in_plane_envelope(kind: str, amplitude: float) -> LaserEnvelope:
    """Propagation along axis 1, polarization along axis 2 (2D+ grids only)."""
    if kind == ZERO:
        return zero_envelope(2)
    env = LaserEnvelope(kind, float(amplitude),
                        np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    validate_envelope(env)
    return env


def _embed(env: LaserEnvelope, x) -> np.ndarray:
    """Pad a (batch of) position(s) with zeros up to the field dimension."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = env.field_dim
    if x.shape[-1] > m:
        raise ConfigError(
            f"position dimension {x.shape[-1]} exceeds field dimension {m}")
    if x.shape[-1] == m:
        return x
    pad = [(0, 0)] * (x.ndim - 1) + [(0, m - x.shape[-1])]
    return np.pad(x, pad)


def ray_coordinate(env: LaserEnvelope, x, t: float) -> np.ndarray:
    """u = 2*pi*k_hat.x - t for envelope coordinates (x, t)."""
    xe = _embed(env, x)
    return 2.0 * np.pi * (xe @ env.k_hat) - t


def eval_envelope(env: LaserEnvelope, x, t: float) -> np.ndarray:
    """a(x, t); x may be a scalar, a vector, or a batch (..., d<=field_dim)."""
    u = ray_coordinate(env, x, t)
    f = profile_value(env.kind, u)
    return env.amplitude * np.multiply.outer(f, env.eps_hat)


def eval_envelope_dt(env: LaserEnvelope, x, t: float, order: int = 1) -> np.ndarray:
    """Analytic time derivative of the envelope, order 1 or 2."""
    u = ray_coordinate(env, x, t)
    sign = -1.0 if order == 1 else 1.0
    f = profile_derivative(env.kind, u, order)
    return sign * env.amplitude * np.multiply.outer(f, env.eps_hat)


@dataclass(frozen=True, eq=False)
class ScaledField:
    """An envelope realized at wavelength lam and angular frequency omega.

    Envelope validity is the envelope factories' concern; broken envelopes can
    be carried here deliberately as negative-control fixtures.
    """

    envelope: LaserEnvelope
    lam: float
    omega: float

    def __post_init__(self):
        if not (self.lam > 0.0 and self.omega > 0.0):
            raise ConfigError("lam and omega must be positive")

    @property
    def c_derived(self) -> float:
        """Speed of light implied by (lam, omega); reporting metadata only."""
        return self.omega * self.lam / (2.0 * np.pi)

    def with_lambda(self, lam: float) -> "ScaledField":
        return ScaledField(self.envelope, float(lam), self.omega)


def eval_scaled_A(fld: ScaledField, r, t: float) -> np.ndarray:
    """(1/omega) * a(r/lam, omega*t): the coupling as it enters the generator.

    The bare vector potential is this value times c_derived.
    """
    r = np.asarray(r, dtype=float)
    return eval_envelope(fld.envelope, r / fld.lam, fld.omega * t) / fld.omega


def eval_E_field(fld: ScaledField, r, t: float) -> np.ndarray:
    """Electric field -d/dt a at scaled arguments (the c factors cancel)."""
    r = np.asarray(r, dtype=float)
    return -eval_envelope_dt(fld.envelope, r / fld.lam, fld.omega * t, order=1)


@dataclass(frozen=True)
class TransversalityReport:
    defect: float
    passed: bool
    tol: float = UNIT_TOL


def check_transversality(env: LaserEnvelope) -> TransversalityReport:
    """|k_hat . eps_hat| against the 1e-12 gate."""
    defect = abs(float(np.dot(env.k_hat, env.eps_hat)))
    return TransversalityReport(defect=defect, passed=defect <= UNIT_TOL)


def is_commensurate(env: LaserEnvelope, grid, lam: float) -> bool:
    """Whether the scaled field is exactly periodic on the grid.

    Plane waves need an integer number of wavelengths along every axis with a
    nonzero propagation component.  The pulse has no spatial period and enters
    the axis-aligned geometries as a multiplication operator, so it carries no
    periodicity requirement; the zero envelope is trivially periodic.
    """
    if env.kind != CW:
        return True
    d = grid.per_particle_dim
    for i in range(d):
        k_i = env.k_hat[i] if i < env.field_dim else 0.0
        if abs(k_i) < 1e-15:
            continue
        for p in range(grid.particles):
            ratio = abs(k_i) * grid.lengths[p * d + i] / lam
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
                return False
    return True


def snap_lambda(box_length: float, m: int) -> float:
    """Commensurate wavelength: an integer fraction L/m of the box."""
    if m < 1:
        raise ConfigError("commensurability divisor must be >= 1")
    return box_length / m


@dataclass(frozen=True)
class DivergenceReport:
    max_defect: float
    commensurate: bool
    times: tuple
    warning: str = ""


def check_divergence_free(env: LaserEnvelope, grid, times=(0.0, 0.9),
                          lam: float = 1.0) -> DivergenceReport:
    """Max |spectral divergence| of a(./lam, t) sampled on the grid.

    Non-commensurate configurations are reported with a warning flag rather
    than rejected; wrap-around discontinuities then pollute the spectral
    derivative and the number is diagnostic only.
    """
    from .spatial import spectral_axis_derivative  # local import avoids a cycle

    commensurate = is_commensurate(env, grid, lam)
    d = grid.per_particle_dim
    max_defect = 0.0
    for t in times:
        div = np.zeros(grid.shape)
        for p in range(grid.particles):
            u = grid_ray_coordinate(env, grid, p, lam, t)
            f = profile_value(env.kind, u)
            for i in range(d):
                eps_i = env.eps_hat[i] if i < env.field_dim else 0.0
                if eps_i == 0.0:
                    continue
                comp = env.amplitude * eps_i * f
                div = div + spectral_axis_derivative(comp, grid, p * d + i).real
        max_defect = max(max_defect, float(np.max(np.abs(div))))
    warning = "" if commensurate else "grid not commensurate with envelope period"
    return DivergenceReport(max_defect=max_defect, commensurate=commensurate,
                            times=tuple(times), warning=warning)


def grid_ray_coordinate(env: LaserEnvelope, grid, particle: int, lam: float,
                        t: float) -> np.ndarray:
    """Broadcastable u-array for one particle's coordinates on the grid.

    u(x) = 2*pi*k_hat.(x_particle/lam) - t with the particle's position
    embedded into field space.
    """
    d = grid.per_particle_dim
    u = np.zeros((1,) * grid.dim)
    for i in range(d):
        k_i = env.k_hat[i] if i < env.field_dim else 0.0
        if k_i == 0.0:
            continue
        axis = particle * d + i
        u = u + (2.0 * np.pi * k_i / lam) * grid.mesh(axis)
    return u - t
