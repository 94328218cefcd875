"""Time evolution: Strang splitting, Krylov exponentiation, ground states.

All steppers freeze the time-dependent generator at the step midpoint
(order-2 Magnus truncation), so both exhibit second-order self-convergence in
dt.  The split stepper handles the dipole generators, whose kinetic factor is
diagonal in momentum space with shifted symbol (k - b(t_mid))^2; the Krylov
stepper exponentiates any Hermitian generator, including the full coupling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh, eigh_tridiagonal

from .errors import ConfigError, NumericalError
from .hamiltonians import (DIPOLE_VELOCITY, FULL,
                           HamiltonianSpec, ZERO_POTENTIAL, dipole_coupling,
                           hamiltonian_apply_fn, hermiticity_defect,
                           length_gauge_term, potential_on_grid)
from .spatial import Grid, WaveFunction, normalize, norm

SPLIT = "split"
KRYLOV = "krylov"

SPLIT_DRIFT_BOUND = 1e-10
KRYLOV_GUARD = 1e-8
_MAX_HALVINGS = 16

TIME_MATCH_TOL = 1e-9


@dataclass
class StepperConfig:
    """Time-integration policy for one trajectory."""

    dt: float
    t0: float
    t_final: float
    method: str = SPLIT
    krylov_m: int = 24
    krylov_tol: float = 1e-10
    store_states: bool = False
    sample_times: tuple[float, ...] | None = None
    norm_drift_bound: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if not (0 <= self.t0 <= self.t_final):
            raise ConfigError("need 0 <= t0 <= t_final")
        if self.method not in (SPLIT, KRYLOV):
            raise ConfigError(f"unknown stepper method {self.method!r}")
        if not 8 <= self.krylov_m <= 64:
            raise ConfigError("krylov subspace dimension must lie in [8, 64]")

    @property
    def drift_bound(self) -> float:
        if self.norm_drift_bound is not None:
            return self.norm_drift_bound
        return SPLIT_DRIFT_BOUND if self.method == SPLIT else max(self.krylov_tol, 1e-12)


@dataclass
class Trajectory:
    """Recorded sample times, optional states, observables, and norm bookkeeping."""

    times: list[float]
    states: list[WaveFunction] | None
    observables: dict[str, list]
    max_step_drift: float
    terminal_norm: float
    nsteps: int
    method: str

    @property
    def terminal_state(self) -> WaveFunction:
        if not self.states:
            raise ConfigError("trajectory was run without stored states")
        return self.states[-1]


def _split_stepper(spec: HamiltonianSpec, grid: Grid,
                   dt: float) -> Callable[[np.ndarray, float], np.ndarray]:
    """step(values, t_mid) for the dipole generators; exactly norm-preserving."""
    if spec.kind == FULL:
        raise ConfigError("split stepper handles dipole generators only")
    v = potential_on_grid(spec.potential, grid)
    k_sq = grid.k_square

    if spec.kind == DIPOLE_VELOCITY:
        half_v = np.exp(-0.5j * dt * v)

        def step(values: np.ndarray, t_mid: float) -> np.ndarray:
            # symbol of (-i grad - b)^2 at constant b: (k - b)^2 + |b_offgrid|^2
            b_axis, b_sq_total = dipole_coupling(spec.field, t_mid, grid)
            sym = k_sq + b_sq_total
            for axis in range(grid.dim):
                b = b_axis[axis]
                if b != 0.0:
                    sym = sym - 2.0 * b * grid.k_mesh(axis)
            kin = np.exp(-1j * dt * sym)
            out = half_v * values
            out = np.fft.ifftn(kin * np.fft.fftn(out))
            return half_v * out

        return step

    kin = np.exp(-1j * dt * k_sq)

    def step_length(values: np.ndarray, t_mid: float) -> np.ndarray:
        v_eff = v + length_gauge_term(spec.field, t_mid, grid)
        half_v = np.exp(-0.5j * dt * v_eff)
        out = half_v * values
        out = np.fft.ifftn(kin * np.fft.fftn(out))
        return half_v * out

    return step_length


def step_split(spec: HamiltonianSpec, psi: WaveFunction, t: float,
               dt: float) -> WaveFunction:
    """One Strang step exp(-i dt/2 Veff) exp(-i dt K(t_mid)) exp(-i dt/2 Veff)."""
    stepper = _split_stepper(spec, psi.grid, dt)
    return WaveFunction(psi.grid, stepper(psi.values, t + 0.5 * dt))


def _lanczos_expm(apply_fn, values: np.ndarray, dt: float, m: int, tol: float):
    """exp(-i dt H) values via a Lanczos subspace with full reorthogonalization.

    Returns (new_values | None, residual_estimate).  None signals that the
    subspace budget m was exhausted before the residual estimate dropped
    below tol.
    """
    shape = values.shape
    v0 = values.ravel()
    beta0 = np.linalg.norm(v0)
    if beta0 == 0.0:
        return values.copy(), 0.0
    basis = [v0 / beta0]
    alphas: list[float] = []
    betas: list[float] = []
    w = apply_fn(basis[0].reshape(shape)).ravel()
    a = float(np.vdot(basis[0], w).real)
    alphas.append(a)
    w = w - a * basis[0]

    for j in range(1, m + 1):
        b = float(np.linalg.norm(w))
        lam, q = eigh_tridiagonal(alphas, betas) if betas else (np.array(alphas), np.eye(1))
        u = q @ (np.exp(-1j * dt * lam) * q[0, :])
        est = abs(dt) * b * abs(u[-1])
        if est <= tol or b <= 1e-14 * beta0:
            out = sum(u[i] * basis[i] for i in range(len(basis)))
            return (beta0 * out).reshape(shape), est
        if j == m:
            return None, est
        vj = w / b
        for prev in basis:
            vj = vj - np.vdot(prev, vj) * prev
        vj = vj / np.linalg.norm(vj)
        betas.append(b)
        basis.append(vj)
        w = apply_fn(vj.reshape(shape)).ravel() - b * basis[j - 1]
        a = float(np.vdot(vj, w).real)
        alphas.append(a)
        w = w - a * vj
        for prev in basis:
            w = w - np.vdot(prev, w) * prev
    raise AssertionError("unreachable")


_herm_guard_cache: dict = {}


def _check_hermiticity_guard(spec: HamiltonianSpec, t: float, grid: Grid) -> None:
    key = (id(spec), id(grid))
    entry = _herm_guard_cache.get(key)
    if entry is not None and entry[0] is spec and entry[1] is grid:
        return
    defect = hermiticity_defect(spec, t, grid)
    if defect > KRYLOV_GUARD:
        raise NumericalError(
            f"hermiticity defect {defect:.2e} exceeds the Krylov guard {KRYLOV_GUARD}")
    _herm_guard_cache[key] = (spec, grid, defect)


def _krylov_step_values(spec: HamiltonianSpec, grid: Grid, values: np.ndarray,
                        t: float, dt: float, m: int, tol: float,
                        depth: int = 0) -> np.ndarray:
    apply_fn = hamiltonian_apply_fn(spec, t + 0.5 * dt, grid)
    out, _ = _lanczos_expm(apply_fn, values, dt, m, tol)
    if out is not None:
        return out
    if depth >= _MAX_HALVINGS:
        raise NumericalError(
            f"Krylov stepper failed to converge at dt={dt:.3e} (m={m}); dt too large")
    half = 0.5 * dt
    mid = _krylov_step_values(spec, grid, values, t, half, m, tol, depth + 1)
    return _krylov_step_values(spec, grid, mid, t + half, half, m, tol, depth + 1)


def step_krylov(spec: HamiltonianSpec, psi: WaveFunction, t: float, dt: float,
                m: int = 24, tol: float = 1e-10) -> WaveFunction:
    """exp(-i dt H(t + dt/2)) psi via Lanczos; auto-halves dt on non-convergence."""
    _check_hermiticity_guard(spec, t + 0.5 * dt, psi.grid)
    vals = _krylov_step_values(spec, psi.grid, psi.values, t, dt, m, tol)
    return WaveFunction(psi.grid, vals)


def evolve(spec: HamiltonianSpec, psi0: WaveFunction, config: StepperConfig,
           observers: dict[str, Callable] | None = None) -> Trajectory:
    """Propagate psi0 from t0 to t_final with per-step norm bookkeeping.

    Observers are mappings name -> f(t, psi) evaluated at the requested sample
    times (which must land on step boundaries); their values are recorded in
    the trajectory, and stored states are taken at the same times when
    config.store_states is set.
    """
    grid = psi0.grid
    n0 = norm(psi0)
    if abs(n0 - 1.0) > 1e-6:
        raise ConfigError(f"initial state is not normalized (norm {n0})")
    span = config.t_final - config.t0
    nsteps = int(round(span / config.dt))
    if abs(config.t0 + nsteps * config.dt - config.t_final) > TIME_MATCH_TOL * max(1.0, abs(config.t_final)):
        raise ConfigError("dt must divide t_final - t0")

    sample_times = config.sample_times
    if sample_times is None:
        sample_times = (config.t0, config.t_final) if nsteps > 0 else (config.t0,)
    sample_index: dict[int, float] = {}
    for s in sample_times:
        k = int(round((s - config.t0) / config.dt)) if config.dt > 0 else 0
        if k < 0 or k > nsteps or abs(config.t0 + k * config.dt - s) > TIME_MATCH_TOL * max(1.0, abs(s)):
            raise ConfigError(f"sample time {s} does not land on a step boundary")
        sample_index[k] = s

    if config.method == SPLIT:
        stepper = _split_stepper(spec, grid, config.dt)
    else:
        _check_hermiticity_guard(spec, config.t0 + 0.5 * config.dt, grid)

        def stepper(values: np.ndarray, t_mid: float) -> np.ndarray:
            return _krylov_step_values(spec, grid, values,
                                       t_mid - 0.5 * config.dt, config.dt,
                                       config.krylov_m, config.krylov_tol)

    observers = observers or {}
    traj = Trajectory(times=[], states=[] if config.store_states else None,
                      observables={name: [] for name in observers},
                      max_step_drift=0.0, terminal_norm=n0, nsteps=nsteps,
                      method=config.method)

    def record(k: int, psi_now: WaveFunction) -> None:
        t_now = sample_index[k]
        traj.times.append(t_now)
        if config.store_states:
            traj.states.append(psi_now.copy())
        for name, fn in observers.items():
            try:
                traj.observables[name].append(fn(t_now, psi_now))
            except Exception as exc:
                raise NumericalError(
                    f"observer {name!r} failed at t={t_now}: {exc}") from exc

    values = psi0.values.copy()
    if 0 in sample_index:
        record(0, WaveFunction(grid, values))
    prev_norm = n0
    bound = config.drift_bound
    sqrt_vol = np.sqrt(grid.cell_volume)
    for j in range(nsteps):
        t_mid = config.t0 + (j + 0.5) * config.dt
        values = stepper(values, t_mid)
        cur_norm = float(np.linalg.norm(values.ravel())) * sqrt_vol
        drift = abs(cur_norm - prev_norm)
        if drift > bound:
            raise NumericalError(
                f"norm drift {drift:.2e} exceeded the bound {bound:.1e} at step {j}")
        traj.max_step_drift = max(traj.max_step_drift, drift)
        prev_norm = cur_norm
        if (j + 1) in sample_index:
            record(j + 1, WaveFunction(grid, values))
    traj.terminal_norm = prev_norm
    return traj


def _field_free_apply(potential, grid: Grid) -> Callable[[np.ndarray], np.ndarray]:
    v = potential_on_grid(potential, grid)
    k_sq = grid.k_square

    def apply(values: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(k_sq * np.fft.fftn(values)) + v * values

    return apply


def ground_state_imaginary_time(potential, grid: Grid, tol: float = 1e-8,
                                max_iter: int = 40000):
    """Lowest eigenpair of -Lap + V: imaginary-time relaxation plus a Krylov polish.

    Returns (energy, psi) with ||H psi - E psi|| <= tol.  Imaginary-time
    split steps drive a Gaussian seed toward the ground state; a short Lanczos
    refinement then removes the O(dt^2) splitting bias, which a fixed-step
    relaxation alone cannot push below tol in reasonable time.
    """
    if potential.kind == ZERO_POTENTIAL:
        raise ConfigError("free particle has no bound ground state")
    v = potential_on_grid(potential, grid)
    k_sq = grid.k_square
    apply_h = _field_free_apply(potential, grid)
    sqrt_vol = np.sqrt(grid.cell_volume)

    sigma = max(1.0, 2.5 * max(grid.spacing))
    r2 = np.zeros(grid.shape)
    for axis in range(grid.dim):
        x = grid.mesh(axis)
        r2 = r2 + x * x
    values = np.exp(-r2 / (2.0 * sigma * sigma)).astype(complex)
    values /= np.linalg.norm(values.ravel()) * sqrt_vol

    def rayleigh(vals: np.ndarray) -> float:
        return float(np.vdot(vals, apply_h(vals)).real / np.vdot(vals, vals).real)

    steps_done = 0
    for dt in (0.5, 0.1, 0.02):
        half_v = np.exp(-0.5 * dt * v)
        kin = np.exp(-dt * k_sq)
        energy = rayleigh(values)
        while steps_done < max_iter:
            out = half_v * values
            out = np.fft.ifftn(kin * np.fft.fftn(out))
            out = half_v * out
            out /= np.linalg.norm(out.ravel()) * sqrt_vol
            values = out
            steps_done += 1
            if steps_done % 10 == 0:
                e_new = rayleigh(values)
                if abs(e_new - energy) < 1e-12 * max(1.0, abs(e_new)):
                    energy = e_new
                    break
                energy = e_new

    # Krylov polish: restarted Lanczos for the lowest Ritz pair.
    for _ in range(200):
        values = values / (np.linalg.norm(values.ravel()) * sqrt_vol)
        energy = rayleigh(values)
        resid = apply_h(values) - energy * values
        rnorm = float(np.linalg.norm(resid.ravel())) * sqrt_vol
        if rnorm <= tol:
            return energy, normalize(WaveFunction(grid, values))
        values = _lanczos_lowest(apply_h, values, m=24)
    raise NumericalError(
        f"ground-state solver stalled at residual {rnorm:.2e} (tol {tol:.1e})")


def _lanczos_lowest(apply_fn, values: np.ndarray, m: int) -> np.ndarray:
    """One Lanczos restart: lowest Ritz vector from a fresh subspace."""
    shape = values.shape
    v0 = values.ravel()
    v0 = v0 / np.linalg.norm(v0)
    basis = [v0]
    alphas: list[float] = []
    betas: list[float] = []
    w = apply_fn(v0.reshape(shape)).ravel()
    a = float(np.vdot(v0, w).real)
    alphas.append(a)
    w = w - a * v0
    for j in range(1, m):
        b = float(np.linalg.norm(w))
        if b < 1e-14:
            break
        vj = w / b
        for prev in basis:
            vj = vj - np.vdot(prev, vj) * prev
        vj = vj / np.linalg.norm(vj)
        betas.append(b)
        basis.append(vj)
        w = apply_fn(vj.reshape(shape)).ravel() - b * basis[j - 1]
        a = float(np.vdot(vj, w).real)
        alphas.append(a)
        w = w - a * vj
        for prev in basis:
            w = w - np.vdot(prev, w) * prev
    lam, q = eigh_tridiagonal(alphas, betas) if betas else (np.array(alphas), np.eye(1))
    coeff = q[:, 0]
    out = sum(coeff[i] * basis[i] for i in range(len(basis)))
    out = out / np.linalg.norm(out)
    return out.reshape(shape)


def write_observables_csv(traj: Trajectory, path) -> None:
    """Observable series as CSV rows (t, observable name, value)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "observable", "value"])
        for name in sorted(traj.observables):
            for t, val in zip(traj.times, traj.observables[name]):
                writer.writerow([repr(float(t)), name, repr(float(val))])


def export_snapshots(traj: Trajectory, directory) -> list:
    """Dump stored states in the binary snapshot format, one file per time."""
    from pathlib import Path

    from .spatial import write_snapshot

    if not traj.states:
        raise ConfigError("trajectory was run without stored states")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for idx, (t, state) in enumerate(zip(traj.times, traj.states)):
        path = directory / f"state_{idx:05d}.dplw"
        write_snapshot(path, state)
        paths.append(path)
    return paths


DENSE_ORACLE_CAP = 64


def dense_hamiltonian(spec: HamiltonianSpec, t: float, grid: Grid,
                      cap: int = 4096) -> np.ndarray:
    """Dense matrix of H(t) in the grid basis (small grids only)."""
    n = grid.npoints
    if n > cap:
        raise ConfigError(f"dense Hamiltonian capped at {cap} points, got {n}")
    fn = hamiltonian_apply_fn(spec, t, grid)
    cols = np.empty((n, n), dtype=complex)
    basis = np.zeros(n, dtype=complex)
    for j in range(n):
        basis[j] = 1.0
        cols[:, j] = fn(basis.reshape(grid.shape)).ravel()
        basis[j] = 0.0
    return cols


def dense_oracle_evolve(spec: HamiltonianSpec, psi0: WaveFunction, t0: float,
                        t: float, steps: int) -> WaveFunction:
    """Brute-force reference: exact exponentials of the midpoint-frozen H.

    Grids are capped at 64 total points; each step diagonalizes the dense
    Hermitian matrix and applies exp(-i dt H) exactly.
    """
    grid = psi0.grid
    if grid.npoints > DENSE_ORACLE_CAP:
        raise ConfigError(f"dense oracle capped at {DENSE_ORACLE_CAP} points")
    if steps < 1:
        raise ConfigError("need at least one step")
    dt = (t - t0) / steps
    values = psi0.values.ravel().copy()
    for j in range(steps):
        t_mid = t0 + (j + 0.5) * dt
        h = dense_hamiltonian(spec, t_mid, grid, cap=DENSE_ORACLE_CAP)
        h = 0.5 * (h + h.conj().T)
        lam, q = eigh(h)
        values = q @ (np.exp(-1j * dt * lam) * (q.conj().T @ values))
    return WaveFunction(grid, values.reshape(grid.shape))
