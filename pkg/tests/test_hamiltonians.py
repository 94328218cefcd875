import numpy as np
import pytest

from dipolelab import fields, hamiltonians as ham, spatial
from dipolelab.errors import ConfigError


def zero_field():
    return fields.ScaledField(fields.zero_envelope(2), 1.0, 1.0)


def test_free_plane_wave_eigenfunction():
    g = spatial.make_grid(1, 128, 16.0)
    k = 2 * np.pi * 3 / 16.0
    psi = spatial.WaveFunction(g, np.exp(1j * k * g.mesh(0)))
    spec = ham.dipole_velocity(zero_field(), ham.zero_potential())
    out = ham.apply_hamiltonian(spec, 0.0, psi)
    assert np.max(np.abs(out.values - k * k * psi.values)) < 1e-12


def test_soft_core_pointwise_formula():
    # grid chosen so x = 2 lies on the lattice
    g = spatial.make_grid(1, 256, 32.0)
    varr = ham.potential_on_grid(ham.soft_core_coulomb(1.0, 1.0), g)
    idx = int(np.argmin(np.abs(g.axis_coordinates(0) - 2.0)))
    assert g.axis_coordinates(0)[idx] == pytest.approx(2.0, abs=1e-12)
    assert varr[idx] == pytest.approx(-2.0 / np.sqrt(5.0), abs=1e-14)


def test_soft_core_narrow_packet_energy():
    g = spatial.make_grid(1, 512, 32.0)
    psi = spatial.gaussian_packet(g, 2.0, 0.35, 0.0)
    spec = ham.dipole_velocity(zero_field(), ham.soft_core_coulomb(1.0, 1.0))
    v = ham.potential_on_grid(spec.potential, g)
    pe = float(np.sum(v * np.abs(psi.values) ** 2) * g.cell_volume)
    assert pe == pytest.approx(-2.0 / np.sqrt(5.0), abs=0.02)


def test_full_vs_dipole_generator_difference_decays():
    # ||(H_lam - H_inf) psi|| = O(1/lam): log-log slope within [0.9, 1.1]
    g = spatial.make_grid(1, 512, 80.0)
    env = fields.transverse_envelope("cw", 1.0, 1)
    pot = ham.soft_core_coulomb(1.0, 1.0)
    psi = spatial.gaussian_packet(g, 0.0, 1.0, 0.0)
    t = np.pi / 4   # quadratic Taylor term of sin^2 vanishes here
    lams, norms = [], []
    for m in (4, 2, 1):
        lam = fields.snap_lambda(80.0, m)
        fld = fields.ScaledField(env, lam, 1.0)
        a = ham.apply_hamiltonian(ham.full_coupling(fld, pot), t, psi)
        b = ham.apply_hamiltonian(ham.dipole_velocity(fld, pot), t, psi)
        lams.append(lam)
        norms.append(spatial.norm(spatial.WaveFunction(g, a.values - b.values)))
    slope = -np.polyfit(np.log(lams), np.log(norms), 1)[0]
    assert 0.9 <= slope <= 1.1
    assert norms[0] > norms[1] > norms[2]


def test_dipole_length_form():
    # H_L psi = -Lap psi + V psi + (da/dt(0, w t) . r) psi, on-grid components
    g = spatial.make_grid(2, [32, 32], [16.0, 16.0])
    env = fields.in_plane_envelope("cw", 0.7)
    fld = fields.ScaledField(env, 8.0, 1.3)
    pot = ham.gaussian_well(2.0, 2.0)
    psi = spatial.gaussian_packet(g, 0.0, 1.5, 0.0)
    spec = ham.dipole_length(fld, pot)
    out = ham.apply_hamiltonian(spec, 0.9, psi)
    lap = spatial.spectral_laplacian(psi)
    v = ham.potential_on_grid(pot, g)
    adot = -0.7 * np.cos(-1.3 * 0.9)   # d/ds [E f(-s)] with f = sin
    manual = -lap.values + (v + adot * g.mesh(1)) * psi.values
    assert np.max(np.abs(out.values - manual)) < 1e-12


def test_dipole_velocity_uses_field_at_origin_only():
    g = spatial.make_grid(1, 256, 80.0)
    env = fields.transverse_envelope("cw", 0.5, 1)
    pot = ham.zero_potential()
    psi = spatial.gaussian_packet(g, 0.0, 1.0, 1.0)
    outs = []
    for lam in (10.0, 40.0):
        fld = fields.ScaledField(env, lam, 1.0)
        outs.append(ham.apply_hamiltonian(ham.dipole_velocity(fld, pot), 0.8, psi))
    np.testing.assert_array_equal(outs[0].values, outs[1].values)


def test_hermiticity_dipole_velocity():
    g = spatial.make_grid(2, [32, 32], [16.0, 16.0])
    env = fields.in_plane_envelope("cw", 0.8)
    fld = fields.ScaledField(env, 8.0, 1.0)
    spec = ham.dipole_velocity(fld, ham.soft_core_coulomb(1.0, 1.0))
    assert ham.hermiticity_defect(spec, 0.37, g) <= 1e-11


def test_hermiticity_full_coupling_commensurate():
    for maker, grid in (
        (lambda: fields.transverse_envelope("cw", 0.8, 1), spatial.make_grid(1, 256, 40.0)),
        (lambda: fields.in_plane_envelope("cw", 0.8), spatial.make_grid(2, [32, 32], [16.0, 16.0])),
    ):
        env = maker()
        fld = fields.ScaledField(env, fields.snap_lambda(grid.lengths[0], 2), 1.0)
        spec = ham.full_coupling(fld, ham.soft_core_coulomb(1.0, 1.0))
        assert ham.hermiticity_defect(spec, 0.37, grid) <= 1e-10


def test_hermiticity_negative_control():
    # polarization along propagation: div a != 0, so 2i b.grad is not
    # anti-symmetrized and the discrete operator is visibly non-Hermitian
    g = spatial.make_grid(1, 256, 40.0)
    env = fields.LaserEnvelope("cw", 1.0, np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    fld = fields.ScaledField(env, 20.0, 1.0)
    spec = ham.HamiltonianSpec("full", fld, ham.zero_potential())
    assert ham.hermiticity_defect(spec, 0.2, g) > 1e-4


def test_full_coupling_requires_commensurate_grid():
    g = spatial.make_grid(1, 256, 40.0)
    env = fields.transverse_envelope("cw", 0.5, 1)
    fld = fields.ScaledField(env, 33.0, 1.0)   # 40/33 not integer
    spec = ham.full_coupling(fld, ham.zero_potential())
    psi = spatial.gaussian_packet(g, 0.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        ham.apply_hamiltonian(spec, 0.0, psi)


def test_nbody_reduces_to_soft_core():
    g = spatial.make_grid(1, 64, 16.0, particles=1)
    lhs = ham.potential_on_grid(ham.n_body_soft_core(1, 1.0), g)
    rhs = ham.potential_on_grid(ham.soft_core_coulomb(1.0, 1.0), g)
    np.testing.assert_array_equal(lhs, rhs)


def test_nbody_pointwise_value():
    g = spatial.make_grid(2, [64, 64], [32.0, 32.0], particles=2)
    pot = ham.build_nbody(2, 1.0, g)
    v = ham.potential_on_grid(pot, g)
    xs = g.axis_coordinates(0)
    i = int(np.argmin(np.abs(xs - 1.0)))
    j = int(np.argmin(np.abs(xs + 1.0)))
    assert xs[i] == pytest.approx(1.0, abs=1e-12) and xs[j] == pytest.approx(-1.0, abs=1e-12)
    expected = -4.0 / np.sqrt(2.0) - 4.0 / np.sqrt(2.0) + 2.0 / np.sqrt(5.0)
    assert v[i, j] == pytest.approx(expected, abs=1e-13)


def test_nbody_exchange_symmetry():
    g = spatial.make_grid(2, [32, 32], [20.0, 20.0], particles=2)
    v = ham.potential_on_grid(ham.n_body_soft_core(2, 1.0), g)
    np.testing.assert_array_equal(v, v.T)


def test_nbody_dimension_mismatch():
    g = spatial.make_grid(2, [32, 32], [20.0, 20.0], particles=2)
    with pytest.raises(ConfigError):
        ham.build_nbody(3, 1.0, g)


def test_potential_factory_validation():
    with pytest.raises(ConfigError):
        ham.soft_core_coulomb(1.0, eps=0.0)
    with pytest.raises(ConfigError):
        ham.gaussian_well(-1.0, 1.0)
    with pytest.raises(ConfigError):
        ham.HamiltonianSpec("sideways", zero_field(), ham.zero_potential())
