import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from scipy import special

from symgyro.benchmark_systems import (
    ChargedParticleSystem,
    CoupledOscillatorSystem,
    FlowDataset,
    averaged_hamiltonian,
    bessel_j1,
    energy_drift,
    generate_dataset,
    hamiltonian,
    integrate,
    lambda0,
    lambda0_inverse,
    make_system,
    mu0,
    rk4_step,
    slow_manifold_reference,
    system_from_dict,
    trajectory,
    vector_field,
)
from symgyro.errors import ConfigurationError, ContractError
from symgyro.symplectic_maps import symplectic_defect

from conftest import rel_err

OSC = CoupledOscillatorSystem(0.01)
CP = ChargedParticleSystem(0.01)


def fd_hamiltonian_field(system, z, step=1e-6):
    """``Omega^-1 grad H`` with the gradient from central differences."""
    d = z.size
    grad = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        grad[i] = (system.hamiltonian(z + e) - system.hamiltonian(z - e)) / (2 * step)
    n = d // 2
    return np.concatenate([grad[n:], -grad[:n]])


# -- vector fields ------------------------------------------------------------------


@pytest.mark.parametrize("system", [OSC, CoupledOscillatorSystem(0.3), CP, ChargedParticleSystem(0.2, ("half_sin2",))])
def test_vector_field_matches_hamiltonian_gradient(system, rng):
    lo, hi = system.default_box()
    for z in rng.uniform(lo, hi, size=(20, system.dim)):
        assert rel_err(vector_field(system, z), fd_hamiltonian_field(system, z)) <= 1e-6


def test_decoupled_oscillator_field():
    np.testing.assert_array_equal(CoupledOscillatorSystem(0.0).vector_field([1.0, 1.0, 0.0, 0.0]), [0.0, 0.0, -1.0, 0.0])


def test_charged_particle_slow_variables_frozen_at_epsilon_zero(rng):
    s = ChargedParticleSystem(0.0)
    f = s.vector_field(rng.uniform(-2, 2, size=(30, 6)))
    assert np.all(f[:, 0] == 0.0) and np.all(f[:, 3] == 0.0)


def test_dimension_mismatch_rejected():
    with pytest.raises(ContractError):
        OSC.vector_field(np.zeros(6))
    with pytest.raises(ContractError):
        CP.hamiltonian(np.zeros(4))
    with pytest.raises(ContractError):
        CP.lambda0(np.zeros(5))


def test_invalid_systems_rejected():
    with pytest.raises(ConfigurationError):
        CoupledOscillatorSystem(-1.0)
    with pytest.raises(ConfigurationError):
        ChargedParticleSystem(0.1, ())
    with pytest.raises(ConfigurationError):
        ChargedParticleSystem(0.1, ("nope",))
    with pytest.raises(ConfigurationError):
        make_system("pendulum", 0.1)


def test_system_dict_roundtrip():
    for s in (OSC, ChargedParticleSystem(0.2, ("half_gauss5",))):
        assert system_from_dict(s.to_dict()) == s


# -- Hamiltonians -------------------------------------------------------------------


@pytest.mark.parametrize("eps", [0.0, 0.01, 1.0])
def test_oscillator_energy_example(eps):
    assert hamiltonian(CoupledOscillatorSystem(eps), [1.0, 0.0, 0.0, 0.0]) == 0.5


@pytest.mark.parametrize("p0", [-0.7, 0.0, 0.4])
def test_charged_particle_energy_on_slow_manifold(p0):
    z = CP.slow_manifold_point(1.3, p0)
    assert CP.hamiltonian(z) == pytest.approx(0.5 * CP.epsilon * p0**2, abs=1e-17)


# -- RK4 ----------------------------------------------------------------------------


def test_rk4_matches_decoupled_closed_form():
    s = CoupledOscillatorSystem(0.0)
    z0 = np.array([[1.0, 0.3, 0.0, -0.2], [0.4, 0.0, -0.9, 0.5]])
    T = 10.0
    z = integrate(s, z0, T, 10000)
    q, p = z0[:, 0], z0[:, 2]
    np.testing.assert_allclose(z[:, 0], q * np.cos(T) + p * np.sin(T), rtol=0, atol=1e-8)
    np.testing.assert_allclose(z[:, 2], -q * np.sin(T) + p * np.cos(T), rtol=0, atol=1e-8)
    np.testing.assert_array_equal(z[:, [1, 3]], z0[:, [1, 3]])


@pytest.mark.parametrize(
    "system,z0",
    [(OSC, [1.0, 0.5, -0.3, 0.7]), (CP, [0.3, 0.5, -0.4, 0.2, 0.6, 0.1])],
)
def test_rk4_fourth_order(system, z0):
    z0 = np.asarray(z0)
    ref = integrate(system, z0, 1.0, 4000)
    errs = [np.max(np.abs(integrate(system, z0, 1.0, n) - ref)) for n in (10, 20, 40)]
    for coarse, fine in zip(errs, errs[1:]):
        assert 12 <= coarse / fine <= 20


def test_zero_time_returns_input_exactly(rng):
    z = rng.normal(size=4)
    out = integrate(OSC, z, 0.0)
    np.testing.assert_array_equal(out, z)
    assert out is not z


def test_invalid_steps_rejected():
    with pytest.raises(ContractError):
        rk4_step(OSC, np.zeros(4), 0.0)
    with pytest.raises(ContractError):
        integrate(OSC, np.zeros(4), 1.0, 0)


def test_rk4_accepts_batches(rng):
    z = rng.uniform(-1, 1, size=(3, 6))
    batch = integrate(CP, z, 0.5, 50)
    for row, out in zip(z, batch):
        np.testing.assert_array_equal(integrate(CP, row, 0.5, 50), out)


@pytest.mark.parametrize("system", [OSC, CP])
def test_energy_drift_budget(system, rng):
    lo, hi = system.default_box()
    z0 = rng.uniform(lo, hi, size=(4, system.dim))
    traj = trajectory(system, z0, 1.0, 10, 1000)
    assert traj.shape == (11, 4, system.dim)
    assert energy_drift(system, traj) <= 1e-8


def test_trajectory_shape_and_start():
    traj = trajectory(OSC, [1.0, 0.0, 0.0, 0.0], 0.1, 3)
    assert traj.shape == (4, 4)
    np.testing.assert_array_equal(traj[0], [1.0, 0.0, 0.0, 0.0])


# -- averaged Hamiltonian -----------------------------------------------------------


def test_averaged_hamiltonian_examples():
    assert averaged_hamiltonian(0.0, 0.0, 0.8) == 0.0
    assert averaged_hamiltonian(0.3, -0.4, 0.0) == pytest.approx(0.5 * (0.09 + 0.16), rel=1e-15)
    with pytest.raises(ContractError):
        averaged_hamiltonian(0.1, 0.1, -1.0)


def averaging_integral(q, p, q2):
    def f(t):
        u = q * np.cos(t) + p * np.sin(t)
        return u * np.sin(2 * u + 2 * q2)

    val, _ = sp_integrate.quad(f, 0, 2 * np.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val / (2 * np.pi)


def test_bessel_form_matches_direct_averaging_quadrature(rng):
    for q, p, q2, p2 in rng.uniform(-1.5, 1.5, size=(40, 4)):
        direct = 0.5 * (q2**2 + p2**2) + q2 * averaging_integral(q, p, q2)
        assert abs(averaged_hamiltonian(q2, p2, np.hypot(q, p)) - direct) <= 1e-8


def test_bessel_j1_matches_scipy():
    x = np.linspace(-40, 40, 801)
    assert np.max(np.abs(bessel_j1(x) - special.j1(x))) <= 1e-13


def test_averaged_hamiltonian_conserved_to_order_epsilon():
    z0 = np.array([[1.0, 0.5, 0.0, 0.3], [0.6, -0.8, 0.4, 0.2]])
    traj = trajectory(OSC, z0, 0.5, 100, 500)
    Hb = averaged_hamiltonian(traj[..., 1], traj[..., 3], np.hypot(traj[..., 0], traj[..., 2]))
    assert np.max(np.abs(Hb - Hb[0])) <= 10 * OSC.epsilon


# -- charged-particle reference quantities -------------------------------------------


def test_lambda0_slow_manifold_example():
    z = np.array([0.7, 0.0, 0.0, -0.2, 0.0, 0.5])
    np.testing.assert_array_equal(lambda0_inverse(CP, z)[4:], [0.0, 0.0])
    np.testing.assert_array_equal(CP.slow_manifold_point(0.7, -0.2), z)


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_lambda0_roundtrip(values):
    z = np.array(values)
    assert np.max(np.abs(lambda0(CP, lambda0_inverse(CP, z)) - z)) <= 1e-15 * max(1.0, np.max(np.abs(z)))
    assert np.max(np.abs(lambda0_inverse(CP, lambda0(CP, z)) - z)) <= 1e-15 * max(1.0, np.max(np.abs(z)))


def test_lambda0_is_symplectic(rng):
    for z in rng.uniform(-1, 1, size=(10, 6)):
        assert symplectic_defect(CP.lambda0, z) <= 1e-8
        assert symplectic_defect(CP.lambda0_inverse, z) <= 1e-8


def test_mu0_examples():
    assert mu0(CP, CP.slow_manifold_point(0.2, 0.9)) == 0.0
    z = lambda0(CP, np.array([0.2, 1.0, 0.0, 0.1, 0.0, 1.0]))
    assert mu0(CP, z) == pytest.approx(1.5, rel=1e-15)


def test_mu0_drift_scales_with_epsilon():
    z0 = np.array([0.3, 0.5, -0.4, 0.2, 0.6, 0.1])
    drift = {}
    for eps in (0.1, 0.01):
        s = ChargedParticleSystem(eps)
        m = s.mu0(trajectory(s, z0, 0.1, 200, 100))
        drift[eps] = np.max(np.abs(m - m[0]))
    assert drift[0.1] / drift[0.01] >= 5
    C = drift[0.1] / 0.1
    assert drift[0.01] <= C * 0.01


def test_slow_manifold_reference_examples():
    assert slow_manifold_reference(0.3, -0.5, 0.01, 0.0) == (0.3, -0.5)
    q, p = slow_manifold_reference(0.3, -0.5, 0.0, np.linspace(0, 50, 6))
    assert np.all(q == 0.3) and np.all(p == -0.5)


def test_slow_manifold_reference_matches_integration():
    # Away from q = 0 the true slow manifold leaves Q = 0 at O(eps) and the error grows past 1e-4.
    z0 = np.stack([CP.slow_manifold_point(0.0, 0.1), CP.slow_manifold_point(0.0, -0.1)])
    traj = trajectory(CP, z0, 1.0, 100, 1000)
    t = np.arange(101.0)
    for i in range(2):
        q, p = slow_manifold_reference(z0[i, 0], z0[i, 3], CP.epsilon, t)
        assert np.max(np.abs(traj[:, i, 0] - q)) <= 1e-4
        assert np.max(np.abs(traj[:, i, 3] - p)) <= 1e-4


# -- datasets -----------------------------------------------------------------------


def test_dataset_zero_time_single_pair():
    ds = generate_dataset(OSC, 0.0, 1, seed=3)
    assert len(ds) == 1
    np.testing.assert_array_equal(ds.inputs, ds.targets)


def test_dataset_is_deterministic_and_inside_box():
    a = generate_dataset(CP, 0.05, 50, seed=7)
    b = generate_dataset(CP, 0.05, 50, seed=7)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.targets, b.targets)
    lo, hi = CP.default_box()
    assert np.all(a.inputs >= lo) and np.all(a.inputs <= hi)
    assert a.metadata["rk4_substeps"] == 50 and a.metadata["failures"] == 0
    assert not np.array_equal(generate_dataset(CP, 0.05, 50, seed=8).inputs, a.inputs)


def test_dataset_targets_survive_refinement():
    ds = generate_dataset(OSC, 0.05, 100, seed=1)
    refined = integrate(OSC, ds.inputs, ds.flow_time, 2 * ds.metadata["rk4_substeps"])
    assert np.max(np.abs(refined - ds.targets)) <= 1e-9


def test_dataset_custom_box_and_validation():
    box = (np.zeros(4), np.full(4, 0.1))
    ds = generate_dataset(OSC, 0.05, 10, box=box)
    assert np.all(ds.inputs <= 0.1) and np.all(ds.inputs >= 0)
    with pytest.raises(ContractError):
        generate_dataset(OSC, 0.05, 0)
    with pytest.raises(ContractError):
        generate_dataset(OSC, 0.05, 5, box=(np.zeros(4), np.full(4, np.inf)))
    with pytest.raises(ContractError):
        generate_dataset(OSC, 0.05, 5, box=(np.zeros(3), np.ones(3)))


def test_dataset_save_load_roundtrip(tmp_path):
    ds = generate_dataset(CP, 0.05, 5, seed=2)
    path = tmp_path / "data.csv"
    ds.save(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == [f"in_{i}" for i in range(6)] + [f"out_{i}" for i in range(6)]
    back = FlowDataset.load(path)
    np.testing.assert_array_equal(back.inputs, ds.inputs)
    np.testing.assert_array_equal(back.targets, ds.targets)
    assert back.system == ds.system and back.flow_time == 0.05
    assert back.metadata == ds.metadata


def test_blown_up_samples_are_resampled():
    # With q1 up to 1e45 the coupling force overflows within two steps for about a third of the box.
    s = CoupledOscillatorSystem(1.0)
    lo, hi = np.array([0.0, -1, -1, -1]), np.array([1e45, 1, 1, 1])
    ds = generate_dataset(s, 0.01, 20, box=(lo, hi), substeps=2, seed=0)
    assert np.all(np.isfinite(ds.targets))
    assert ds.metadata["failures"] > 0
