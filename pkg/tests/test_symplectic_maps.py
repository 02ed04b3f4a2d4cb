import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symgyro.errors import ContractError, NumericalError
from symgyro.potential_net import PotentialNet
from symgyro.symplectic_maps import (
    HenonLayer,
    HenonNet,
    NearIdentityHenonNet,
    canonical_form,
    henon_inverse,
    henon_step,
    jacobian_fd,
    layer_forward,
    layer_forward_near_identity,
    layer_inverse,
    net_forward,
    net_inverse,
    symplectic_defect,
)


def zero_layer(n, shift=None):
    return HenonLayer(PotentialNet.zeros(n), np.zeros(n) if shift is None else shift)


def quadratic_layer(n):
    # Potential whose gradient is exactly y, i.e. V(y) = |y|^2 / 2, built as a
    # linear map standing in for the network (only the gradient is used).
    class Quadratic(PotentialNet):
        def gradient(self, y):
            return np.asarray(y, dtype=float)

        def activations(self, y):
            return y

        def gradient_from_activations(self, t):
            return t

    return HenonLayer(Quadratic(np.eye(n), np.zeros(n), np.ones(n)), np.zeros(n))


def test_henon_step_with_zero_potential():
    layer = zero_layer(1)
    np.testing.assert_array_equal(henon_step(layer, [1.0, 2.0]), [2.0, -1.0])
    np.testing.assert_array_equal(henon_inverse(layer, [2.0, -1.0]), [1.0, 2.0])


def test_henon_inverse_cancels_shift():
    layer = zero_layer(1, shift=np.array([5.0]))
    np.testing.assert_array_equal(henon_inverse(layer, [5.0, 0.0]), [0.0, 0.0])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_fourth_iterate_of_zero_potential_is_identity(n, rng):
    # Dyadic shifts and states make every addition exact, so the identity is bit-exact.
    layer = zero_layer(n, shift=rng.integers(-8, 8, size=n) / 4)
    z = rng.integers(-16, 16, size=2 * n) / 8
    w = z
    for _ in range(4):
        w = henon_step(layer, w)
    np.testing.assert_array_equal(w, z)
    np.testing.assert_array_equal(layer_forward(layer, z), z)
    # Generic shifts: identity up to the rounding of adding and removing eta.
    layer = zero_layer(n, shift=rng.normal(size=n))
    z = rng.normal(size=2 * n)
    np.testing.assert_allclose(layer_forward(layer, z), z, rtol=0, atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_single_step_roundtrips(n, rng):
    layer = HenonLayer.random(n, 8, rng)
    z = rng.uniform(-1, 1, size=(50, 2 * n))
    assert np.max(np.abs(henon_inverse(layer, henon_step(layer, z)) - z)) <= 1e-13
    assert np.max(np.abs(henon_step(layer, henon_inverse(layer, z)) - z)) <= 1e-13


def test_layer_is_fourth_iterate(rng):
    layer = HenonLayer.random(2, 5, rng)
    z = rng.normal(size=4)
    w = z
    for _ in range(4):
        w = henon_step(layer, w)
    np.testing.assert_allclose(layer_forward(layer, z), w, rtol=0, atol=1e-14)


def test_near_identity_layer(rng):
    layer = HenonLayer.random(2, 5, rng)
    z = rng.normal(size=4)
    np.testing.assert_array_equal(layer_forward_near_identity(layer, 0.0, z), z)
    np.testing.assert_array_equal(layer_forward_near_identity(layer, 1.0, z), layer_forward(layer, z))
    zero = zero_layer(2, shift=np.array([0.75, -1.5]))
    w = np.array([0.5, -0.25, 2.0, 1.125])
    np.testing.assert_array_equal(layer_forward_near_identity(zero, 0.3, w), w)


def test_empty_net_is_identity(rng):
    z = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(HenonNet(()).forward(z), z)
    np.testing.assert_array_equal(HenonNet(()).inverse(z), z)


def test_singleton_net_equals_layer(rng):
    layer = HenonLayer.random(3, 4, rng)
    z = rng.normal(size=6)
    np.testing.assert_array_equal(net_forward(HenonNet((layer,)), z), layer_forward(layer, z))


def test_net_roundtrip_random_inputs(rng):
    net = HenonNet.random(2, 3, 8, rng)
    z = rng.uniform(-1, 1, size=(100, 4))
    assert np.max(np.abs(net_inverse(net, net_forward(net, z)) - z)) <= 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_net_roundtrip_wide_box(n, rng):
    net = HenonNet.random(n, 3, 8, rng)
    z = rng.uniform(-10, 10, size=(200, 2 * n))
    assert np.max(np.abs(net.inverse(net.forward(z)) - z)) <= 1e-12
    assert np.max(np.abs(net.forward(net.inverse(z)) - z)) <= 1e-12


def test_near_identity_net(rng):
    net = NearIdentityHenonNet.random(2, 3, 6, rng)
    z = rng.uniform(-1, 1, size=(20, 4))
    assert np.max(np.abs(net.forward(z, 0.0) - z)) <= 1e-15
    assert np.max(np.abs(net.inverse(net.forward(z, 0.01), 0.01) - z)) <= 1e-12
    assert layer_inverse(net.layers[0], layer_forward_near_identity(net.layers[0], 0.5, z[0]), 0.5) == pytest.approx(z[0])


def test_composition_is_associative_bitwise(rng):
    a = HenonNet.random(2, 2, 4, rng)
    b = HenonNet.random(2, 3, 4, rng)
    flat = HenonNet(a.layers + b.layers)
    z = rng.normal(size=(7, 4))
    np.testing.assert_array_equal(flat.forward(z), b.forward(a.forward(z)))


def test_batch_and_single_agree(rng):
    net = HenonNet.random(2, 2, 4, rng)
    z = rng.normal(size=(5, 4))
    np.testing.assert_allclose(net.forward(z)[2], net.forward(z[2]), rtol=1e-14, atol=1e-14)


def test_dimension_mismatch(rng):
    layer = HenonLayer.random(2, 3, rng)
    with pytest.raises(ContractError):
        henon_step(layer, np.zeros(6))
    with pytest.raises(ContractError):
        HenonNet((layer, HenonLayer.random(3, 3, rng)))
    with pytest.raises(ContractError):
        HenonLayer(PotentialNet.zeros(2), np.zeros(3))


def test_jacobian_fd_identity_and_linear(rng):
    z = rng.normal(size=4)
    np.testing.assert_allclose(jacobian_fd(lambda w: w, z), np.eye(4), atol=1e-10)
    A = rng.normal(size=(4, 4))
    np.testing.assert_allclose(jacobian_fd(lambda w: w @ A.T, z), A, atol=1e-9)
    np.testing.assert_allclose(jacobian_fd(lambda w: A @ w, z, batched=False), A, atol=1e-9)


@pytest.mark.parametrize("n", [1, 2])
def test_jacobian_of_quadratic_henon_step(n, rng):
    layer = quadratic_layer(n)
    I, O = np.eye(n), np.zeros((n, n))
    want = np.block([[O, I], [-I, I]])
    for z in rng.normal(size=(3, 2 * n)):
        np.testing.assert_allclose(jacobian_fd(lambda w: henon_step(layer, w), z), want, atol=1e-8)


def test_jacobian_fd_rejects_bad_input():
    with pytest.raises(ContractError):
        jacobian_fd(lambda w: w, np.zeros(2), step=0.0)
    with pytest.raises(NumericalError), np.errstate(divide="ignore", invalid="ignore"):
        jacobian_fd(lambda w: w / 0.0, np.zeros(2))


def test_symplectic_defect_detects_violation(rng):
    z = rng.normal(size=2)
    assert symplectic_defect(lambda w: w, z) <= 1e-10
    assert symplectic_defect(lambda w: w * np.array([2.0, 1.0]), z) >= 1.0


def test_canonical_form():
    np.testing.assert_array_equal(canonical_form(1), [[0, 1], [-1, 0]])


def test_symplecticity_property_sweep():
    rng = np.random.default_rng(2024)
    worst = 0.0
    count = 0
    for n in (1, 2, 3):
        for eps in (0.0, 0.01, 1.0):
            for _ in range(12):
                net = NearIdentityHenonNet.random(n, 3, 8, rng)
                z = rng.uniform(-1, 1, size=2 * n)
                worst = max(worst, symplectic_defect(lambda w: net.forward(w, eps), z))
                count += 1
    assert count >= 100
    assert worst <= 1e-5


def test_serialization_roundtrip(rng):
    net = HenonNet.random(2, 2, 3, rng)
    d = net.to_dict()
    assert set(d) == {"layers"} and set(d["layers"][0]) == {"potential", "shift"}
    back = HenonNet.from_dict(d)
    z = rng.normal(size=4)
    np.testing.assert_array_equal(back.forward(z), net.forward(z))


def test_parameter_counts(rng):
    # Per layer: h*n + 2h potential parameters plus n shifts.
    assert HenonNet.random(2, 10, 8, rng).num_parameters == 340
    assert NearIdentityHenonNet.random(2, 8, 6, rng).num_parameters == 208
    assert HenonNet.random(2, 16, 10, rng).num_parameters == 672


@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(1, 3),
    layers=st.integers(0, 3),
    eps=st.sampled_from([0.0, 1e-4, 0.01, 1.0]),
)
def test_roundtrip_property(seed, n, layers, eps):
    rng = np.random.default_rng(seed)
    net = NearIdentityHenonNet.random(n, layers, 4, rng)
    z = rng.uniform(-2, 2, size=(8, 2 * n))
    assert np.max(np.abs(net.inverse(net.forward(z, eps), eps) - z)) <= 1e-12
