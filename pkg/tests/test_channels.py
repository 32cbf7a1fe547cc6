import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vgqec import channels as ch
from vgqec.qcore import I2, X, Y, Z, random_density_matrix, random_unitary, tensor

from strategies import channels, qubit_channels, seeds, states, unit

TABLE_T1 = [97.51, 127.61, 92.68, 79.36, 19.76]
TABLE_T2 = [178.3, 109.28, 120.95, 35.71, 19.4]


def relaxation_map(rho, t, t1, t2):
    """Closed-form single-qubit thermal relaxation written entry by entry."""
    t_phi_inv = 1 / t2 - 1 / (2 * t1)
    coh = np.exp(-t / (2 * t1) - t * t_phi_inv)
    p1 = rho[1, 1] * np.exp(-t / t1)
    return np.array([[1 - p1, rho[0, 1] * coh], [rho[1, 0] * coh, p1]])


def test_kraus_channel_rejects_non_tp():
    with pytest.raises(ValueError, match="trace preserving"):
        ch.KrausChannel(np.array([[[1, 0], [0, 0.5]]]))
    with pytest.raises(ValueError):
        ch.KrausChannel(np.zeros((0, 2, 2)))


@given(channels())
def test_kraus_choi_round_trip(c):
    choi = ch.kraus_to_choi(c)
    assert ch.is_cptp_choi(choi)
    back = ch.choi_to_kraus(choi)
    rho = random_density_matrix(c.dim_in, np.random.default_rng(1))
    assert np.allclose(back(rho), c(rho), atol=1e-10)
    assert back.rank <= c.rank


def test_choi_to_kraus_rejects_non_tp():
    bad = ch.ChoiMatrix(np.eye(4) * 0.3, 2, 2)
    with pytest.raises(ValueError):
        ch.choi_to_kraus(bad)


@given(qubit_channels())
def test_entanglement_fidelity_of_maximally_mixed_is_channel_fidelity(c):
    assert abs(ch.entanglement_fidelity(np.eye(2) / 2, c) - ch.channel_fidelity(c)) <= 1e-12


@given(seeds)
def test_unitary_channel_fidelity(seed):
    u = random_unitary(4, np.random.default_rng(seed))
    assert abs(ch.channel_fidelity(ch.unitary_channel(u)) - abs(np.trace(u)) ** 2 / 16) < 1e-12


@given(channels(dims=(2,)), channels(dims=(2,)), channels(dims=(2,)))
def test_composite_fidelity_matches_explicit_composition(a, b, c):
    direct = ch.channel_fidelity(ch.compose(a, ch.compose(b, c)))
    assert abs(ch.composite_fidelity(a, b, c) - direct) < 1e-12


def test_compose_dimension_mismatch():
    with pytest.raises(ValueError):
        ch.compose(ch.identity_channel(2), ch.identity_channel(4))


@given(unit)
def test_amplitude_damping_fidelity_closed_form(g):
    assert abs(ch.channel_fidelity(ch.amplitude_damping(g)) - (1 + np.sqrt(1 - g)) ** 2 / 4) < 1e-12


@given(unit)
def test_pauli_channel_fidelities(p):
    assert abs(ch.channel_fidelity(ch.bit_flip(p)) - (1 - p)) < 1e-12
    assert abs(ch.channel_fidelity(ch.depolarizing(p)) - (1 - 3 * p / 4)) < 1e-12


def test_unit_interval_checks():
    for f in (ch.amplitude_damping, ch.bit_flip, ch.depolarizing, ch.interpolated_pauli):
        with pytest.raises(ValueError):
            f(1.2)


@given(states(), st.floats(0, 50), st.floats(5, 200), st.floats(0.05, 1.0))
def test_thermal_relaxation_matches_closed_form(rho, t, t1, ratio):
    t2 = 2 * t1 * ratio
    out = ch.thermal_relaxation(t, t1, t2)(rho)
    assert np.allclose(out, relaxation_map(rho, t, t1, t2), atol=1e-10)


def test_thermal_relaxation_errors_and_limits():
    with pytest.raises(ValueError):
        ch.thermal_relaxation(1.0, 10.0, 25.0)
    with pytest.raises(ValueError):
        ch.thermal_relaxation(-1.0, 10.0, 10.0)
    assert abs(ch.channel_fidelity(ch.thermal_relaxation(0.0, 10.0, 15.0)) - 1) < 1e-15
    gamma, lam = ch.thermal_decay_factors(2.5, 97.51, 178.3)
    assert np.isclose(np.sqrt(1 - gamma - lam), np.exp(-2.5 / 178.3))


def test_interpolated_pauli_endpoints():
    deph = ch.interpolated_pauli(0.0, 0.05)
    rho = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert np.allclose(deph(rho), 0.95 * rho + 0.05 * Z @ rho @ Z)
    depol = ch.interpolated_pauli(1.0, 0.05)
    expect = 0.85 * rho + 0.05 * (X @ rho @ X + Y @ rho @ Y + Z @ rho @ Z)
    assert np.allclose(depol(rho), expect)


def test_correlated_xx_pair_indexing():
    c = ch.correlated_xx(1.0, 2, 3)
    assert np.allclose(c.ops[-1], tensor(I2, X, X))
    with pytest.raises(ValueError):
        ch.correlated_xx(0.1, 3, 3)
    with pytest.raises(ValueError):
        ch.correlated_xx(0.1, 0, 3)


@given(st.sampled_from([0.0, 0.3, 1.0]), seeds)
def test_interpolation_layers_match_kraus_form(eta, seed):
    layers = ch.interpolation_layers(eta, n=3)
    kraus = ch.interpolation_noise(eta, n=3)
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(8, rng)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    assert np.allclose(layers(rho), kraus(rho), atol=1e-12)
    assert np.allclose(layers.adjoint(a), kraus.adjoint(a), atol=1e-12)
    assert kraus.tp_error() < 1e-10


def test_interpolation_order_is_pauli_then_xx_then_damping():
    layers = ch.interpolation_layers(0.5, n=2)
    kinds = [len(t) for _, t in layers.layers]
    assert kinds == [1, 1, 2, 1, 1]
    # explicit composition N3 o N2 o N1
    n1 = ch.tensor_channels([ch.interpolated_pauli(0.5)] * 2)
    n2 = ch.correlated_xx(0.05, 1, 2)
    n3 = ch.tensor_channels([ch.amplitude_damping(0.05)] * 2)
    full = ch.compose(n3, ch.compose(n2, n1))
    rho = random_density_matrix(4, np.random.default_rng(3))
    assert np.allclose(layers(rho), full(rho), atol=1e-12)


@given(seeds)
def test_local_channel_adjoint_duality(seed):
    rng = np.random.default_rng(seed)
    noise = ch.thermal_layers(3.0, TABLE_T1[:3], TABLE_T2[:3])
    rho = random_density_matrix(8, rng)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    lhs = np.trace(a @ noise(rho))
    rhs = np.trace(noise.adjoint(a) @ rho)
    assert abs(lhs - rhs) < 1e-12


def test_thermal_layers_equal_register_product():
    lay = ch.thermal_layers(1.5, TABLE_T1, TABLE_T2)
    reg = ch.thermal_register(1.5, TABLE_T1, TABLE_T2)
    rho = random_density_matrix(32, np.random.default_rng(0))
    assert np.allclose(lay(rho), reg(rho), atol=1e-12)
    with pytest.raises(ValueError):
        ch.thermal_layers(1.0, TABLE_T1, TABLE_T2[:4])


def test_local_channel_validates_targets():
    with pytest.raises(ValueError):
        ch.LocalChannel(((ch.bit_flip(0.1), (3,)),), 3)
    with pytest.raises(ValueError):
        ch.LocalChannel(((ch.bit_flip(0.1), (0, 1)),), 3)


@given(qubit_channels())
def test_superoperator_agrees_with_kraus(c):
    rho = random_density_matrix(2, np.random.default_rng(2))
    s = ch.superoperator(c)
    assert np.allclose((s @ rho.reshape(-1)).reshape(2, 2), c(rho), atol=1e-12)
