import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vgqec import ansatz as az
from vgqec import channels as ch
from vgqec import codes as cd
from vgqec.qcore import CNOT, H, embed, random_density_matrix, rx, rz, rzz

from strategies import seeds

GATE_MATRIX = {"RX": rx, "RZ": rz, "RZZ": rzz}


def explicit_unitary(c, theta):
    """Multiply dense embedded gate matrices one by one."""
    u = np.eye(2**c.qubit_count, dtype=complex)
    for g in c.gates:
        x = theta[g.slot] if g.slot is not None else g.angle
        if g.kind in GATE_MATRIX:
            m = GATE_MATRIX[g.kind](x)
        else:
            m = H if g.kind == "H" else CNOT
        u = embed(m, g.targets, c.qubit_count) @ u
    return u


def test_gate_validation():
    with pytest.raises(ValueError):
        az.Gate("RX", (0, 1))
    with pytest.raises(ValueError):
        az.Gate("RZZ", (1, 1))
    with pytest.raises(ValueError):
        az.Gate("H", (0,), slot=0)
    with pytest.raises(ValueError):
        az.Gate("SWAP", (0, 1))


def test_circuit_slot_rules():
    with pytest.raises(ValueError):
        az.Circuit(2, [az.Gate("RX", (0,), slot=1)], 1)
    with pytest.raises(ValueError):
        az.Circuit(2, [az.Gate("RX", (0,), slot=0)], 2)
    with pytest.raises(ValueError):
        az.Circuit(2, [az.Gate("RX", (2,))], 0)


def test_empty_circuit_is_identity():
    assert np.allclose(az.circuit_unitary(az.Circuit(3, (), 0)), np.eye(8))


@given(st.floats(-7, 7, allow_nan=False))
def test_single_rzz(x):
    c = az.Circuit(2, [az.Gate("RZZ", (0, 1), slot=0)], 1)
    expect = np.diag(np.exp(-0.5j * x * np.array([1, -1, -1, 1])))
    assert np.allclose(az.circuit_unitary(c, [x]), expect, atol=1e-12)


@st.composite
def circuits(draw, n=3, length=3):
    gates, slots = [], 0
    for _ in range(length):
        kind = draw(st.sampled_from(az.KINDS))
        k = 2 if kind in ("CNOT", "RZZ") else 1
        targets = tuple(draw(st.permutations(range(n)))[:k])
        if kind in az.ROTATIONS and draw(st.booleans()):
            gates.append(az.Gate(kind, targets, slot=slots))
            slots += 1
        else:
            gates.append(az.Gate(kind, targets, angle=draw(st.floats(-4, 4))))
    theta = draw(st.lists(st.floats(-4, 4), min_size=slots, max_size=slots))
    return az.Circuit(n, gates, slots), theta


@given(circuits())
def test_circuit_unitary_matches_dense_product(ct):
    c, theta = ct
    u = az.circuit_unitary(c, theta)
    assert np.allclose(u, explicit_unitary(c, theta), atol=1e-12)
    assert np.allclose(u.conj().T @ u, np.eye(8), atol=1e-12)


def test_circuit_unitary_wrong_length():
    with pytest.raises(ValueError):
        az.circuit_unitary(az.build_U_E(2), [0.0])


@pytest.mark.parametrize("n,count", [(2, 10), (3, 21), (5, 55)])
def test_encoder_ansatz_parameter_count(n, count):
    c = az.build_U_E(n)
    assert c.parameter_count == count
    assert c.count("RX") + c.count("RZZ") == n * (2 * n - 1)
    assert c.count("RZ") == 2 * n


def test_crossing_word_reverses_strands():
    m = 6
    strands = list(range(m))
    for p in az.crossing_word(3):
        strands[p - 1], strands[p] = strands[p], strands[p - 1]
    assert strands == list(reversed(range(m)))


def test_encoder_ansatz_rejects_one_qubit():
    with pytest.raises(ValueError):
        az.build_U_E(1)


def test_encoder_ansatz_zero_is_identity():
    u = az.circuit_unitary(az.build_U_E(3), np.zeros(21))
    assert np.allclose(u, np.eye(8))


@pytest.mark.parametrize("m,blocks", [(1, 0), (3, 1), (5, 3), (7, 3)])
def test_recovery_ansatz_parameter_count(m, blocks):
    c = az.build_U_R(m, blocks)
    assert c.parameter_count == 3 * m + blocks * (2 * m + m * (m - 1) // 2)


def test_recovery_ansatz_errors():
    with pytest.raises(ValueError):
        az.build_U_R(0, 1)
    with pytest.raises(ValueError):
        az.build_U_R(3, -1)


@given(seeds)
def test_compiled_conjugate_matches_dense(seed):
    rng = np.random.default_rng(seed)
    c = az.build_U_R(3, 1)
    cc = az.CompiledCircuit(c)
    theta = rng.uniform(0, 2 * np.pi, c.parameter_count)
    xs = cc.angles(theta)
    rho = random_density_matrix(8, rng)
    out = rho
    for k, x in enumerate(xs):
        out = cc.conjugate(k, x, out)
    u = cc.unitary(theta)
    assert np.allclose(out, u @ rho @ u.conj().T, atol=1e-12)
    for k in reversed(range(len(xs))):
        out = cc.conjugate(k, xs[k], out, inverse=True)
    assert np.allclose(out, rho, atol=1e-12)


def test_vgqec_encoder_at_zero_is_base():
    base = cd.standard_encoder("rep3Z")
    e = az.vgqec_encoder(base, az.build_U_E(3), np.zeros(21))
    assert np.allclose(e.isometry, base.isometry)
    with pytest.raises(ValueError):
        az.vgqec_encoder(base, az.build_U_E(5), np.zeros(55))


@given(seeds)
def test_ancilla_recovery_is_trace_preserving(seed):
    rng = np.random.default_rng(seed)
    u_r = az.build_U_R(5, 1)
    beta = rng.uniform(0, 2 * np.pi, u_r.parameter_count)
    rec = az.vgqec_recovery(u_r, beta, cd.standard_decoder("rep3Z"))
    assert rec.tp_error() < 1e-9
    assert (rec.dim_in, rec.dim_out) == (8, 2)


def test_vgqec_recovery_at_zero_is_original():
    base = cd.standard_decoder("rep3Z")
    rec = az.vgqec_recovery(az.build_U_R(5, 2), np.zeros(az.build_U_R(5, 2).parameter_count), base)
    rho = random_density_matrix(8, np.random.default_rng(0))
    assert np.allclose(rec(rho), base(rho), atol=1e-12)


def test_vgqec_recovery_dimension_check():
    with pytest.raises(ValueError):
        az.vgqec_recovery(az.build_U_R(4, 1), np.zeros(az.build_U_R(4, 1).parameter_count), cd.standard_decoder("rep3Z"))


def test_ancilla_kraus_matches_explicit_trace():
    rng = np.random.default_rng(5)
    from vgqec.qcore import partial_trace, random_unitary

    u = random_unitary(8, rng)  # 1 system qubit, 2 ancillas
    kr = ch.KrausChannel(az.ancilla_kraus(u, 1, 2))
    rho = random_density_matrix(2, rng)
    anc = np.zeros((4, 4))
    anc[0, 0] = 1
    full = u @ np.kron(rho, anc) @ u.conj().T
    assert np.allclose(kr(rho), partial_trace(full, [2, 4], [0]), atol=1e-12)
