"""Gate application, expectations, and the analytic depolarizing transform."""

import numpy as np
import pytest
from scipy.linalg import expm

from qnnbench.simcore import (
    GATE_N_ANGLES,
    GATE_N_QUBITS,
    GateKind,
    NoiseSpec,
    Observable,
    StateVector,
    apply_depolarizing,
    apply_gate,
    expectation,
    gate_matrix,
    inverse_ops,
    zero_state,
)

RNG = np.random.default_rng(20240901)


def random_state(n_qubits, rng):
    amps = rng.normal(size=1 << n_qubits) + 1j * rng.normal(size=1 << n_qubits)
    amps /= np.linalg.norm(amps)
    return StateVector(n_qubits, amps)


def random_angles(kind, rng):
    return tuple(rng.uniform(0, 2 * np.pi, GATE_N_ANGLES[kind]))


def test_hadamard_on_zero():
    s = apply_gate(zero_state(1), GateKind.H, [0])
    np.testing.assert_allclose(s.amplitudes, [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-15)


def test_cnot_basis_action():
    s = zero_state(2)
    apply_gate(s, GateKind.X, [0])  # |10> with qubit 0 set
    apply_gate(s, GateKind.CNOT, [0, 1])
    np.testing.assert_allclose(np.abs(s.amplitudes), [0, 0, 0, 1], atol=1e-15)


def test_ry_pi_flips_qubit():
    s = apply_gate(zero_state(1), GateKind.RY, [0], [np.pi])
    assert abs(abs(s.amplitudes[1]) ** 2 - 1.0) < 1e-12


def test_gate_arity_and_index_errors():
    s = zero_state(2)
    with pytest.raises(ValueError):
        apply_gate(s, GateKind.RY, [0], [])  # missing angle
    with pytest.raises(ValueError):
        apply_gate(s, GateKind.H, [0], [1.0])  # unexpected angle
    with pytest.raises(IndexError):
        apply_gate(s, GateKind.X, [5])
    with pytest.raises(ValueError):
        apply_gate(s, GateKind.CNOT, [1, 1])  # duplicate qubits
    # state unchanged after rejected calls
    np.testing.assert_array_equal(s.amplitudes, zero_state(2).amplitudes)


@pytest.mark.parametrize("kind", list(GateKind))
def test_gate_matrices_unitary(kind):
    for _ in range(20):
        u = gate_matrix(kind, random_angles(kind, RNG))
        np.testing.assert_allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=1e-12)


@pytest.mark.parametrize("kind", list(GateKind))
def test_gate_inverse_roundtrip(kind):
    rng = np.random.default_rng(77)
    n = GATE_N_QUBITS[kind]
    qubits = [0] if n == 1 else [1, 0]
    for _ in range(20):
        s = random_state(3, rng)
        before = s.amplitudes.copy()
        angles = random_angles(kind, rng)
        apply_gate(s, kind, qubits, angles)
        for ikind, iq, iang in inverse_ops(kind, tuple(qubits), angles):
            apply_gate(s, ikind, iq, iang)
        np.testing.assert_allclose(s.amplitudes, before, atol=1e-10)


def test_norm_preserved_random_circuits():
    rng = np.random.default_rng(5)
    for _ in range(5):
        n = int(rng.integers(2, 11))
        s = zero_state(n)
        for _ in range(100):
            kind = list(GateKind)[rng.integers(0, len(GateKind))]
            qs = rng.choice(n, size=GATE_N_QUBITS[kind], replace=False).tolist()
            apply_gate(s, kind, qs, random_angles(kind, rng))
        assert abs(s.norm() - 1.0) < 1e-9


def test_zz_matches_matrix_exponential():
    for theta in RNG.uniform(0, 2 * np.pi, 10):
        zz = np.kron(np.diag([1, -1]), np.diag([1, -1]))  # Z (x) Z, qubit0 = LSB
        expected = expm(-0.5j * theta * zz)
        np.testing.assert_allclose(gate_matrix(GateKind.ZZ, (theta,)), expected, atol=1e-12)


def test_gate_application_matches_dense_matrix():
    # bitmask updates agree with dense 4x4 matrices on random 2-qubit states
    rng = np.random.default_rng(9)
    for kind in (GateKind.CNOT, GateKind.CZ, GateKind.CRX, GateKind.CRZ, GateKind.ZZ):
        s = random_state(2, rng)
        angles = random_angles(kind, rng)
        expected = gate_matrix(kind, angles) @ s.amplitudes
        apply_gate(s, kind, [0, 1], angles)
        np.testing.assert_allclose(s.amplitudes, expected, atol=1e-12)


def test_expectation_examples():
    assert expectation(zero_state(1), Observable.z(0)) == pytest.approx(1.0)
    plus = apply_gate(zero_state(1), GateKind.H, [0])
    assert expectation(plus, Observable.z(0)) == pytest.approx(0.0, abs=1e-12)
    s = apply_gate(zero_state(1), GateKind.RY, [0], [np.pi / 3])
    assert expectation(s, Observable.z(0)) == pytest.approx(0.5, abs=1e-12)


def test_expectation_is_real_and_nondestructive():
    rng = np.random.default_rng(11)
    obs = Observable(((0.7, ((0, "X"), (2, "Z"))), (-0.2, ((1, "Y"),))))
    s = random_state(3, rng)
    before = s.amplitudes.copy()
    val = expectation(s, obs)
    assert isinstance(val, float)
    np.testing.assert_array_equal(s.amplitudes, before)


def test_expectation_index_error():
    with pytest.raises(IndexError):
        expectation(zero_state(1), Observable.z(3))


def test_observable_trace():
    obs = Observable(((2.0, ()), (0.5, ((0, "Z"),))))
    assert obs.trace(3) == pytest.approx(2.0 * 8)
    assert Observable.z(0).trace(4) == 0.0


def test_depolarizing_examples():
    assert apply_depolarizing(0.8, 0.0, 4, NoiseSpec(0.0, 3)) == pytest.approx(0.8)
    assert apply_depolarizing(0.8, 0.0, 4, NoiseSpec(1.0, 1)) == pytest.approx(0.0)
    assert apply_depolarizing(0.8, 0.0, 1, NoiseSpec(0.3, 1)) == pytest.approx(0.56)
    # identity-trace observable relaxes to its maximally-mixed value
    assert apply_depolarizing(0.8, 2.0**4, 4, NoiseSpec(1.0, 1)) == pytest.approx(1.0)


def test_depolarizing_noiseless_bit_exact():
    e = 0.123456789
    assert apply_depolarizing(e, 0.0, 5, NoiseSpec(0.0, 7)) == e
    assert apply_depolarizing(e, 0.0, 5, NoiseSpec(0.4, 0)) == e


def test_depolarizing_shrinkage_traceless():
    rng = np.random.default_rng(2)
    for _ in range(50):
        e = rng.uniform(-1, 1)
        p = rng.uniform(0, 1)
        layers = int(rng.integers(0, 5))
        assert abs(apply_depolarizing(e, 0.0, 3, NoiseSpec(p, layers))) <= abs(e) + 1e-15


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(-0.1, 1)
    with pytest.raises(ValueError):
        NoiseSpec(1.2, 1)
    with pytest.raises(ValueError):
        NoiseSpec(0.1, -1)


def test_state_vector_validation():
    with pytest.raises(ValueError):
        StateVector(2, np.zeros(3))
    with pytest.raises(ValueError):
        StateVector(0)
