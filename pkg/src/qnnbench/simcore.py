"""Dense state-vector simulation of the gate set used by the quantum models.

Gates are applied with in-place amplitude-pair updates indexed by bitmask;
no 2**n x 2**n matrix is ever materialized. Qubit q of basis index i is the
bit ``(i >> q) & 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from math import cos, sin, sqrt

import numpy as np

from . import kernels


class GateKind(Enum):
    H = "H"
    X = "X"
    Y = "Y"
    Z = "Z"
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    ROT = "ROT"
    CNOT = "CNOT"
    CZ = "CZ"
    CRX = "CRX"
    CRZ = "CRZ"
    ZZ = "ZZ"


#: number of rotation angles each gate takes
GATE_N_ANGLES = {
    GateKind.H: 0,
    GateKind.X: 0,
    GateKind.Y: 0,
    GateKind.Z: 0,
    GateKind.RX: 1,
    GateKind.RY: 1,
    GateKind.RZ: 1,
    GateKind.ROT: 3,
    GateKind.CNOT: 0,
    GateKind.CZ: 0,
    GateKind.CRX: 1,
    GateKind.CRZ: 1,
    GateKind.ZZ: 1,
}

#: number of qubits each gate acts on
GATE_N_QUBITS = {
    GateKind.H: 1,
    GateKind.X: 1,
    GateKind.Y: 1,
    GateKind.Z: 1,
    GateKind.RX: 1,
    GateKind.RY: 1,
    GateKind.RZ: 1,
    GateKind.ROT: 1,
    GateKind.CNOT: 2,
    GateKind.CZ: 2,
    GateKind.CRX: 2,
    GateKind.CRZ: 2,
    GateKind.ZZ: 2,
}

_SQRT2_INV = 1.0 / sqrt(2.0)

_FIXED_1Q = {
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV,
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    GateKind.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}

_X_MAT = _FIXED_1Q[GateKind.X]
_Z_MAT = _FIXED_1Q[GateKind.Z]


def _rx(theta: float) -> np.ndarray:
    c, s = cos(theta / 2.0), sin(theta / 2.0)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def _ry(theta: float) -> np.ndarray:
    c, s = cos(theta / 2.0), sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rz(theta: float) -> np.ndarray:
    return np.array(
        [[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex
    )


def _rot(tx: float, ty: float, tz: float) -> np.ndarray:
    # general rotation: RZ(tz) . RY(ty) . RX(tx), RX applied to the state first
    return _rz(tz) @ _ry(ty) @ _rx(tx)


def gate_matrix(kind: GateKind, angles: tuple[float, ...] = ()) -> np.ndarray:
    """Dense unitary of a gate, for verification and small-circuit checks.

    For two-qubit gates the 4x4 matrix is in the basis where the first
    listed qubit is the least significant bit (index = bit0 + 2*bit1).
    """
    if len(angles) != GATE_N_ANGLES[kind]:
        raise ValueError(
            f"{kind.value} takes {GATE_N_ANGLES[kind]} angle(s), got {len(angles)}"
        )
    if kind in _FIXED_1Q:
        return _FIXED_1Q[kind].copy()
    if kind is GateKind.RX:
        return _rx(angles[0])
    if kind is GateKind.RY:
        return _ry(angles[0])
    if kind is GateKind.RZ:
        return _rz(angles[0])
    if kind is GateKind.ROT:
        return _rot(*angles)
    if kind is GateKind.ZZ:
        ph = np.exp(-0.5j * angles[0])
        return np.diag([ph, ph.conjugate(), ph.conjugate(), ph])
    # controlled gates: control = first qubit = bit 0
    u = np.eye(4, dtype=complex)
    if kind is GateKind.CNOT:
        sub = _X_MAT
    elif kind is GateKind.CZ:
        sub = _Z_MAT
    elif kind is GateKind.CRX:
        sub = _rx(angles[0])
    elif kind is GateKind.CRZ:
        sub = _rz(angles[0])
    else:  # pragma: no cover
        raise ValueError(f"unknown gate {kind}")
    # control set: indices 1 (t=0) and 3 (t=1)
    u[1, 1], u[1, 3] = sub[0, 0], sub[0, 1]
    u[3, 1], u[3, 3] = sub[1, 0], sub[1, 1]
    return u


def inverse_ops(
    kind: GateKind, qubits: tuple[int, ...], angles: tuple[float, ...]
) -> list[tuple[GateKind, tuple[int, ...], tuple[float, ...]]]:
    """Gate sequence realizing the inverse of the given gate."""
    if kind in (GateKind.H, GateKind.X, GateKind.Y, GateKind.Z, GateKind.CNOT, GateKind.CZ):
        return [(kind, qubits, angles)]
    if kind is GateKind.ROT:
        tx, ty, tz = angles
        return [
            (GateKind.RZ, qubits, (-tz,)),
            (GateKind.RY, qubits, (-ty,)),
            (GateKind.RX, qubits, (-tx,)),
        ]
    return [(kind, qubits, tuple(-a for a in angles))]


@dataclass
class StateVector:
    """Pure n-qubit state as a dense array of 2**n complex amplitudes."""

    n_qubits: int
    amplitudes: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        dim = 1 << self.n_qubits
        if self.amplitudes is None:
            amps = np.zeros(dim, dtype=complex)
            amps[0] = 1.0
            self.amplitudes = amps
        else:
            self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
            if self.amplitudes.shape != (dim,):
                raise ValueError(
                    f"amplitudes must have length {dim}, got {self.amplitudes.shape}"
                )

    def norm(self) -> float:
        return float(np.sqrt(kernels.row_norms_sq(self.amplitudes[None, :])[0]))

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


def zero_state(n_qubits: int) -> StateVector:
    return StateVector(n_qubits)


def _check_gate_args(state, kind, qubits, angles):
    if GATE_N_QUBITS[kind] != len(qubits):
        raise ValueError(f"{kind.value} acts on {GATE_N_QUBITS[kind]} qubit(s), got {len(qubits)}")
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"{kind.value} qubit indices must be distinct: {qubits}")
    for q in qubits:
        if not (0 <= q < state.n_qubits):
            raise IndexError(f"qubit {q} out of range for {state.n_qubits}-qubit state")
    if len(angles) != GATE_N_ANGLES[kind]:
        raise ValueError(
            f"{kind.value} takes {GATE_N_ANGLES[kind]} angle(s), got {len(angles)}"
        )


def _rows(val: complex) -> np.ndarray:
    return np.array([val], dtype=complex)


def apply_gate_rows(
    amps: np.ndarray,
    kind: GateKind,
    qubits: tuple[int, ...],
    angle_rows: np.ndarray | None,
) -> None:
    """Apply one gate to every row of a (rows, dim) amplitude array in place.

    ``angle_rows`` has shape (rows, n_angles); per-row angles allow batched
    evaluation of differently-bound circuits in one sweep.
    """
    rows = amps.shape[0]
    if kind in _FIXED_1Q:
        m = _FIXED_1Q[kind]
        ones = np.full(rows, 1.0, dtype=complex)
        kernels.apply_1q(
            amps, qubits[0], m[0, 0] * ones, m[0, 1] * ones, m[1, 0] * ones, m[1, 1] * ones
        )
        return
    if kind is GateKind.CNOT:
        z = np.zeros(rows, dtype=complex)
        o = np.full(rows, 1.0, dtype=complex)
        kernels.apply_ctrl_1q(amps, qubits[0], qubits[1], z, o, o, z)
        return
    if kind is GateKind.CZ:
        o = np.full(rows, 1.0, dtype=complex)
        z = np.zeros(rows, dtype=complex)
        kernels.apply_ctrl_1q(amps, qubits[0], qubits[1], o, z, z, -o)
        return

    th = angle_rows[:, 0] if angle_rows is not None else None
    if kind is GateKind.RX or kind is GateKind.CRX:
        c = np.cos(th / 2.0).astype(complex)
        s = (-1j * np.sin(th / 2.0)).astype(complex)
        if kind is GateKind.RX:
            kernels.apply_1q(amps, qubits[0], c, s, s, c)
        else:
            kernels.apply_ctrl_1q(amps, qubits[0], qubits[1], c, s, s, c)
        return
    if kind is GateKind.RY:
        c = np.cos(th / 2.0).astype(complex)
        s = np.sin(th / 2.0).astype(complex)
        kernels.apply_1q(amps, qubits[0], c, -s, s, c)
        return
    if kind is GateKind.RZ or kind is GateKind.CRZ:
        ph = np.exp(-0.5j * th)
        zero = np.zeros_like(ph)
        if kind is GateKind.RZ:
            kernels.apply_1q(amps, qubits[0], ph, zero, zero, ph.conj())
        else:
            kernels.apply_ctrl_1q(amps, qubits[0], qubits[1], ph, zero, zero, ph.conj())
        return
    if kind is GateKind.ZZ:
        ph = np.exp(-0.5j * th)
        kernels.apply_zz(amps, qubits[0], qubits[1], ph, ph.conj())
        return
    if kind is GateKind.ROT:
        # per-row composed 2x2 = RZ(tz) RY(ty) RX(tx)
        tx, ty, tz = angle_rows[:, 0], angle_rows[:, 1], angle_rows[:, 2]
        cx, sx = np.cos(tx / 2.0), np.sin(tx / 2.0)
        cy, sy = np.cos(ty / 2.0), np.sin(ty / 2.0)
        ezm = np.exp(-0.5j * tz)
        # RY @ RX entries
        r00 = cy * cx + (-1j * sx) * (-sy)
        r01 = cy * (-1j * sx) + (-sy) * cx
        r10 = sy * cx + cy * (-1j * sx)
        r11 = sy * (-1j * sx) + cy * cx
        kernels.apply_1q(
            amps, qubits[0], ezm * r00, ezm * r01, ezm.conj() * r10, ezm.conj() * r11
        )
        return
    raise ValueError(f"unknown gate {kind}")  # pragma: no cover


def apply_gate(
    state: StateVector,
    kind: GateKind,
    qubits: list[int] | tuple[int, ...],
    angles: list[float] | tuple[float, ...] = (),
) -> StateVector:
    """Apply one gate in place; rejects bad arity or indices before mutating."""
    qubits = tuple(qubits)
    angles = tuple(float(a) for a in angles)
    _check_gate_args(state, kind, qubits, angles)
    rows = state.amplitudes[None, :]
    angle_rows = np.array([angles], dtype=float) if angles else None
    apply_gate_rows(rows, kind, qubits, angle_rows)
    return state


PAULI_MATS = {"X": _X_MAT, "Y": _FIXED_1Q[GateKind.Y], "Z": _Z_MAT}


@dataclass(frozen=True)
class Observable:
    """Real linear combination of Pauli strings."""

    terms: tuple[tuple[float, tuple[tuple[int, str], ...]], ...]

    @staticmethod
    def pauli(kind: str, qubit: int, coeff: float = 1.0) -> "Observable":
        return Observable(((float(coeff), ((qubit, kind),)),))

    @staticmethod
    def z(qubit: int) -> "Observable":
        return Observable.pauli("Z", qubit)

    def max_qubit(self) -> int:
        return max((q for _, ps in self.terms for q, _ in ps), default=-1)

    def qubits(self) -> set[int]:
        return {q for _, ps in self.terms for q, _ in ps}

    def trace(self, n_qubits: int) -> float:
        """Tr(O); Pauli strings are traceless, identity terms contribute 2**n."""
        return sum(c * float(1 << n_qubits) for c, ps in self.terms if not ps)

    def remap(self, qubit_map: dict[int, int]) -> "Observable":
        return Observable(
            tuple(
                (c, tuple((qubit_map[q], p) for q, p in ps)) for c, ps in self.terms
            )
        )


def apply_observable_rows(amps: np.ndarray, obs: Observable) -> np.ndarray:
    """Return O|psi_r> for every row r (rows are not modified)."""
    out = np.zeros_like(amps)
    rows = amps.shape[0]
    ones = np.full(rows, 1.0, dtype=complex)
    for coeff, paulis in obs.terms:
        work = amps.copy()
        for q, p in paulis:
            m = PAULI_MATS[p]
            kernels.apply_1q(work, q, m[0, 0] * ones, m[0, 1] * ones, m[1, 0] * ones, m[1, 1] * ones)
        out += coeff * work
    return out


def expectation_rows(amps: np.ndarray, obs: Observable, n_qubits: int) -> np.ndarray:
    """<psi_r|O|psi_r> for each row of a (rows, dim) batch."""
    if obs.max_qubit() >= n_qubits:
        raise IndexError(
            f"observable acts on qubit {obs.max_qubit()}, state has {n_qubits}"
        )
    return kernels.row_inner(amps, apply_observable_rows(amps, obs)).real


def expectation(state: StateVector, obs: Observable) -> float:
    """Expectation value of a Hermitian observable; the state is unmodified."""
    return float(expectation_rows(state.amplitudes[None, :], obs, state.n_qubits)[0])


@dataclass(frozen=True)
class NoiseSpec:
    """Global depolarizing noise applied analytically, once per trainable layer.

    ``p`` is the per-layer depolarizing probability; ``layer_count`` how many
    times the channel acts. p=0 or layer_count=0 leaves expectations unchanged.
    """

    p: float = 0.0
    layer_count: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"depolarizing p must be in [0, 1], got {self.p}")
        if self.layer_count < 0:
            raise ValueError("layer_count must be >= 0")

    @property
    def survival(self) -> float:
        """Factor multiplying clean expectations of traceless observables."""
        return (1.0 - self.p) ** self.layer_count


def apply_depolarizing(
    e_clean, obs_trace: float, n_qubits: int, noise: NoiseSpec
):
    """Noisy expectation from a clean one, no density matrix materialized.

    E_noisy = s * E_clean + (1 - s) * Tr(O) / 2**n with s = (1-p)**layers.
    Accepts scalar or array ``e_clean``.
    """
    s = noise.survival
    return s * e_clean + (1.0 - s) * obs_trace / float(1 << n_qubits)
