"""Parameterized-circuit IR and builders for the three quantum architectures.

Circuits are immutable gate sequences whose angles are bound to constants,
data-feature indices, or trainable-parameter indices. Binding a feature
vector and a parameter vector yields a fully numeric gate list that the
executor sweeps over a (rows, 2**n) amplitude batch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import kernels
from .simcore import (
    GATE_N_ANGLES,
    GATE_N_QUBITS,
    GateKind,
    Observable,
    StateVector,
)


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Feature:
    index: int
    scale: float = 1.0


@dataclass(frozen=True)
class Param:
    index: int


AngleBinding = Constant | Feature | Param


@dataclass(frozen=True)
class CircuitOp:
    kind: GateKind
    qubits: tuple[int, ...]
    angles: tuple[AngleBinding, ...] = ()


# angle sources in the elaborated plan
_SRC_CONST, _SRC_FEATURE, _SRC_PARAM = 0, 1, 2

# gates a ROT op elaborates to, in application order
_ROT_PARTS = (GateKind.RX, GateKind.RY, GateKind.RZ)


@dataclass(frozen=True)
class ElemGate:
    """One elementary gate with at most one bound angle."""

    kind: GateKind
    q0: int
    q1: int  # -1 for single-qubit gates
    src: int  # const / feature / param
    idx: int  # feature or param index, -1 for const
    val: float  # constant angle, or feature scale

    @property
    def param(self) -> int:
        return self.idx if self.src == _SRC_PARAM else -1


@dataclass(frozen=True)
class ParameterizedCircuit:
    n_qubits: int
    ops: tuple[CircuitOp, ...]
    n_params: int
    n_features: int
    layer_boundaries: tuple[int, ...] = ()

    @cached_property
    def elaborated(self) -> tuple[ElemGate, ...]:
        """Ops flattened to elementary gates (ROT becomes RX, RY, RZ)."""
        out = []
        for op in self.ops:
            if op.kind is GateKind.ROT:
                for part, binding in zip(_ROT_PARTS, op.angles):
                    out.append(_elem(part, op.qubits, binding))
            elif GATE_N_ANGLES[op.kind] == 0:
                q1 = op.qubits[1] if len(op.qubits) == 2 else -1
                out.append(ElemGate(op.kind, op.qubits[0], q1, _SRC_CONST, -1, 0.0))
            else:
                out.append(_elem(op.kind, op.qubits, op.angles[0]))
        return tuple(out)

    @cached_property
    def plan(self) -> "CircuitPlan":
        return compile_plan(self)


def _elem(kind: GateKind, qubits: tuple[int, ...], binding: AngleBinding) -> ElemGate:
    q1 = qubits[1] if len(qubits) == 2 else -1
    if isinstance(binding, Constant):
        return ElemGate(kind, qubits[0], q1, _SRC_CONST, -1, binding.value)
    if isinstance(binding, Feature):
        return ElemGate(kind, qubits[0], q1, _SRC_FEATURE, binding.index, binding.scale)
    return ElemGate(kind, qubits[0], q1, _SRC_PARAM, binding.index, 1.0)


def validate_circuit(circ: ParameterizedCircuit) -> None:
    """Check structural invariants; raises ValueError on the first violation."""
    seen_params = set()
    for i, op in enumerate(circ.ops):
        if len(op.qubits) != GATE_N_QUBITS[op.kind]:
            raise ValueError(f"op {i}: {op.kind.value} wants {GATE_N_QUBITS[op.kind]} qubits")
        if len(set(op.qubits)) != len(op.qubits):
            raise ValueError(f"op {i}: duplicate qubit in {op.qubits}")
        for q in op.qubits:
            if not (0 <= q < circ.n_qubits):
                raise ValueError(f"op {i}: qubit {q} out of range")
        if len(op.angles) != GATE_N_ANGLES[op.kind]:
            raise ValueError(f"op {i}: {op.kind.value} wants {GATE_N_ANGLES[op.kind]} angles")
        for a in op.angles:
            if isinstance(a, Feature) and not (0 <= a.index < circ.n_features):
                raise ValueError(f"op {i}: feature index {a.index} out of range")
            if isinstance(a, Param):
                if not (0 <= a.index < circ.n_params):
                    raise ValueError(f"op {i}: param index {a.index} out of range")
                seen_params.add(a.index)
    missing = set(range(circ.n_params)) - seen_params
    if missing:
        raise ValueError(f"params never referenced: {sorted(missing)}")
    for b in circ.layer_boundaries:
        if not (0 < b <= len(circ.ops)):
            raise ValueError(f"layer boundary {b} out of range")


def elem_angle_rows(gate: ElemGate, X: np.ndarray, TH: np.ndarray) -> np.ndarray | None:
    """Resolve one elementary gate's angle for every row; None when angle-free."""
    if GATE_N_ANGLES[gate.kind] == 0:
        return None
    if gate.src == _SRC_CONST:
        rows = max(X.shape[0], TH.shape[0])
        return np.full((rows, 1), gate.val)
    if gate.src == _SRC_FEATURE:
        return (X[:, gate.idx] * gate.val)[:, None]
    return TH[:, gate.idx][:, None]


_GATE_CODE = {
    GateKind.H: kernels.CODE_H,
    GateKind.X: kernels.CODE_X,
    GateKind.Y: kernels.CODE_Y,
    GateKind.Z: kernels.CODE_Z,
    GateKind.RX: kernels.CODE_RX,
    GateKind.RY: kernels.CODE_RY,
    GateKind.RZ: kernels.CODE_RZ,
    GateKind.CNOT: kernels.CODE_CNOT,
    GateKind.CZ: kernels.CODE_CZ,
    GateKind.CRX: kernels.CODE_CRX,
    GateKind.CRZ: kernels.CODE_CRZ,
    GateKind.ZZ: kernels.CODE_ZZ,
}


@dataclass(frozen=True)
class CircuitPlan:
    """Elementary gate sequence flattened to arrays for compiled sweeps."""

    code: np.ndarray  # elementary gate codes
    q0: np.ndarray
    q1: np.ndarray  # 0 where unused
    src: np.ndarray  # angle source per gate
    idx: np.ndarray  # feature/param index, 0 where unused
    val: np.ndarray  # constant angle or feature scale
    param: np.ndarray  # trainable parameter index or -1

    @property
    def n_gates(self) -> int:
        return self.code.shape[0]


def compile_plan(circ: "ParameterizedCircuit") -> CircuitPlan:
    elems = circ.elaborated
    n = len(elems)
    code = np.empty(n, dtype=np.int64)
    q0 = np.empty(n, dtype=np.int64)
    q1 = np.zeros(n, dtype=np.int64)
    src = np.empty(n, dtype=np.int64)
    idx = np.zeros(n, dtype=np.int64)
    val = np.zeros(n, dtype=np.float64)
    param = np.full(n, -1, dtype=np.int64)
    for g, e in enumerate(elems):
        code[g] = _GATE_CODE[e.kind]
        q0[g] = e.q0
        if e.q1 >= 0:
            q1[g] = e.q1
        src[g] = e.src
        if e.idx >= 0:
            idx[g] = e.idx
        val[g] = e.val
        param[g] = e.param
    return CircuitPlan(code, q0, q1, src, idx, val, param)


def plan_matrices(plan: CircuitPlan, X: np.ndarray, TH: np.ndarray):
    """Per-gate, per-row 2x2 entries (ZZ phases live in the diagonal slots)."""
    rows = max(X.shape[0], TH.shape[0])
    G = plan.n_gates
    ang = np.zeros((G, rows))
    fsel = plan.src == _SRC_FEATURE
    if fsel.any():
        ang[fsel] = X[:, plan.idx[fsel]].T * plan.val[fsel][:, None]
    psel = plan.src == _SRC_PARAM
    if psel.any():
        ang[psel] = TH[:, plan.idx[psel]].T
    csel = plan.src == _SRC_CONST
    if csel.any():
        ang[csel] = plan.val[csel][:, None]

    m00 = np.ones((G, rows), dtype=complex)
    m01 = np.zeros((G, rows), dtype=complex)
    m10 = np.zeros((G, rows), dtype=complex)
    m11 = np.ones((G, rows), dtype=complex)
    code = plan.code
    half = 0.5 * ang

    sel = code == kernels.CODE_H
    if sel.any():
        r = 1.0 / np.sqrt(2.0)
        m00[sel], m01[sel], m10[sel], m11[sel] = r, r, r, -r
    sel = (code == kernels.CODE_X) | (code == kernels.CODE_CNOT)
    if sel.any():
        m00[sel], m01[sel], m10[sel], m11[sel] = 0.0, 1.0, 1.0, 0.0
    sel = code == kernels.CODE_Y
    if sel.any():
        m00[sel], m01[sel], m10[sel], m11[sel] = 0.0, -1.0j, 1.0j, 0.0
    sel = (code == kernels.CODE_Z) | (code == kernels.CODE_CZ)
    if sel.any():
        m11[sel] = -1.0
    sel = (code == kernels.CODE_RX) | (code == kernels.CODE_CRX)
    if sel.any():
        c = np.cos(half[sel])
        s = -1.0j * np.sin(half[sel])
        m00[sel], m01[sel], m10[sel], m11[sel] = c, s, s, c
    sel = code == kernels.CODE_RY
    if sel.any():
        c = np.cos(half[sel])
        s = np.sin(half[sel])
        m00[sel], m01[sel], m10[sel], m11[sel] = c, -s, s, c
    sel = (
        (code == kernels.CODE_RZ)
        | (code == kernels.CODE_CRZ)
        | (code == kernels.CODE_ZZ)
    )
    if sel.any():
        e = np.exp(-1.0j * half[sel])
        m00[sel], m11[sel] = e, e.conj()
    return m00, m01, m10, m11


def apply_plan_fallback(amps, plan: CircuitPlan, mats, g: int, inverse: bool = False):
    """Apply plan gate g to all rows with the pure-numpy kernels."""
    m00, m01, m10, m11 = (m[g] for m in mats)
    if inverse:
        m00, m01, m10, m11 = m00.conj(), m10.conj(), m01.conj(), m11.conj()
    c = plan.code[g]
    if c == kernels.CODE_ZZ:
        kernels.apply_zz(amps, plan.q0[g], plan.q1[g], m00, m11)
    elif c >= kernels.CODE_CNOT:
        kernels.apply_ctrl_1q(amps, plan.q0[g], plan.q1[g], m00, m01, m10, m11)
    else:
        kernels.apply_1q(amps, plan.q0[g], m00, m01, m10, m11)


def _as_rows(a: np.ndarray, width: int, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape[1] != width:
        raise ValueError(f"{name} length {a.shape[1]} does not match expected {width}")
    return a


def broadcast_xt(circ: ParameterizedCircuit, X: np.ndarray, TH: np.ndarray):
    X = _as_rows(X, circ.n_features, "feature vector")
    TH = _as_rows(TH, circ.n_params, "parameter vector")
    rows = max(X.shape[0], TH.shape[0])
    if X.shape[0] not in (1, rows) or TH.shape[0] not in (1, rows):
        raise ValueError("feature/parameter row counts are incompatible")
    if X.shape[0] == 1 and rows > 1:
        X = np.broadcast_to(X, (rows, X.shape[1]))
    if TH.shape[0] == 1 and rows > 1:
        TH = np.broadcast_to(TH, (rows, TH.shape[1]))
    return X, TH, rows


def run_circuit_rows(
    circ: ParameterizedCircuit, X: np.ndarray, TH: np.ndarray
) -> np.ndarray:
    """Evolve |0...0> for every (x, theta) row pair; returns (rows, 2**n) amps.

    X and TH may each have one row (broadcast) or one row per output row.
    """
    X, TH, rows = broadcast_xt(circ, X, TH)
    plan = circ.plan
    mats = plan_matrices(plan, X, TH)
    amps = np.zeros((rows, 1 << circ.n_qubits), dtype=complex)
    amps[:, 0] = 1.0
    if kernels.HAVE_NUMBA:
        kernels.sweep_forward(amps, plan.code, plan.q0, plan.q1, *mats)
    else:
        for g in range(plan.n_gates):
            apply_plan_fallback(amps, plan, mats, g)
    return amps


def bind_and_run(
    circ: ParameterizedCircuit, x: np.ndarray, theta: np.ndarray
) -> StateVector:
    """Bind a feature and parameter vector and evolve from the all-zeros state."""
    amps = run_circuit_rows(circ, x, theta)
    return StateVector(circ.n_qubits, amps[0])


def reduce_to_lightcone(
    circ: ParameterizedCircuit, obs: Observable
) -> tuple[ParameterizedCircuit, Observable, np.ndarray]:
    """Drop gates that cannot influence ``obs`` and compact the qubit register.

    Exact: the reduced circuit's expectation of the remapped observable equals
    the full circuit's expectation of ``obs`` (the initial state is a product
    state and discarded gates commute out of the expectation). Also returns
    the sorted indices of parameters that remain present; gradients of all
    other parameters vanish identically.
    """
    active = set(obs.qubits())
    keep = [False] * len(circ.ops)
    for i in range(len(circ.ops) - 1, -1, -1):
        op = circ.ops[i]
        if any(q in active for q in op.qubits):
            keep[i] = True
            active.update(op.qubits)
    cone = sorted(active)
    qmap = {q: j for j, q in enumerate(cone)}
    ops = tuple(
        replace(op, qubits=tuple(qmap[q] for q in op.qubits))
        for op, k in zip(circ.ops, keep)
        if k
    )
    params = sorted(
        {
            a.index
            for op, k in zip(circ.ops, keep)
            if k
            for a in op.angles
            if isinstance(a, Param)
        }
    )
    reduced = ParameterizedCircuit(
        n_qubits=len(cone),
        ops=ops,
        n_params=circ.n_params,
        n_features=circ.n_features,
        layer_boundaries=(),
    )
    return reduced, obs.remap(qmap), np.asarray(params, dtype=int)


def ring_pairs(n_qubits: int) -> list[tuple[int, int]]:
    """Ring edges (q, q+1 mod n) in brickwork order: even pairs, then odd."""
    if n_qubits < 2:
        return []
    pairs = [(q, q + 1) for q in range(0, n_qubits - 1, 2)]
    pairs += [(q, (q + 1) % n_qubits) for q in range(1, n_qubits, 2)]
    if n_qubits % 2 == 1:
        pairs.append((n_qubits - 1, 0))
    return pairs


def build_qnnn(n_qubits: int, n_layers: int) -> ParameterizedCircuit:
    """Encode-then-train network: one RY feature block, then trainable layers.

    Each layer is a general rotation on every qubit followed by a CNOT ring;
    3 * n_qubits * n_layers trainable parameters.
    """
    if n_qubits < 1 or n_layers < 1:
        raise ValueError("n_qubits and n_layers must be >= 1")
    ops = [
        CircuitOp(GateKind.RY, (q,), (Feature(q),)) for q in range(n_qubits)
    ]
    boundaries = []
    p = 0
    for _ in range(n_layers):
        for q in range(n_qubits):
            ops.append(
                CircuitOp(GateKind.ROT, (q,), (Param(p), Param(p + 1), Param(p + 2)))
            )
            p += 3
        for a, b in ring_pairs(n_qubits):
            ops.append(CircuitOp(GateKind.CNOT, (a, b)))
        boundaries.append(len(ops))
    circ = ParameterizedCircuit(
        n_qubits=n_qubits,
        ops=tuple(ops),
        n_params=p,
        n_features=n_qubits,
        layer_boundaries=tuple(boundaries),
    )
    validate_circuit(circ)
    return circ


def build_qenn(n_qubits: int, n_layers: int) -> ParameterizedCircuit:
    """Embedding network: feature encoding and trainable blocks alternate.

    Every layer re-encodes the same features (identical encoding topology per
    layer), then applies general rotations and a trainable ZZ entangler ring;
    (3 + 1) * n_qubits * n_layers trainable parameters.
    """
    if n_qubits < 1 or n_layers < 1:
        raise ValueError("n_qubits and n_layers must be >= 1")
    ops: list[CircuitOp] = []
    boundaries = []
    p = 0
    for _ in range(n_layers):
        for q in range(n_qubits):
            ops.append(CircuitOp(GateKind.RY, (q,), (Feature(q),)))
        for q in range(n_qubits):
            ops.append(
                CircuitOp(GateKind.ROT, (q,), (Param(p), Param(p + 1), Param(p + 2)))
            )
            p += 3
        for a, b in ring_pairs(n_qubits):
            ops.append(CircuitOp(GateKind.ZZ, (a, b), (Param(p),)))
            p += 1
        boundaries.append(len(ops))
    circ = ParameterizedCircuit(
        n_qubits=n_qubits,
        ops=tuple(ops),
        n_params=p,
        n_features=n_qubits,
        layer_boundaries=tuple(boundaries),
    )
    validate_circuit(circ)
    return circ


def build_qcnn_kernel() -> ParameterizedCircuit:
    """4-qubit convolution kernel: RX pixel encoding + 6 controlled rotations.

    Readout is the Pauli-Z expectation on qubit 0.
    """
    ops = [CircuitOp(GateKind.RX, (q,), (Feature(q),)) for q in range(4)]
    wiring = [
        (GateKind.CRZ, (0, 1)),
        (GateKind.CRZ, (1, 2)),
        (GateKind.CRZ, (2, 3)),
        (GateKind.CRX, (3, 0)),
        (GateKind.CRX, (0, 2)),
        (GateKind.CRX, (1, 3)),
    ]
    for p, (kind, qubits) in enumerate(wiring):
        ops.append(CircuitOp(kind, qubits, (Param(p),)))
    circ = ParameterizedCircuit(
        n_qubits=4,
        ops=tuple(ops),
        n_params=6,
        n_features=4,
        layer_boundaries=(len(ops),),
    )
    validate_circuit(circ)
    return circ


def _binding_text(b: AngleBinding) -> str:
    if isinstance(b, Constant):
        return repr(b.value)
    if isinstance(b, Feature):
        return f"f{b.index}" if b.scale == 1.0 else f"f{b.index}*{b.scale!r}"
    return f"p{b.index}"


def _binding_parse(text: str) -> AngleBinding:
    text = text.strip()
    if text.startswith("p"):
        return Param(int(text[1:]))
    if text.startswith("f"):
        if "*" in text:
            head, scale = text.split("*", 1)
            return Feature(int(head[1:]), float(scale))
        return Feature(int(text[1:]))
    return Constant(float(text))


def circuit_to_text(circ: ParameterizedCircuit) -> str:
    """Human-readable serialization, one op per line."""
    lines = [
        f"qubits {circ.n_qubits}",
        f"features {circ.n_features}",
        f"params {circ.n_params}",
        "layers " + ",".join(str(b) for b in circ.layer_boundaries),
    ]
    for op in circ.ops:
        line = op.kind.value + " " + ",".join(f"q{q}" for q in op.qubits)
        if op.angles:
            line += " " + ",".join(_binding_text(a) for a in op.angles)
        lines.append(line)
    return "\n".join(lines) + "\n"


def circuit_from_text(text: str) -> ParameterizedCircuit:
    header: dict[str, str] = {}
    ops = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key = line.split(" ", 1)[0]
        if key in ("qubits", "features", "params", "layers"):
            header[key] = line.split(" ", 1)[1] if " " in line else ""
            continue
        parts = line.split(" ")
        kind = GateKind(parts[0])
        qubits = tuple(int(tok[1:]) for tok in parts[1].split(","))
        angles: tuple[AngleBinding, ...] = ()
        if len(parts) > 2:
            angles = tuple(_binding_parse(tok) for tok in parts[2].split(","))
        ops.append(CircuitOp(kind, qubits, angles))
    try:
        boundaries = tuple(
            int(tok) for tok in header.get("layers", "").split(",") if tok
        )
        circ = ParameterizedCircuit(
            n_qubits=int(header["qubits"]),
            ops=tuple(ops),
            n_params=int(header["params"]),
            n_features=int(header["features"]),
            layer_boundaries=boundaries,
        )
    except KeyError as exc:
        raise ValueError(f"circuit text is missing header line {exc}") from exc
    validate_circuit(circ)
    return circ
