"""Low-level state-vector update kernels.

Amplitude arrays are (rows, 2**n_qubits) complex128, C-contiguous, and are
updated in place. Rows are independent states evolved under per-row gate
matrices, which lets callers batch shifted/bound circuit evaluations.

Basis convention: qubit q of basis index i is the bit ``(i >> q) & 1``
(qubit 0 is the least significant bit).

All kernels are elementwise over (row, amplitude-pair) with no cross-element
reductions, so results are bit-identical regardless of thread count. Set
QNNBENCH_NO_NUMBA=1 to force the pure-numpy fallbacks.
"""

from __future__ import annotations

import os

import numpy as np

_USE_NUMBA = os.environ.get("QNNBENCH_NO_NUMBA", "") != "1"

if _USE_NUMBA:
    try:
        from numba import njit, prange
    except ImportError:  # pragma: no cover
        _USE_NUMBA = False

if _USE_NUMBA:

    @njit(parallel=True, cache=True)
    def _apply_1q_nb(amps, q, m00, m01, m10, m11):
        rows, dim = amps.shape
        mask = 1 << q
        low = mask - 1
        npairs = dim >> 1
        for r in prange(rows):
            a00 = m00[r]
            a01 = m01[r]
            a10 = m10[r]
            a11 = m11[r]
            for k in range(npairs):
                i0 = ((k >> q) << (q + 1)) | (k & low)
                i1 = i0 | mask
                v0 = amps[r, i0]
                v1 = amps[r, i1]
                amps[r, i0] = a00 * v0 + a01 * v1
                amps[r, i1] = a10 * v0 + a11 * v1

    @njit(parallel=True, cache=True)
    def _apply_ctrl_1q_nb(amps, qc, qt, m00, m01, m10, m11):
        rows, dim = amps.shape
        qa = qc if qc < qt else qt
        qb = qt if qc < qt else qc
        cmask = 1 << qc
        tmask = 1 << qt
        lowa = (1 << qa) - 1
        midb = (1 << (qb - 1 - qa)) - 1
        ngroups = dim >> 2
        for r in prange(rows):
            a00 = m00[r]
            a01 = m01[r]
            a10 = m10[r]
            a11 = m11[r]
            for k in range(ngroups):
                base = (
                    ((k >> (qb - 1)) << (qb + 1))
                    | (((k >> qa) & midb) << (qa + 1))
                    | (k & lowa)
                )
                i0 = base | cmask
                i1 = i0 | tmask
                v0 = amps[r, i0]
                v1 = amps[r, i1]
                amps[r, i0] = a00 * v0 + a01 * v1
                amps[r, i1] = a10 * v0 + a11 * v1

    @njit(parallel=True, cache=True)
    def _apply_zz_nb(amps, q0, q1, ph_eq, ph_ne):
        rows, dim = amps.shape
        for r in prange(rows):
            pe = ph_eq[r]
            pn = ph_ne[r]
            for i in range(dim):
                if (((i >> q0) ^ (i >> q1)) & 1) == 0:
                    amps[r, i] *= pe
                else:
                    amps[r, i] *= pn

    @njit(parallel=True, cache=True)
    def _zero_control0_nb(amps, qc):
        rows, dim = amps.shape
        for r in prange(rows):
            for i in range(dim):
                if ((i >> qc) & 1) == 0:
                    amps[r, i] = 0.0


def _pair_index_arrays(dim: int, q: int):
    k = np.arange(dim >> 1)
    i0 = ((k >> q) << (q + 1)) | (k & ((1 << q) - 1))
    return i0, i0 | (1 << q)


def _apply_1q_np(amps, q, m00, m01, m10, m11):
    i0, i1 = _pair_index_arrays(amps.shape[1], q)
    v0 = amps[:, i0]
    v1 = amps[:, i1]
    amps[:, i0] = m00[:, None] * v0 + m01[:, None] * v1
    amps[:, i1] = m10[:, None] * v0 + m11[:, None] * v1


def _apply_ctrl_1q_np(amps, qc, qt, m00, m01, m10, m11):
    dim = amps.shape[1]
    idx = np.arange(dim)
    sel = ((idx >> qc) & 1 == 1) & ((idx >> qt) & 1 == 0)
    i0 = idx[sel]
    i1 = i0 | (1 << qt)
    v0 = amps[:, i0]
    v1 = amps[:, i1]
    amps[:, i0] = m00[:, None] * v0 + m01[:, None] * v1
    amps[:, i1] = m10[:, None] * v0 + m11[:, None] * v1


def _apply_zz_np(amps, q0, q1, ph_eq, ph_ne):
    idx = np.arange(amps.shape[1])
    ne = (((idx >> q0) ^ (idx >> q1)) & 1) == 1
    amps[:, ~ne] *= ph_eq[:, None]
    amps[:, ne] *= ph_ne[:, None]


def _zero_control0_np(amps, qc):
    idx = np.arange(amps.shape[1])
    amps[:, ((idx >> qc) & 1) == 0] = 0.0


if _USE_NUMBA:
    apply_1q = _apply_1q_nb
    apply_ctrl_1q = _apply_ctrl_1q_nb
    apply_zz = _apply_zz_nb
    zero_control0 = _zero_control0_nb
else:  # pragma: no cover - exercised via QNNBENCH_NO_NUMBA
    apply_1q = _apply_1q_np
    apply_ctrl_1q = _apply_ctrl_1q_np
    apply_zz = _apply_zz_np
    zero_control0 = _zero_control0_np


# elementary gate codes used by compiled circuit plans
CODE_H, CODE_X, CODE_Y, CODE_Z = 0, 1, 2, 3
CODE_RX, CODE_RY, CODE_RZ = 4, 5, 6
CODE_CNOT, CODE_CZ, CODE_CRX, CODE_CRZ = 7, 8, 9, 10
CODE_ZZ = 11

HAVE_NUMBA = _USE_NUMBA

if _USE_NUMBA:

    @njit(cache=True, inline="always", fastmath=True)
    def _row_1q(row, q, a00, a01, a10, a11):
        mask = 1 << q
        step = mask << 1
        n = row.shape[0]
        if a01 == 0.0 and a10 == 0.0:
            for base in range(0, n, step):
                for i0 in range(base, base + mask):
                    i1 = i0 | mask
                    row[i0] = a00 * row[i0]
                    row[i1] = a11 * row[i1]
        elif a00 == 0.0 and a11 == 0.0:
            for base in range(0, n, step):
                for i0 in range(base, base + mask):
                    i1 = i0 | mask
                    v0 = row[i0]
                    row[i0] = a01 * row[i1]
                    row[i1] = a10 * v0
        else:
            for base in range(0, n, step):
                for i0 in range(base, base + mask):
                    i1 = i0 | mask
                    v0 = row[i0]
                    v1 = row[i1]
                    row[i0] = a00 * v0 + a01 * v1
                    row[i1] = a10 * v0 + a11 * v1

    @njit(cache=True, inline="always", fastmath=True)
    def _row_ctrl(row, qc, qt, a00, a01, a10, a11):
        cmask = 1 << qc
        tmask = 1 << qt
        qa = qc if qc < qt else qt
        qb = qt if qc < qt else qc
        lowa = (1 << qa) - 1
        midb = (1 << (qb - 1 - qa)) - 1
        ngroups = row.shape[0] >> 2
        if a01 == 0.0 and a10 == 0.0:
            for k in range(ngroups):
                base = (
                    ((k >> (qb - 1)) << (qb + 1))
                    | (((k >> qa) & midb) << (qa + 1))
                    | (k & lowa)
                )
                i0 = base | cmask
                i1 = i0 | tmask
                row[i0] = a00 * row[i0]
                row[i1] = a11 * row[i1]
        else:
            for k in range(ngroups):
                base = (
                    ((k >> (qb - 1)) << (qb + 1))
                    | (((k >> qa) & midb) << (qa + 1))
                    | (k & lowa)
                )
                i0 = base | cmask
                i1 = i0 | tmask
                v0 = row[i0]
                v1 = row[i1]
                row[i0] = a00 * v0 + a01 * v1
                row[i1] = a10 * v0 + a11 * v1

    @njit(cache=True, inline="always", fastmath=True)
    def _row_zz(row, q0, q1, pe, pn):
        for i in range(row.shape[0]):
            if (((i >> q0) ^ (i >> q1)) & 1) == 0:
                row[i] *= pe
            else:
                row[i] *= pn

    @njit(cache=True, inline="always", fastmath=True)
    def _row_apply(row, c, q0, q1, a00, a01, a10, a11, inverse):
        """Apply gate code c (or its inverse = conjugate transpose) to one row."""
        if inverse:
            b00 = a00.conjugate()
            b01 = a10.conjugate()
            b10 = a01.conjugate()
            b11 = a11.conjugate()
        else:
            b00, b01, b10, b11 = a00, a01, a10, a11
        if c == CODE_ZZ:
            _row_zz(row, q0, q1, b00, b11)
        elif c >= CODE_CNOT:  # controlled family
            _row_ctrl(row, q0, q1, b00, b01, b10, b11)
        else:
            _row_1q(row, q0, b00, b01, b10, b11)

    @njit(cache=True, inline="always", fastmath=True)
    def _row_generator(row, c, q0, q1):
        """Apply -i/2 times the gate's generator in place (parameterized codes)."""
        dim = row.shape[0]
        if c == CODE_RX:
            _row_1q(row, q0, 0.0j, -0.5j, -0.5j, 0.0j)
        elif c == CODE_RY:
            _row_1q(row, q0, 0.0j, -0.5 + 0.0j, 0.5 + 0.0j, 0.0j)
        elif c == CODE_RZ:
            _row_1q(row, q0, -0.5j, 0.0j, 0.0j, 0.5j)
        elif c == CODE_ZZ:
            _row_zz(row, q0, q1, -0.5j, 0.5j)
        elif c == CODE_CRX or c == CODE_CRZ:
            if c == CODE_CRX:
                _row_ctrl(row, q0, q1, 0.0j, -0.5j, -0.5j, 0.0j)
            else:
                _row_ctrl(row, q0, q1, -0.5j, 0.0j, 0.0j, 0.5j)
            cmask = 1 << q0
            for i in range(dim):
                if (i & cmask) == 0:
                    row[i] = 0.0
        # fixed gates carry no parameter

    @njit(parallel=True, cache=True, fastmath=True)
    def sweep_forward(amps, code, q0, q1, m00, m01, m10, m11):
        """Apply a whole compiled plan to every row; matrices are (gates, rows)."""
        rows = amps.shape[0]
        n_gates = code.shape[0]
        for r in prange(rows):
            for g in range(n_gates):
                _row_apply(
                    amps[r], code[g], q0[g], q1[g],
                    m00[g, r], m01[g, r], m10[g, r], m11[g, r], False,
                )

    @njit(parallel=True, cache=True, fastmath=True)
    def sweep_adjoint(amps, lam, tmp, grad_out, code, q0, q1, param, m00, m01, m10, m11):
        """Reverse sweep turning final states into per-example gradients.

        amps holds the evolved states, lam = O|psi>; both are un-evolved gate
        by gate, and each parameterized gate contributes
        2 Re <lam | (-i/2 G) U |psi_pre> to its parameter's gradient.
        """
        rows = amps.shape[0]
        n_gates = code.shape[0]
        dim = amps.shape[1]
        for r in prange(rows):
            for g in range(n_gates - 1, -1, -1):
                c = code[g]
                a00 = m00[g, r]
                a01 = m01[g, r]
                a10 = m10[g, r]
                a11 = m11[g, r]
                _row_apply(amps[r], c, q0[g], q1[g], a00, a01, a10, a11, True)
                p = param[g]
                if p >= 0:
                    for d in range(dim):
                        tmp[r, d] = amps[r, d]
                    _row_apply(tmp[r], c, q0[g], q1[g], a00, a01, a10, a11, False)
                    _row_generator(tmp[r], c, q0[g], q1[g])
                    acc = 0.0
                    for d in range(dim):
                        acc += (lam[r, d].conjugate() * tmp[r, d]).real
                    grad_out[r, p] += 2.0 * acc
                _row_apply(lam[r], c, q0[g], q1[g], a00, a01, a10, a11, True)

    @njit(cache=True, fastmath=True)
    def sweep_qgt_births(bundle, births, code, q0, q1, param, m00, m01, m10, m11):
        """Phase 1 of the metric sweep: evolve row 0 and fork generator branches.

        Matrices are (gates,) single-example entries. births[k] records the
        gate index at which branch row k (1-based) was created.
        """
        n_gates = code.shape[0]
        active = 1
        dim = bundle.shape[1]
        for g in range(n_gates):
            _row_apply(bundle[0], code[g], q0[g], q1[g], m00[g], m01[g], m10[g], m11[g], False)
            p = param[g]
            if p >= 0:
                for d in range(dim):
                    bundle[active, d] = bundle[0, d]
                _row_generator(bundle[active], code[g], q0[g], q1[g])
                births[active] = g
                active += 1
        return active

    @njit(parallel=True, cache=True, fastmath=True)
    def sweep_qgt_evolve(bundle, births, code, q0, q1, m00, m01, m10, m11, active):
        """Phase 2: ride every branch through the gates after its birth.

        Early branches ride much longer than late ones, so each parallel
        iteration pairs branch t with branch active-t to balance the load.
        """
        n_gates = code.shape[0]
        n_branch = active - 1
        half = (n_branch + 1) // 2
        for t in prange(half):
            r1 = 1 + t
            r2 = active - 1 - t
            for g in range(births[r1] + 1, n_gates):
                _row_apply(
                    bundle[r1], code[g], q0[g], q1[g], m00[g], m01[g], m10[g], m11[g], False
                )
            if r2 > r1:
                for g in range(births[r2] + 1, n_gates):
                    _row_apply(
                        bundle[r2], code[g], q0[g], q1[g], m00[g], m01[g], m10[g], m11[g], False
                    )


def row_norms_sq(amps: np.ndarray) -> np.ndarray:
    """Squared 2-norm of every row (deterministic single-pass sums)."""
    return np.einsum("ri,ri->r", amps.real, amps.real) + np.einsum(
        "ri,ri->r", amps.imag, amps.imag
    )


def row_inner(bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    """Per-row inner products <bra_r|ket_r> without BLAS reductions."""
    return np.einsum("ri,ri->r", bra.conj(), ket)
