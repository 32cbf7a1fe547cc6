"""Gate-level circuits, the variational encoder/recovery builders and VGQEC assembly.

Rotations follow ``R_P(x) = exp(-i x/2 P)`` for P in {X, Z, Z(x)Z}. Qubit
indices are 0-based with qubit 0 the most significant tensor factor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channels import KrausChannel
from .codes import Encoder
from .qcore import CNOT, H, apply_left, z_sign, zz_parity
from .qcore import conjugate as qconjugate

ROTATIONS = ("RX", "RZ", "RZZ")
KINDS = ("H", "CNOT") + ROTATIONS
_ARITY = {"H": 1, "CNOT": 2, "RX": 1, "RZ": 1, "RZZ": 2}


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    angle: float = 0.0
    slot: int | None = None  # free-parameter index; overrides ``angle`` when set

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        targets = tuple(int(t) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        if len(targets) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {_ARITY[self.kind]} target(s), got {targets}")
        if len(set(targets)) != len(targets):
            raise ValueError(f"{self.kind} targets must be distinct, got {targets}")
        if self.slot is not None and self.kind not in ROTATIONS:
            raise ValueError(f"{self.kind} has no angle to parameterize")


@dataclass(frozen=True)
class Circuit:
    qubit_count: int
    gates: tuple[Gate, ...]
    parameter_count: int

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        used = set()
        for g in self.gates:
            if any(t < 0 or t >= self.qubit_count for t in g.targets):
                raise ValueError(f"gate {g} acts outside {self.qubit_count} qubits")
            if g.slot is not None:
                if not 0 <= g.slot < self.parameter_count:
                    raise ValueError(f"parameter slot {g.slot} out of range")
                used.add(g.slot)
        if len(used) != self.parameter_count:
            raise ValueError("every parameter slot must be used at least once")

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)


class _Builder:
    def __init__(self, n: int):
        self.n = n
        self.gates: list[Gate] = []
        self.slots = 0

    def rot(self, kind: str, *targets: int) -> None:
        self.gates.append(Gate(kind, targets, slot=self.slots))
        self.slots += 1

    def layer(self, kind: str) -> None:
        for q in range(self.n):
            self.rot(kind, q)

    def build(self) -> Circuit:
        return Circuit(self.n, tuple(self.gates), self.slots)


def crossing_word(n: int) -> list[int]:
    """Bubble-sort reduced word for reversing 2n strands: adjacent positions p, p+1 (1-based)."""
    m = 2 * n
    return [p for j in range(1, m) for p in range(1, m - j + 1)]


def build_U_E(n: int) -> Circuit:
    """Encoder ansatz: R_Z layer, the crossing block, R_Z layer.

    Strands 2i-1 and 2i belong to qubit i. A crossing at odd position
    2i-1 becomes R_X on qubit i; at even position 2i it becomes R_ZZ on
    qubits (i, i+1). Every crossing carries its own parameter.
    """
    if n < 2:
        raise ValueError("the encoder ansatz needs at least two qubits")
    b = _Builder(n)
    b.layer("RZ")
    for p in crossing_word(n):
        if p % 2 == 1:
            b.rot("RX", (p - 1) // 2)
        else:
            i = p // 2 - 1
            b.rot("RZZ", i, i + 1)
    b.layer("RZ")
    return b.build()


def build_U_R(m: int, blocks: int) -> Circuit:
    """Recovery ansatz: R_Z layer, ``blocks`` x (R_X, R_Z, all-pairs R_ZZ), then R_X and R_Z layers."""
    if m < 1 or blocks < 0:
        raise ValueError(f"invalid recovery ansatz size m={m}, L={blocks}")
    b = _Builder(m)
    b.layer("RZ")
    for _ in range(blocks):
        b.layer("RX")
        b.layer("RZ")
        for i in range(m):
            for j in range(i + 1, m):
                b.rot("RZZ", i, j)
    b.layer("RX")
    b.layer("RZ")
    return b.build()


def _angles(c: Circuit, theta: Sequence[float]) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != c.parameter_count:
        raise ValueError(f"expected {c.parameter_count} parameters, got {theta.size}")
    return np.array([theta[g.slot] if g.slot is not None else g.angle for g in c.gates])


# ---------------------------------------------------------------- fast kernels


class CompiledCircuit:
    """Per-gate index data for applying a circuit to batches of operators in O(d^2) per gate.

    Rotations are stored by their generator: a +-1 diagonal for R_Z/R_ZZ and
    a bit-flip permutation for R_X.
    """

    def __init__(self, c: Circuit):
        self.circuit = c
        n = c.qubit_count
        self.n = n
        self.dim = 2**n
        idx = np.arange(self.dim)
        self.ops = []
        for g in c.gates:
            if g.kind == "RZ":
                self.ops.append(("diag", z_sign(g.targets[0], n).astype(float)))
            elif g.kind == "RZZ":
                self.ops.append(("diag", zz_parity(*g.targets, n).astype(float)))
            elif g.kind == "RX":
                self.ops.append(("flip", idx ^ (1 << (n - 1 - g.targets[0]))))
            elif g.kind == "H":
                self.ops.append(("fixed", (H, g.targets)))
            else:
                self.ops.append(("fixed", (CNOT, g.targets)))

    def angles(self, theta: Sequence[float]) -> np.ndarray:
        return _angles(self.circuit, theta)

    def apply_left(self, k: int, x: float, m: np.ndarray, inverse: bool = False) -> np.ndarray:
        """Gate k (or its inverse) applied on the row index of ``m`` (batch axes allowed)."""
        kind, data = self.ops[k]
        if inverse:
            x = -x
        if kind == "diag":
            ph = np.exp(-0.5j * x * data)
            return ph[:, None] * m
        if kind == "flip":
            return np.cos(x / 2) * m - 1j * np.sin(x / 2) * m[..., data, :]
        op, targets = data
        if inverse:
            op = op.conj().T
        return apply_left(op, m, targets, self.n)

    def conjugate(self, k: int, x: float, rho: np.ndarray, inverse: bool = False) -> np.ndarray:
        """``G rho G^dag`` (or ``G^dag rho G`` when ``inverse``)."""
        kind, data = self.ops[k]
        if inverse:
            x = -x
        if kind == "diag":
            ph = np.exp(-0.5j * x * data)
            return rho * np.outer(ph, ph.conj())
        if kind == "flip":
            c, s = np.cos(x / 2), np.sin(x / 2)
            xr = rho[..., data, :]
            return (
                c * c * rho
                + 1j * c * s * (rho[..., :, data] - xr)
                + s * s * xr[..., :, data]
            )
        op, targets = data
        if inverse:
            op = op.conj().T
        return qconjugate(op, rho, targets, self.n)

    def commutator_trace(self, k: int, c: np.ndarray, d: np.ndarray) -> np.ndarray:
        """``Tr[C P D] - Tr[P C D]`` for the generator P of rotation k, per batch element."""
        kind, data = self.ops[k]
        dt = np.swapaxes(d, -1, -2)
        if kind == "diag":
            diff = data[None, :] - data[:, None]  # p_b - p_a at (a, b)
            return np.einsum("...ab,...ab->...", c * diff, dt)
        if kind == "flip":
            return np.einsum("...ab,...ab->...", c[..., :, data] - c[..., data, :], dt)
        raise ValueError("fixed gates have no generator")

    def unitary(self, theta: Sequence[float]) -> np.ndarray:
        xs = self.angles(theta)
        u = np.eye(self.dim, dtype=complex)
        for k, x in enumerate(xs):
            u = self.apply_left(k, x, u)
        return u


def circuit_unitary(c: Circuit, theta: Sequence[float] = ()) -> np.ndarray:
    """Product of the gate matrices in sequence order (first gate rightmost)."""
    return CompiledCircuit(c).unitary(theta)


# ---------------------------------------------------------------- VGQEC assembly


def vgqec_encoder(base: Encoder, u_e: Circuit, alpha: Sequence[float]) -> Encoder:
    """Encoder ``U_E(alpha) o E_c``."""
    if u_e.qubit_count != base.n:
        raise ValueError(f"ansatz acts on {u_e.qubit_count} qubits, encoder on {base.n}")
    v = circuit_unitary(u_e, alpha) @ base.isometry
    return Encoder(v, base.n, base.k, f"vgqec[{base.label}]")


def ancilla_kraus(u: np.ndarray, n: int, ancillas: int) -> np.ndarray:
    """Kraus operators ``(I (x) <a|) U (I (x) |0..0>)`` of append-ancillas, unitary, trace-ancillas."""
    da = 2**ancillas
    dn = 2**n
    cols = u.reshape(dn, da, dn, da)[:, :, :, 0]  # U (I (x) |0>) with rows split (sys, anc)
    return cols.transpose(1, 0, 2)  # (anc outcome a, sys out, sys in)


def vgqec_recovery(u_r: Circuit, beta: Sequence[float], base: KrausChannel, k: int = 1) -> KrausChannel:
    """Recovery ``R_orig o Tr_anc[U_R(beta) (. (x) |0><0|^{2k}) U_R(beta)^dag]``.

    Ancillas are the least-significant tensor factors of the ``U_R`` register.
    """
    anc = 2 * k
    n = u_r.qubit_count - anc
    if n < 1 or base.dim_in != 2**n:
        raise ValueError(
            f"recovery ansatz on {u_r.qubit_count} qubits does not fit a {base.dim_in}-dim original recovery"
        )
    inner = ancilla_kraus(circuit_unitary(u_r, beta), n, anc)
    ops = np.einsum("lab,kbc->lkac", base.ops, inner).reshape(-1, base.dim_out, base.dim_in)
    return KrausChannel(ops, tol=1e-9)
