"""Code constructors, code projectors, the Knill-Laflamme checker and syndrome decoders."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .channels import KrausChannel
from .qcore import CNOT, H, apply_left, ket, pauli_string, tensor, zz_parity

FIVE_ONE_THREE_GENERATORS = ("IXZZX", "XIXZZ", "ZXIXZ", "ZZXIX")


@dataclass(frozen=True, eq=False)
class Encoder:
    """Isometry from k logical qubits into n physical qubits (columns are codewords)."""

    isometry: np.ndarray
    n: int
    k: int = 1
    label: str = "custom"

    def __post_init__(self):
        v = np.asarray(self.isometry, dtype=complex)
        if v.shape != (2**self.n, 2**self.k):
            raise ValueError(f"isometry shape {v.shape} does not match n={self.n}, k={self.k}")
        err = np.max(np.abs(v.conj().T @ v - np.eye(2**self.k)))
        if err > 1e-10:
            raise ValueError(f"encoder columns are not orthonormal (error {err:.2e})")
        object.__setattr__(self, "isometry", v)

    @property
    def codewords(self) -> list[np.ndarray]:
        return [self.isometry[:, j] for j in range(2**self.k)]

    def encode(self, rho: np.ndarray) -> np.ndarray:
        v = self.isometry
        return v @ rho @ v.conj().T

    def channel(self) -> KrausChannel:
        return KrausChannel(self.isometry[None])


@dataclass(frozen=True)
class KLReport:
    lam: np.ndarray
    residual: float
    unnormalized: np.ndarray = field(repr=False)

    def is_correctable(self, tol: float = 1e-10) -> bool:
        return self.residual <= tol


def _fanout_state(n: int, first_qubit_state: np.ndarray) -> np.ndarray:
    """CNOT fan-out from qubit 0 onto qubits 1..n-1, all starting in |0>."""
    psi = tensor(first_qubit_state, ket("0" * (n - 1)))[:, None]
    for t in range(1, n):
        psi = apply_left(CNOT, psi, [0, t], n)
    return psi[:, 0]


def _fanout_isometry(n: int) -> np.ndarray:
    return np.stack([_fanout_state(n, ket(b)) for b in "01"], axis=1)


def _hadamard_all(v: np.ndarray, n: int) -> np.ndarray:
    for q in range(n):
        v = apply_left(H, v, [q], n)
    return v


def repetition_encoder(n: int, basis: str = "Z") -> Encoder:
    """|b> -> |b...b> (Z basis) or |0>,|1> -> |+...+>,|-...-> (X basis)."""
    if n not in (3, 5):
        raise ValueError(f"repetition code supports n = 3 or 5, got {n}")
    basis = basis.upper()
    if basis not in ("X", "Z"):
        raise ValueError(f"basis must be 'X' or 'Z', got {basis!r}")
    v = _fanout_isometry(n)
    if basis == "X":
        v = _hadamard_all(v, n)
    return Encoder(v, n, 1, f"rep{n}{basis}")


# ring of R_ZZ gates in the order drawn: (q1,q5) then (q1,q2), (q2,q3), (q3,q4), (q4,q5);
# alpha index for each pair follows the figure labels alpha_5, alpha_1, ..., alpha_4
_K5_RING = ((4, (0, 4)), (0, (0, 1)), (1, (1, 2)), (2, (2, 3)), (3, (3, 4)))


def vgqec_k5_encoder(alpha: Sequence[float]) -> Encoder:
    """Five-qubit code family interpolating between rep5X (alpha=0) and [[5,1,3]].

    Circuit: CNOT fan-out from qubit 1, Hadamard on all five qubits, then
    R_ZZ(alpha_5) on (1,5) and R_ZZ(alpha_i) on (i, i+1) for i = 1..4.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (5,):
        raise ValueError(f"expected five crossing angles, got shape {alpha.shape}")
    v = _hadamard_all(_fanout_isometry(5), 5)
    phase = np.zeros(32)
    for a_idx, (i, j) in _K5_RING:
        phase += alpha[a_idx] * zz_parity(i, j, 5)
    v = np.exp(-0.5j * phase)[:, None] * v
    return Encoder(v, 5, 1, "vgqec_k5")


def five_one_three_encoder() -> Encoder:
    """[[5,1,3]] encoder: fan-out, Hadamards, and the R_ZZ(-pi/2) ring."""
    e = vgqec_k5_encoder([-np.pi / 2] * 5)
    return Encoder(e.isometry, 5, 1, "fiveonethree")


def discovered_three_qubit_encoder() -> Encoder:
    """|0>_L = (|000> + i|110>)/sqrt2, |1>_L = (i|001> + |111>)/sqrt2."""
    zero = (ket("000") + 1j * ket("110")) / np.sqrt(2)
    one = (1j * ket("001") + ket("111")) / np.sqrt(2)
    return Encoder(np.stack([zero, one], axis=1), 3, 1, "discovered3")


def code_projector(e: Encoder) -> np.ndarray:
    v = e.isometry
    return v @ v.conj().T


def stabilizer_projector(generators: Sequence[str], signs: Sequence[int] | None = None) -> np.ndarray:
    """Projector onto the joint eigenspace with eigenvalue ``signs[i]`` of each generator."""
    n = len(generators[0])
    signs = signs if signs is not None else [1] * len(generators)
    p = np.eye(2**n, dtype=complex)
    for g, s in zip(generators, signs):
        p = p @ (np.eye(2**n) + s * pauli_string(g, n)) / 2
    return p


def stabilizer_signs(e: Encoder, generators: Sequence[str], tol: float = 1e-10) -> tuple[int, ...]:
    """Sign of each generator on the code space; raises if the code is not a joint eigenspace."""
    p = code_projector(e)
    signs = []
    for g in generators:
        gp = pauli_string(g, e.n) @ p
        for s in (1, -1):
            if np.max(np.abs(gp - s * p)) <= tol:
                signs.append(s)
                break
        else:
            raise ValueError(f"code space is not an eigenspace of {g}")
    return tuple(signs)


def kl_check(p: np.ndarray, errors: Sequence[np.ndarray], tol: float = 1e-10) -> KLReport:
    """Knill-Laflamme test ``P E_i^dag E_j P = lambda_ij P``.

    ``lam`` is normalized to unit trace over the supplied error set; the
    residual is the largest Frobenius deviation over all pairs.
    """
    if len(errors) == 0:
        raise ValueError("kl_check needs a non-empty error set")
    p = np.asarray(p, dtype=complex)
    if np.max(np.abs(p @ p - p)) > max(tol, 1e-10) or np.max(np.abs(p - p.conj().T)) > max(tol, 1e-10):
        raise ValueError("P is not an orthogonal projector")
    es = np.stack([np.asarray(e, dtype=complex) for e in errors])
    ep = es @ p  # E_j P
    blocks = np.einsum("iba,jbc->ijac", ep.conj(), ep)  # P E_i^dag E_j P
    trp = np.trace(p).real
    raw = np.einsum("ijaa->ij", blocks) / trp
    residual = float(
        np.max(np.linalg.norm(blocks - raw[:, :, None, None] * p[None, None], axis=(2, 3)))
    )
    total = np.trace(raw).real
    lam = raw / total if total > 0 else raw
    return KLReport(lam, residual, raw)


def weight_one_paulis(n: int, include_identity: bool = True) -> list[np.ndarray]:
    ops = [pauli_string("I" * n)] if include_identity else []
    for q in range(n):
        for c in "XYZ":
            ops.append(pauli_string("I" * q + c + "I" * (n - q - 1)))
    return ops


def _anticommutes(a: str, b: str) -> bool:
    return sum(x != "I" and y != "I" and x != y for x, y in zip(a, b)) % 2 == 1


def syndrome_of(pauli: str, generators: Sequence[str]) -> tuple[int, ...]:
    return tuple(int(_anticommutes(pauli, g)) for g in generators)


def min_weight_corrections(generators: Sequence[str], letters: str = "XYZ") -> dict[tuple[int, ...], str]:
    """Lowest-weight Pauli (from ``letters``) for every reachable syndrome.

    Ties are broken by enumeration order: weight, then qubit positions, then letter order.
    """
    n = len(generators[0])
    table: dict[tuple[int, ...], str] = {}
    for w in range(n + 1):
        for qubits in itertools.combinations(range(n), w):
            for chars in itertools.product(letters, repeat=w):
                s = ["I"] * n
                for q, c in zip(qubits, chars):
                    s[q] = c
                p = "".join(s)
                table.setdefault(syndrome_of(p, generators), p)
        if len(table) == 2 ** len(generators):
            break
    return table


def syndrome_decoder(
    encoder: Encoder,
    generators: Sequence[str],
    corrections: Mapping[tuple[int, ...], str] | None = None,
    letters: str = "XYZ",
) -> KrausChannel:
    """Measure the generators, apply the tabulated Pauli correction, unencode.

    Kraus operators are ``V^dag C_s Pi_s`` for each syndrome ``s``. Syndromes
    missing from the correction table fall back to no correction, which keeps
    the map trace preserving only if the table is complete.
    """
    signs = stabilizer_signs(encoder, generators)
    corrections = dict(corrections) if corrections is not None else min_weight_corrections(generators, letters)
    n = encoder.n
    dim = 2**n
    vdag = encoder.isometry.conj().T
    gens = [pauli_string(g, n) for g in generators]
    ops = []
    for synd in itertools.product((0, 1), repeat=len(generators)):
        proj = np.eye(dim, dtype=complex)
        for g, s, b in zip(gens, signs, synd):
            proj = proj @ (np.eye(dim) + s * (-1) ** b * g) / 2
        corr = pauli_string(corrections.get(synd, "I" * n), n)
        ops.append(vdag @ corr @ proj)
    return KrausChannel(np.stack(ops))


def standard_encoder(label: str) -> Encoder:
    if label == "rep3Z":
        return repetition_encoder(3, "Z")
    if label == "rep5X":
        return repetition_encoder(5, "X")
    if label == "rep3X":
        return repetition_encoder(3, "X")
    if label == "rep5Z":
        return repetition_encoder(5, "Z")
    if label == "fiveonethree":
        return five_one_three_encoder()
    if label == "discovered3":
        return discovered_three_qubit_encoder()
    raise ValueError(f"unknown code label {label!r}")


def standard_decoder(
    label: str,
    encoder: Encoder | None = None,
    generators: Sequence[str] | None = None,
    corrections: Mapping[tuple[int, ...], str] | None = None,
) -> KrausChannel:
    """Syndrome decoder for a named code (``rep3Z``, ``rep5X``, ``fiveonethree``) or ``custom``.

    For ``custom`` the caller supplies the encoder, the stabilizer generators
    and optionally a correction table keyed by syndrome bit tuples.
    """
    if label == "custom":
        if encoder is None or generators is None:
            raise ValueError("custom decoder needs an encoder and stabilizer generators")
        return syndrome_decoder(encoder, generators, corrections)
    if label in ("rep3Z", "rep3X", "rep5Z", "rep5X"):
        n, basis = int(label[3]), label[4]
        gens = tuple("I" * i + basis * 2 + "I" * (n - i - 2) for i in range(n - 1))
        letters = "X" if basis == "Z" else "Z"
        return syndrome_decoder(encoder or standard_encoder(label), gens, corrections, letters)
    if label == "fiveonethree":
        return syndrome_decoder(
            encoder or five_one_three_encoder(), generators or FIVE_ONE_THREE_GENERATORS, corrections
        )
    raise ValueError(f"unknown decoder label {label!r}")
