"""Dense complex linear algebra and multi-qubit operators.

Qubit ordering: qubit 0 is the most significant tensor factor, i.e. the
leftmost symbol in a printed ket such as ``|q0 q1 q2>``.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of one or more matrices (or vectors), left to right."""
    if not ops:
        raise ValueError("tensor needs at least one operand")
    return reduce(np.kron, (np.asarray(op, dtype=complex) for op in ops))


def kron_power(op: np.ndarray, n: int) -> np.ndarray:
    return tensor(*([op] * n))


def num_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def partial_trace(m: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    ``dims`` lists subsystem dimensions in tensor order; the kept subsystems
    appear in the output in ascending index order.
    """
    m = np.asarray(m)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise ValueError(f"matrix shape {m.shape} does not match subsystem dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValueError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    nsys = len(dims)
    t = m.reshape(dims + dims)
    traced = [i for i in range(nsys) if i not in keep]
    # trace pairs from the highest index down so earlier axis numbers stay valid
    for count, i in enumerate(sorted(traced, reverse=True)):
        cur = nsys - count
        t = np.trace(t, axis1=i, axis2=i + cur)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(d, d)


def is_hermitian(m: np.ndarray, tol: float = 1e-10) -> bool:
    m = np.asarray(m)
    return m.shape[0] == m.shape[1] and np.max(np.abs(m - m.conj().T), initial=0.0) <= tol


def hermitian_eig(m: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.

    The input is symmetrized before the LAPACK call, so entries that differ
    from Hermitian by less than ``tol`` are averaged out.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not is_hermitian(m, tol):
        raise ValueError("matrix is not Hermitian within tolerance")
    return np.linalg.eigh(0.5 * (m + m.conj().T))


def psd_sqrt(m: np.ndarray, inverse: bool = False, cutoff: float = 1e-12) -> np.ndarray:
    """Square root (or pseudo-inverse square root) of a PSD matrix."""
    w, v = hermitian_eig(m)
    w = np.where(w > cutoff, w, 0.0)
    if inverse:
        w = np.divide(1.0, np.sqrt(w), out=np.zeros_like(w), where=w > 0)
    else:
        w = np.sqrt(w)
    return (v * w) @ v.conj().T


def pauli_string(spec: str, n: int | None = None) -> np.ndarray:
    """Tensor product of single-qubit Paulis, e.g. ``pauli_string("XZZXI")``."""
    spec = spec.upper()
    if n is not None and len(spec) != n:
        raise ValueError(f"Pauli string {spec!r} has length {len(spec)}, expected {n}")
    bad = set(spec) - set(PAULIS)
    if bad:
        raise ValueError(f"invalid Pauli letter(s) {sorted(bad)} in {spec!r}")
    return tensor(*(PAULIS[c] for c in spec))


def embed(op: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Full 2^n matrix of ``op`` acting on ``targets`` (in the given order)."""
    full = np.eye(2**n, dtype=complex).reshape([2] * (2 * n))
    return apply_left(op, full.reshape(2**n, 2**n), targets, n)


def apply_left(op: np.ndarray, m: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Compute ``op_targets @ m`` without forming the full operator.

    ``m`` may carry leading batch axes; its row index is the last-but-one axis.
    """
    k = len(targets)
    op = np.asarray(op).reshape([2] * (2 * k))
    batch = m.shape[:-2]
    cols = m.shape[-1]
    t = m.reshape(batch + (2,) * n + (cols,))
    off = len(batch)
    axes = [off + q for q in targets]
    t = np.tensordot(op, t, axes=(list(range(k, 2 * k)), axes))
    # tensordot puts the op output axes first; move them back into place
    t = np.moveaxis(t, list(range(k)), axes)
    return t.reshape(batch + (2**n, cols))


def conjugate(op: np.ndarray, rho: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """``op rho op^dagger`` with ``op`` acting on ``targets`` only."""
    left = apply_left(op, rho, targets, n)
    return np.swapaxes(apply_left(op, np.swapaxes(left, -1, -2).conj(), targets, n), -1, -2).conj()


def apply_superop(s: np.ndarray, rho: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Act with a superoperator on ``targets`` of an n-qubit operator (batch axes allowed).

    ``s`` maps the row-major vectorization ``(row, col)`` of the targeted
    block, i.e. ``s = sum_k K (x) conj(K)`` for a Kraus set.
    """
    k = len(targets)
    s = np.asarray(s).reshape([2] * (4 * k))
    batch = rho.shape[:-2]
    t = rho.reshape(batch + (2,) * (2 * n))
    off = len(batch)
    axes = [off + q for q in targets] + [off + n + q for q in targets]
    t = np.tensordot(s, t, axes=(list(range(2 * k, 4 * k)), axes))
    t = np.moveaxis(t, list(range(2 * k)), axes)
    return t.reshape(rho.shape)


def ket(bits: str) -> np.ndarray:
    """Computational basis ket from a bit string such as ``"0110"``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def pure_state(amplitudes: Sequence[complex], tol: float = 1e-12) -> np.ndarray:
    """Validate a normalized state vector of power-of-two length."""
    psi = np.asarray(amplitudes, dtype=complex).ravel()
    num_qubits(psi.size)
    if abs(np.vdot(psi, psi).real - 1.0) > tol:
        raise ValueError("state vector is not normalized")
    return psi


def density_matrix(m: np.ndarray, tol: float = 1e-12, eig_tol: float = 1e-10) -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, no negative eigenvalues."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    num_qubits(m.shape[0])
    if not is_hermitian(m, tol):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(m).real - 1.0) > tol:
        raise ValueError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(m)[0] < -eig_tol:
        raise ValueError("density matrix has a negative eigenvalue")
    return m


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    g = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_isometry(dim_out: int, dim_in: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed isometry from a QR of a complex Gaussian matrix."""
    return random_unitary(dim_out, rng)[:, :dim_in]


# ------------------------------------------------------------- gate matrices


def rx(theta: float) -> np.ndarray:
    """``exp(-i theta/2 X)``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    """``exp(-i theta/2 Z)``."""
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rzz(theta: float) -> np.ndarray:
    """``exp(-i theta/2 Z(x)Z)``."""
    a, b = np.exp(-0.5j * theta), np.exp(0.5j * theta)
    return np.diag([a, b, b, a])


CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def zz_parity(i: int, j: int, n: int) -> np.ndarray:
    """Diagonal of Z_i Z_j on n qubits as a +-1 vector."""
    idx = np.arange(2**n)
    bi = (idx >> (n - 1 - i)) & 1
    bj = (idx >> (n - 1 - j)) & 1
    return 1 - 2 * (bi ^ bj)


def z_sign(i: int, n: int) -> np.ndarray:
    """Diagonal of Z_i on n qubits as a +-1 vector."""
    idx = np.arange(2**n)
    return 1 - 2 * ((idx >> (n - 1 - i)) & 1)
