"""CPTP channels in Kraus and Choi form, fidelity metrics and noise models.

Choi convention: ``J = sum_ab |a><b| (x) Phi(|a><b|)`` with the input factor
first, so ``Tr_out J = I_in`` for a trace-preserving map.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np

from .qcore import I2, X, Y, Z, apply_superop, hermitian_eig, num_qubits, partial_trace, tensor

TP_TOL = 1e-10
CHOI_CUTOFF = 1e-12


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Channel ``rho -> sum_k K_k rho K_k^dagger``; ``ops`` has shape (r, dim_out, dim_in)."""

    ops: np.ndarray
    tol: float | None = TP_TOL

    def __post_init__(self):
        ops = np.asarray(self.ops, dtype=complex)
        if ops.ndim == 2:
            ops = ops[None]
        if ops.ndim != 3 or ops.shape[0] == 0:
            raise ValueError(f"Kraus operators must form an (r, dout, din) stack, got {ops.shape}")
        object.__setattr__(self, "ops", ops)
        if self.tol is not None:
            err = self.tp_error()
            if err > self.tol:
                raise ValueError(f"channel is not trace preserving (error {err:.3e})")

    @property
    def dim_in(self) -> int:
        return self.ops.shape[2]

    @property
    def dim_out(self) -> int:
        return self.ops.shape[1]

    @property
    def rank(self) -> int:
        return self.ops.shape[0]

    def tp_error(self) -> float:
        s = np.einsum("kij,kil->jl", self.ops.conj(), self.ops)
        return float(np.max(np.abs(s - np.eye(self.dim_in))))

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return apply(self, rho)

    def adjoint(self, m: np.ndarray) -> np.ndarray:
        """Heisenberg-picture map ``sum_k K_k^dagger m K_k``."""
        return np.einsum("kji,...jl,klm->...im", self.ops.conj(), m, self.ops, optimize=True)


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    matrix: np.ndarray
    dim_in: int
    dim_out: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.dim_in * self.dim_out
        if m.shape != (d, d):
            raise ValueError(f"Choi matrix shape {m.shape} does not match {self.dim_in}x{self.dim_out}")
        object.__setattr__(self, "matrix", m)


def identity_channel(dim: int) -> KrausChannel:
    return KrausChannel(np.eye(dim, dtype=complex)[None])


def unitary_channel(u: np.ndarray) -> KrausChannel:
    return KrausChannel(np.asarray(u, dtype=complex)[None])


def mixed_unitary(probs: Sequence[float], unitaries: Sequence[np.ndarray]) -> KrausChannel:
    """Kraus set ``sqrt(p_i) U_i``; zero-probability terms are kept."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0):
        raise ValueError("probabilities must be non-negative")
    return KrausChannel(np.sqrt(probs)[:, None, None] * np.stack(unitaries))


def apply(ch: KrausChannel, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (ch.dim_in, ch.dim_in):
        raise ValueError(f"state of shape {rho.shape} does not match channel input dim {ch.dim_in}")
    return np.einsum("kij,...jl,kml->...im", ch.ops, rho, ch.ops.conj(), optimize=True)


def apply_local(ch: KrausChannel, rho: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Apply a channel on a subset of qubits of an n-qubit operator (batch axes allowed)."""
    if ch.dim_in != ch.dim_out or ch.dim_in != 2 ** len(targets):
        raise ValueError("local channel dimension does not match its targets")
    return apply_superop(superoperator(ch), rho, targets, n)


def superoperator(ch: KrausChannel) -> np.ndarray:
    """Row-major superoperator ``sum_k K (x) conj(K)``; its conjugate transpose is the adjoint map."""
    return np.einsum("kia,kjb->ijab", ch.ops, ch.ops.conj()).reshape(ch.dim_out**2, ch.dim_in**2)


def compose(second: KrausChannel, first: KrausChannel) -> KrausChannel:
    """The channel ``second o first`` with Kraus set ``{S_j F_i}``."""
    if first.dim_out != second.dim_in:
        raise ValueError(f"cannot compose: {first.dim_out} -> {second.dim_in} mismatch")
    ops = np.einsum("jab,ibc->jiac", second.ops, first.ops).reshape(
        -1, second.dim_out, first.dim_in
    )
    tol = None if second.tol is None or first.tol is None else max(second.tol, first.tol)
    return KrausChannel(ops, tol=tol)


def tensor_channels(parts: Sequence[KrausChannel]) -> KrausChannel:
    """Tensor product channel; the Kraus set is every product of component operators."""
    if len(parts) == 0:
        raise ValueError("tensor_channels needs at least one channel")
    ops = parts[0].ops
    for p in parts[1:]:
        r1, o1, i1 = ops.shape
        r2, o2, i2 = p.ops.shape
        ops = np.einsum("aij,bkl->abikjl", ops, p.ops).reshape(r1 * r2, o1 * o2, i1 * i2)
    return KrausChannel(ops)


def kraus_to_choi(ch: KrausChannel) -> ChoiMatrix:
    # column (a, i) of vec: K[i, a], so v_k = sum_a |a> (x) K_k|a>
    vecs = np.transpose(ch.ops, (0, 2, 1)).reshape(ch.rank, -1)
    return ChoiMatrix(vecs.T @ vecs.conj(), ch.dim_in, ch.dim_out)


def choi_to_kraus(c: ChoiMatrix, cutoff: float = CHOI_CUTOFF, tol: float = 1e-10) -> KrausChannel:
    """Minimal Kraus set from a Choi matrix; eigenvalues below ``cutoff`` are dropped."""
    w, v = hermitian_eig(c.matrix, tol=max(tol, 1e-10 * max(1.0, np.abs(c.matrix).max())))
    if w[0] < -tol:
        raise ValueError(f"Choi matrix is not PSD (min eigenvalue {w[0]:.3e})")
    ptr = partial_trace(c.matrix, [c.dim_in, c.dim_out], [0])
    if np.max(np.abs(ptr - np.eye(c.dim_in))) > tol:
        raise ValueError("Choi matrix is not trace preserving")
    keep = w > cutoff
    vecs = v[:, keep] * np.sqrt(w[keep])
    ops = vecs.T.reshape(-1, c.dim_in, c.dim_out).transpose(0, 2, 1)
    return KrausChannel(ops, tol=tol)


def channel_fidelity(ch: KrausChannel) -> float:
    """``(1/d^2) sum_j |Tr M_j|^2``."""
    if ch.dim_in != ch.dim_out:
        raise ValueError("channel fidelity needs a channel with equal input and output dims")
    tr = np.einsum("kii->k", ch.ops)
    return float(np.sum(np.abs(tr) ** 2) / ch.dim_in**2)


def entanglement_fidelity(rho: np.ndarray, ch: KrausChannel) -> float:
    """``sum_j |Tr(rho M_j)|^2``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ch.dim_in, ch.dim_in) or ch.dim_in != ch.dim_out:
        raise ValueError("state and channel dimensions do not match")
    tr = np.einsum("kij,ji->k", ch.ops, rho)
    return float(np.sum(np.abs(tr) ** 2))


def composite_fidelity(*maps: KrausChannel) -> float:
    """Channel fidelity of ``maps[0] o maps[1] o ...`` without materializing every product.

    Kraus products are accumulated left to right, traced at the end.
    """
    ops = maps[-1].ops
    for m in reversed(maps[:-1]):
        if m.dim_in != ops.shape[1]:
            raise ValueError("dimension mismatch in composite")
        ops = np.einsum("jab,ibc->jiac", m.ops, ops).reshape(-1, m.dim_out, ops.shape[2])
    d = ops.shape[1]
    if d != ops.shape[2]:
        raise ValueError("composite is not square")
    return float(np.sum(np.abs(np.einsum("kii->k", ops)) ** 2) / d**2)


# ---------------------------------------------------------------- noise models


def _check_unit(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name}={v} is outside [0, 1]")


def amplitude_damping(gamma: float) -> KrausChannel:
    _check_unit("gamma", gamma)
    e0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    e1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausChannel(np.stack([e0, e1]))


def bit_flip(p: float) -> KrausChannel:
    _check_unit("p", p)
    return mixed_unitary([1 - p, p], [I2, X])


def depolarizing(p: float) -> KrausChannel:
    """``rho -> (1-p) rho + p I/2`` written as a four-term Pauli mixture."""
    _check_unit("p", p)
    return mixed_unitary([1 - 3 * p / 4, p / 4, p / 4, p / 4], [I2, X, Y, Z])


def thermal_decay_factors(t: float, t1: float, t2: float) -> tuple[float, float]:
    """(gamma, lambda) for the phase-amplitude damping form of thermal relaxation.

    lambda is chosen so that the coherence factor sqrt(1 - gamma - lambda)
    equals exp(-t/T2).
    """
    if t < 0:
        raise ValueError("relaxation time t must be non-negative")
    if t1 <= 0 or t2 <= 0:
        raise ValueError("T1 and T2 must be positive")
    if t2 > 2 * t1:
        raise ValueError(f"T2={t2} exceeds 2*T1={2 * t1}")
    gamma = 1.0 - np.exp(-t / t1)
    lam = np.exp(-t / t1) - np.exp(-2.0 * t / t2)
    return float(gamma), float(max(lam, 0.0))


def thermal_relaxation(t: float, t1: float, t2: float) -> KrausChannel:
    gamma, lam = thermal_decay_factors(t, t1, t2)
    # exp(-t/T2) directly; 1 - gamma - lam cancels badly once t >> T1
    a1 = np.array([[1, 0], [0, np.exp(-t / t2)]], dtype=complex)
    a2 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    a3 = np.array([[0, 0], [0, np.sqrt(lam)]], dtype=complex)
    return KrausChannel(np.stack([a1, a2, a3]))


def interpolated_pauli(eta: float, strength: float = 0.05) -> KrausChannel:
    """Dephasing (eta=0) to depolarizing (eta=1) Pauli channel on one qubit."""
    _check_unit("eta", eta)
    probs = [1 - strength * (1 + 2 * eta), strength * eta, strength * eta, strength]
    return mixed_unitary(probs, [I2, X, Y, Z])


def correlated_xx(p_xx: float, i: int, n: int) -> KrausChannel:
    """Correlated X error on neighbouring qubits i, i+1 (1-based i) of an n-qubit register."""
    _check_unit("p_xx", p_xx)
    if not 1 <= i <= n - 1:
        raise ValueError(f"pair index i={i} must lie in 1..{n - 1}")
    xx = tensor(*[X if q in (i - 1, i) else I2 for q in range(n)])
    return mixed_unitary([1 - p_xx, p_xx], [np.eye(2**n), xx])


def local_noise_choi(layers: Sequence[tuple[KrausChannel, Sequence[int]]], n: int) -> ChoiMatrix:
    """Choi matrix of a sequence of local channels ``(channel, target qubits)`` on n qubits.

    Each layer is applied to the output half of the maximally entangled
    operator, so the product Kraus set is never formed.
    """
    d = 2**n
    j = np.zeros((d, d, d, d), dtype=complex)
    idx = np.arange(d)
    j[idx[:, None], idx[None, :], idx[:, None], idx[None, :]] = 1.0
    # j[a, b] is the output block Phi(|a><b|); start from the identity map
    for ch, targets in layers:
        j = apply_local(ch, j, targets, n)
    return ChoiMatrix(j.transpose(0, 2, 1, 3).reshape(d * d, d * d), d, d)


@dataclass(frozen=True, eq=False)
class LocalChannel:
    """Sequence of local channels ``(channel, target qubits)`` on an n-qubit register.

    Acts like a KrausChannel for ``__call__`` and ``adjoint`` but never forms
    the product Kraus set, which for five-qubit noise runs to ~10^3 operators.
    """

    layers: tuple
    n: int

    def __post_init__(self):
        layers = tuple((ch, tuple(int(t) for t in targets)) for ch, targets in self.layers)
        for ch, targets in layers:
            if any(t < 0 or t >= self.n for t in targets):
                raise ValueError(f"targets {targets} outside a {self.n}-qubit register")
            if ch.dim_in != 2 ** len(targets) or ch.dim_out != ch.dim_in:
                raise ValueError("local channel dimension does not match its targets")
        object.__setattr__(self, "layers", layers)

    @property
    def dim_in(self) -> int:
        return 2**self.n

    dim_out = dim_in

    @cached_property
    def _supers(self) -> list:
        return [(superoperator(ch), targets) for ch, targets in self.layers]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        for s, targets in self._supers:
            rho = apply_superop(s, rho, targets, self.n)
        return rho

    def adjoint(self, m: np.ndarray) -> np.ndarray:
        m = np.asarray(m, dtype=complex)
        for s, targets in reversed(self._supers):
            m = apply_superop(s.conj().T, m, targets, self.n)
        return m

    def choi(self) -> ChoiMatrix:
        return local_noise_choi(self.layers, self.n)

    def kraus(self) -> KrausChannel:
        return _local_kraus(self)


@lru_cache(maxsize=32)
def _local_kraus(ch: LocalChannel) -> KrausChannel:
    return choi_to_kraus(ch.choi())


def as_kraus(ch) -> KrausChannel:
    return ch.kraus() if isinstance(ch, LocalChannel) else ch


@lru_cache(maxsize=32)
def interpolation_layers(
    eta: float, p_xx: float = 0.05, gamma: float = 0.05, strength: float = 0.05, n: int = 5
) -> LocalChannel:
    _check_unit("eta", eta)
    single = interpolated_pauli(eta, strength)
    xx = correlated_xx(p_xx, 1, 2)
    ad = amplitude_damping(gamma)
    layers = [(single, [q]) for q in range(n)]
    layers += [(xx, [i, i + 1]) for i in range(n - 1)]
    layers += [(ad, [q]) for q in range(n)]
    return LocalChannel(tuple(layers), n)


@lru_cache(maxsize=32)
def interpolation_noise(
    eta: float, p_xx: float = 0.05, gamma: float = 0.05, strength: float = 0.05, n: int = 5
) -> KrausChannel:
    """Composite noise ``N3 o N2 o N1(eta)`` on n qubits.

    N1 is the interpolated Pauli channel on every qubit, N2 the correlated XX
    error on each neighbouring pair (ascending), N3 amplitude damping on
    every qubit. Returned in minimal Kraus form.
    """
    return interpolation_layers(eta, p_xx, gamma, strength, n).kraus()


def product_noise(singles: Sequence[KrausChannel]) -> KrausChannel:
    return tensor_channels(singles)


def thermal_register(t: float, t1s: Sequence[float], t2s: Sequence[float]) -> KrausChannel:
    return tensor_channels([thermal_relaxation(t, a, b) for a, b in zip(t1s, t2s)])


def local_product(singles: Sequence[KrausChannel]) -> LocalChannel:
    """Tensor product of single-qubit channels in layered form."""
    return LocalChannel(tuple((ch, (q,)) for q, ch in enumerate(singles)), len(singles))


def thermal_layers(t: float, t1s: Sequence[float], t2s: Sequence[float]) -> LocalChannel:
    if len(t1s) != len(t2s):
        raise ValueError("t1 and t2 lists must have equal length")
    return local_product([thermal_relaxation(t, a, b) for a, b in zip(t1s, t2s)])


def random_channel(dim_in: int, dim_out: int, rng: np.random.Generator, rank: int | None = None) -> KrausChannel:
    """Random CPTP map from a random isometry into dim_out x rank (Stinespring)."""
    from .qcore import random_isometry

    rank = rank or dim_in * dim_out
    if rank * dim_out < dim_in:
        raise ValueError(f"rank {rank} is too small for a {dim_in}->{dim_out} channel")
    v = random_isometry(dim_out * rank, dim_in, rng)
    ops = v.reshape(dim_out, rank, dim_in).transpose(1, 0, 2)
    return KrausChannel(ops)


def is_cptp_choi(c: ChoiMatrix, tol: float = 1e-10) -> bool:
    w = np.linalg.eigvalsh(0.5 * (c.matrix + c.matrix.conj().T))
    ptr = partial_trace(c.matrix, [c.dim_in, c.dim_out], [0])
    return w[0] >= -tol and np.max(np.abs(ptr - np.eye(c.dim_in))) <= tol


__all__ = [
    "KrausChannel",
    "ChoiMatrix",
    "identity_channel",
    "unitary_channel",
    "mixed_unitary",
    "apply",
    "apply_local",
    "superoperator",
    "compose",
    "tensor_channels",
    "kraus_to_choi",
    "choi_to_kraus",
    "channel_fidelity",
    "entanglement_fidelity",
    "composite_fidelity",
    "amplitude_damping",
    "bit_flip",
    "depolarizing",
    "thermal_decay_factors",
    "thermal_relaxation",
    "interpolated_pauli",
    "correlated_xx",
    "local_noise_choi",
    "LocalChannel",
    "as_kraus",
    "interpolation_layers",
    "interpolation_noise",
    "thermal_register",
    "local_product",
    "thermal_layers",
    "random_channel",
    "is_cptp_choi",
    "num_qubits",
]
