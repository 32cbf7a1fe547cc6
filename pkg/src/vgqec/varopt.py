"""Variational objective, fidelity estimators, optimizers and the two training protocols."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .ansatz import Circuit, CompiledCircuit, vgqec_encoder, vgqec_recovery
from .channels import KrausChannel, apply
from .codes import Encoder, vgqec_k5_encoder
from .recovery import SdpOptions, optimal_recovery, recovery_linear_form, solve_choi_sdp

log = logging.getLogger(__name__)

KINDS = ("NelderMead", "SPSA", "LBFGS_FD")
TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "LBFGS_FD"
    restarts: int = 1
    max_evals: int = 1000
    seed: int = 0
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"optimizer kind must be one of {KINDS}, got {self.kind!r}")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_evals < 1:
            raise ValueError("max_evals must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


class Optimum(NamedTuple):
    x: np.ndarray
    value: float
    evaluations: int
    exhausted: bool


@dataclass
class TrainResult:
    best_params: np.ndarray
    best_fidelity: float
    restart_fidelities: list
    evaluations: int
    restart_params: list = field(default_factory=list, repr=False)
    exhausted: list = field(default_factory=list)
    encoder: Encoder | None = None
    recovery: KrausChannel | None = None


# ---------------------------------------------------------------- 2-design objective


def two_design_states() -> list[np.ndarray]:
    """Four single-qubit states forming a projective 2-design (a SIC)."""
    a, b = np.sqrt(1 / 3), np.sqrt(2 / 3)
    states = [np.array([1, 0], dtype=complex)]
    for k in range(3):
        states.append(np.array([a, b * np.exp(2j * np.pi * k / 3)]))
    return states


def _state_fidelities(ch: KrausChannel) -> np.ndarray:
    if ch.dim_in != 2 or ch.dim_out != 2:
        raise ValueError("2-design average needs a single-qubit channel")
    psis = np.stack(two_design_states())
    rhos = np.einsum("si,sj->sij", psis, psis.conj())
    out = apply(ch, rhos)
    return np.real(np.einsum("si,sij,sj->s", psis.conj(), out, psis))


def avg_fidelity_2design(ch: KrausChannel) -> float:
    return float(np.mean(_state_fidelities(ch)))


def shot_estimator(ch: KrausChannel, shots: int, seed: int) -> float:
    """Fraction of successful shots when each shot prepares a random 2-design state.

    A shot succeeds with the exact return probability of its state, which is
    the all-zeros outcome of the inverse-preparation measurement.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    p = np.clip(_state_fidelities(ch), 0.0, 1.0)
    p[np.abs(p - 1.0) < 1e-12] = 1.0
    rng = np.random.default_rng(seed)
    which = rng.integers(0, 4, size=shots)
    hits = rng.random(shots) < p[which]
    return float(np.mean(hits))


# ---------------------------------------------------------------- optimizers


class _Exhausted(Exception):
    pass


class _Budget:
    """Counts evaluations of a maximization target and remembers the best point seen."""

    def __init__(self, f: Callable, max_evals: int):
        self.f = f
        self.max_evals = max_evals
        self.count = 0
        self.best_x = None
        self.best_v = -np.inf

    def spend(self, k: int = 1) -> None:
        if self.count + k > self.max_evals:
            raise _Exhausted
        self.count += k

    def __call__(self, x) -> float:
        self.spend()
        v = float(self.f(np.asarray(x, dtype=float)))
        if v > self.best_v:
            self.best_x, self.best_v = np.array(x, dtype=float), v
        return v

    def result(self, exhausted: bool) -> Optimum:
        return Optimum(self.best_x, self.best_v, self.count, exhausted)


def nelder_mead(f: Callable, x0: Sequence[float], cfg: OptimizerConfig, step: float = 0.25) -> Optimum:
    """Maximize ``f`` with the standard simplex coefficients (1, 2, 0.5, 0.5)."""
    x0 = np.asarray(x0, dtype=float)
    budget = _Budget(f, cfg.max_evals)
    simplex = np.vstack([x0, x0 + step * np.eye(x0.size)])
    try:
        res = minimize(
            lambda x: -budget(x),
            x0,
            method="Nelder-Mead",
            options=dict(initial_simplex=simplex, maxfev=cfg.max_evals, xatol=cfg.tolerance, fatol=cfg.tolerance),
        )
        exhausted = res.status == 1
    except _Exhausted:
        exhausted = True
    return budget.result(exhausted)


def spsa(f: Callable, x0: Sequence[float], cfg: OptimizerConfig, a: float = 0.2, c: float = 0.1) -> Optimum:
    """Simultaneous-perturbation ascent with gains a/(k+A)^0.602 and c/k^0.101, A = max_evals/10."""
    x = np.asarray(x0, dtype=float).copy()
    budget = _Budget(f, cfg.max_evals)
    rng = np.random.default_rng(cfg.seed)
    big_a = 0.1 * cfg.max_evals
    iters = (cfg.max_evals - 1) // 2
    for k in range(1, iters + 1):
        ak = a / (k + big_a) ** 0.602
        ck = c / k**0.101
        delta = rng.choice((-1.0, 1.0), size=x.size)
        diff = budget(x + ck * delta) - budget(x - ck * delta)
        x = x + ak * diff / (2 * ck) * delta
    # the answer is the last iterate; perturbed points only feed the gradient estimate
    budget.spend()
    return Optimum(x, float(f(x)), budget.count, True)


def lbfgs_fd(
    f: Callable,
    x0: Sequence[float],
    cfg: OptimizerConfig,
    value_and_grad: Callable | None = None,
    fd_step: float = 1e-6,
) -> Optimum:
    """L-BFGS ascent with central-difference gradients, or exact ones when ``value_and_grad`` is given.

    Central differences cost two evaluations per coordinate and count
    against ``max_evals``; a ``value_and_grad`` call counts as one.
    """
    x0 = np.asarray(x0, dtype=float)
    budget = _Budget(f, cfg.max_evals)

    def fd(x):
        v = budget(x)
        g = np.empty(x.size)
        for i in range(x.size):
            e = np.zeros(x.size)
            e[i] = fd_step
            g[i] = (budget(x + e) - budget(x - e)) / (2 * fd_step)
        return -v, -g

    def exact(x):
        budget.spend()
        v, g = value_and_grad(x)
        if v > budget.best_v:
            budget.best_x, budget.best_v = np.array(x, dtype=float), float(v)
        return -v, -np.asarray(g, dtype=float)

    try:
        res = minimize(
            exact if value_and_grad is not None else fd,
            x0,
            jac=True,
            method="L-BFGS-B",
            options=dict(maxfun=cfg.max_evals, maxiter=cfg.max_evals, ftol=cfg.tolerance, gtol=cfg.tolerance),
        )
        exhausted = res.status == 1
    except _Exhausted:
        exhausted = True
    return budget.result(exhausted)


OPTIMIZERS = {"NelderMead": nelder_mead, "SPSA": spsa, "LBFGS_FD": lbfgs_fd}


def restart_points(dim: int, cfg: OptimizerConfig) -> list[np.ndarray]:
    """Restart 0 is the zero vector; restart r >= 1 is uniform in [0, 2pi) from seed (cfg.seed, r)."""
    pts = [np.zeros(dim)]
    for r in range(1, cfg.restarts):
        pts.append(np.random.default_rng([cfg.seed, r]).uniform(0, TWO_PI, dim))
    return pts


# ---------------------------------------------------------------- crossing-angle training

TRAIN_SDP = SdpOptions(dual_tol=1e-5, primal_tol=1.0, check_every=20, max_iterations=5000, raise_on_failure=False)


def train_alpha_sdp(
    noise,
    cfg: OptimizerConfig,
    train_opts: SdpOptions = TRAIN_SDP,
    final_opts: SdpOptions | None = None,
) -> TrainResult:
    """Maximize the SDP-optimal fidelity over the five crossing angles of the k=5 code family.

    Training evaluates the SDP to a looser certified gap; every restart's
    optimum is then re-solved at ``final_opts`` and those values are reported.
    """
    if noise.dim_in != 32:
        raise ValueError("train_alpha_sdp needs five-qubit noise")

    def g(alpha):
        a = recovery_linear_form(vgqec_k5_encoder(alpha), noise)
        return solve_choi_sdp(a, 32, 2, train_opts).value

    if cfg.kind != "NelderMead":
        log.info("train_alpha_sdp uses %s instead of Nelder-Mead", cfg.kind)
    opt = OPTIMIZERS[cfg.kind]
    fids, params, flags, evals = [], [], [], 0
    best = None
    for x0 in restart_points(5, cfg):
        res = opt(g, x0, cfg)
        evals += res.evaluations
        final = optimal_recovery(vgqec_k5_encoder(res.x), noise, final_opts)
        fids.append(final.fidelity)
        params.append(res.x)
        flags.append(res.exhausted)
        if best is None or final.fidelity > best[1].fidelity:
            best = (res.x, final)
    x, final = best
    return TrainResult(x, final.fidelity, fids, evals, params, flags, vgqec_k5_encoder(x), final.recovery)


# ---------------------------------------------------------------- encoder + recovery ansatz training


def _pauli_apply(cc: CompiledCircuit, k: int, m: np.ndarray) -> np.ndarray:
    kind, data = cc.ops[k]
    return data[:, None] * m if kind == "diag" else m[data, :]


def _adjoint_pass(cc: CompiledCircuit, xs: np.ndarray, phi: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Per-gate derivative of ``sum_cols <phi|U^dag O U|phi>`` given ``phi = U phi0`` and ``lam = O phi``.

    Walks the circuit backwards, undoing each gate on both column blocks.
    """
    grads = np.zeros(len(xs))
    for k in range(len(xs) - 1, -1, -1):
        if cc.ops[k][0] != "fixed":
            grads[k] = np.imag(np.vdot(lam, _pauli_apply(cc, k, phi)))
        phi = cc.apply_left(k, xs[k], phi, inverse=True)
        lam = cc.apply_left(k, xs[k], lam, inverse=True)
    return grads


def _forward(cc: CompiledCircuit, xs: np.ndarray, m: np.ndarray) -> np.ndarray:
    for k, x in enumerate(xs):
        m = cc.apply_left(k, x, m)
    return m


def _slot_sum(c: Circuit, gate_grads: np.ndarray) -> np.ndarray:
    out = np.zeros(c.parameter_count)
    for g, v in zip(c.gates, gate_grads):
        if g.slot is not None:
            out[g.slot] += v
    return out


class FullObjective:
    """``F(alpha, beta)`` for the encoder/recovery ansatz pair with an exact adjoint gradient.

    Parameters are packed as ``concat(alpha, beta)``. States stay in factored
    form: the encoder side propagates four pure states, the recovery side a
    square-root factor of each noisy state.
    """

    def __init__(self, noise, e_c: Encoder, u_e: Circuit, u_r: Circuit, r_orig: KrausChannel):
        self.noise, self.e_c, self.u_e, self.u_r, self.r_orig = noise, e_c, u_e, u_r, r_orig
        self.ce = CompiledCircuit(u_e)
        self.cr = CompiledCircuit(u_r)
        n, k = e_c.n, e_c.k
        if k != 1:
            raise ValueError("the 2-design objective is defined for one logical qubit")
        if u_e.qubit_count != n or u_r.qubit_count != n + 2 * k:
            raise ValueError("ansatz sizes do not match the base code")
        if noise.dim_in != 2**n or r_orig.dim_in != 2**n or r_orig.dim_out != 2:
            raise ValueError("noise or original recovery has the wrong dimensions")
        self.dn = 2**n
        self.da = 4**k
        self.n_alpha = u_e.parameter_count
        self.n_beta = u_r.parameter_count
        psis = np.stack(two_design_states())
        self.phi0 = e_c.isometry @ psis.T  # (dn, 4) encoded states
        proj = np.einsum("si,sj->sij", psis, psis.conj())
        self.effects = np.stack([r_orig.adjoint(p) for p in proj])  # (4, dn, dn)
        self.v0 = np.eye(self.dn * self.da)[:, :: self.da]  # I (x) |0..0>
        self.evaluations = 0
        self._cache = None

    @property
    def size(self) -> int:
        return self.n_alpha + self.n_beta

    def split(self, params):
        params = np.asarray(params, dtype=float)
        if params.size != self.size:
            raise ValueError(f"expected {self.size} parameters, got {params.size}")
        return params[: self.n_alpha], params[self.n_alpha :]

    def _evaluate(self, params, want_grad: bool):
        alpha, beta = self.split(params)
        self.evaluations += 1
        xa = self.ce.angles(alpha)
        xb = self.cr.angles(beta)
        phi = _forward(self.ce, xa, self.phi0)  # (dn, 4)
        rhos = self.noise(np.einsum("is,js->sij", phi, phi.conj()))  # (4, dn, dn)
        kmat = _forward(self.cr, xb, self.v0)  # U_R (I (x) |0>), (dn*da, dn)
        dn, da = self.dn, self.da
        # W_s = K^dag (B_s (x) I) K; rows of K are ordered (system, ancilla)
        bk = (self.effects @ kmat.reshape(dn, da * dn)).reshape(4, dn * da, dn)
        w = kmat.conj().T @ bk
        fids = np.real(np.einsum("sij,sji->s", rhos, w))
        value = float(np.mean(fids))
        if not want_grad:
            return value, None
        # recovery side: columns K rho_s^1/2, with lam = (B_s (x) I) K rho_s^1/2
        ev, vec = np.linalg.eigh(0.5 * (rhos + np.swapaxes(rhos.conj(), 1, 2)))
        roots = vec * np.sqrt(np.clip(ev, 0, None))[:, None, :]
        cols = kmat @ roots  # (4, dn*da, dn)
        lam = bk @ roots
        cols = cols.transpose(1, 0, 2).reshape(dn * da, -1)
        lam = lam.transpose(1, 0, 2).reshape(dn * da, -1)
        g_beta = _slot_sum(self.u_r, _adjoint_pass(self.cr, xb, cols, lam)) / 4
        # encoder side: Omega_s = noise^dag(W_s)
        omega = self.noise.adjoint(w)
        lam_e = np.einsum("sij,js->is", omega, phi)
        g_alpha = _slot_sum(self.u_e, _adjoint_pass(self.ce, xa, phi, lam_e)) / 4
        return value, np.concatenate([g_alpha, g_beta])

    def value_and_grad(self, params):
        key = np.asarray(params, dtype=float).tobytes()
        if self._cache is None or self._cache[0] != key:
            self._cache = (key,) + self._evaluate(params, True)
        return self._cache[1], self._cache[2]

    def __call__(self, params) -> float:
        return self.value_and_grad(params)[0]

    def gradient(self, params) -> np.ndarray:
        return self.value_and_grad(params)[1]

    def value(self, params) -> float:
        return self._evaluate(params, False)[0]

    def maps(self, params) -> tuple[Encoder, KrausChannel]:
        alpha, beta = self.split(params)
        return vgqec_encoder(self.e_c, self.u_e, alpha), vgqec_recovery(self.u_r, beta, self.r_orig)


def full_fidelity(noise, encoder: Encoder, recovery: KrausChannel) -> float:
    """Reference ``avg_fidelity_2design(recovery o noise o encoder)`` through explicit state evolution."""
    psis = two_design_states()
    total = 0.0
    for psi in psis:
        rho = noise(encoder.encode(np.outer(psi, psi.conj())))
        out = recovery(rho)
        total += float(np.real(psi.conj() @ out @ psi))
    return total / len(psis)


def train_full(
    noise, e_c: Encoder, u_e: Circuit, u_r: Circuit, r_orig: KrausChannel, cfg: OptimizerConfig
) -> TrainResult:
    """Maximize ``F(alpha, beta)`` over both ansatz circuits.

    LBFGS_FD is driven by the exact adjoint gradient; the other kinds use
    function values only.
    """
    obj = FullObjective(noise, e_c, u_e, u_r, r_orig)
    fids, params, flags, evals = [], [], [], 0
    best = None
    for x0 in restart_points(obj.size, cfg):
        if cfg.kind == "LBFGS_FD":
            res = lbfgs_fd(obj.value, x0, cfg, value_and_grad=obj.value_and_grad)
        else:
            res = OPTIMIZERS[cfg.kind](obj.value, x0, cfg)
        evals += res.evaluations
        fids.append(res.value)
        params.append(res.x)
        flags.append(res.exhausted)
        if best is None or res.value > best.value:
            best = res
    enc, rec = obj.maps(best.x)
    return TrainResult(best.x, best.value, fids, evals, params, flags, enc, rec)
