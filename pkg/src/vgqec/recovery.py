"""Recovery maps: SDP-optimal recovery, Petz (transpose) recovery, iterated biconvex baseline.

The SDP ``max Tr[A X]  s.t.  X >= 0, Tr_out X = I_in`` over Choi matrices is
solved by monotone polar ascent on a factor ``X = R R^dag``, with
Douglas-Rachford splitting between the affine set and the PSD cone as the
fallback. Both report a certified interval: a feasible Choi matrix gives the
lower bound, and a dual candidate ``Y`` shifted until ``Y (x) I >= A`` gives
the upper bound.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channels import ChoiMatrix, KrausChannel, as_kraus, choi_to_kraus
from .codes import Encoder
from .qcore import psd_sqrt, random_isometry

log = logging.getLogger(__name__)


class SdpNotConverged(RuntimeError):
    """Raised when the splitting solver exhausts its iteration budget."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class SdpOptions:
    max_iterations: int = 100_000
    primal_tol: float = 1e-9
    dual_tol: float = 1e-9
    penalty: float = 100.0  # step on the objective normalized to unit spectral norm
    check_every: int = 25
    raise_on_failure: bool = True
    method: str = "auto"  # "auto": polar ascent, then splitting if the gap stalls
    polar_steps: int = 500

    def __post_init__(self):
        if self.primal_tol <= 0 or self.dual_tol <= 0:
            raise ValueError("SDP tolerances must be positive")
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if self.method not in ("auto", "polar", "dr"):
            raise ValueError(f"unknown SDP method {self.method!r}")


@dataclass
class SdpSolution:
    choi: np.ndarray
    value: float
    upper_bound: float
    iterations: int
    primal_residual: float
    converged: bool
    state: np.ndarray = field(repr=False, default=None)

    @property
    def gap(self) -> float:
        return self.upper_bound - self.value


@dataclass
class RecoveryResult:
    recovery: KrausChannel
    fidelity: float
    iterations: int
    residuals: dict
    converged: bool = True


# ------------------------------------------------------------------ linear forms


def fidelity_linear_form(pre: KrausChannel) -> np.ndarray:
    """Matrix ``A`` with ``channel_fidelity(R o pre) = Tr[Choi(R) A]`` for every recovery R.

    ``pre`` maps the logical space (dim d) into the physical space (dim dn);
    the recovery Choi lives on physical (x) logical.
    """
    d = pre.dim_in
    w = pre.ops.conj().reshape(pre.rank, -1)  # w_j[(x, b)] = conj(K_j[x, b])
    return (w.T @ w.conj()) / d**2


def encoder_linear_form(post: KrausChannel) -> np.ndarray:
    """Matrix ``A`` with ``channel_fidelity(post o E) = Tr[Choi(E) A]`` for every encoding E.

    ``post`` maps the physical space back to the logical space (dim d); the
    encoder Choi lives on logical (x) physical.
    """
    d = post.dim_out
    # block (b, a) of A is post^dag(|b><a|) / d^2; entry (b, j), (a, i) is sum_l conj(L[b, j]) L[a, i]
    ops = post.ops  # (r, d, dn)
    a = np.einsum("lbj,lai->bjai", ops.conj(), ops)
    dn = post.dim_in
    return a.reshape(d * dn, d * dn) / d**2


# ------------------------------------------------------------------ solver


def _partial_trace_out(x: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    return np.einsum("aibi->ab", x.reshape(d_in, d_out, d_in, d_out))


def _expand(m: np.ndarray, d_out: int) -> np.ndarray:
    return np.kron(m, np.eye(d_out))


def normalize_choi(
    x: np.ndarray, d_in: int, d_out: int, floor: float = 1e-14, psd: bool = False
) -> np.ndarray:
    """Map a PSD matrix to a CPTP Choi matrix: ``(N^-1/2 (x) I) X (N^-1/2 (x) I)``.

    ``N = Tr_out X``; if N is singular the missing directions are filled with
    a fixed map to the first output basis state. Negative eigenvalues are
    clipped first unless ``psd`` says the input is already PSD.
    """
    x = 0.5 * (x + x.conj().T)
    if not psd:
        w, v = np.linalg.eigh(x)
        x = (v * np.clip(w, 0, None)) @ v.conj().T
    nmat = _partial_trace_out(x, d_in, d_out)
    wn, vn = np.linalg.eigh(0.5 * (nmat + nmat.conj().T))
    good = wn > floor
    inv_sqrt = (vn[:, good] / np.sqrt(wn[good])) @ vn[:, good].conj().T
    k = _expand(inv_sqrt, d_out)
    out = k @ x @ k
    if not np.all(good):
        fill = vn[:, ~good] @ vn[:, ~good].conj().T
        e0 = np.zeros((d_out, d_out))
        e0[0, 0] = 1.0
        out = out + np.kron(fill, e0)
    return 0.5 * (out + out.conj().T)


def dual_bound(a: np.ndarray, y: np.ndarray, d_out: int) -> float:
    """``Tr Y + d_in max(0, -lambda_min(Y (x) I - A))``: an upper bound for any Hermitian Y."""
    y = 0.5 * (y + y.conj().T)
    slack = _expand(y, d_out) - a
    lam_min = float(np.linalg.eigvalsh(0.5 * (slack + slack.conj().T))[0])
    return float(np.trace(y).real) + y.shape[0] * max(0.0, -lam_min)


def _polar_solve(ah, d_in, d_out, opts, x0):
    """Polar ascent with the stationarity certificate ``Y = Tr_out(A X)``."""
    r = _choi_factor(x0)
    best_x, best_val, ub = None, -np.inf, np.inf
    it = 0
    limit = min(opts.polar_steps, opts.max_iterations)
    while it < limit:
        steps = min(opts.check_every, limit - it)
        r, _ = polar_ascent(ah, r, d_in, d_out, steps)
        it += steps
        x = r @ r.conj().T
        val = float(np.real(np.vdot(x, ah)))
        if val > best_val:
            best_val, best_x = val, x
        ub = min(ub, dual_bound(ah, _partial_trace_out(ah @ x, d_in, d_out), d_out))
        if ub - best_val <= opts.dual_tol:
            return best_x, best_val, ub, it, True
    return best_x, best_val, ub, it, False


def _dr_solve(ah, d_in, d_out, opts, z, max_iterations):
    t = opts.penalty
    eye_in = np.eye(d_in)
    best_x, best_val, ub = None, -np.inf, np.inf
    it, r_primal, converged = 0, np.inf, False
    while it < max_iterations:
        it += 1
        v = z + t * ah
        xa = v - _expand(_partial_trace_out(v, d_in, d_out) - eye_in, d_out) / d_out
        w, vec = np.linalg.eigh(2 * xa - z)
        pos = w > 0
        y = (vec[:, pos] * w[pos]) @ vec[:, pos].conj().T
        diff = y - xa
        z = z + diff
        if it % opts.check_every and it < max_iterations:
            continue
        r_primal = float(np.linalg.norm(diff))
        # certified lower bound from the PSD iterate
        xf = normalize_choi(y, d_in, d_out, psd=True)
        val = float(np.real(np.vdot(ah, xf)))
        if val > best_val:
            best_val, best_x = val, xf
        # dual estimate: Y (x) I - A = (z - x)/t at a fixed point
        s = (z - xa) / t + ah
        ub = min(ub, dual_bound(ah, _partial_trace_out(s, d_in, d_out) / d_out, d_out))
        if ub - best_val <= opts.dual_tol and r_primal <= opts.primal_tol * max(1.0, d_in):
            converged = True
            break
    return best_x, best_val, ub, it, converged, r_primal, z


def solve_choi_sdp(
    a: np.ndarray, d_in: int, d_out: int, opts: SdpOptions | None = None, warm: np.ndarray | None = None
) -> SdpSolution:
    """Maximize ``Tr[A X]`` over Choi matrices of CPTP maps ``d_in -> d_out``.

    ``warm`` is a previous ``SdpSolution.state`` or a feasible Choi matrix.
    Tolerances apply to the objective in the units of ``a``.
    """
    opts = opts or SdpOptions()
    a = 0.5 * (a + a.conj().T)
    dim = d_in * d_out
    if a.shape != (dim, dim):
        raise ValueError(f"linear form shape {a.shape} does not match {d_in}x{d_out}")
    scale = float(np.linalg.norm(a, 2)) or 1.0
    ah = a / scale
    # work in normalized units; tolerances scale along
    nopts = SdpOptions(
        opts.max_iterations, opts.primal_tol, opts.dual_tol / scale, opts.penalty,
        opts.check_every, opts.raise_on_failure, opts.method, opts.polar_steps,
    )
    start = np.array(warm, dtype=complex) if warm is not None else _expand(np.eye(d_in), d_out) / d_out

    it, r_primal = 0, 0.0
    best_x, best_val, ub, converged = None, -np.inf, np.inf, False
    if nopts.method in ("auto", "polar"):
        x0 = normalize_choi(start, d_in, d_out)
        best_x, best_val, ub, it, converged = _polar_solve(ah, d_in, d_out, nopts, x0)
        start = best_x
        r_primal = float(np.linalg.norm(_partial_trace_out(best_x, d_in, d_out) - np.eye(d_in)))
    if not converged and nopts.method in ("auto", "dr") and it < nopts.max_iterations:
        x, val, ub2, n, converged, r_primal, start = _dr_solve(ah, d_in, d_out, nopts, start, nopts.max_iterations - it)
        it += n
        if val > best_val:
            best_x, best_val = x, val
        ub = min(ub, ub2)
        converged = converged or (ub - best_val <= nopts.dual_tol)
    return SdpSolution(best_x, scale * best_val, scale * ub, it, r_primal, converged, start)


# ------------------------------------------------------------------ recovery maps


def _matrix_units(d: int) -> np.ndarray:
    e = np.zeros((d, d, d, d), dtype=complex)
    idx = np.arange(d)
    e[idx[:, None], idx[None, :], idx[:, None], idx[None, :]] = 1.0
    return e  # e[a, b] = |a><b|


def choi_blocks(choi: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """``blocks[a, b] = Phi(|a><b|)`` from a Choi matrix."""
    return choi.reshape(d_in, d_out, d_in, d_out).transpose(0, 2, 1, 3)


def blocks_to_choi(blocks: np.ndarray) -> np.ndarray:
    d_in, _, d_out, _ = blocks.shape
    return blocks.transpose(0, 2, 1, 3).reshape(d_in * d_out, d_in * d_out)


def recovery_form_from_blocks(blocks: np.ndarray) -> np.ndarray:
    """Recovery linear form from the output blocks ``Pre(|b><c|)`` of the pre-recovery map."""
    d, _, dn, _ = blocks.shape
    return np.conj(blocks.transpose(2, 0, 3, 1)).reshape(dn * d, dn * d) / d**2


def pre_blocks(encoder: Encoder | np.ndarray, noise, d: int | None = None) -> np.ndarray:
    """``noise(E(|a><b|))`` for an isometric encoder or an encoder Choi matrix (logical input first)."""
    if isinstance(encoder, Encoder):
        v = encoder.isometry
        d = v.shape[1]
        enc = np.einsum("xa,yb->abxy", v, v.conj())
    else:
        dn = encoder.shape[0] // d
        enc = choi_blocks(encoder, d, dn)
    return noise(enc)


def recovery_linear_form(encoder: Encoder, noise) -> np.ndarray:
    """Same matrix as ``fidelity_linear_form(noise o encoder)`` via channel action on matrix units.

    ``noise`` may be any map with a batched ``__call__`` (KrausChannel or LocalChannel).
    """
    return recovery_form_from_blocks(pre_blocks(encoder, noise))


def encoder_form(recovery: KrausChannel, noise) -> np.ndarray:
    """Encoder linear form for ``post = recovery o noise``: block (b, a) is ``post^dag(|b><a|)/d^2``."""
    d = recovery.dim_out
    dn = recovery.dim_in
    back = noise.adjoint(recovery.adjoint(_matrix_units(d)))
    return back.transpose(0, 2, 1, 3).reshape(d * dn, d * dn) / d**2


def fidelity_by_action(d: int, *maps) -> float:
    """Channel fidelity ``(1/d^2) sum_ab <a|M(|a><b|)|b>`` of the composite ``maps[0] o maps[1] o ...``.

    Works with anything callable on batched operators, so no Kraus product
    set is ever formed.
    """
    out = _matrix_units(d)
    for m in reversed(maps):
        out = m(out)
    if out.shape[-1] != d:
        raise ValueError("composite does not return to the input dimension")
    return float(np.real(np.einsum("abab->", out)) / d**2)


class _EncoderMap:
    def __init__(self, v: np.ndarray):
        self.v = v

    def __call__(self, rho):
        return self.v @ rho @ self.v.conj().T


def _choi_residuals(x: np.ndarray, d_in: int, d_out: int) -> dict:
    return {
        "psd_min_eig": float(np.linalg.eigvalsh(0.5 * (x + x.conj().T))[0]),
        "tp_error": float(np.linalg.norm(_partial_trace_out(x, d_in, d_out) - np.eye(d_in))),
    }


def optimal_recovery(
    encoder: Encoder, noise, opts: SdpOptions | None = None, warm: np.ndarray | None = None
) -> RecoveryResult:
    """Recovery maximizing the channel fidelity of ``R o noise o encoder``.

    The reported fidelity is recomputed from the final Kraus maps rather
    than copied from the solver objective.
    """
    opts = opts or SdpOptions()
    d = encoder.isometry.shape[1]
    dn = encoder.isometry.shape[0]
    if noise.dim_in != dn or noise.dim_out != dn:
        raise ValueError(f"noise acts on dim {noise.dim_in}, encoder outputs dim {dn}")
    a = recovery_linear_form(encoder, noise)
    sol = solve_choi_sdp(a, dn, d, opts, warm)
    if not sol.converged:
        msg = f"recovery SDP did not converge in {sol.iterations} iterations (gap {sol.gap:.2e})"
        if opts.raise_on_failure:
            raise SdpNotConverged(msg, sol)
        log.warning(msg)
    rec = choi_to_kraus(ChoiMatrix(sol.choi, dn, d), tol=1e-8)
    fid = fidelity_by_action(d, rec, noise, _EncoderMap(encoder.isometry))
    residuals = _choi_residuals(sol.choi, dn, d)
    residuals.update(gap=sol.gap, primal=sol.primal_residual, objective=sol.value)
    return RecoveryResult(rec, fid, sol.iterations, residuals, sol.converged)


def petz_recovery(encoder: Encoder, noise, cutoff: float = 1e-12) -> KrausChannel:
    """Transpose channel with respect to the maximally mixed code state.

    Kraus operators ``V^dag rho_c^1/2 N_j^dag sigma^-1/2`` with
    ``sigma = N(rho_c)``; the complement of supp(sigma) is sent to |0_L>.
    """
    v = encoder.isometry
    dn, d = v.shape
    kr = as_kraus(noise)
    rho_c = v @ v.conj().T / d
    sigma = kr(rho_c)
    s_inv = psd_sqrt(sigma, inverse=True, cutoff=cutoff)
    left = v.conj().T @ psd_sqrt(rho_c)
    ops = [left @ nj.conj().T @ s_inv for nj in kr.ops]
    w, vec = np.linalg.eigh(0.5 * (sigma + sigma.conj().T))
    comp = vec[:, w <= cutoff]
    for m in range(comp.shape[1]):
        k = np.zeros((d, dn), dtype=complex)
        k[0] = comp[:, m].conj()
        ops.append(k)
    return KrausChannel(np.stack(ops), tol=1e-8)


# ------------------------------------------------------------------ biconvex baseline


@dataclass
class BiconvexResult:
    encoder_choi: ChoiMatrix
    recovery: KrausChannel
    fidelity: float
    trace: list  # per-half-step fidelity of the winning restart
    restart_fidelities: list
    restart_traces: list
    unconverged_steps: int = 0


BICONVEX_SDP = SdpOptions(max_iterations=60, check_every=20, raise_on_failure=False)


def _isometry_choi(v: np.ndarray) -> np.ndarray:
    vec = v.T.reshape(-1)  # (a, x) ordering: input first
    return np.outer(vec, vec.conj())


def _factor_to_rows(r: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    m = r.shape[1]
    return r.reshape(d_in, d_out, m).transpose(0, 2, 1).reshape(d_in, m * d_out)


def _rows_to_factor(rows: np.ndarray, d_in: int, d_out: int, m: int) -> np.ndarray:
    return rows.reshape(d_in, m, d_out).transpose(0, 2, 1).reshape(d_in * d_out, m)


def factor_kraus(r: np.ndarray, d_in: int, d_out: int, tol: float = 1e-8) -> KrausChannel:
    """Kraus operators of the Choi matrix ``R R^dag`` (one operator per column of R)."""
    ops = r.T.reshape(-1, d_in, d_out).transpose(0, 2, 1)
    keep = np.linalg.norm(ops, axis=(1, 2)) > 1e-14
    return KrausChannel(ops[keep] if keep.any() else ops[:1], tol=tol)


def polar_ascent(a: np.ndarray, r: np.ndarray, d_in: int, d_out: int, steps: int) -> tuple[np.ndarray, float]:
    """Monotone ascent on ``Tr[A R R^dag]`` over factors with ``Tr_out R R^dag = I``.

    Each step replaces the factor by the polar part of ``A R`` in the row
    layout where the constraint reads ``M M^dag = I``. For PSD ``A`` the
    objective is convex in R, so maximizing its linearization never lowers it.
    """
    m = r.shape[1]
    for _ in range(steps):
        u, _, vh = np.linalg.svd(_factor_to_rows(a @ r, d_in, d_out), full_matrices=False)
        r = _rows_to_factor(u @ vh, d_in, d_out, m)
    return r, float(np.real(np.vdot(r, a @ r)))


def _biconvex_restart(noise, v0, rng, d, dn, iterations, opts, half_step, inner_steps):
    dim = d * dn
    enc_r = np.zeros((dim, dim), dtype=complex)
    enc_r[:, 0] = v0.T.reshape(-1)
    rec_r = _rows_to_factor(random_isometry(dim * d, dn, rng).T, dn, d, dim)
    trace, bad = [], 0
    z_rec = z_enc = None
    for _ in range(iterations):
        enc = enc_r @ enc_r.conj().T
        a = recovery_form_from_blocks(pre_blocks(enc, noise, d))
        inc = float(np.real(np.vdot(rec_r, a @ rec_r)))
        if half_step == "polar":
            new_r, val = polar_ascent(a, rec_r, dn, d, inner_steps)
        else:
            sol = solve_choi_sdp(a, dn, d, opts, z_rec)
            z_rec, bad = sol.state, bad + (not sol.converged)
            new_r, val = _choi_factor(sol.choi), sol.value
        if val >= inc:
            rec_r = new_r
        trace.append(max(val, inc))
        rec = factor_kraus(rec_r, dn, d)
        a = encoder_form(rec, noise)
        inc = float(np.real(np.vdot(enc_r, a @ enc_r)))
        if half_step == "polar":
            new_r, val = polar_ascent(a, enc_r, d, dn, inner_steps)
        else:
            sol = solve_choi_sdp(a, d, dn, opts, z_enc)
            z_enc, bad = sol.state, bad + (not sol.converged)
            new_r, val = _choi_factor(sol.choi), sol.value
        if val >= inc:
            enc_r = new_r
        trace.append(max(val, inc))
    return enc_r @ enc_r.conj().T, trace, bad


def _choi_factor(x: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (x + x.conj().T))
    return v * np.sqrt(np.clip(w, 0, None))


def iterated_biconvex(
    noise,
    seed: int = 0,
    restarts: int = 5,
    iterations: int = 300,
    opts: SdpOptions | None = None,
    k: int = 1,
    half_step: str = "polar",
    inner_steps: int = 1,
) -> BiconvexResult:
    """Alternate recovery and encoding optimization from random isometric encodings.

    ``half_step="polar"`` takes ``inner_steps`` monotone ascent steps on each
    SDP; ``"sdp"`` runs the splitting solver under ``opts``. Either way a
    half-step keeps the incumbent whenever its own value is lower, so the
    recorded fidelity never decreases. After the last round the recovery is
    re-solved exactly for the final encoder and appended to the trace.
    """
    if restarts < 1 or iterations < 1:
        raise ValueError("restarts and iterations must be positive")
    if half_step not in ("polar", "sdp"):
        raise ValueError(f"half_step must be 'polar' or 'sdp', got {half_step!r}")
    d = 2**k
    dn = noise.dim_in
    final_opts = opts or SdpOptions(raise_on_failure=False)
    opts = opts or BICONVEX_SDP
    best = None
    fids, traces, bad_total = [], [], 0
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        v0 = random_isometry(dn, d, rng)
        enc, trace, bad = _biconvex_restart(noise, v0, rng, d, dn, iterations, opts, half_step, inner_steps)
        sol = solve_choi_sdp(recovery_form_from_blocks(pre_blocks(enc, noise, d)), dn, d, final_opts)
        bad += not sol.converged
        trace.append(max(sol.value, trace[-1]))
        rec = choi_to_kraus(ChoiMatrix(sol.choi, dn, d), tol=1e-8)
        bad_total += bad
        fids.append(trace[-1])
        traces.append(trace)
        if best is None or trace[-1] > best[2][-1]:
            best = (enc, rec, trace)
    enc, rec, trace = best
    return BiconvexResult(ChoiMatrix(enc, d, dn), rec, trace[-1], trace, fids, traces, bad_total)
