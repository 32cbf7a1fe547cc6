"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The three experiment criteria (6, 7, 8) run the desk-scale configs under
configs/ and take several minutes each; they carry the ``slow`` marker.
"""

import dataclasses
import itertools
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from vgqec import channels as ch
from vgqec import codes as cd
from vgqec import expcli
from vgqec import recovery as rc
from vgqec.qcore import KET_MINUS, KET_PLUS, kron_power, pauli_string, random_density_matrix, random_isometry
from vgqec.varopt import avg_fidelity_2design, shot_estimator

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _phase_distance(a, b):
    ov = np.vdot(b, a)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b))


def _desk_config(name):
    cfg = expcli.load_config(str(CONFIGS / f"{name}.json"))
    return dataclasses.replace(cfg, output=None)


# ---------------------------------------------------------------- 1


def test_criterion_1_knill_laflamme_five_qubit(acceptance):
    start = time.perf_counter()
    p = cd.code_projector(cd.five_one_three_encoder())
    rep = cd.kl_check(p, cd.weight_one_paulis(5))
    off = rep.lam - np.diag(np.diag(rep.lam))
    spread = np.max(np.abs(np.diag(rep.lam) - np.mean(np.diag(rep.lam))))
    elapsed = time.perf_counter() - start
    ok = rep.residual <= 1e-10 and np.max(np.abs(off)) <= 1e-10 and spread <= 1e-10 and elapsed < 1
    acceptance(
        1, ok, f"residual {rep.residual:.1e}, off-diagonal {np.max(np.abs(off)):.1e}, "
        f"diagonal spread {spread:.1e}, {elapsed:.2f}s"
    )
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_code_family_endpoints(acceptance):
    start = time.perf_counter()
    enc = cd.vgqec_k5_encoder(np.zeros(5))
    d0 = _phase_distance(enc.codewords[0], kron_power(KET_PLUS, 5))
    d1 = _phase_distance(enc.codewords[1], kron_power(KET_MINUS, 5))
    found = []
    for a in (np.pi / 2, -np.pi / 2):
        e = cd.vgqec_k5_encoder(np.full(5, a))
        try:
            signs = cd.stabilizer_signs(e, cd.FIVE_ONE_THREE_GENERATORS)
        except ValueError:
            continue
        dist = np.linalg.norm(cd.code_projector(e) - cd.stabilizer_projector(cd.FIVE_ONE_THREE_GENERATORS, signs))
        if dist <= 1e-10:
            found.append((a, signs))
    elapsed = time.perf_counter() - start
    ok = max(d0, d1) <= 1e-10 and len(found) > 0 and elapsed < 1
    realized = ", ".join(f"alpha={a:+.4f}: signs {s}" for a, s in found) or "none"
    acceptance(2, ok, f"alpha=0 codeword distance {max(d0, d1):.1e}; {realized}; {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_fidelity_identities(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_avg = worst_ent = 0.0
    for _ in range(100):
        c = ch.random_channel(2, 2, rng, rank=int(rng.integers(1, 5)))
        fc = ch.channel_fidelity(c)
        worst_avg = max(worst_avg, abs(avg_fidelity_2design(c) - (2 * fc + 1) / 3))
        worst_ent = max(worst_ent, abs(ch.entanglement_fidelity(np.eye(2) / 2, c) - fc))
    elapsed = time.perf_counter() - start
    ok = worst_avg <= 1e-12 and worst_ent <= 1e-12 and elapsed < 5
    acceptance(3, ok, f"2-design identity {worst_avg:.1e}, entanglement identity {worst_ent:.1e}, {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------- 4


def _relaxation_oracle(rho, t, t1, t2):
    # populations relax at 1/T1, coherences at 1/(2 T1) + 1/T_phi with 1/T_phi = 1/T2 - 1/(2 T1)
    coh = np.exp(-t / (2 * t1) - t * (1 / t2 - 1 / (2 * t1)))
    p1 = rho[1, 1] * np.exp(-t / t1)
    return np.array([[1 - p1, rho[0, 1] * coh], [rho[1, 0] * coh, p1]])


def test_criterion_4_channel_algebra(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    dims = [(2, 2), (4, 2), (8, 2), (2, 4), (4, 4), (8, 4), (2, 8)]
    worst_round = 0.0
    for i in range(50):
        d_in, d_out = dims[i % len(dims)]
        rank = int(rng.integers(-(-d_in // d_out), d_in * d_out + 1))
        c = ch.random_channel(d_in, d_out, rng, rank=rank)
        back = ch.choi_to_kraus(ch.kraus_to_choi(c))
        for _ in range(3):
            rho = random_density_matrix(d_in, rng)
            worst_round = max(worst_round, np.max(np.abs(back(rho) - c(rho))))
    worst_thermal = 0.0
    for _ in range(100):
        t1 = rng.uniform(1, 200)
        t2 = rng.uniform(0.05, 2) * t1  # physical range is T2 <= 2 T1
        t = rng.uniform(0, 3 * t1)
        rho = random_density_matrix(2, rng)
        got = ch.thermal_relaxation(t, t1, t2)(rho)
        worst_thermal = max(worst_thermal, np.max(np.abs(got - _relaxation_oracle(rho, t, t1, t2))))
    elapsed = time.perf_counter() - start
    ok = worst_round <= 1e-10 and worst_thermal <= 1e-10 and elapsed < 10
    acceptance(4, ok, f"round trip {worst_round:.1e}, thermal map {worst_thermal:.1e}, {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------- 5


def _weight_one_mixture(n, letters):
    labels = ["I" * n] + ["I" * q + a + "I" * (n - q - 1) for q in range(n) for a in letters]
    return ch.mixed_unitary(np.full(len(labels), 1 / len(labels)), [pauli_string(s) for s in labels])


def _bit_flip_enumeration(p):
    """Probability that at most one of three independent flips happens."""
    total = 0.0
    for flips in itertools.product((0, 1), repeat=3):
        if sum(flips) <= 1:
            total += np.prod([p if f else 1 - p for f in flips])
    return total


def test_criterion_5_sdp_solver(acceptance):
    start = time.perf_counter()
    residuals = []

    def solve(enc, noise):
        res = rc.optimal_recovery(enc, noise)
        residuals.append((res.residuals["tp_error"], -res.residuals["psd_min_eig"]))
        return res.fidelity

    # (a) exactly correctable instances
    kl_cases = [
        ("rep3Z", _weight_one_mixture(3, "X")),
        ("fiveonethree", _weight_one_mixture(5, "XYZ")),
        ("rep5X", _weight_one_mixture(5, "Z")),
    ]
    worst_kl = min(solve(cd.standard_encoder(lbl), noise) for lbl, noise in kl_cases)
    ok_a = worst_kl >= 1 - 1e-6

    # (b) repetition code under independent bit flips
    p = 0.1
    closed = 1 - 3 * p**2 + 2 * p**3
    got = solve(cd.standard_encoder("rep3Z"), ch.tensor_channels([ch.bit_flip(p)] * 3))
    ok_b = abs(got - 0.972) <= 1e-4 and abs(closed - 0.972) <= 1e-12 and abs(_bit_flip_enumeration(p) - closed) <= 1e-12

    # (c) ordering on random instances
    rng = np.random.default_rng(5)
    enc = cd.standard_encoder("rep3Z")
    dec = cd.standard_decoder("rep3Z")
    margins = []
    for i in range(20):
        noise = ch.random_channel(8, 8, rng, rank=2 + i % 3)
        sdp = solve(enc, noise)
        petz = ch.composite_fidelity(rc.petz_recovery(enc, noise), noise, enc.channel())
        std = ch.composite_fidelity(dec, noise, enc.channel())
        margins += [sdp - petz, petz, sdp - std]
    ok_c = min(margins) >= -1e-6

    # (d) feasibility of every returned Choi matrix
    worst_res = max(max(r) for r in residuals)
    ok_d = worst_res <= 1e-8
    elapsed = time.perf_counter() - start
    ok = ok_a and ok_b and ok_c and ok_d and elapsed < 120
    acceptance(
        5, ok, f"(a) min {worst_kl:.10f} (b) {got:.8f} vs {closed:.6f} (c) min margin {min(margins):.1e} "
        f"(d) worst residual {worst_res:.1e}, {elapsed:.1f}s"
    )
    assert ok


# ---------------------------------------------------------------- 6


def _fid(rows, code, mode="sdp"):
    return {r.param: r.channel_fidelity for r in rows if r.code == code and r.recovery == mode}


@pytest.mark.slow
def test_criterion_6_interpolation(acceptance):
    start = time.perf_counter()
    cfg = _desk_config("interpolation")
    assert len(cfg.grid) == 6 and cfg.optimizer.restarts == 5
    rows = expcli.run_interpolation(cfg)
    rep, five, vg = _fid(rows, "rep5X"), _fid(rows, "fiveonethree"), _fid(rows, "vgqec")
    margins = {eta: vg[eta] - max(rep[eta], five[eta]) for eta in cfg.grid}
    # endpoints are gated two-sided; a trained code that beats the reference code by more than the
    # tolerance fails here too, and the one-sided shortfall is reported next to it
    end0, end1 = vg[0.0] - rep[0.0], vg[1.0] - five[1.0]
    elapsed = time.perf_counter() - start
    ok_order = min(margins.values()) >= -5e-3
    ok_ends = abs(end0) <= 5e-3 and abs(end1) <= 5e-3
    ok = ok_order and ok_ends and elapsed < 15 * 60
    table = ", ".join(f"{eta:g}: {m:+.1e}" for eta, m in margins.items())
    acceptance(
        6, ok, f"vgqec - max(baselines) {table}; endpoint offsets {end0:+.1e} (rep5X), {end1:+.1e} "
        f"(fiveonethree); ordering {ok_order}, two-sided endpoints {ok_ends}, "
        f"one-sided endpoints {min(end0, end1) >= -5e-3}; {elapsed:.0f}s"
    )
    assert ok_order and elapsed < 15 * 60
    assert ok_ends, "trained code is not within the endpoint tolerance of the reference code"


# ---------------------------------------------------------------- 7


@pytest.mark.slow
def test_criterion_7_amplitude_damping(acceptance):
    start = time.perf_counter()
    cfg = _desk_config("amplitude_damping")
    rows = expcli.run_amplitude_damping(cfg)
    gammas = (0.1, 0.2, 0.3)
    vg3 = _fid(rows, "vgqec3", "variational")
    rep_std, rep_sdp = _fid(rows, "rep3Z", "standard"), _fid(rows, "rep3Z", "sdp")
    disc = _fid(rows, "discovered3")
    trained = min(vg3[g] - rep_std[g] for g in gammas)
    found = min(disc[g] - rep_sdp[g] for g in gammas)
    where = []
    for mode in ("standard", "sdp"):
        x = expcli.crossover(rows, ("discovered3", "sdp"), ("fiveonethree", mode))
        where.append(f"vs fiveonethree({mode}) {x:.3f}" if x is not None else f"vs fiveonethree({mode}) outside grid")
    elapsed = time.perf_counter() - start
    ok = trained > 0 and found > 0 and elapsed < 20 * 60
    acceptance(
        7, ok, f"vgqec3 - rep3Z min margin {trained:.2e}, discovered3 - rep3Z (sdp) min margin {found:.2e}, "
        f"discovered3 crossover gamma {', '.join(where)}; {elapsed:.0f}s"
    )
    assert ok


# ---------------------------------------------------------------- 8


@pytest.mark.slow
def test_criterion_8_thermal(acceptance):
    start = time.perf_counter()
    cfg = _desk_config("thermal")
    t1s, t2s = cfg.noise["t1"], cfg.noise["t2"]
    spec = next(c for c in cfg.codes if c.label == "biconvex")
    enc = cd.five_one_three_encoder()
    dec = cd.standard_decoder("fiveonethree")
    q0, std, final, worst_step = {}, {}, {}, np.inf
    for t in cfg.grid:
        noise = ch.thermal_layers(t, t1s, t2s)
        q0[t] = ch.channel_fidelity(ch.thermal_relaxation(t, t1s[0], t2s[0]))
        std[t] = ch.composite_fidelity(dec, ch.as_kraus(noise), enc.channel())
        res = rc.iterated_biconvex(
            noise, cfg.seed, spec.get("restarts", 5), spec.get("iterations", 2000),
            inner_steps=spec.get("inner_steps", 1),
        )
        worst_step = min(worst_step, min(np.min(np.diff(tr)) for tr in res.restart_traces))
        final[t] = res.fidelity
    elapsed = time.perf_counter() - start
    ok_decay = all(std[t] < q0[t] for t in (2.5, 3.0))
    ok_mono = worst_step >= -1e-9
    ok_beat = all(final[t] >= max(q0[t], std[t]) for t in cfg.grid)
    table = ", ".join(f"t={t:g}: Q0 {q0[t]:.5f} std {std[t]:.5f} bic {final[t]:.5f}" for t in cfg.grid)
    acceptance(
        8, ok_decay and ok_mono and ok_beat and elapsed < 20 * 60,
        f"standard below Q0 at t>=2.5: {ok_decay}; monotone (worst step {worst_step:.1e}): {ok_mono}; "
        f"biconvex above both: {ok_beat}; {table}; {elapsed:.0f}s",
    )
    assert ok_mono and ok_beat
    assert ok_decay, "five-qubit code with its standard decoder still beats the bare qubit at t = 2.5, 3.0"


# ---------------------------------------------------------------- 9


def test_criterion_9_shot_estimator(acceptance):
    start = time.perf_counter()
    gamma = brentq(lambda g: avg_fidelity_2design(ch.amplitude_damping(g)) - 0.9, 0.0, 1.0)
    c = ch.amplitude_damping(gamma)
    f = avg_fidelity_2design(c)
    shots, reps = 10_000, 200
    est = np.array([shot_estimator(c, shots, seed) for seed in range(reps)])
    sigma = np.sqrt(f * (1 - f) / shots)
    z = abs(est.mean() - f) / (sigma / np.sqrt(reps))
    sd = est.std(ddof=1)
    elapsed = time.perf_counter() - start
    ok = z <= 4 and sd <= 3 * sigma and elapsed < 60
    acceptance(9, ok, f"F={f:.4f}, mean offset {z:.2f} standard errors, std {sd:.2e} vs bound {3 * sigma:.2e}, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 10

SMALL_CONFIGS = {
    "interpolation": {
        "experiment": "interpolation",
        "grid": [0.0, 1.0],
        "codes": ["rep5X", "fiveonethree", "vgqec"],
        "optimizer": {"kind": "NelderMead", "restarts": 2, "max_evals": 15, "seed": 3},
    },
    "amplitude_damping": {
        "experiment": "amplitude_damping",
        "grid": [0.1, 0.2],
        "codes": ["rep3Z", {"label": "vgqec3", "max_evals": 15}, "discovered3"],
        "recovery": ["standard", "sdp"],
        "optimizer": {"kind": "LBFGS_FD", "restarts": 2, "max_evals": 15, "seed": 3},
    },
    "thermal": {
        "experiment": "thermal",
        "grid": [1.0, 2.0],
        "codes": ["Q0", "fiveonethree", {"label": "biconvex", "restarts": 2, "iterations": 20}],
        "recovery": ["standard", "sdp"],
        "optimizer": {"seed": 3},
    },
}


@pytest.mark.parametrize("name", sorted(SMALL_CONFIGS))
def test_criterion_10_determinism(name, tmp_path, monkeypatch, acceptance):
    import json

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL_CONFIGS[name]))
    outputs = []
    for i, threads in enumerate(("1", "2")):
        monkeypatch.setenv("VGQEC_THREADS", threads)
        out = tmp_path / f"run{i}.csv"
        assert expcli.cli_main(["run", str(cfg), "--output", str(out)]) == 0
        outputs.append(out.read_bytes())
    ok = outputs[0] == outputs[1] and len(outputs[0]) > 0
    acceptance(10, ok, f"{name}: {'identical' if ok else 'different'} CSV bytes ({len(outputs[0])} bytes)")
    assert ok
