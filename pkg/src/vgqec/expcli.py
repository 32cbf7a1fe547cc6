"""Experiment sweeps, JSON configs, deterministic CSV output and the command-line entry point."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import channels as ch
from .ansatz import build_U_E, build_U_R
from .channels import KrausChannel, as_kraus, choi_to_kraus, composite_fidelity
from .codes import (
    Encoder,
    code_projector,
    kl_check,
    standard_decoder,
    standard_encoder,
    vgqec_k5_encoder,
    weight_one_paulis,
)
from .recovery import SdpNotConverged, SdpOptions, iterated_biconvex, optimal_recovery, petz_recovery
from .varopt import OptimizerConfig, train_alpha_sdp, train_full, two_design_states

log = logging.getLogger(__name__)

EXPERIMENTS = ("interpolation", "amplitude_damping", "thermal", "verify_code", "kl_check", "optimal_recovery")
RECOVERY_MODES = ("sdp", "petz", "standard", "variational")
TOP_KEYS = ("experiment", "grid", "codes", "recovery", "optimizer", "noise", "output")
CSV_HEADER = ("param", "code", "recovery", "channel_fidelity", "avg_fidelity", "restarts", "evaluations", "seed")

# IBMQ-LIMA coherence times in microseconds, qubits Q0..Q4
TABLE1_T1 = (97.51, 127.61, 92.68, 79.36, 19.76)
TABLE1_T2 = (178.3, 109.28, 120.95, 35.71, 19.4)

DEFAULT_CODES = {
    "interpolation": ("rep5X", "fiveonethree", "vgqec"),
    "amplitude_damping": ("unprotected", "rep3Z", "fiveonethree", "vgqec3", "vgqec5", "discovered3"),
    "thermal": ("Q0", "fiveonethree", "vgqec5", "biconvex"),
    "verify_code": ("discovered3", "rep3Z"),
    "optimal_recovery": ("rep3Z",),
    "kl_check": ("fiveonethree",),
}
DEFAULT_GRID = {
    "interpolation": (0.0, 0.2, 0.4, 0.6, 0.8, 1.0),
    "amplitude_damping": (0.0, 0.1, 0.2, 0.3, 0.4),
    "thermal": (0.5, 1.0, 1.5, 2.0, 2.5, 3.0),
    "verify_code": (0.0, 0.1, 0.2, 0.3),
    "optimal_recovery": (0.1,),
    "kl_check": (0.1,),
}
DEFAULT_MODES = {
    "interpolation": ("sdp",),
    "amplitude_damping": ("standard", "sdp"),
    "thermal": ("standard", "sdp"),
    "verify_code": ("sdp",),
    "optimal_recovery": ("sdp",),
    "kl_check": ("sdp",),
}
DEFAULT_OPTIMIZER = {
    "interpolation": dict(kind="NelderMead", restarts=5, max_evals=100, seed=7, tolerance=1e-6),
    "amplitude_damping": dict(kind="LBFGS_FD", restarts=8, max_evals=1000, seed=7, tolerance=1e-10),
    "thermal": dict(kind="LBFGS_FD", restarts=8, max_evals=400, seed=7, tolerance=1e-10),
}
FIXED_CODES = ("rep3Z", "rep3X", "rep5Z", "rep5X", "fiveonethree", "discovered3")
TRAINED_CODES = ("vgqec", "vgqec3", "vgqec5", "biconvex")
SPECIAL_CODES = ("unprotected", "Q0")
CODE_KEYS = ("label", "restarts", "max_evals", "layers", "iterations", "inner_steps", "kind")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


class InternalError(RuntimeError):
    pass


@dataclass(frozen=True)
class CodeSpec:
    label: str
    options: dict = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.options.get(key, default)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    grid: tuple
    codes: tuple
    recovery: tuple
    optimizer: OptimizerConfig
    noise: dict
    output: str | None = None
    sdp: SdpOptions = field(default_factory=SdpOptions)

    @property
    def seed(self) -> int:
        return self.optimizer.seed


# ---------------------------------------------------------------- config parsing


def _require(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"config key '{key}': {msg}")


def _number(v: Any, key: str) -> float:
    _require(isinstance(v, (int, float)) and not isinstance(v, bool), key, f"expected a number, got {v!r}")
    return float(v)


def _integer(v: Any, key: str) -> int:
    _require(isinstance(v, int) and not isinstance(v, bool), key, f"expected an integer, got {v!r}")
    return int(v)


def _parse_codes(raw, experiment: str) -> tuple:
    if raw is None:
        return tuple(CodeSpec(c) for c in DEFAULT_CODES[experiment])
    _require(isinstance(raw, list) and raw, "codes", "expected a non-empty list")
    out = []
    for i, item in enumerate(raw):
        key = f"codes[{i}]"
        if isinstance(item, str):
            item = {"label": item}
        _require(isinstance(item, dict) and "label" in item, key, "expected a label string or an object with 'label'")
        for k in item:
            _require(k in CODE_KEYS, f"{key}.{k}", f"unknown code option (allowed: {', '.join(CODE_KEYS)})")
        label = item["label"]
        _require(label in FIXED_CODES + TRAINED_CODES + SPECIAL_CODES, f"{key}.label", f"unknown code {label!r}")
        opts = {}
        for k in ("restarts", "max_evals", "layers", "iterations", "inner_steps"):
            if k in item:
                opts[k] = _integer(item[k], f"{key}.{k}")
                _require(opts[k] >= (0 if k == "layers" else 1), f"{key}.{k}", "out of range")
        if "kind" in item:
            _require(item["kind"] in ("NelderMead", "SPSA", "LBFGS_FD"), f"{key}.kind", f"unknown optimizer {item['kind']!r}")
            opts["kind"] = item["kind"]
        out.append(CodeSpec(label, opts))
    return tuple(out)


def _parse_recovery(raw, experiment: str) -> tuple[tuple, SdpOptions]:
    if raw is None:
        return DEFAULT_MODES[experiment], SdpOptions()
    sdp_kw = {}
    if isinstance(raw, dict):
        for k in raw:
            _require(k in ("modes", "max_iterations", "primal_tol", "dual_tol", "penalty"), f"recovery.{k}", "unknown option")
        modes = raw.get("modes", list(DEFAULT_MODES[experiment]))
        for k in ("primal_tol", "dual_tol", "penalty"):
            if k in raw:
                sdp_kw[k] = _number(raw[k], f"recovery.{k}")
                _require(sdp_kw[k] > 0, f"recovery.{k}", "must be positive")
        if "max_iterations" in raw:
            sdp_kw["max_iterations"] = _integer(raw["max_iterations"], "recovery.max_iterations")
            _require(sdp_kw["max_iterations"] >= 1, "recovery.max_iterations", "must be positive")
    else:
        modes = raw
    if isinstance(modes, str):
        modes = [modes]
    _require(isinstance(modes, list) and modes, "recovery", "expected a mode string or a list of modes")
    for m in modes:
        _require(m in RECOVERY_MODES, "recovery", f"unknown mode {m!r} (allowed: {', '.join(RECOVERY_MODES)})")
    return tuple(modes), SdpOptions(**sdp_kw)


def _parse_optimizer(raw, experiment: str) -> OptimizerConfig:
    base = dict(DEFAULT_OPTIMIZER.get(experiment, dict(kind="LBFGS_FD", restarts=1, max_evals=1000, seed=0, tolerance=1e-8)))
    if raw is not None:
        _require(isinstance(raw, dict), "optimizer", "expected an object")
        for k, v in raw.items():
            key = f"optimizer.{k}"
            _require(k in base, key, "unknown option (allowed: kind, restarts, max_evals, seed, tolerance)")
            if k == "kind":
                _require(v in ("NelderMead", "SPSA", "LBFGS_FD"), key, f"unknown optimizer {v!r}")
                base[k] = v
            elif k == "tolerance":
                base[k] = _number(v, key)
                _require(base[k] > 0, key, "must be positive")
            else:
                base[k] = _integer(v, key)
                _require(k == "seed" or base[k] >= 1, key, "must be at least 1")
    return OptimizerConfig(**base)


def _parse_noise(raw, experiment: str) -> dict:
    defaults = {
        "interpolation": {"model": "interpolation", "p_xx": 0.05, "gamma": 0.05, "strength": 0.05},
        "amplitude_damping": {"model": "amplitude_damping"},
        "verify_code": {"model": "amplitude_damping", "kl_gamma": 0.1},
        "thermal": {"model": "thermal", "t1": list(TABLE1_T1), "t2": list(TABLE1_T2)},
        "optimal_recovery": {"model": "bit_flip"},
        "kl_check": {"model": "pauli_weight1"},
    }[experiment]
    noise = dict(defaults)
    if raw is not None:
        _require(isinstance(raw, dict), "noise", "expected an object")
        noise.update(raw)
    for k, v in noise.items():
        if k == "model":
            _require(isinstance(v, str), "noise.model", "expected a string")
        elif k in ("t1", "t2"):
            _require(isinstance(v, list) and len(v) == 5, f"noise.{k}", "expected five per-qubit times")
            noise[k] = [_number(x, f"noise.{k}") for x in v]
            _require(all(x > 0 for x in noise[k]), f"noise.{k}", "times must be positive")
        else:
            noise[k] = _number(v, f"noise.{k}")
    if noise["model"] == "thermal":
        for a, b in zip(noise["t1"], noise["t2"]):
            _require(b <= 2 * a, "noise.t2", f"T2={b} exceeds 2*T1={2 * a}")
    return noise


def parse_config(data: Any) -> ExperimentConfig:
    _require(isinstance(data, dict), "<root>", "expected a JSON object")
    for k in data:
        _require(k in TOP_KEYS, k, f"unknown top-level key (allowed: {', '.join(TOP_KEYS)})")
    _require("experiment" in data, "experiment", "missing")
    exp = data["experiment"]
    _require(exp in EXPERIMENTS, "experiment", f"unknown experiment {exp!r} (allowed: {', '.join(EXPERIMENTS)})")
    grid = data.get("grid", list(DEFAULT_GRID[exp]))
    _require(isinstance(grid, list) and grid, "grid", "expected a non-empty list of numbers")
    grid = tuple(_number(g, "grid") for g in grid)
    _require(all(a < b for a, b in zip(grid, grid[1:])), "grid", "values must be sorted ascending without repeats")
    if exp in ("interpolation", "amplitude_damping", "verify_code"):
        _require(all(0 <= g <= 1 for g in grid), "grid", "values must lie in [0, 1]")
    if exp == "thermal":
        _require(all(g >= 0 for g in grid), "grid", "times must be non-negative")
    modes, sdp = _parse_recovery(data.get("recovery"), exp)
    output = data.get("output")
    _require(output is None or isinstance(output, str), "output", "expected a file path string")
    return ExperimentConfig(
        exp,
        grid,
        _parse_codes(data.get("codes"), exp),
        modes,
        _parse_optimizer(data.get("optimizer"), exp),
        _parse_noise(data.get("noise"), exp),
        output,
        sdp,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}") from None
    return parse_config(data)


# ---------------------------------------------------------------- rows and evaluation


@dataclass
class SweepRow:
    param: float
    code: str
    recovery: str
    channel_fidelity: float
    avg_fidelity: float
    restarts: int = 0
    evaluations: int = 0
    seed: int = 0

    def key(self):
        return (self.param, self.code, self.recovery)


def _avg_by_action(maps: Sequence[Callable]) -> float:
    total = 0.0
    for psi in two_design_states():
        rho = np.outer(psi, psi.conj())
        for m in reversed(maps):
            rho = m(rho)
        total += float(np.real(psi.conj() @ rho @ psi))
    return total / 4


def evaluate(maps: Sequence, claimed: float | None = None) -> tuple[float, float]:
    """Channel fidelity (Kraus form of the composite) and 2-design average (state evolution).

    ``maps`` are applied right to left. A ``claimed`` fidelity that disagrees
    with the recomputation by more than 1e-8 is an internal error.
    """
    kraus = [as_kraus(m) for m in maps]
    f_c = composite_fidelity(*kraus)
    f_avg = _avg_by_action(maps)
    if claimed is not None and abs(claimed - f_c) > 1e-8:
        raise InternalError(f"reported fidelity {claimed:.12g} differs from recomputed {f_c:.12g}")
    if abs(f_avg - (2 * f_c + 1) / 3) > 1e-8:
        raise InternalError(f"2-design average {f_avg:.12g} inconsistent with channel fidelity {f_c:.12g}")
    return f_c, f_avg


def _row(param, code, mode, maps, claimed=None, restarts=0, evaluations=0, seed=0) -> SweepRow:
    f_c, f_avg = evaluate(maps, claimed)
    return SweepRow(float(param), code, mode, f_c, f_avg, restarts, evaluations, seed)


def _fixed_code_rows(param, label, noise, modes, sdp: SdpOptions, seed) -> list[SweepRow]:
    enc = standard_encoder(label)
    rows = []
    for mode in modes:
        if mode == "variational":
            continue
        if mode == "standard":
            if label == "discovered3":
                continue  # no stabilizer decoder for this code
            rec = standard_decoder(label)
            rows.append(_row(param, label, mode, [rec, noise, enc.channel()], seed=seed))
        elif mode == "sdp":
            res = optimal_recovery(enc, noise, sdp)
            rows.append(_row(param, label, mode, [res.recovery, noise, enc.channel()], res.fidelity, 0, res.iterations, seed))
        else:
            rec = petz_recovery(enc, noise)
            rows.append(_row(param, label, mode, [rec, noise, enc.channel()], seed=seed))
    return rows


def _opt_for(cfg: ExperimentConfig, spec: CodeSpec) -> OptimizerConfig:
    o = cfg.optimizer
    return OptimizerConfig(
        spec.get("kind", o.kind), spec.get("restarts", o.restarts), spec.get("max_evals", o.max_evals), o.seed, o.tolerance
    )


def _variational_row(param, spec: CodeSpec, noise, cfg: ExperimentConfig) -> SweepRow:
    base = "rep3Z" if spec.label == "vgqec3" else "fiveonethree"
    e_c = standard_encoder(base)
    layers = spec.get("layers", 3)
    opt = _opt_for(cfg, spec)
    res = train_full(noise, e_c, build_U_E(e_c.n), build_U_R(e_c.n + 2, layers), standard_decoder(base), opt)
    row = _row(param, spec.label, "variational", [res.recovery, noise, res.encoder.channel()], None, opt.restarts, res.evaluations, opt.seed)
    if abs(row.avg_fidelity - res.best_fidelity) > 1e-8:
        raise InternalError(f"trained objective {res.best_fidelity:.12g} differs from recomputed {row.avg_fidelity:.12g}")
    return row


# ---------------------------------------------------------------- experiments


def _interp_point(cfg: ExperimentConfig, eta: float) -> list[SweepRow]:
    nz = cfg.noise
    noise = ch.interpolation_layers(eta, nz["p_xx"], nz["gamma"], nz["strength"], 5)
    rows = []
    for spec in cfg.codes:
        if spec.label in FIXED_CODES:
            rows += _fixed_code_rows(eta, spec.label, noise, cfg.recovery, cfg.sdp, cfg.seed)
        elif spec.label == "vgqec":
            opt = _opt_for(cfg, spec)
            res = train_alpha_sdp(noise, opt, final_opts=cfg.sdp)
            rows.append(
                _row(eta, "vgqec", "sdp", [res.recovery, noise, res.encoder.channel()], res.best_fidelity, opt.restarts, res.evaluations, opt.seed)
            )
        else:
            raise ConfigError(f"config key 'codes': {spec.label!r} is not available in the interpolation experiment")
    return rows


def _ad_point(cfg: ExperimentConfig, gamma: float) -> list[SweepRow]:
    rows = []
    single = ch.amplitude_damping(gamma)
    for spec in cfg.codes:
        if spec.label == "unprotected":
            rows.append(_row(gamma, "unprotected", "none", [single], seed=cfg.seed))
            continue
        n = 5 if spec.label in ("fiveonethree", "vgqec5", "rep5X", "rep5Z", "biconvex") else 3
        noise = ch.local_product([single] * n)
        if spec.label in FIXED_CODES:
            rows += _fixed_code_rows(gamma, spec.label, noise, cfg.recovery, cfg.sdp, cfg.seed)
        elif spec.label in ("vgqec3", "vgqec5"):
            rows.append(_variational_row(gamma, spec, noise, cfg))
        elif spec.label == "biconvex":
            rows.append(_biconvex_row(gamma, spec, ch.local_product([single] * 3), cfg))
        else:
            raise ConfigError(f"config key 'codes': {spec.label!r} is not available in the amplitude_damping experiment")
    return rows


def _biconvex_row(param, spec: CodeSpec, noise, cfg: ExperimentConfig) -> SweepRow:
    restarts = spec.get("restarts", 5)
    iterations = spec.get("iterations", 2000)
    res = iterated_biconvex(noise, cfg.seed, restarts, iterations, inner_steps=spec.get("inner_steps", 1))
    enc = choi_to_kraus(res.encoder_choi, tol=1e-8)
    return _row(param, "biconvex", "sdp", [res.recovery, noise, enc], None, restarts, iterations, cfg.seed)


def _thermal_point(cfg: ExperimentConfig, t: float) -> list[SweepRow]:
    t1, t2 = cfg.noise["t1"], cfg.noise["t2"]
    noise = ch.thermal_layers(t, t1, t2)
    rows = []
    for spec in cfg.codes:
        if spec.label == "Q0":
            rows.append(_row(t, "Q0", "none", [ch.thermal_relaxation(t, t1[0], t2[0])], seed=cfg.seed))
        elif spec.label in FIXED_CODES:
            _require(standard_encoder(spec.label).n == 5, "codes", f"{spec.label!r} does not fit the five-qubit register")
            rows += _fixed_code_rows(t, spec.label, noise, cfg.recovery, cfg.sdp, cfg.seed)
        elif spec.label == "vgqec5":
            rows.append(_variational_row(t, spec, noise, cfg))
        elif spec.label == "biconvex":
            rows.append(_biconvex_row(t, spec, noise, cfg))
        else:
            raise ConfigError(f"config key 'codes': {spec.label!r} is not available in the thermal experiment")
    return rows


def _verify_point(cfg: ExperimentConfig, gamma: float) -> list[SweepRow]:
    noise = ch.local_product([ch.amplitude_damping(gamma)] * 3)
    rows = []
    for spec in cfg.codes:
        _require(spec.label in FIXED_CODES and standard_encoder(spec.label).n == 3, "codes", f"{spec.label!r} is not a three-qubit code")
        rows += _fixed_code_rows(gamma, spec.label, noise, cfg.recovery, cfg.sdp, cfg.seed)
    return rows


def _recovery_point(cfg: ExperimentConfig, p: float) -> list[SweepRow]:
    rows = []
    for spec in cfg.codes:
        _require(spec.label in FIXED_CODES, "codes", f"{spec.label!r} is not a fixed code")
        n = standard_encoder(spec.label).n
        noise = noise_register(cfg.noise, p, n)
        rows += _fixed_code_rows(p, spec.label, noise, cfg.recovery, cfg.sdp, cfg.seed)
    return rows


def noise_register(noise: dict, p: float, n: int):
    model = noise["model"]
    single = {
        "bit_flip": ch.bit_flip,
        "amplitude_damping": ch.amplitude_damping,
        "depolarizing": ch.depolarizing,
    }.get(model)
    if single is not None:
        return ch.local_product([single(p)] * n)
    if model == "thermal":
        return ch.thermal_layers(p, noise["t1"][:n], noise["t2"][:n])
    if model == "interpolation":
        _require(n == 5, "noise.model", "interpolation noise is defined on five qubits")
        return ch.interpolation_layers(p, noise.get("p_xx", 0.05), noise.get("gamma", 0.05), noise.get("strength", 0.05), 5)
    raise ConfigError(f"config key 'noise.model': unknown model {model!r}")


POINT_RUNNERS = {
    "interpolation": _interp_point,
    "amplitude_damping": _ad_point,
    "thermal": _thermal_point,
    "verify_code": _verify_point,
    "optimal_recovery": _recovery_point,
}


def worker_count(tasks: int) -> int:
    env = os.environ.get("VGQEC_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError(f"environment variable 'VGQEC_THREADS' must be an integer, got {env!r}") from None
    return max(1, min(cap, tasks))


def _run_point(args):
    cfg, value = args
    return POINT_RUNNERS[cfg.experiment](cfg, value)


def run_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    """Run every grid point (in a process pool when more than one worker is allowed) and sort the rows."""
    if cfg.experiment not in POINT_RUNNERS:
        raise ConfigError(f"config key 'experiment': {cfg.experiment!r} does not produce a sweep")
    tasks = [(cfg, g) for g in cfg.grid]
    workers = worker_count(len(tasks))
    if workers == 1:
        chunks = [_run_point(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_point, tasks))
    rows = [r for chunk in chunks for r in chunk]
    return sorted(rows, key=SweepRow.key)


def run_interpolation(cfg: ExperimentConfig) -> list[SweepRow]:
    return run_sweep(cfg)


def run_amplitude_damping(cfg: ExperimentConfig) -> list[SweepRow]:
    return run_sweep(cfg)


def run_thermal(cfg: ExperimentConfig) -> list[SweepRow]:
    return run_sweep(cfg)


@dataclass
class VerifyReport:
    codewords: list
    isometry_error: float
    kl_gamma: float
    kl_residual: float
    kl_lambda: np.ndarray
    rows: list

    def text(self) -> str:
        lines = ["codewords:"]
        for j, w in enumerate(self.codewords):
            terms = [f"({c.real:+.6f}{c.imag:+.6f}j)|{i:03b}>" for i, c in enumerate(w) if abs(c) > 1e-12]
            lines.append(f"  |{j}>_L = " + " ".join(terms))
        lines.append(f"isometry error max|V^dag V - I| = {self.isometry_error:.3e}")
        lines.append(
            f"Knill-Laflamme residual under AD(gamma={self.kl_gamma:g}) Kraus set: {self.kl_residual:.6e}"
            + (" (not exactly correctable)" if self.kl_residual > 1e-10 else " (exactly correctable)")
        )
        lines.append(format_table(self.rows))
        return "\n".join(lines)


def run_verify_code(cfg: ExperimentConfig) -> VerifyReport:
    enc = standard_encoder("discovered3")
    v = enc.isometry
    iso = float(np.max(np.abs(v.conj().T @ v - np.eye(2))))
    g = float(cfg.noise.get("kl_gamma", 0.1))
    ad = ch.tensor_channels([ch.amplitude_damping(g)] * 3)
    kl = kl_check(code_projector(enc), list(ad.ops))
    return VerifyReport(enc.codewords, iso, g, kl.residual, kl.lam, run_sweep(cfg))


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        s = f"{v:.12g}"
        return "0" if s == "-0" else s
    return str(v)


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(rows, key=SweepRow.key):
        w.writerow([_fmt(r.param), r.code, r.recovery, _fmt(r.channel_fidelity), _fmt(r.avg_fidelity), r.restarts, r.evaluations, r.seed])
    return buf.getvalue()


def write_csv(rows: Sequence[SweepRow], path: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def format_table(rows: Sequence[SweepRow]) -> str:
    lines = [f"{'param':>8}  {'code':<14}{'recovery':<12}{'F_C':>16}{'F_avg':>16}"]
    for r in sorted(rows, key=SweepRow.key):
        lines.append(f"{r.param:>8.4g}  {r.code:<14}{r.recovery:<12}{r.channel_fidelity:>16.10f}{r.avg_fidelity:>16.10f}")
    return "\n".join(lines)


def write_svg(rows: Sequence[SweepRow], path: str, title: str = "") -> None:
    """Minimal polyline plot of channel fidelity against the sweep parameter, one line per series."""
    series: dict = {}
    for r in sorted(rows, key=SweepRow.key):
        series.setdefault(f"{r.code}/{r.recovery}", []).append((r.param, r.channel_fidelity))
    xs = [p for s in series.values() for p, _ in s]
    ys = [f for s in series.values() for _, f in s]
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    y0, y1 = min(ys), max(ys) if max(ys) > min(ys) else min(ys) + 1e-3
    w, h, m = 640, 420, 50
    sx = lambda x: m + (x - x0) / (x1 - x0) * (w - 2 * m)
    sy = lambda y: h - m - (y - y0) / (y1 - y0) * (h - 2 * m)
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#7f7f7f"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2}" y="20" text-anchor="middle">{title}</text>',
        f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>',
        f'<text x="{m}" y="{h - m + 15}">{x0:.3g}</text>',
        f'<text x="{w - m}" y="{h - m + 15}" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{m - 4}" y="{h - m}" text-anchor="end">{y0:.4f}</text>',
        f'<text x="{m - 4}" y="{m + 4}" text-anchor="end">{y1:.4f}</text>',
    ]
    for i, (name, pts) in enumerate(series.items()):
        color = palette[i % len(palette)]
        poly = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{poly}"/>')
        out.append(f'<text x="{w - m + 4 - 120}" y="{m + 14 * i}" fill="{color}">{name}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def crossover(rows: Sequence[SweepRow], a: tuple, b: tuple) -> float | None:
    """First parameter where series ``a`` overtakes series ``b`` (linear interpolation), or None."""
    fa = {r.param: r.channel_fidelity for r in rows if (r.code, r.recovery) == a}
    fb = {r.param: r.channel_fidelity for r in rows if (r.code, r.recovery) == b}
    ps = sorted(set(fa) & set(fb))
    diff = [fa[p] - fb[p] for p in ps]
    for i in range(1, len(ps)):
        if diff[i - 1] <= 0 < diff[i]:
            return ps[i - 1] + (ps[i] - ps[i - 1]) * (-diff[i - 1]) / (diff[i] - diff[i - 1])
    return None


def summary(cfg: ExperimentConfig, rows: Sequence[SweepRow]) -> str:
    lines = [f"experiment: {cfg.experiment}  seed: {cfg.seed}", format_table(rows)]
    if cfg.experiment == "amplitude_damping":
        for mode in ("standard", "sdp"):
            x = crossover(rows, ("discovered3", "sdp"), ("fiveonethree", mode))
            if any(r.code == "fiveonethree" and r.recovery == mode for r in rows):
                where = f"gamma ~ {x:.3f}" if x is not None else "not within the grid"
                lines.append(f"discovered3(sdp) overtakes fiveonethree({mode}): {where}")
    return "\n".join(lines)


# ---------------------------------------------------------------- CLI


def _emit(rows, output: str | None, svg: bool, title: str) -> None:
    if output:
        write_csv(rows, output)
        if svg:
            write_svg(rows, os.path.splitext(output)[0] + ".svg", title)
    else:
        sys.stdout.write(rows_to_csv(rows))


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    output = args.output or cfg.output
    if cfg.experiment == "verify_code":
        report = run_verify_code(cfg)
        print(report.text())
        _emit(report.rows, output, args.svg, cfg.experiment)
        return 0
    if cfg.experiment == "kl_check":
        return _kl_report([s.label for s in cfg.codes], cfg.noise, cfg.grid[0], output)
    rows = run_sweep(cfg)
    print(summary(cfg, rows), file=sys.stderr if not output else sys.stdout)
    _emit(rows, output, args.svg, cfg.experiment)
    return 0


def _kl_errors(noise: dict, gamma: float, n: int) -> list:
    model = noise.get("model", "pauli_weight1")
    if model == "pauli_weight1":
        return weight_one_paulis(n)
    if model == "amplitude_damping":
        return list(ch.tensor_channels([ch.amplitude_damping(gamma)] * n).ops)
    raise ConfigError(f"config key 'noise.model': kl-check supports pauli_weight1 or amplitude_damping, got {model!r}")


def _kl_report(labels, noise: dict, gamma: float, output: str | None) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("code", "error_set", "residual", "lambda_offdiag", "correctable"))
    for label in labels:
        enc = standard_encoder(label)
        rep = kl_check(code_projector(enc), _kl_errors(noise, gamma, enc.n))
        off = float(np.max(np.abs(rep.lam - np.diag(np.diag(rep.lam)))))
        model = noise.get("model", "pauli_weight1")
        print(f"{label}: error set {model}, residual {rep.residual:.3e}, max |lambda offdiag| {off:.3e}, correctable={rep.is_correctable()}")
        w.writerow((label, model, f"{rep.residual:.12g}", f"{off:.12g}", int(rep.is_correctable())))
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _cmd_kl(args) -> int:
    if args.code not in FIXED_CODES:
        raise ConfigError(f"config key 'code': unknown code {args.code!r}")
    return _kl_report([args.code], {"model": args.errors}, args.gamma, args.output)


def _cmd_recovery(args) -> int:
    data = {
        "experiment": "optimal_recovery",
        "grid": [args.param],
        "codes": [args.code],
        "recovery": {"modes": args.modes.split(","), "dual_tol": args.tol, "max_iterations": args.max_iterations},
        "noise": {"model": args.noise},
    }
    cfg = parse_config(data)
    rows = run_sweep(cfg)
    print(format_table(rows), file=sys.stderr if not args.output else sys.stdout)
    _emit(rows, args.output, False, "optimal_recovery")
    return 0


def _cmd_verify(args) -> int:
    data = {"experiment": "verify_code"}
    if args.grid:
        data["grid"] = [float(x) for x in args.grid.split(",")]
    cfg = parse_config(data)
    report = run_verify_code(cfg)
    print(report.text())
    _emit(report.rows, args.output, args.svg, "verify_code")
    return 0


def _cmd_encode(args) -> int:
    if args.alpha is not None:
        alpha = [float(x) for x in args.alpha.split(",")]
        if len(alpha) != 5:
            raise ConfigError("config key 'alpha': expected five comma-separated angles")
        enc = vgqec_k5_encoder(alpha)
    else:
        if args.code not in FIXED_CODES:
            raise ConfigError(f"config key 'code': unknown code {args.code!r}")
        enc = standard_encoder(args.code)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("logical", "basis", "real", "imag"))
    for j, word in enumerate(enc.codewords):
        for i, c in enumerate(word):
            if abs(c) > 1e-12:
                w.writerow((j, format(i, f"0{enc.n}b"), _fmt(float(c.real)), _fmt(float(c.imag))))
    print(f"{enc.label}: {enc.n} physical qubits, isometry error {np.max(np.abs(enc.isometry.conj().T @ enc.isometry - np.eye(2))):.2e}", file=sys.stderr)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vgqec", description="Variational graphical QEC experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--output", help="CSV path (overrides the config's 'output')")
    r.add_argument("--svg", action="store_true", help="also write an SVG plot next to the CSV")
    r.set_defaults(func=_cmd_run)

    k = sub.add_parser("kl-check", help="Knill-Laflamme test of a code against an error set")
    k.add_argument("--code", default="fiveonethree")
    k.add_argument("--errors", default="pauli_weight1", choices=("pauli_weight1", "amplitude_damping"))
    k.add_argument("--gamma", type=float, default=0.1)
    k.add_argument("--output")
    k.set_defaults(func=_cmd_kl)

    o = sub.add_parser("optimal-recovery", help="SDP-optimal recovery fidelity for a code and noise")
    o.add_argument("--code", default="rep3Z")
    o.add_argument("--noise", default="bit_flip", choices=("bit_flip", "amplitude_damping", "depolarizing", "thermal"))
    o.add_argument("--param", type=float, default=0.1)
    o.add_argument("--modes", default="sdp", help="comma-separated recovery modes")
    o.add_argument("--tol", type=float, default=1e-9)
    o.add_argument("--max-iterations", type=int, default=100_000)
    o.add_argument("--output")
    o.set_defaults(func=_cmd_recovery)

    v = sub.add_parser("verify-code", help="report on the discovered three-qubit code")
    v.add_argument("--grid", help="comma-separated damping values")
    v.add_argument("--output")
    v.add_argument("--svg", action="store_true")
    v.set_defaults(func=_cmd_verify)

    e = sub.add_parser("encode", help="print the codewords of a code")
    e.add_argument("--code", default="fiveonethree")
    e.add_argument("--alpha", help="five comma-separated angles for the k=5 family")
    e.add_argument("--output")
    e.set_defaults(func=_cmd_encode)
    return p


def cli_main(argv: Sequence[str] | None = None) -> int:
    """Exit codes: 0 success, 1 configuration error, 2 solver non-convergence, 3 internal consistency error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SdpNotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    logging.basicConfig(level=os.environ.get("VGQEC_LOG", "WARNING"))
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
