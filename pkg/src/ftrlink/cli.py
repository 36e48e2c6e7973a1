"""Command-line experiment runner.

    ftrlink run <config.json> [--out DIR] [--seed N] [--threads N] [--timing]
    ftrlink validate <config.json>

A config is a JSON document with one top-level ``experiment`` object.  Runs
write a CSV with one row per evaluation.  Exit codes: 0 success,
2 invalid or infeasible config, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .af_relay import AfLink, HardwareProfile, af_abep, af_outage
from .ftr_model import (
    FtrParams,
    SeriesControl,
    TruncationWarning,
    cdf_squared,
    effective_terms,
    pdf_squared,
    sample_envelope,
)
from .monte_carlo import (
    McConfig,
    empirical_abep,
    empirical_outage,
    make_measurement_oracle,
    simulate_af_snr,
    simulate_hops,
    simulate_ris_snr,
)
from .product_sum_stats import (
    MAX_CONTOUR_DIM,
    ChainBank,
    DimensionCapError,
    HopChain,
    product_cdf,
    product_pdf,
    truncation_error,
)
from .ris_system import (
    ExactOracle,
    PhaseOptimizerConfig,
    RisLink,
    common_phase,
    expectation_opt,
    optimize_phases,
    phase_fixed_point,
    phase_variance,
    ris_abep,
    ris_outage,
)
from .special_functions import SpecialFunctionError

KINDS = (
    "ftr-stats",
    "product-stats",
    "truncation-table",
    "optimize-phases",
    "ris-op",
    "ris-abep",
    "af-op",
    "af-abep",
    "compare",
    "mc-validate",
)
SWEEP_VARS = ("P_dB", "gamma_th", "upsilon_dB", "x")
HEADER = ["sweep_variable", "sweep_value", "series", "analytic", "mc_mean", "mc_std_error",
          "truncation_eps", "wall_time_s"]
THREADS_ENV = "FTRLINK_THREADS"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Schema or feasibility problem in a config; ``path`` names the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("experiment"), dict):
        raise ConfigError("experiment", "top-level 'experiment' object is required")
    return doc["experiment"]


def _get(block: dict, key: str, path: str, kind=float, default: Any = ...):
    if key not in block:
        if default is ...:
            raise ConfigError(f"{path}.{key}", "required field is missing")
        return default
    value = block[key]
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}", f"expected true or false, got {value!r}")
        return value
    try:
        if kind is int:
            if isinstance(value, bool) or not float(value).is_integer():
                raise ValueError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise ValueError
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        if kind is str:
            if not isinstance(value, str):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}", f"expected {kind.__name__}, got {value!r}") from None
    return value


def _block(exp: dict, key: str, required: bool = True) -> dict | None:
    if key not in exp:
        if required:
            raise ConfigError(key, "required block is missing")
        return None
    if not isinstance(exp[key], dict):
        raise ConfigError(key, "expected an object")
    return exp[key]


def _hop(block: dict, path: str, upsilon_override: float | None = None) -> FtrParams:
    if not isinstance(block, dict):
        raise ConfigError(path, "expected an object")
    m = _get(block, "m", path)
    K = _get(block, "K", path)
    delta = _get(block, "delta", path)
    try:
        if upsilon_override is not None:
            return FtrParams.from_upsilon(m, K, delta, upsilon_override)
        if "sigma2" in block:
            return FtrParams(m, K, delta, _get(block, "sigma2", path))
        if "upsilon_dB" in block:
            return FtrParams.from_upsilon(m, K, delta, 10.0 ** (_get(block, "upsilon_dB", path) / 10.0))
        if "upsilon" in block:
            return FtrParams.from_upsilon(m, K, delta, _get(block, "upsilon", path))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(path, "one of sigma2, upsilon or upsilon_dB is required")


@dataclass
class Sweep:
    variable: str
    values: list[float]


def _sweep(exp: dict) -> Sweep:
    block = _block(exp, "sweep")
    var = _get(block, "variable", "sweep", str)
    if var not in SWEEP_VARS:
        raise ConfigError("sweep.variable", f"must be one of {', '.join(SWEEP_VARS)}")
    if "values" in block:
        vals = block["values"]
        if not isinstance(vals, list) or not vals:
            raise ConfigError("sweep.values", "sweep range is empty")
        return Sweep(var, [_get({"v": v}, "v", "sweep.values") for v in vals])
    start = _get(block, "start", "sweep")
    stop = _get(block, "stop", "sweep")
    points = _get(block, "points", "sweep", int)
    if points < 1 or (points > 1 and stop < start):
        raise ConfigError("sweep", "sweep range is empty")
    return Sweep(var, [float(v) for v in np.linspace(start, stop, points)])


@dataclass
class Plan:
    kind: str
    exp: dict
    sweep: Sweep | None
    ctrl: SeriesControl
    mc: McConfig | None
    output: str
    evaluations: list[str] = field(default_factory=list)


def _series_control(exp: dict) -> SeriesControl:
    block = _block(exp, "series", required=False) or {}
    try:
        return SeriesControl(
            max_terms=_get(block, "max_terms", "series", int, 400),
            target_epsilon=_get(block, "target_epsilon", "series", float, 1e-12),
        )
    except ValueError as exc:
        raise ConfigError("series", str(exc)) from None


def _mc_config(exp: dict, seed: int | None, threads: int) -> McConfig | None:
    block = _block(exp, "mc", required=False)
    if block is None:
        return None
    try:
        return McConfig(
            trials=_get(block, "trials", "mc", int),
            seed=seed if seed is not None else _get(block, "seed", "mc", int, 0),
            block_size=_get(block, "block_size", "mc", int, 1 << 16),
            threads=threads,
        )
    except ValueError as exc:
        raise ConfigError("mc", str(exc)) from None


def _hardware(exp: dict) -> HardwareProfile:
    block = _block(exp, "hardware")
    try:
        return HardwareProfile(_get(block, "kappa1", "hardware"), _get(block, "kappa2", "hardware"))
    except ValueError as exc:
        raise ConfigError("hardware", str(exc)) from None


def plan(exp: dict, *, seed: int | None = None, threads: int = 1) -> Plan:
    """Validate an experiment object and list its evaluations."""
    kind = _get(exp, "kind", "experiment", str)
    if kind not in KINDS:
        raise ConfigError("experiment.kind", f"must be one of {', '.join(KINDS)}")
    ctrl = _series_control(exp)
    mc = _mc_config(exp, seed, threads)
    output = _get(exp, "output", "experiment", str, f"{kind}.csv")
    sweep = None if kind in ("truncation-table", "optimize-phases") else _sweep(exp)
    p = Plan(kind, exp, sweep, ctrl, mc, output)
    _CHECKS[kind](p)
    return p


def _need_mc(p: Plan) -> None:
    if p.mc is None:
        raise ConfigError("mc", "required block is missing")


def _system(p: Plan) -> dict:
    return _block(p.exp, "system")


def _check_ris(p: Plan, closed_form: bool = True) -> None:
    sysb = _system(p)
    L = _get(sysb, "L", "system", int)
    if L < 1:
        raise ConfigError("system.L", "must be >= 1")
    ch = _block(p.exp, "channel")
    _hop(ch.get("hop1"), "channel.hop1")
    _hop(ch.get("hop2"), "channel.hop2")
    _sweep_needs(p, "ris")
    if closed_form and _get(p.exp, "analytic", "experiment", bool, True) and L > MAX_CONTOUR_DIM:
        raise ConfigError(
            "system.L",
            f"closed form requested for L={L} but contour evaluation is capped at L <= "
            f"{MAX_CONTOUR_DIM}; set \"analytic\": false or use kind \"mc-validate\"",
        )
    if p.kind.endswith("abep"):
        _modulation(p.exp)
    for v in p.sweep.values:
        p.evaluations.append(f"{p.kind} L={L} {p.sweep.variable}={v:g}")


def _check_af(p: Plan) -> None:
    _system(p)
    ch = _block(p.exp, "channel")
    _hop(ch.get("hop1"), "channel.hop1")
    _hop(ch.get("hop2"), "channel.hop2")
    mode = _get(p.exp, "power_mode", "experiment", str, "any-power")
    if mode not in ("any-power", "optimal-power"):
        raise ConfigError("experiment.power_mode", "must be any-power or optimal-power")
    hw_mode = _get(p.exp, "hw_mode", "experiment", str, "ideal")
    if hw_mode not in ("ideal", "impaired"):
        raise ConfigError("experiment.hw_mode", "must be ideal or impaired")
    if hw_mode == "impaired":
        _hardware(p.exp)
        if mode == "optimal-power":
            raise ConfigError("experiment.power_mode", "optimal power split is defined for ideal hardware only")
    _sweep_needs(p, "af")
    if p.kind.endswith("abep"):
        _modulation(p.exp)
    for v in p.sweep.values:
        p.evaluations.append(f"{p.kind} {mode} {hw_mode} {p.sweep.variable}={v:g}")


def _sweep_needs(p: Plan, system: str) -> None:
    var = p.sweep.variable
    if var == "x":
        raise ConfigError("sweep.variable", f"'x' is not a {system} sweep; use P_dB, gamma_th or upsilon_dB")
    sysb = _system(p)
    if var != "P_dB":
        _get(sysb, "P_dB", "system")
    if var != "gamma_th" and p.kind.endswith(("op", "compare")):
        _get(p.exp, "gamma_th", "experiment")
    if var == "upsilon_dB":
        for hop in ("hop1", "hop2"):
            if "sigma2" in p.exp["channel"][hop]:
                raise ConfigError(f"channel.{hop}", "give upsilon (not sigma2) when sweeping upsilon_dB")


def _modulation(exp: dict) -> tuple[float, float]:
    block = _block(exp, "modulation")
    p = _get(block, "p", "modulation")
    q = _get(block, "q", "modulation")
    if not (p > 0 and q > 0):
        raise ConfigError("modulation", "p and q must be positive")
    return p, q


def _check_ftr(p: Plan) -> None:
    if p.sweep.variable != "x":
        raise ConfigError("sweep.variable", "statistics sweeps use 'x'")
    _hop(_block(p.exp, "channel").get("hop1"), "channel.hop1")
    _statistic(p.exp)
    p.evaluations += [f"{p.kind} x={v:g}" for v in p.sweep.values]


def _check_product(p: Plan) -> None:
    if p.sweep.variable != "x":
        raise ConfigError("sweep.variable", "statistics sweeps use 'x'")
    hops = _block(p.exp, "channel").get("hops")
    if not isinstance(hops, list) or not hops:
        raise ConfigError("channel.hops", "a non-empty list of hops is required")
    for i, h in enumerate(hops):
        _hop(h, f"channel.hops[{i}]")
    _statistic(p.exp)
    p.evaluations += [f"{p.kind} N={len(hops)} x={v:g}" for v in p.sweep.values]


def _statistic(exp: dict) -> str:
    stat = _get(exp, "statistic", "experiment", str, "cdf")
    if stat not in ("cdf", "pdf"):
        raise ConfigError("experiment.statistic", "must be cdf or pdf")
    return stat


def _check_table(p: Plan) -> None:
    rows = p.exp.get("rows")
    if not isinstance(rows, list) or not rows:
        raise ConfigError("rows", "a non-empty list of rows is required")
    for i, row in enumerate(rows):
        path = f"rows[{i}]"
        if not isinstance(row, dict):
            raise ConfigError(path, "expected an object")
        for key in ("L", "N", "M"):
            if _get(row, key, path, int) < 1:
                raise ConfigError(f"{path}.{key}", "must be >= 1")
        _hop(row, path)
        p.evaluations.append(f"truncation L={row['L']} N={row['N']} M={row['M']}")


def _check_phases(p: Plan) -> None:
    elements = p.exp.get("elements")
    if not isinstance(elements, list) or not elements:
        raise ConfigError("elements", "a non-empty list of elements is required")
    for i, el in enumerate(elements):
        path = f"elements[{i}]"
        if not isinstance(el, dict):
            raise ConfigError(path, "expected an object")
        _get(el, "theta_sum", path)
        _hop(el.get("hop1"), f"{path}.hop1")
        _hop(el.get("hop2"), f"{path}.hop2")
    opt = _block(p.exp, "optimizer")
    try:
        PhaseOptimizerConfig(_get(opt, "M1", "optimizer", int), _get(opt, "M2", "optimizer", int))
    except ValueError as exc:
        raise ConfigError("optimizer", str(exc)) from None
    oracle = _get(opt, "oracle", "optimizer", str, "exact")
    if oracle not in ("exact", "sampled"):
        raise ConfigError("optimizer.oracle", "must be exact or sampled")
    if oracle == "sampled":
        _need_mc(p)
    p.evaluations.append(f"optimize-phases L={len(elements)} oracle={oracle}")


def _check_compare(p: Plan) -> None:
    _need_mc(p)
    _check_ris(p, closed_form=True)
    if _get(p.exp, "hw_mode", "experiment", str, "ideal") == "impaired":
        _hardware(p.exp)


def _check_mc_validate(p: Plan) -> None:
    _need_mc(p)
    system = _get(p.exp, "system_kind", "experiment", str, "ris")
    if system not in ("ris", "af"):
        raise ConfigError("experiment.system_kind", "must be ris or af")
    metric = _get(p.exp, "metric", "experiment", str, "op")
    if metric not in ("op", "abep"):
        raise ConfigError("experiment.metric", "must be op or abep")
    if metric == "op" and p.sweep.variable != "gamma_th":
        _get(p.exp, "gamma_th", "experiment")
    if metric == "abep":
        _modulation(p.exp)
    if system == "ris":
        sysb = _system(p)
        L = _get(sysb, "L", "system", int)
        if L < 1:
            raise ConfigError("system.L", "must be >= 1")
        ch = _block(p.exp, "channel")
        _hop(ch.get("hop1"), "channel.hop1")
        _hop(ch.get("hop2"), "channel.hop2")
        _sweep_needs(p, "ris")
    else:
        _check_af(p)
        return
    p.evaluations += [f"mc-validate {system} {metric} {p.sweep.variable}={v:g}" for v in p.sweep.values]


_CHECKS: dict[str, Callable[[Plan], None]] = {
    "ftr-stats": _check_ftr,
    "product-stats": _check_product,
    "truncation-table": _check_table,
    "optimize-phases": _check_phases,
    "ris-op": _check_ris,
    "ris-abep": _check_ris,
    "af-op": _check_af,
    "af-abep": _check_af,
    "compare": _check_compare,
    "mc-validate": _check_mc_validate,
}


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

@dataclass
class Row:
    value: float
    series: str
    analytic: float | None = None
    mc_mean: float | None = None
    mc_std_error: float | None = None
    eps: float | None = None
    wall: float | None = None
    extra: dict = field(default_factory=dict)


def _point(p: Plan, value: float):
    """Channel laws, power and threshold at one sweep point."""
    exp = p.exp
    var = p.sweep.variable
    sysb = exp.get("system", {})
    ups = 10.0 ** (value / 10.0) if var == "upsilon_dB" else None
    ch = exp["channel"]
    hop1 = _hop(ch["hop1"], "channel.hop1", ups)
    hop2 = _hop(ch["hop2"], "channel.hop2", ups)
    P = 10.0 ** ((value if var == "P_dB" else float(sysb["P_dB"])) / 10.0)
    noise = float(sysb.get("noise", 1.0))
    gamma_th = value if var == "gamma_th" else exp.get("gamma_th")
    return hop1, hop2, P, noise, gamma_th


def _ris_link(p: Plan, hop1, hop2, P, noise) -> RisLink:
    L = int(p.exp["system"]["L"])
    return RisLink.identical(L, hop1, hop2, P=P, noise=noise)


def _af_link(p: Plan, hop1, hop2, P, noise) -> AfLink:
    hw = _hardware(p.exp) if p.exp.get("hw_mode", "ideal") == "impaired" else HardwareProfile()
    return AfLink(hop1, hop2, P, P, noise, hw)


def _eps(hops, ctrl: SeriesControl) -> float:
    M = effective_terms(list(hops), ctrl)
    return truncation_error(ChainBank((HopChain(tuple(hops)),)), M)


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _run_ftr(p: Plan) -> list[Row]:
    hop = _hop(p.exp["channel"]["hop1"], "channel.hop1")
    stat = _statistic(p.exp)
    samples = None
    if p.mc is not None and stat == "cdf":
        samples = sample_envelope(hop, p.mc.trials, p.mc.seed) ** 2
    rows = []
    for x in p.sweep.values:
        fn = cdf_squared if stat == "cdf" else pdf_squared
        val, wall = _timed(lambda: fn(hop, x, p.ctrl))
        row = Row(x, f"ftr-{stat}", val, eps=_eps([hop], p.ctrl), wall=wall)
        if samples is not None:
            est = empirical_outage(samples, x, p.mc.seed)
            row.mc_mean, row.mc_std_error = est.mean, est.std_error
        rows.append(row)
    return rows


def _run_product(p: Plan) -> list[Row]:
    hops = [_hop(h, f"channel.hops[{i}]") for i, h in enumerate(p.exp["channel"]["hops"])]
    chain = HopChain(tuple(hops))
    stat = _statistic(p.exp)
    prod = None
    if p.mc is not None and stat == "cdf":
        prod = np.prod(simulate_hops(hops, p.mc), axis=0)
    rows = []
    for x in p.sweep.values:
        fn = product_cdf if stat == "cdf" else product_pdf
        val, wall = _timed(lambda: fn(chain, x, p.ctrl))
        row = Row(x, f"product-{stat}", val, eps=_eps(hops, p.ctrl), wall=wall)
        if prod is not None:
            est = empirical_outage(prod, x, p.mc.seed)
            row.mc_mean, row.mc_std_error = est.mean, est.std_error
        rows.append(row)
    return rows


def _run_table(p: Plan) -> list[Row]:
    rows = []
    for i, r in enumerate(p.exp["rows"]):
        hop = _hop(r, f"rows[{i}]")
        L, N, M = int(r["L"]), int(r["N"]), int(r["M"])
        bank = ChainBank(tuple(HopChain((hop,) * N) for _ in range(L)))
        eps, wall = _timed(lambda: truncation_error(bank, M))
        rows.append(Row(float(i), "truncation", eps, eps=eps, wall=wall,
                        extra={"L": L, "N": N, "M": M}))
    return rows


def _run_phases(p: Plan) -> list[Row]:
    els = p.exp["elements"]
    chans = tuple((_hop(e["hop1"], "h"), _hop(e["hop2"], "g")) for e in els)
    theta = tuple(float(e["theta_sum"]) for e in els)
    link = RisLink(chans, theta, (2 * math.pi,) * len(els))
    opt = p.exp["optimizer"]
    cfg = PhaseOptimizerConfig(int(opt["M1"]), int(opt["M2"]))
    ctrl = p.ctrl
    if "series_terms" in opt:
        ctrl = SeriesControl.fixed(int(opt["series_terms"]))
    if opt.get("oracle", "exact") == "sampled":
        oracle = make_measurement_oracle(link, p.mc)
    else:
        oracle = ExactOracle.for_link(link, ctrl)
    (phi, trace), wall = _timed(lambda: optimize_phases(link, cfg, oracle, phi0=np.zeros(link.L)))
    e_opt, per = expectation_opt(link, ctrl)
    rows = [Row(float(k), "trace", v) for k, v in enumerate(trace)]
    rows += [Row(float(k), "phi", float(v)) for k, v in enumerate(phi)]
    rows += [Row(float(k), "expectation", float(v)) for k, v in enumerate(per)]
    rows.append(Row(0.0, "expectation_opt", e_opt))
    rows.append(Row(0.0, "common_phase", common_phase(link, phi), wall=wall))
    rows.append(Row(0.0, "phase_variance", phase_variance(link, phi)))
    if link.L >= 2:
        rows.append(Row(0.0, "fixed_point", phase_fixed_point(link.theta_sum) % (2 * math.pi)))
    return rows


def _ris_rows(p: Plan, metric: str, analytic: bool) -> list[Row]:
    rows = []
    for v in p.sweep.values:
        hop1, hop2, P, noise, gth = _point(p, v)
        link = _ris_link(p, hop1, hop2, P, noise)
        row = Row(v, "ris", eps=_eps([hop1, hop2] * link.L, p.ctrl) if link.L <= MAX_CONTOUR_DIM else None)
        if analytic:
            if metric == "op":
                row.analytic, row.wall = _timed(lambda: ris_outage(link, gth, p.ctrl))
            else:
                pq = _modulation(p.exp)
                row.analytic, row.wall = _timed(lambda: ris_abep(link, *pq, p.ctrl))
        if p.mc is not None:
            s = simulate_ris_snr(link, "optimal", p.mc)
            est = empirical_outage(s, gth, p.mc.seed) if metric == "op" else empirical_abep(s, *_modulation(p.exp), p.mc.seed)
            row.mc_mean, row.mc_std_error = est.mean, est.std_error
        rows.append(row)
    return rows


def _af_rows(p: Plan, metric: str, analytic: bool) -> list[Row]:
    mode = p.exp.get("power_mode", "any-power")
    hw_mode = p.exp.get("hw_mode", "ideal")
    rows = []
    for v in p.sweep.values:
        hop1, hop2, P, noise, gth = _point(p, v)
        link = _af_link(p, hop1, hop2, P, noise)
        row = Row(v, f"af-{mode}", eps=_eps([hop1, hop2], p.ctrl))
        if analytic:
            if metric == "op":
                row.analytic, row.wall = _timed(lambda: af_outage(link, gth, mode, p.ctrl))
            else:
                pq = _modulation(p.exp)
                row.analytic, row.wall = _timed(lambda: af_abep(link, *pq, mode, p.ctrl))
        if p.mc is not None:
            pm = "optimal" if mode == "optimal-power" else "fixed"
            s = simulate_af_snr(link, pm, hw_mode, p.mc)
            est = empirical_outage(s, gth, p.mc.seed) if metric == "op" else empirical_abep(s, *_modulation(p.exp), p.mc.seed)
            row.mc_mean, row.mc_std_error = est.mean, est.std_error
        rows.append(row)
    return rows


def _run_compare(p: Plan) -> list[Row]:
    analytic = bool(p.exp.get("analytic", True))
    ris = _ris_rows(p, "op", analytic)
    af = _af_rows(p, "op", True)
    out = []
    for r, a in zip(ris, af):
        lo_r, hi_r = r.mc_mean - 3 * r.mc_std_error, r.mc_mean + 3 * r.mc_std_error
        lo_a, hi_a = a.mc_mean - 3 * a.mc_std_error, a.mc_mean + 3 * a.mc_std_error
        overlap = int(lo_r <= hi_a and lo_a <= hi_r)
        r.extra["intervals_overlap"] = overlap
        a.extra["intervals_overlap"] = overlap
        out += [r, a]
    return out


def _run_mc_validate(p: Plan) -> list[Row]:
    metric = p.exp.get("metric", "op")
    if p.exp.get("system_kind", "ris") == "ris":
        L = int(p.exp["system"]["L"])
        return _ris_rows(p, metric, analytic=L <= MAX_CONTOUR_DIM and bool(p.exp.get("analytic", True)))
    return _af_rows(p, metric, analytic=bool(p.exp.get("analytic", True)))


_RUNNERS: dict[str, Callable[[Plan], list[Row]]] = {
    "ftr-stats": _run_ftr,
    "product-stats": _run_product,
    "truncation-table": _run_table,
    "optimize-phases": _run_phases,
    "ris-op": lambda p: _ris_rows(p, "op", bool(p.exp.get("analytic", True))),
    "ris-abep": lambda p: _ris_rows(p, "abep", bool(p.exp.get("analytic", True))),
    "af-op": lambda p: _af_rows(p, "op", bool(p.exp.get("analytic", True))),
    "af-abep": lambda p: _af_rows(p, "abep", bool(p.exp.get("analytic", True))),
    "compare": _run_compare,
    "mc-validate": _run_mc_validate,
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, p: Plan, rows: list[Row], timing: bool) -> None:
    extras: list[str] = []
    for r in rows:
        for k in r.extra:
            if k not in extras:
                extras.append(k)
    var = p.sweep.variable if p.sweep else ("row" if p.kind == "truncation-table" else "index")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER + extras)
        for r in rows:
            w.writerow([var, _fmt(r.value), r.series, _fmt(r.analytic), _fmt(r.mc_mean),
                        _fmt(r.mc_std_error), _fmt(r.eps), _fmt(r.wall) if timing else ""]
                       + [_fmt(r.extra.get(k)) for k in extras])


def execute(exp: dict, out_dir: Path, *, seed=None, threads=1, timing=False) -> Path:
    p = plan(exp, seed=seed, threads=threads)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        rows = _RUNNERS[p.kind](p)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / p.output
    write_csv(path, p, rows, timing)
    return path


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(THREADS_ENV, f"expected an integer, got {env!r}") from None
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ftrlink", description="RIS / AF-relay performance experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config")
    run_p.add_argument("--out", default=".", help="output directory")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--threads", type=int, default=None, help=f"worker threads (env {THREADS_ENV})")
    run_p.add_argument("--timing", action="store_true", help="record wall times in the CSV")
    val_p = sub.add_parser("validate", help="check a config without computing")
    val_p.add_argument("config")
    args = parser.parse_args(argv)
    try:
        exp = load_config(args.config)
        if args.command == "validate":
            p = plan(exp)
            print(f"ok: {p.kind}, {len(p.evaluations)} planned evaluations -> {p.output}")
            for line in p.evaluations:
                print(f"  {line}")
            return EXIT_OK
        path = execute(exp, Path(args.out), seed=args.seed, threads=_threads(args.threads), timing=args.timing)
        print(f"wrote {path}")
        return EXIT_OK
    except (ConfigError, DimensionCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpecialFunctionError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
