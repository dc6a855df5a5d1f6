"""Seeded Monte Carlo experiment runner with CSV/JSON emission.

An experiment spec is an INI-style text file:

    [experiment]
    kind = sweep-power          ; one of the seven kinds below
    output = results.csv
    channels = 200
    seed = 1
    json_mirror = false

    [system]
    n_tx = 8
    n_rx = 2 2 2
    n_streams = 2 2 2
    noise_var = 1.0

    [design]
    error_var = 0.1             ; SE designs
    delta = 0.1                 ; NBE designs
    mse_targets = 0.05          ; constrained design
    power_limit_db = 15         ; or power_limit for a linear value
    threshold = 1e-3
    max_iters = 50

    [sweep]
    values = 5 10 15 20

    [evaluation]
    error_draws = 25            ; SE kinds: true-channel draws per channel

The sweep values' meaning depends on the kind: transmit power in dB
(sweep-power, balance), error variance (sweep-sigma), error radius
(sweep-delta, feasibility), or MSE target (power-vs-eta, convergence).
Power values in dB convert as P = 10^(dB/10) relative to unit noise.

Channels are drawn from seeds keyed by (base seed, channel index), so
editing the sweep grid never changes the channel ensemble.  Outputs
are deterministic byte for byte for a fixed spec and seed.  Channels
on which a conic subproblem fails are excluded from the averages and
counted in the `excluded` column.

SE sweeps report SMSE on sampled true channels Hhat + E, with error
entries drawn at per-entry variance error_var: the convention under
which the averaged objective the design minimizes equals the sampled
expectation.  Worst-case sweeps report the exact ball maximum; the
robust design there starts from the nominal design's receive filters,
which pins its certified objective at or below the nominal design's
worst case from the first iteration on.
"""

from __future__ import annotations

import configparser
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .model import Channel, SystemConfig, smse
from .nbe_design import (
    NbeDesignParams,
    check_feasibility,
    mse_balancing_design,
    mse_constrained_design,
    nbe_smse_design,
)
from .oracle import worst_case_smse, worst_case_user_mse
from .sampling import sample_channel, sample_se_error
from .se_design import SeDesignParams, SolverFailure, se_design

EXPERIMENT_KINDS = (
    "sweep-power",
    "sweep-sigma",
    "sweep-delta",
    "power-vs-eta",
    "feasibility",
    "convergence",
    "balance",
)


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated description of one batch experiment."""

    kind: str
    config: SystemConfig
    design: dict
    sweep: tuple
    channels: int = 200
    seed: int = 0
    output: str = "result.csv"
    json_mirror: bool = False
    eval_draws: int = 25

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(
                f"unknown experiment kind {self.kind!r}; expected one of "
                + ", ".join(EXPERIMENT_KINDS))
        object.__setattr__(self, "sweep", tuple(float(v) for v in self.sweep))
        if not self.sweep:
            raise ValueError("sweep grid must be nonempty")
        if self.channels < 1:
            raise ValueError("channel count must be at least 1")
        if self.eval_draws < 1:
            raise ValueError("error_draws must be at least 1")


def _parse_floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _parse_ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def parse_spec(path):
    """Read an experiment spec file into an ExperimentSpec.

    Raises ValueError naming the offending section/key or the violated
    invariant.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cp.read(path)
    if not read:
        raise ValueError(f"spec file not found: {path}")
    for section in ("experiment", "system"):
        if not cp.has_section(section):
            raise ValueError(f"spec is missing the [{section}] section")
    exp = cp["experiment"]
    sysc = cp["system"]
    config = SystemConfig(
        n_tx=sysc.getint("n_tx"),
        n_rx=_parse_ints(sysc.get("n_rx")),
        n_streams=_parse_ints(sysc.get("n_streams")),
        noise_var=sysc.getfloat("noise_var"),
    )
    design = {}
    if cp.has_section("design"):
        for key, value in cp["design"].items():
            design[key] = value
    if cp.has_section("sweep") and cp["sweep"].get("values"):
        sweep = _parse_floats(cp["sweep"].get("values"))
    else:
        raise ValueError("spec is missing [sweep] values")
    eval_draws = 25
    if cp.has_section("evaluation"):
        eval_draws = cp["evaluation"].getint("error_draws", fallback=25)
    return ExperimentSpec(
        kind=exp.get("kind", ""),
        config=config,
        design=design,
        sweep=sweep,
        channels=exp.getint("channels", fallback=200),
        seed=exp.getint("seed", fallback=0),
        output=exp.get("output", fallback="result.csv"),
        json_mirror=exp.getboolean("json_mirror", fallback=False),
        eval_draws=eval_draws,
    )


def _design_float(design, key, default=None):
    if key in design:
        return float(design[key])
    return default


def _power_limit(design, default=None):
    """Linear power limit from either a dB or a linear key."""
    if "power_limit_db" in design:
        return 10.0 ** (float(design["power_limit_db"]) / 10.0)
    if "power_limit" in design:
        return float(design["power_limit"])
    return default


def _se_params(design, error_var, power_limit):
    return SeDesignParams(
        error_var=error_var,
        power_limit=power_limit,
        threshold=_design_float(design, "threshold", 1e-3),
        max_iters=int(_design_float(design, "max_iters", 50)),
        receiver_variant=design.get("receiver_variant",
                                    "stationarity-consistent"),
        solver_tol=_design_float(design, "solver_tol", 1e-7),
    )


def _nbe_params(design, **overrides):
    kwargs = {
        "delta": _design_float(design, "delta", 0.1),
        "threshold": _design_float(design, "threshold", 1e-3),
        "max_iters": int(_design_float(design, "max_iters", 50)),
        "solver_tol": _design_float(design, "solver_tol", 1e-7),
    }
    limit = _power_limit(design)
    if limit is not None:
        kwargs["power_limit"] = limit
    if "mse_targets" in design:
        kwargs["mse_targets"] = _parse_floats(design["mse_targets"])
    kwargs.update(overrides)
    return NbeDesignParams(**kwargs)


def _channel(spec, index):
    return sample_channel(spec.config, seed=(spec.seed, 0, index))


def _mean_stderr(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def _se_eval_smse(tx, channel_hat, spec, error_var, channel_index):
    """Mean SMSE over sampled true channels Hhat + E (the design saw Hhat)."""
    vals = []
    for draw in range(spec.eval_draws):
        errors = sample_se_error(spec.config, error_var,
                                 seed=(spec.seed, 1, channel_index, draw),
                                 per_entry_variance=True)
        true = Channel(per_user=tuple(
            h + e for h, e in zip(channel_hat.per_user, errors)))
        vals.append(smse(tx, true, spec.config.noise_var))
    return float(np.mean(vals))


def _run_sweep_power(spec):
    rows = []
    for p_db in spec.sweep:
        limit = 10.0 ** (p_db / 10.0)
        robust_vals, blind_vals, excluded = [], [], 0
        for i in range(spec.channels):
            hhat = _channel(spec, i)
            ev = _design_float(spec.design, "error_var", 0.1)
            r_tx, r_tr = se_design(hhat, spec.config,
                                   _se_params(spec.design, ev, limit))
            b_tx, b_tr = se_design(hhat, spec.config,
                                   _se_params(spec.design, 0.0, limit))
            if "solver-failure" in (r_tr.termination, b_tr.termination):
                excluded += 1
                continue
            robust_vals.append(_se_eval_smse(r_tx, hhat, spec, ev, i))
            blind_vals.append(_se_eval_smse(b_tx, hhat, spec, ev, i))
        rm, rs = _mean_stderr(robust_vals)
        bm, bs = _mean_stderr(blind_vals)
        rows.append({"power_db": p_db, "robust_smse": rm, "robust_stderr": rs,
                     "nonrobust_smse": bm, "nonrobust_stderr": bs,
                     "excluded": excluded})
    return rows


def _run_sweep_sigma(spec):
    limit = _power_limit(spec.design, 10.0 ** 1.5)
    blind_cache = {}
    rows = []
    for ev in spec.sweep:
        robust_vals, blind_vals, excluded = [], [], 0
        for i in range(spec.channels):
            hhat = _channel(spec, i)
            if i not in blind_cache:
                b_tx, b_tr = se_design(hhat, spec.config,
                                       _se_params(spec.design, 0.0, limit))
                blind_cache[i] = b_tx if b_tr.termination != "solver-failure" \
                    else None
            r_tx, r_tr = se_design(hhat, spec.config,
                                   _se_params(spec.design, ev, limit))
            if blind_cache[i] is None or r_tr.termination == "solver-failure":
                excluded += 1
                continue
            robust_vals.append(_se_eval_smse(r_tx, hhat, spec, ev, i))
            blind_vals.append(_se_eval_smse(blind_cache[i], hhat, spec, ev, i))
        rm, rs = _mean_stderr(robust_vals)
        bm, bs = _mean_stderr(blind_vals)
        rows.append({"error_var": ev, "robust_smse": rm, "robust_stderr": rs,
                     "nonrobust_smse": bm, "nonrobust_stderr": bs,
                     "excluded": excluded})
    return rows


def _run_sweep_delta(spec):
    limit = _power_limit(spec.design, 10.0 ** 1.5)
    blind_cache = {}
    rows = []
    for delta in spec.sweep:
        robust_vals, blind_vals, excluded = [], [], 0
        for i in range(spec.channels):
            hhat = _channel(spec, i)
            if i not in blind_cache:
                b_tx, b_tr = se_design(hhat, spec.config,
                                       _se_params(spec.design, 0.0, limit))
                blind_cache[i] = b_tx if b_tr.termination != "solver-failure" \
                    else None
            if blind_cache[i] is None:
                excluded += 1
                continue
            r_tx, r_tr = nbe_smse_design(
                hhat, spec.config,
                _nbe_params(spec.design, delta=delta, power_limit=limit),
                init=blind_cache[i])
            if r_tr.termination == "solver-failure":
                excluded += 1
                continue
            nv = spec.config.noise_var
            robust_vals.append(worst_case_smse(r_tx, hhat, delta, nv))
            blind_vals.append(worst_case_smse(blind_cache[i], hhat, delta, nv))
        rm, rs = _mean_stderr(robust_vals)
        bm, bs = _mean_stderr(blind_vals)
        rows.append({"delta": delta,
                     "robust_wc_smse": rm, "robust_stderr": rs,
                     "nonrobust_wc_smse": bm, "nonrobust_stderr": bs,
                     "excluded": excluded})
    return rows


def _run_power_vs_eta(spec):
    rows = []
    for eta in spec.sweep:
        powers, iters, infeasible, excluded = [], [], 0, 0
        for i in range(spec.channels):
            hhat = _channel(spec, i)
            params = _nbe_params(spec.design, mse_targets=(eta,),
                                 power_limit=None)
            tx, trace, feasible = mse_constrained_design(hhat, spec.config,
                                                         params)
            if trace.termination == "solver-failure":
                excluded += 1
                continue
            if not feasible:
                infeasible += 1
                continue
            powers.append(trace.objectives[-1])
            iters.append(trace.n_iterations)
        pm, ps = _mean_stderr(powers)
        rows.append({"eta": eta, "power": pm, "power_stderr": ps,
                     "mean_iterations": float(np.mean(iters)) if iters
                     else math.nan,
                     "infeasible_fraction": infeasible / spec.channels,
                     "excluded": excluded})
    return rows


def _run_feasibility(spec):
    rows = []
    for delta in spec.sweep:
        verdicts, excluded = [], 0
        for i in range(spec.channels):
            hhat = _channel(spec, i)
            params = _nbe_params(spec.design, delta=delta, power_limit=None)
            try:
                verdicts.append(check_feasibility(hhat, spec.config, params))
            except SolverFailure:
                excluded += 1
        n = len(verdicts)
        frac = 1.0 - sum(verdicts) / n if n else math.nan
        stderr = math.sqrt(frac * (1.0 - frac) / n) if n else math.nan
        rows.append({"delta": delta, "infeasible_fraction": frac,
                     "stderr": stderr, "n_channels": n, "excluded": excluded})
    return rows


def _run_convergence(spec):
    rows = []
    for eta in spec.sweep:
        traces, infeasible, excluded = [], 0, 0
        for i in range(spec.channels):
            hhat = _channel(spec, i)
            params = _nbe_params(spec.design, mse_targets=(eta,),
                                 power_limit=None)
            tx, trace, feasible = mse_constrained_design(hhat, spec.config,
                                                         params)
            if trace.termination == "solver-failure":
                excluded += 1
                continue
            if not feasible:
                infeasible += 1
                continue
            traces.append(trace.objectives)
        counts = [len(t) for t in traces]
        med = float(np.median(counts)) if counts else math.nan
        mean_it = float(np.mean(counts)) if counts else math.nan
        longest = max(counts) if counts else 0
        for it in range(longest):
            # finished channels hold their final value
            vals = [t[min(it, len(t) - 1)] for t in traces]
            vm, vs = _mean_stderr(vals)
            rows.append({"eta": eta, "iteration": it + 1,
                         "mean_power": vm, "power_stderr": vs,
                         "active_channels": sum(1 for t in traces
                                                if len(t) > it),
                         "median_iterations": med,
                         "mean_iterations": mean_it,
                         "infeasible": infeasible, "excluded": excluded})
    return rows


def _run_balance(spec):
    rows = []
    for p_db in spec.sweep:
        limit = 10.0 ** (p_db / 10.0)
        vals, excluded = [], 0
        delta = _design_float(spec.design, "delta", 0.1)
        for i in range(spec.channels):
            hhat = _channel(spec, i)
            params = _nbe_params(spec.design, power_limit=limit)
            tx, trace = mse_balancing_design(hhat, spec.config, params)
            if trace.termination == "solver-failure" or not trace.objectives:
                excluded += 1
                continue
            nv = spec.config.noise_var
            worst = max(worst_case_user_mse(tx, hhat, k, delta, nv).value
                        for k in range(spec.config.n_users))
            vals.append(worst)
        vm, vs = _mean_stderr(vals)
        rows.append({"power_db": p_db, "minmax_mse": vm, "stderr": vs,
                     "excluded": excluded})
    return rows


_RUNNERS = {
    "sweep-power": _run_sweep_power,
    "sweep-sigma": _run_sweep_sigma,
    "sweep-delta": _run_sweep_delta,
    "power-vs-eta": _run_power_vs_eta,
    "feasibility": _run_feasibility,
    "convergence": _run_convergence,
    "balance": _run_balance,
}


def _fmt(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return "%.12g" % value
    return str(value)


def _metadata_lines(spec):
    cfg = spec.config
    design = " ".join(f"{k}={v}" for k, v in sorted(spec.design.items()))
    return [
        "# robust-thp experiment",
        f"# version: {__version__}",
        f"# kind: {spec.kind}",
        f"# seed: {spec.seed}",
        f"# channels: {spec.channels}",
        "# system: n_tx=%d n_rx=%s n_streams=%s noise_var=%s" % (
            cfg.n_tx, ",".join(map(str, cfg.n_rx)),
            ",".join(map(str, cfg.n_streams)), _fmt(cfg.noise_var)),
        f"# design: {design}" if design else "# design:",
        "# sweep: " + ",".join(_fmt(v) for v in spec.sweep),
        f"# eval_draws: {spec.eval_draws}",
    ]


def run_experiment(spec, output_dir=None):
    """Run the experiment and write its CSV (and optional JSON mirror).

    Returns the CSV path.  Identical specs produce byte-identical
    output files.
    """
    rows = _RUNNERS[spec.kind](spec)
    columns = list(rows[0].keys())
    lines = _metadata_lines(spec)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    path = spec.output
    if output_dir is not None:
        path = os.path.join(output_dir, os.path.basename(path))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if spec.json_mirror:
        payload = {
            "kind": spec.kind,
            "seed": spec.seed,
            "channels": spec.channels,
            "sweep": list(spec.sweep),
            "columns": columns,
            "rows": rows,
        }
        jpath = os.path.splitext(path)[0] + ".json"
        with open(jpath, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return path
