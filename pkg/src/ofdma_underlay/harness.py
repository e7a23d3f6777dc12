"""Monte Carlo evaluation harness: experiments, audits, sweeps, artifacts.

An experiment draws a batch of fading states, solves the dual allocation,
then audits what the allocation actually does to the primaries: realized
interference with the true cross gains in every mode, plus per-state
collision probabilities (analytic chi-square approximation everywhere,
posterior resampling on a subsample) when the constraint is
probabilistic.  Sweeps rerun the experiment along one scenario axis and
serialize rows to a fixed-header CSV with a JSON sidecar.  All artifacts
are deterministic for a given config and seed: stable float formatting,
sorted keys, no timestamps.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .channel import sample_realizations
from .config import ScenarioConfig
from .errors import ConfigError
from .interference import surrogate_budget
from .optimizer import SolveResult, solve_dual

__all__ = [
    "EvaluationReport",
    "run_experiment",
    "sweep",
    "plateau_flags",
    "SWEEP_AXES",
    "sweep_csv_rows",
    "write_sweep_csv",
    "write_sweep_json",
    "write_trace_csv",
    "format_float",
]

SWEEP_AXES = {
    "ith": "interference_limit_w",
    "i_th": "interference_limit_w",
    "pt": "total_power_w",
    "p_t": "total_power_w",
    "epsilon": "collision_limit",
    "xi": "ber_target",
    "k": "num_subcarriers",
}

SWEEP_HEADER = "axis_value,ase,ase_stderr,power_used,max_interf,collision,epsilon"
TRACE_HEADER = "iter,mu,primal_ase,dual_value,power_gap"


def format_float(value) -> str:
    """Stable float formatting for artifacts ('' for None)."""
    if value is None:
        return ""
    return "%.12g" % float(value)


@dataclass
class EvaluationReport:
    """Summary of one experiment; arrays live on ``result``, not in JSON."""

    fingerprint: str
    csi_mode: str
    constraint_mode: str
    rate_mode: str
    num_states: int
    total_power_w: float
    interference_limit_w: list
    collision_limit: list
    ber_target: float
    ase: float
    ase_stderr: float
    avg_power_w: float
    power_gap_w: float
    mu: float
    iterations: int
    converged: bool
    budgets_w: list
    enforced_interference_max: list
    true_interference_mean: list
    true_interference_max: list
    true_violation_rate: list
    collision_analytic_max: list | None = None
    collision_mc_max: list | None = None
    collision_mc_stderr: float | None = None
    audited_states: int = 0
    elapsed_s: float = 0.0
    result: SolveResult | None = field(default=None, repr=False)
    collision_analytic: np.ndarray | None = field(default=None, repr=False)

    def to_mapping(self) -> dict:
        keep = ("fingerprint", "csi_mode", "constraint_mode", "rate_mode",
                "num_states", "total_power_w", "interference_limit_w",
                "collision_limit", "ber_target", "ase", "ase_stderr",
                "avg_power_w", "power_gap_w", "mu", "iterations", "converged",
                "budgets_w", "enforced_interference_max",
                "true_interference_mean", "true_interference_max",
                "true_violation_rate", "collision_analytic_max",
                "collision_mc_max", "collision_mc_stderr", "audited_states")
        return {name: getattr(self, name) for name in keep}


def _zero_power_report(cfg: ScenarioConfig, num_states: int) -> EvaluationReport:
    m = cfg.num_primaries
    zeros = [0.0] * m
    budgets = list(cfg.interference_limit_w)
    if cfg.constraint_mode == "probabilistic":
        budgets = [surrogate_budget(cfg.interference_limit_w[j],
                                    cfg.collision_limit[j], cfg.num_subcarriers)
                   for j in range(m)]
    return EvaluationReport(
        fingerprint=cfg.fingerprint(), csi_mode=cfg.csi_mode,
        constraint_mode=cfg.constraint_mode, rate_mode=cfg.rate_mode,
        num_states=num_states, total_power_w=0.0,
        interference_limit_w=list(cfg.interference_limit_w),
        collision_limit=list(cfg.collision_limit), ber_target=cfg.ber_target,
        ase=0.0, ase_stderr=0.0, avg_power_w=0.0, power_gap_w=0.0,
        mu=0.0, iterations=0, converged=True, budgets_w=budgets,
        enforced_interference_max=zeros, true_interference_mean=zeros,
        true_interference_max=zeros, true_violation_rate=zeros,
        collision_analytic_max=(zeros if cfg.constraint_mode == "probabilistic"
                                else None),
        collision_mc_max=None, collision_mc_stderr=None, audited_states=0)


def _collision_analytic(cfg: ScenarioConfig, batch, power_sel: np.ndarray):
    """Per-state, per-primary collision probability of the solved powers.

    Matches each state's weighted posterior quadratic form to a scaled
    central chi-square with 2K degrees of freedom and evaluates the tail
    at the interference limit.
    """
    k = cfg.num_subcarriers
    v = cfg.posterior_var
    post_mean = (1.0 + cfg.correlation ** 2) * batch.cross_est      # (S, M, K)
    mu_xi = (post_mean.real ** 2 + post_mean.imag ** 2) / v
    beta = power_sel[:, None, :] * v                                # (S, M, K)
    delta = np.sum(mu_xi, axis=2)                                   # (S, M)
    dof = 2 * k
    weight = np.sum(beta * (2.0 + mu_xi), axis=2) / (dof + delta)
    limits = np.asarray(cfg.interference_limit_w)
    out = np.zeros_like(weight)
    live = weight > 0.0
    if np.any(live):
        threshold = (limits / np.where(live, weight, 1.0)) / (1.0 + delta / dof)
        out[live] = special.gammaincc(dof / 2.0, threshold[live] / 2.0)
    return out


def _collision_mc(cfg: ScenarioConfig, batch, power_sel: np.ndarray,
                  state_indices, samples: int):
    """Posterior-resampled collision frequency on a subsample of states."""
    v = cfg.posterior_var
    scale = math.sqrt(v)
    limits = np.asarray(cfg.interference_limit_w)
    m, k = cfg.num_primaries, cfg.num_subcarriers
    worst = np.zeros(m)
    worst_stderr = 0.0
    for s in state_indices:
        rng = np.random.default_rng(
            np.random.SeedSequence((cfg.rng_seed, 0xA0D17, int(batch.streams[s]))))
        mean = (1.0 + cfg.correlation ** 2) * batch.cross_est[s]    # (M, K)
        power = power_sel[s]
        hits = np.zeros(m)
        done = 0
        while done < samples:
            block = min(samples - done, 1 << 12)
            noise = rng.standard_normal((2, block, m, k))
            draw = mean + scale * (noise[0] + 1j * noise[1])
            interf = (draw.real ** 2 + draw.imag ** 2) @ power      # (block, M)
            hits += np.sum(interf > limits, axis=0)
            done += block
        prob = hits / samples
        stderr = np.sqrt(np.maximum(prob * (1.0 - prob), 1.0 / samples) / samples)
        pick = prob > worst
        worst = np.where(pick, prob, worst)
        if np.any(pick):
            worst_stderr = float(np.max(stderr[pick]))
    return worst, worst_stderr


def run_experiment(cfg: ScenarioConfig, num_states: int, *,
                   max_iterations: int = 500, run_all_iterations: bool = False,
                   audit_states: int = 32, audit_samples: int = 20000,
                   collision_mc: bool = None) -> EvaluationReport:
    """Solve one scenario over ``num_states`` fading states and audit it.

    ``collision_mc`` defaults to True for probabilistic constraints; set
    False to skip the posterior resampling (the analytic column stays).
    A zero power budget short-circuits to an all-zero report.
    """
    if num_states < 1:
        raise ConfigError("num_states must be >= 1")
    start = time.perf_counter()
    if cfg.total_power_w == 0.0:
        report = _zero_power_report(cfg, num_states)
        report.elapsed_s = time.perf_counter() - start
        return report

    batch = sample_realizations(cfg, range(num_states))
    result = solve_dual(cfg, batch, max_iterations=max_iterations,
                        run_all_iterations=run_all_iterations)
    power_sel = result.policies.power                               # (S, K)

    true_w = batch.cross_true.real ** 2 + batch.cross_true.imag ** 2
    true_interf = np.einsum("sk,smk->sm", power_sel, true_w)
    limits = np.asarray(cfg.interference_limit_w)
    violation = np.mean(true_interf > limits * (1.0 + 1e-6), axis=0)

    probabilistic = cfg.constraint_mode == "probabilistic"
    if collision_mc is None:
        collision_mc = probabilistic
    analytic = analytic_max = mc_max = mc_stderr = None
    audited = 0
    if probabilistic:
        analytic = _collision_analytic(cfg, batch, power_sel)
        analytic_max = [float(x) for x in np.max(analytic, axis=0)]
        if collision_mc and audit_states > 0:
            # audit the analytically worst states, they bound the rest
            order = np.argsort(np.max(analytic, axis=1))[::-1]
            picks = order[:min(audit_states, num_states)]
            audited = picks.size
            worst, mc_stderr = _collision_mc(cfg, batch, power_sel, picks,
                                             audit_samples)
            mc_max = [float(x) for x in worst]

    report = EvaluationReport(
        fingerprint=cfg.fingerprint(), csi_mode=cfg.csi_mode,
        constraint_mode=cfg.constraint_mode, rate_mode=cfg.rate_mode,
        num_states=num_states, total_power_w=cfg.total_power_w,
        interference_limit_w=list(cfg.interference_limit_w),
        collision_limit=list(cfg.collision_limit), ber_target=cfg.ber_target,
        ase=result.ase, ase_stderr=result.ase_stderr,
        avg_power_w=result.avg_power_w,
        power_gap_w=result.avg_power_w - cfg.total_power_w,
        mu=result.dual.mu, iterations=result.dual.iterations,
        converged=result.dual.converged,
        budgets_w=[float(x) for x in result.budgets_w],
        enforced_interference_max=[float(x) for x in
                                   np.max(result.enforced_interference, axis=0)],
        true_interference_mean=[float(x) for x in np.mean(true_interf, axis=0)],
        true_interference_max=[float(x) for x in np.max(true_interf, axis=0)],
        true_violation_rate=[float(x) for x in violation],
        collision_analytic_max=analytic_max, collision_mc_max=mc_max,
        collision_mc_stderr=mc_stderr, audited_states=audited,
        result=result, collision_analytic=analytic)
    report.elapsed_s = time.perf_counter() - start
    return report


def _axis_update(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    field_name = SWEEP_AXES.get(axis, axis)
    if field_name == "interference_limit_w":
        return cfg.with_updates(
            interference_limit_w=(float(value),) * cfg.num_primaries)
    if field_name == "collision_limit":
        return cfg.with_updates(
            collision_limit=(float(value),) * cfg.num_primaries)
    if field_name == "num_subcarriers":
        return cfg.with_updates(num_subcarriers=int(value))
    if field_name in ("total_power_w", "ber_target"):
        return cfg.with_updates(**{field_name: float(value)})
    raise ConfigError("unknown sweep axis %r (choices: %s)"
                      % (axis, ", ".join(sorted(SWEEP_AXES))))


def sweep(cfg: ScenarioConfig, axis: str, values, num_states: int, *,
          threads: int = 1, **experiment_kwargs) -> list[EvaluationReport]:
    """Run one experiment per axis value; rows keep the input order.

    Values must be sorted nondecreasing so the monotonicity diagnostics
    (plateau flags, trend checks) read off the rows directly.
    """
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one axis value")
    if any(a > b for a, b in zip(values, values[1:])):
        raise ConfigError("sweep values must be sorted nondecreasing")
    configs = [_axis_update(cfg, axis, v) for v in values]

    def job(c):
        return run_experiment(c, num_states, **experiment_kwargs)

    if threads <= 1:
        return [job(c) for c in configs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, configs))


def plateau_flags(reports, rel_gain: float = 0.01) -> list:
    """Flag rows whose ASE gain over the previous row is below rel_gain."""
    flags = [False]
    for prev, cur in zip(reports, reports[1:]):
        base = max(abs(prev.ase), 1e-12)
        flags.append((cur.ase - prev.ase) < rel_gain * base)
    return flags


def sweep_csv_rows(values, reports) -> list[str]:
    rows = [SWEEP_HEADER]
    for value, rep in zip(values, reports):
        probabilistic = rep.constraint_mode == "probabilistic"
        if probabilistic:
            collision = max(rep.collision_analytic_max or [0.0])
            epsilon = min(rep.collision_limit)
        else:
            collision = max(rep.true_violation_rate or [0.0])
            epsilon = None
        rows.append(",".join([
            format_float(value), format_float(rep.ase),
            format_float(rep.ase_stderr), format_float(rep.avg_power_w),
            format_float(max(rep.true_interference_max or [0.0])),
            format_float(collision), format_float(epsilon)]))
    return rows


def write_sweep_csv(path, values, reports) -> None:
    text = "\n".join(sweep_csv_rows(values, reports)) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_sweep_json(path, cfg: ScenarioConfig, axis: str, values,
                     reports) -> None:
    payload = {
        "config": cfg.to_mapping(),
        "axis": axis,
        "values": [float(v) for v in values],
        "plateau": plateau_flags(reports),
        "rows": [rep.to_mapping() for rep in reports],
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(path, dual_state) -> None:
    trace = dual_state.trace
    lines = [TRACE_HEADER]
    for i in range(len(trace["iter"])):
        lines.append(",".join([
            "%d" % trace["iter"][i], format_float(trace["mu"][i]),
            format_float(trace["primal_ase"][i]),
            format_float(trace["dual_value"][i]),
            format_float(trace["power_gap"][i])]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
