"""Dual-decomposition allocator for power, rate and subcarrier assignment.

The average-rate objective decomposes per fading state once the average
power constraint gets a multiplier ``mu``; each state keeps its own
multiplier vector ``eta`` (one entry per primary receiver) enforcing the
instantaneous interference budget.  For a candidate (user n, subcarrier
k) with reference SINR gamma, SINR density f and interference weight w,
the stationary transmit power is

    P* = [ f / (ln2 (mu f + eta w)) - P_ref / (slope gamma) ]+

which the code evaluates as 1 / (ln2 (mu + eta w / f)) minus the cutoff
term so that the f -> 0 tail stays finite.  Subcarriers go to the user
maximizing the selection metric

    Lambda = f * [ x / (ln2 (1 + x)) + log2(1 + x) ],  x = slope gamma P* / P_ref,

ties to the lowest user index.  ``eta`` is found by exponential
bracketing plus bisection until the realized budget use is tight to 1e-6
relative (or zero if slack); ``mu`` follows a projected subgradient with
step 1 / (P_t (10 + t)), stopping when the average-power gap is within
tolerance or the multiplier sits at zero with slack power.

The average power used is continuous and decreasing in mu, so mu is
initialized by bisecting that gap before the subgradient loop starts.
The diminishing 1/t steps then hold the iterate at the fixed point; from
a badly scaled start they would need thousands of iterations to close a
watt-sized gap, which the iteration cap treats as failure.

In deterministic mode the interference weights are the squared cross
links the transmitter knows (true under perfect CSI, estimates
otherwise) and the budget is the configured limit; in probabilistic mode
the weights are the certainty-equivalent posterior weights and the
budget is the collision surrogate from
:func:`ofdma_underlay.interference.surrogate_budget`.  The reported
average spectral efficiency sums log2 of the constellation over
subcarriers and averages over states; discrete mode floors each
constellation to the allowed bit loads after the continuous solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import BatchRealizations, ChannelRealization, sample_realizations
from .config import ScenarioConfig
from .errors import ConvergenceError, InfeasibleError, ShapeError
from .interference import posterior_aggregate_params, surrogate_budget
from .modulation import LN2, RatePolicy, cutoff_threshold, discretize_rate
from .sinr import SinrDistribution, gaussian_sum_params

__all__ = [
    "AllocationPolicy",
    "PolicyBatch",
    "DualState",
    "SolveResult",
    "waterfill_power",
    "selection_metric",
    "per_link_lagrangian",
    "reference_cutoff",
    "assign_subcarriers",
    "inner_interference_multiplier",
    "solve_dual",
]

_ETA_DOUBLINGS = 60
_BISECT_STEPS = 90
_TIGHT_REL = 1e-6


# ---------------------------------------------------------------------------
# scalar building blocks


def waterfill_power(gamma: float, density: float, mu: float, eta: float,
                    cross_weight: float, slope: float, p_ref: float) -> float:
    """Stationary power of one candidate link, clamped at zero."""
    if min(gamma, density, mu, eta, cross_weight) < 0.0:
        raise ValueError("gamma, density and multipliers must be >= 0")
    if slope <= 0.0 or p_ref <= 0.0:
        raise ValueError("slope and p_ref must be positive")
    if mu == 0.0 and eta * cross_weight == 0.0:
        raise ValueError("both multipliers vanish: power is unbounded")
    if gamma == 0.0:
        return 0.0
    inv_density = 1.0 / density if density > 1e-300 else 1e300
    price = mu + eta * cross_weight * inv_density
    return max(1.0 / (LN2 * price) - p_ref / (slope * gamma), 0.0)


def selection_metric(gamma: float, density: float, power: float,
                     slope: float, p_ref: float) -> float:
    """User-ranking metric of a candidate link at power ``power``."""
    if min(gamma, density, power) < 0.0:
        raise ValueError("gamma, density and power must be >= 0")
    if slope <= 0.0 or p_ref <= 0.0:
        raise ValueError("slope and p_ref must be positive")
    x = slope * gamma * power / p_ref
    if x == 0.0:
        return 0.0
    return density * (x / (LN2 * (1.0 + x)) + math.log1p(x) / LN2)


def per_link_lagrangian(gamma: float, density: float, power: float, mu: float,
                        eta: float, cross_weight: float, slope: float,
                        p_ref: float) -> float:
    """Per-state Lagrangian density of one link: rate term minus priced power."""
    x = slope * gamma * power / p_ref
    return density * math.log2(1.0 + x) - mu * density * power \
        - eta * cross_weight * power


def reference_cutoff(mu: float, eta: float, cross_weight: float, density: float,
                     slope: float, p_ref: float) -> float:
    """Reference-SINR threshold below which the stationary power is zero.

    Composes :func:`cutoff_threshold` with the reference-power scaling and
    the density weighting of the interference price implied by the
    stationary-power expression.
    """
    inv_density = 1.0 / density if density > 1e-300 else 1e300
    return cutoff_threshold(mu * p_ref, eta * p_ref, cross_weight * inv_density, slope)


def assign_subcarriers(metric: np.ndarray) -> np.ndarray:
    """0/1 assignment matrix picking argmax over users, ties to lowest index."""
    metric = np.asarray(metric, dtype=float)
    if metric.ndim != 2:
        raise ShapeError("metric must be (num_users, num_subcarriers)")
    winners = np.argmax(metric, axis=0)
    phi = np.zeros_like(metric)
    phi[winners, np.arange(metric.shape[1])] = 1.0
    return phi


# ---------------------------------------------------------------------------
# result containers


@dataclass(frozen=True)
class AllocationPolicy:
    """Dense per-state allocation: assignment, power, constellation, bits."""

    phi: np.ndarray
    power: np.ndarray
    constellation: np.ndarray
    bits: np.ndarray | None = None


@dataclass(frozen=True)
class PolicyBatch:
    """Compact allocation for every solved state.

    user/power/x are (S, K): winning user index, transmit power, and
    x = slope * gamma * P / P_ref of the winner (so constellation = 1 + x).
    """

    num_users: int
    user: np.ndarray
    power: np.ndarray
    x: np.ndarray
    bits: np.ndarray | None = None

    def __len__(self) -> int:
        return self.user.shape[0]

    def state(self, index: int) -> AllocationPolicy:
        k = self.user.shape[1]
        n = self.num_users
        phi = np.zeros((n, k))
        phi[self.user[index], np.arange(k)] = 1.0
        power = np.zeros((n, k))
        power[self.user[index], np.arange(k)] = self.power[index]
        constellation = np.ones((n, k))
        constellation[self.user[index], np.arange(k)] = 1.0 + self.x[index]
        bits = None
        if self.bits is not None:
            bits = np.zeros((n, k), dtype=int)
            bits[self.user[index], np.arange(k)] = self.bits[index]
        return AllocationPolicy(phi=phi, power=power, constellation=constellation,
                                bits=bits)


@dataclass
class DualState:
    """Multipliers and iteration trace of one solve."""

    mu: float
    eta: np.ndarray                 # (S, M)
    iterations: int
    converged: bool
    trace: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SolveResult:
    """Solved allocation over a batch of fading states."""

    cfg: ScenarioConfig
    policies: PolicyBatch
    dual: DualState
    state_rates: np.ndarray         # (S,) per-state summed rate actually reported
    ase: float
    ase_stderr: float
    avg_power_w: float
    enforced_interference: np.ndarray   # (S, M) LHS the solver constrained
    budgets_w: np.ndarray               # (M,) per-state budget on that LHS
    reference_power_w: np.ndarray       # (S,)
    streams: np.ndarray                 # (S,) realization indices


# ---------------------------------------------------------------------------
# vectorized workspace


class _Workspace:
    """Per-solve precomputed arrays shared by every dual iteration."""

    __slots__ = ("cfg", "policy", "count", "gamma", "density", "inv_density",
                 "pcut", "weights", "budgets", "p_ref", "streams")

    def __init__(self, cfg: ScenarioConfig, batch: BatchRealizations):
        self.cfg = cfg
        self.policy = RatePolicy.from_config(cfg)
        s = len(batch)
        n, m, k = cfg.num_users, cfg.num_primaries, cfg.num_subcarriers
        self.count = s
        self.streams = np.asarray(batch.streams)

        probabilistic = cfg.constraint_mode == "probabilistic"
        if probabilistic:
            post_mean = (1.0 + cfg.correlation ** 2) * batch.cross_est
            post_var = cfg.posterior_var
            mu_xi = (post_mean.real ** 2 + post_mean.imag ** 2) / post_var
            weights = post_var * (2.0 + mu_xi)                     # (S, M, K)
            budgets = np.array([
                surrogate_budget(cfg.interference_limit_w[j], cfg.collision_limit[j], k)
                for j in range(m)])
            agg_mean, agg_var = posterior_aggregate_params(cfg)
        else:
            known = batch.cross_true if cfg.csi_mode == "perfect" else batch.cross_est
            weights = known.real ** 2 + known.imag ** 2            # (S, M, K)
            budgets = np.asarray(cfg.interference_limit_w, dtype=float)
            var_src = cfg.cross_var if cfg.csi_mode == "perfect" else cfg.estimate_var
            agg_mean, agg_var = gaussian_sum_params(cfg.cross_mean, var_src, k)

        self.weights = weights
        self.budgets = budgets

        n_ref = np.sum(weights, axis=2)                            # (S, M)
        with np.errstate(divide="ignore"):
            caps = budgets / n_ref                                 # (S, M)
        cap_int = np.min(caps, axis=1)
        binding = np.argmin(caps, axis=1)
        self.p_ref = np.minimum(cfg.total_power_w / k, cap_int)    # (S,)

        noise = cfg.total_noise_w
        self.gamma = batch.direct_power * (self.p_ref / noise)[:, None, None]

        density = np.empty((s, n, k))
        for j in range(m):
            mask = binding == j
            if not np.any(mask):
                continue
            for idx_n in range(n):
                for idx_k in range(k):
                    dist = SinrDistribution(
                        direct_mean=float(cfg.direct_gain_means[idx_n, idx_k]),
                        agg_mean=agg_mean, agg_var=agg_var,
                        budget_w=float(budgets[j]),
                        total_power_w=cfg.total_power_w,
                        noise_w=noise, num_subcarriers=k)
                    density[mask, idx_n, idx_k] = dist.pdf(self.gamma[mask, idx_n, idx_k])
        self.density = density
        with np.errstate(divide="ignore"):
            self.inv_density = np.where(density > 1e-300, 1.0 / density, 1e300)
            self.pcut = self.p_ref[:, None, None] / (self.policy.slope * self.gamma)

    def subset(self, idx):
        return (self.gamma[idx], self.inv_density[idx], self.density[idx],
                self.pcut[idx], self.weights[idx])


def _allocate(mu, eta, gamma, inv_density, density, pcut, weights):
    """Evaluate the stationary allocation for per-state multipliers.

    eta is (S, M); returns winner indices, winner power/x (S, K) and the
    enforced interference (S, M).
    """
    priced = np.einsum("sm,smk->sk", eta, weights)                 # (S, K)
    with np.errstate(over="ignore"):
        price = mu + priced[:, None, :] * inv_density              # (S, N, K)
    with np.errstate(divide="ignore"):
        water = 1.0 / (LN2 * price)
    power = water - pcut
    np.maximum(power, 0.0, out=power)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(power > 0.0, power / pcut, 0.0)
        metric = density * (x / (LN2 * (1.0 + x)) + np.log1p(x) / LN2)
    winner = np.argmax(metric, axis=1)                             # (S, K)
    take = winner[:, None, :]
    p_sel = np.take_along_axis(power, take, axis=1)[:, 0, :]
    x_sel = np.take_along_axis(x, take, axis=1)[:, 0, :]
    interference = np.einsum("sk,smk->sm", p_sel, weights)
    return winner, p_sel, x_sel, interference


def _solve_states(ws: _Workspace, mu: float, eta_start: np.ndarray):
    """Per-state inner problem: allocation plus tight interference multipliers."""
    s, m_count = ws.count, ws.cfg.num_primaries
    eta = np.zeros((s, m_count))
    arrays = ws.subset(slice(None))
    winner, p_sel, x_sel, interf = _allocate(mu, eta, *arrays)

    tol_hi = ws.budgets * (1.0 + _TIGHT_REL)
    bad = np.any(interf > tol_hi, axis=1)
    if np.any(bad):
        idx = np.nonzero(bad)[0]
        sub = ws.subset(idx)
        eta_sub = _tighten(ws, mu, sub, ws.budgets, eta_start[idx])
        w_sub, p_sub, x_sub, i_sub = _allocate(mu, eta_sub, *sub)
        eta[idx] = eta_sub
        winner[idx] = w_sub
        p_sel[idx] = p_sub
        x_sel[idx] = x_sub
        interf[idx] = i_sub
    return winner, p_sel, x_sel, interf, eta


def _tighten(ws: _Workspace, mu: float, sub, budgets: np.ndarray,
             eta_hint: np.ndarray) -> np.ndarray:
    """Bracket and bisect the interference multipliers of violating states.

    With a single primary this is exact bisection on a scalar; with
    several it sweeps the primaries cyclically, re-tightening until every
    budget holds (raising any multiplier only lowers all interference
    terms, so the sweep terminates).
    """
    s = sub[0].shape[0]
    m_count = budgets.size
    eta = np.zeros((s, m_count))
    sweeps = 1 if m_count == 1 else 8
    for _ in range(sweeps):
        for j in range(m_count):
            eta = _bisect_primary(ws, mu, sub, budgets, eta, j, eta_hint[:, j])
        _, _, _, interf = _allocate(mu, eta, *sub)
        if np.all(interf <= budgets * (1.0 + _TIGHT_REL)):
            return eta
    raise InfeasibleError("interference budgets remain violated after "
                          "cyclic multiplier tightening")


def _bisect_primary(ws, mu, sub, budgets, eta, j, hint):
    """Tighten eta[:, j] so primary j's budget holds with near-tightness."""
    s = eta.shape[0]
    budget = budgets[j]

    def interference_j(eta_j):
        trial = eta.copy()
        trial[:, j] = eta_j
        _, _, _, interf = _allocate(mu, trial, *sub)
        return interf[:, j], trial

    interf0, _ = interference_j(np.zeros(s))
    needs = interf0 > budget * (1.0 + _TIGHT_REL)
    if not np.any(needs):
        eta[:, j] = 0.0
        return eta

    # exponential bracket, warm-started from the previous outer iteration
    hi = np.where(hint > 0.0, hint, 1.0)
    lo = np.zeros(s)
    for _ in range(_ETA_DOUBLINGS):
        interf, _ = interference_j(np.where(needs, hi, 0.0))
        feasible = interf <= budget
        if np.all(feasible | ~needs):
            break
        grow = needs & ~feasible
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, hi * 2.0, hi)
    else:
        raise InfeasibleError(
            "no finite multiplier meets primary %d's budget of %g W" % (j, budget))

    # lo is 0 (infeasible by `needs`) or a hi that failed during doubling,
    # so [lo, hi] always brackets the root
    tight_lo = budget * (1.0 - _TIGHT_REL)
    active = needs.copy()
    result = np.where(needs, hi, 0.0)
    for _ in range(_BISECT_STEPS):
        if not np.any(active):
            break
        mid = np.where(active, 0.5 * (lo + hi), result)
        interf, _ = interference_j(mid)
        feas = interf <= budget
        hi = np.where(active & feas, mid, hi)
        lo = np.where(active & ~feas, mid, lo)
        result = np.where(active, hi, result)
        done = active & feas & (interf >= tight_lo)
        done |= active & ((hi - lo) <= 1e-12 * np.maximum(hi, 1.0))
        active &= ~done
    eta[:, j] = result
    return eta


def _warm_start_mu(ws: _Workspace, tol_w: float):
    """Initialize the power multiplier by bisecting the power gap.

    Returns (mu0, eta0) with |avg power - P_t| <= tol_w at mu0, or mu0 = 0
    when the interference budgets alone keep the power below target.  The
    carried eta warm-starts each evaluation's inner brackets.
    """
    p_t = ws.cfg.total_power_w
    eta = np.zeros((ws.count, ws.cfg.num_primaries))

    def gap_at(mu):
        nonlocal eta
        _, p_sel, _, _, eta = _solve_states(ws, mu, eta)
        return float(np.mean(np.sum(p_sel, axis=1))) - p_t

    if gap_at(0.0) <= 0.0:
        return 0.0, eta
    lo = 0.0
    hi = ws.cfg.num_subcarriers / (p_t * LN2)
    for _ in range(_ETA_DOUBLINGS):
        if gap_at(hi) <= 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ConvergenceError("cannot bracket the power multiplier: average "
                               "power exceeds the budget at mu = %g" % hi)
    mid = hi
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        gap = gap_at(mid)
        if abs(gap) <= tol_w:
            return mid, eta
        if gap > 0.0:
            lo = mid
        else:
            hi = mid
    gap_at(hi)
    return hi, eta            # feasible side when the gap jumps across zero


def _dual_bound(ws: _Workspace, mu: float, eta: np.ndarray) -> float:
    """Weak-duality upper bound at (mu, eta): unweighted per-state maximum."""
    priced = mu + np.einsum("sm,smk->sk", eta, ws.weights)         # (S, K)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        inv_level = 1.0 / (LN2 * priced)                           # (S, K)
        x = inv_level[:, None, :] / ws.pcut - 1.0
        np.maximum(x, 0.0, out=x)
        value = np.log1p(x) / LN2 - priced[:, None, :] * (x * ws.pcut)
    best = np.max(value, axis=1)                                   # (S, K)
    per_state = np.sum(best, axis=1) + eta @ ws.budgets
    return mu * ws.cfg.total_power_w + float(np.mean(per_state))


# ---------------------------------------------------------------------------
# public entry points


def inner_interference_multiplier(cfg: ScenarioConfig, real: ChannelRealization,
                                  mu: float):
    """Tight interference multiplier(s) of a single state at fixed mu.

    Returns a float when the scenario has one primary receiver, else an
    array with one multiplier per primary.
    """
    if mu < 0.0:
        raise ValueError("mu must be >= 0")
    batch = BatchRealizations(
        direct_power=real.direct_power[None], cross_true=real.cross_true[None],
        cross_est=real.cross_est[None], cross_err=real.cross_err[None],
        streams=np.asarray([real.stream]))
    ws = _Workspace(cfg, batch)
    hint = np.zeros((1, cfg.num_primaries))
    *_, eta = _solve_states(ws, mu, hint)
    return float(eta[0, 0]) if cfg.num_primaries == 1 else eta[0]


def solve_dual(cfg: ScenarioConfig, realizations=None, *, num_states: int = None,
               max_iterations: int = 500, power_gap_tol: float = 1e-3,
               run_all_iterations: bool = False) -> SolveResult:
    """Maximize average spectral efficiency over a batch of fading states.

    ``realizations`` may be a BatchRealizations; alternatively pass
    ``num_states`` to draw streams 0..num_states-1 of the scenario seed.
    The outer loop stops once |avg power - P_t| <= power_gap_tol * P_t or
    the power constraint is slack at mu = 0; ``run_all_iterations`` forces
    the full iteration count (for convergence studies).  A loop that ends
    without meeting either condition raises ConvergenceError carrying the
    partial result.
    """
    if cfg.total_power_w <= 0.0:
        raise ValueError("solve_dual needs total_power_w > 0; a zero budget "
                         "allocates nothing")
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    if realizations is None:
        if num_states is None:
            raise ValueError("pass realizations or num_states")
        realizations = sample_realizations(cfg, range(num_states))
    ws = _Workspace(cfg, realizations)
    s = ws.count
    p_t = cfg.total_power_w

    mu, eta = _warm_start_mu(ws, 0.5 * power_gap_tol * p_t)
    trace = {"iter": [], "mu": [], "primal_ase": [], "dual_value": [],
             "power_gap": []}
    converged = False
    winner = p_sel = x_sel = interf = None
    iterations = 0

    for t in range(1, max_iterations + 1):
        winner, p_sel, x_sel, interf, eta = _solve_states(ws, mu, eta)
        iterations = t
        avg_power = float(np.mean(np.sum(p_sel, axis=1)))
        gap = avg_power - p_t
        primal = float(np.mean(np.sum(np.log1p(x_sel), axis=1))) / LN2
        dual = _dual_bound(ws, mu, eta)
        trace["iter"].append(t)
        trace["mu"].append(mu)
        trace["primal_ase"].append(primal)
        trace["dual_value"].append(dual)
        trace["power_gap"].append(gap)

        stop = abs(gap) <= power_gap_tol * p_t or (mu == 0.0 and gap <= 0.0)
        if stop and not run_all_iterations:
            converged = True
            break
        mu = max(mu + gap / (p_t * (10.0 + t)), 0.0)

    if run_all_iterations:
        gap = trace["power_gap"][-1]
        converged = abs(gap) <= power_gap_tol * p_t or \
            (trace["mu"][-1] == 0.0 and gap <= 0.0)

    dual_state = DualState(
        mu=trace["mu"][-1], eta=eta, iterations=iterations, converged=converged,
        trace={key: np.asarray(val) for key, val in trace.items()})

    bits = None
    if cfg.rate_mode == "discrete":
        bits = discretize_rate(1.0 + x_sel)
        state_rates = np.sum(bits, axis=1).astype(float)
    else:
        state_rates = np.sum(np.log1p(x_sel), axis=1) / LN2
    policies = PolicyBatch(num_users=cfg.num_users, user=winner, power=p_sel,
                           x=x_sel, bits=bits)
    result = SolveResult(
        cfg=cfg, policies=policies, dual=dual_state, state_rates=state_rates,
        ase=float(np.mean(state_rates)),
        ase_stderr=float(np.std(state_rates, ddof=1) / math.sqrt(s)) if s > 1 else 0.0,
        avg_power_w=float(np.mean(np.sum(p_sel, axis=1))),
        enforced_interference=interf, budgets_w=ws.budgets,
        reference_power_w=ws.p_ref, streams=ws.streams)

    if not converged and not run_all_iterations:
        raise ConvergenceError(
            "power gap %.3g W after %d iterations exceeds tolerance %.3g W"
            % (trace["power_gap"][-1], iterations, power_gap_tol * p_t),
            result=result)
    return result
