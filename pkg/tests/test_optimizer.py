"""Water-filling, assignment and dual-solve oracles."""

import numpy as np
import pytest

import ofdma_underlay.optimizer as optimizer_module
from ofdma_underlay.channel import sample_realization, sample_realizations
from ofdma_underlay.config import build_config
from ofdma_underlay.errors import ConvergenceError, ShapeError
from ofdma_underlay.interference import audit_deterministic, surrogate_budget
from ofdma_underlay.modulation import ALLOWED_BITS, LN2, ber_slope
from ofdma_underlay.optimizer import (
    AllocationPolicy,
    assign_subcarriers,
    inner_interference_multiplier,
    per_link_lagrangian,
    reference_cutoff,
    selection_metric,
    solve_dual,
    waterfill_power,
)
from ofdma_underlay.presets import imperfect_benchmark
from ofdma_underlay.sinr import sinr_distribution


def _cfg(**overrides):
    base = dict(num_users=2, num_primaries=1, num_subcarriers=8,
                total_power_w=8.0, interference_limit_w="2.0",
                ber_target=1e-3, bandwidth_hz=1e6, noise_psd_dbm_hz=-90.0,
                primary_interference_w=0.0, cross_mean_re=0.3, cross_var=0.2,
                csi_mode="perfect", constraint_mode="deterministic", rng_seed=5)
    base.update(overrides)
    return build_config(base)


def _link_arrays(cfg, batch, result):
    """Per-candidate (gamma, density, weight) grids at the solved reference power."""
    s, n, k = len(batch), cfg.num_users, cfg.num_subcarriers
    p_ref = result.reference_power_w
    gamma = batch.direct_power * (p_ref / cfg.total_noise_w)[:, None, None]
    density = np.empty((s, n, k))
    for idx_n in range(n):
        for idx_k in range(k):
            dist = sinr_distribution(cfg, idx_n, idx_k, 0)
            density[:, idx_n, idx_k] = dist.pdf(gamma[:, idx_n, idx_k])
    weights = batch.cross_true.real ** 2 + batch.cross_true.imag ** 2
    return gamma, density, weights[:, 0, :]


# ---------------------------------------------------------------------------
# scalar water-filling


def test_waterfill_pinned_value():
    # eta = 0, mu = 1/ln2, zeta*gamma = 2, P_ref = 1: water level 1, cutoff 0.5
    p = waterfill_power(1.0, 1.0, 1.0 / LN2, 0.0, 0.0, 2.0, 1.0)
    assert p == pytest.approx(0.5, abs=1e-12)
    expected = 1.0 / (LN2 * 0.5) - 2.0 / 4.0
    assert waterfill_power(1.0, 1.0, 0.5, 0.0, 0.0, 4.0, 2.0) == pytest.approx(expected, rel=1e-12)


def test_waterfill_vanishing_gamma():
    assert waterfill_power(0.0, 1.0, 0.3, 0.1, 0.5, 0.4, 1.0) == 0.0
    assert waterfill_power(1e-12, 1.0, 1.0 / LN2, 0.0, 0.0, 2.0, 1.0) == 0.0


def test_waterfill_degenerate_multipliers():
    with pytest.raises(ValueError, match="unbounded"):
        waterfill_power(1.0, 1.0, 0.0, 0.0, 0.0, 0.4, 1.0)
    # eta alone does not price power when the cross weight vanishes
    with pytest.raises(ValueError, match="unbounded"):
        waterfill_power(1.0, 1.0, 0.0, 1.0, 0.0, 0.4, 1.0)


def test_waterfill_domain():
    with pytest.raises(ValueError):
        waterfill_power(-1.0, 1.0, 0.3, 0.0, 0.0, 0.4, 1.0)
    with pytest.raises(ValueError):
        waterfill_power(1.0, 1.0, 0.3, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        waterfill_power(1.0, 1.0, 0.3, 0.0, 0.0, 0.4, 0.0)


def test_waterfill_maximizes_lagrangian_on_grid():
    # the stationary power beats a 1e4-point grid over [0, 10/mu] on 1e3 draws
    rng = np.random.default_rng(2026)
    for _ in range(1000):
        gamma = rng.uniform(0.01, 50.0)
        density = rng.uniform(0.01, 2.0)
        mu = rng.uniform(0.05, 2.0)
        eta = rng.uniform(0.0, 2.0) * rng.integers(0, 2)
        weight = rng.uniform(0.0, 3.0)
        slope = rng.uniform(0.1, 0.5)
        p_ref = rng.uniform(0.05, 2.0)
        p_star = waterfill_power(gamma, density, mu, eta, weight, slope, p_ref)
        l_star = per_link_lagrangian(gamma, density, p_star, mu, eta, weight,
                                     slope, p_ref)
        grid = np.linspace(0.0, 10.0 / mu, 10_000)
        x = slope * gamma * grid / p_ref
        l_grid = density * np.log2(1.0 + x) - mu * density * grid \
            - eta * weight * grid
        assert p_star <= 10.0 / mu
        assert l_grid.max() <= l_star + 1e-10 * max(1.0, abs(l_star))


# ---------------------------------------------------------------------------
# selection metric and assignment


def test_selection_metric_pinned_values():
    assert selection_metric(2.0, 1.3, 0.0, 0.4, 1.0) == 0.0
    value = selection_metric(1.0, 1.0, 1.0, 1.0, 1.0)     # x = 1, f = 1
    assert value == pytest.approx(1.72135, abs=5e-6)
    assert value == pytest.approx(1.0 / (2.0 * LN2) + 1.0, rel=1e-12)


def test_selection_metric_monotone_in_power():
    powers = np.geomspace(1e-4, 1e3, 200)
    values = [selection_metric(2.3, 0.7, p, 0.44, 1.0) for p in powers]
    assert np.all(np.diff(values) > 0.0)


def test_selection_metric_domain():
    with pytest.raises(ValueError):
        selection_metric(1.0, 1.0, -0.1, 0.4, 1.0)
    with pytest.raises(ValueError):
        selection_metric(1.0, 1.0, 1.0, 0.0, 1.0)


def test_assignment_tie_breaks_to_lowest_index():
    phi = assign_subcarriers(np.array([[0.2], [0.9], [0.9]]))
    assert phi[1, 0] == 1.0 and phi[0, 0] == 0.0 and phi[2, 0] == 0.0


def test_assignment_partition_and_argmax():
    rng = np.random.default_rng(3)
    metric = rng.uniform(size=(5, 12))
    phi = assign_subcarriers(metric)
    assert np.array_equal(np.unique(phi), np.array([0.0, 1.0]))
    assert np.all(phi.sum(axis=0) == 1.0)
    picked = (metric * phi).sum(axis=0)
    assert np.allclose(picked, metric.max(axis=0))
    single = assign_subcarriers(np.ones((1, 4)))
    assert np.all(single == 1.0)
    with pytest.raises(ShapeError):
        assign_subcarriers(np.ones(4))


# ---------------------------------------------------------------------------
# cutoff consistency and KKT stationarity on solved allocations


def test_cutoff_consistency_on_solved_states():
    cfg = _cfg()
    batch = sample_realizations(cfg, range(1000))
    result = solve_dual(cfg, batch)
    gamma, density, weights = _link_arrays(cfg, batch, result)
    slope = ber_slope(cfg.ber_target)
    mu = result.dual.mu
    checked = 0
    for s in range(len(batch)):
        eta = result.dual.eta[s, 0]
        p_ref = result.reference_power_w[s]
        for n in range(cfg.num_users):
            for k in range(cfg.num_subcarriers):
                g, f, w = gamma[s, n, k], density[s, n, k], weights[s, k]
                threshold = reference_cutoff(mu, eta, w, f, slope, p_ref)
                if abs(g - threshold) <= 1e-9 * max(g, threshold):
                    continue
                power = waterfill_power(g, f, mu, eta, w, slope, p_ref)
                assert (power > 0.0) == (g > threshold)
                checked += 1
    assert checked > 15_000


def test_kkt_perturbation_never_improves():
    cfg = _cfg()
    batch = sample_realizations(cfg, range(100))
    result = solve_dual(cfg, batch)
    gamma, density, weights = _link_arrays(cfg, batch, result)
    slope = ber_slope(cfg.ber_target)
    mu = result.dual.mu
    active = np.nonzero(result.policies.power > 0.0)
    rng = np.random.default_rng(11)
    picks = rng.choice(active[0].size, size=100, replace=False)
    for i in picks:
        s, k = active[0][i], active[1][i]
        n = result.policies.user[s, k]
        p_star = result.policies.power[s, k]
        args = (gamma[s, n, k], density[s, n, k], mu, result.dual.eta[s, 0],
                weights[s, k], slope, result.reference_power_w[s])
        base = per_link_lagrangian(args[0], args[1], p_star, *args[2:])
        for factor in (0.99, 1.01):
            bumped = per_link_lagrangian(args[0], args[1], factor * p_star,
                                         *args[2:])
            assert bumped <= base + 1e-10 * max(1.0, abs(base))


# ---------------------------------------------------------------------------
# inner interference multiplier


def _rebuild_allocation(cfg, real, mu, eta):
    """Evaluate the stationary allocation through the public scalar pieces."""
    n, k = cfg.num_users, cfg.num_subcarriers
    weights = real.cross_true.real ** 2 + real.cross_true.imag ** 2
    n_ref = weights.sum()
    p_ref = min(cfg.total_power_w / k, cfg.interference_limit_w[0] / n_ref)
    slope = ber_slope(cfg.ber_target)
    power = np.zeros((n, k))
    metric = np.zeros((n, k))
    for idx_n in range(n):
        for idx_k in range(k):
            g = real.direct_power[idx_n, idx_k] * p_ref / cfg.total_noise_w
            f = sinr_distribution(cfg, idx_n, idx_k, 0).pdf(g)
            w = weights[0, idx_k]
            power[idx_n, idx_k] = waterfill_power(g, float(f), mu, eta, w,
                                                  slope, p_ref)
            metric[idx_n, idx_k] = selection_metric(g, float(f),
                                                    power[idx_n, idx_k],
                                                    slope, p_ref)
    phi = assign_subcarriers(metric)
    x = slope * power / p_ref  # gamma folded into power via the rebuild above
    return AllocationPolicy(phi=phi, power=phi * power,
                            constellation=1.0 + phi * x)


def test_inner_multiplier_slack_budget():
    cfg = _cfg(interference_limit_w="1e9", total_power_w=0.8)
    real = sample_realization(cfg, 0)
    eta = inner_interference_multiplier(cfg, real, 0.3)
    assert isinstance(eta, float) and eta == 0.0


def test_inner_multiplier_tightens_to_budget():
    mu = 0.02
    cfg0 = _cfg(interference_limit_w="1e9", total_power_w=0.8)
    real = sample_realization(cfg0, 0)
    slack = audit_deterministic(_rebuild_allocation(cfg0, real, mu, 0.0),
                                real, cfg0)
    half = float(slack.interference_w[0]) / 2.0
    cfg = cfg0.with_updates(interference_limit_w=(half,))
    # keep the reference power on the P_t/K branch so the halved budget binds
    n_ref = float((real.cross_true.real ** 2 + real.cross_true.imag ** 2).sum())
    assert half > n_ref * cfg.total_power_w / cfg.num_subcarriers
    eta = inner_interference_multiplier(cfg, real, mu)
    assert eta > 0.0
    audited = audit_deterministic(_rebuild_allocation(cfg, real, mu, eta),
                                  real, cfg)
    assert audited.interference_w[0] == pytest.approx(half, rel=2e-6)


def test_inner_multiplier_tiny_budget():
    cfg = _cfg(interference_limit_w="1e-9", total_power_w=0.8)
    real = sample_realization(cfg, 0)
    eta = inner_interference_multiplier(cfg, real, 0.02)
    assert np.isfinite(eta) and eta > 0.0
    audited = audit_deterministic(_rebuild_allocation(cfg, real, 0.02, eta),
                                  real, cfg)
    assert audited.interference_w[0] <= 1e-9 * (1.0 + 1e-6)


def test_inner_multiplier_rejects_negative_mu():
    cfg = _cfg()
    real = sample_realization(cfg, 0)
    with pytest.raises(ValueError):
        inner_interference_multiplier(cfg, real, -0.1)


# ---------------------------------------------------------------------------
# dual solve


def test_single_channel_matches_grid_oracle():
    # I_th huge, N = 1, K = 1: plain average-power water-filling
    cfg = _cfg(num_users=1, num_subcarriers=1, interference_limit_w="1e12",
               total_power_w=2.0, rng_seed=11)
    batch = sample_realizations(cfg, range(2000))
    result = solve_dual(cfg, batch)
    assert result.dual.converged
    assert result.avg_power_w <= cfg.total_power_w * 1.001

    slope = ber_slope(cfg.ber_target)
    p_ref = cfg.total_power_w
    gamma = batch.direct_power[:, 0, 0] * p_ref / cfg.total_noise_w
    pcut = np.sort(p_ref / (slope * gamma))
    cum = np.cumsum(pcut)
    waters = np.geomspace(pcut[0] * 1e-3, pcut[-1] * 1e3, 100_000)
    idx = np.searchsorted(pcut, waters)
    used = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    avg_power = (waters * idx - used) / len(batch)
    best = waters[np.argmin(np.abs(avg_power - cfg.total_power_w))]
    oracle = np.mean(np.log2(np.maximum(best / pcut, 1.0)))
    assert result.ase == pytest.approx(oracle, rel=0.01)


def test_infinite_power_budget_slackness():
    # P_t -> inf: power multiplier at zero, interference budgets tight
    cfg = _cfg(total_power_w=1e6, interference_limit_w="0.5")
    result = solve_dual(cfg, num_states=300)
    assert result.dual.converged
    assert result.dual.mu == 0.0
    transmitting = result.policies.power.sum(axis=1) > 0.0
    gap = np.abs(result.enforced_interference[:, 0] - result.budgets_w[0])
    tight = gap <= 1e-5 * result.budgets_w[0]
    assert tight[transmitting].mean() >= 0.99


def test_ase_monotone_in_interference_budget():
    values = (0.25, 0.5, 1.0, 2.0, 4.0, 1e3)
    cfgs = [_cfg(interference_limit_w=str(v)) for v in values]
    batch = sample_realizations(cfgs[0], range(200))
    ases = [solve_dual(c, batch).ase for c in cfgs]
    assert np.all(np.diff(ases) >= -1e-9 * max(ases))


def test_ase_monotone_in_power_budget():
    cfgs = [_cfg(total_power_w=v) for v in (2.0, 4.0, 8.0)]
    batch = sample_realizations(cfgs[0], range(200))
    ases = [solve_dual(c, batch).ase for c in cfgs]
    assert np.all(np.diff(ases) >= -1e-9 * max(ases))


def test_discrete_rate_floors_continuous_solve():
    cfg = _cfg(noise_psd_dbm_hz=-65.0, total_power_w=4.0)
    batch = sample_realizations(cfg, range(150))
    cont = solve_dual(cfg, batch)
    disc = solve_dual(cfg.with_updates(rate_mode="discrete"), batch)
    assert disc.ase <= cont.ase + 1e-12
    assert set(np.unique(disc.policies.bits)).issubset(set(ALLOWED_BITS))
    assert np.all(2.0 ** disc.policies.bits <= 1.0 + disc.policies.x + 1e-9)
    assert np.allclose(disc.state_rates, disc.policies.bits.sum(axis=1))
    assert disc.ase == pytest.approx(np.mean(disc.state_rates))
    assert cont.policies.bits is None


def test_solve_is_deterministic():
    cfg = _cfg()
    first = solve_dual(cfg, num_states=50)
    second = solve_dual(cfg, num_states=50)
    explicit = solve_dual(cfg, sample_realizations(cfg, range(50)))
    assert first.ase == second.ase == explicit.ase
    assert np.array_equal(first.policies.user, explicit.policies.user)
    assert np.array_equal(first.dual.trace["mu"], second.dual.trace["mu"])
    assert np.array_equal(first.streams, np.arange(50))


def test_solve_validation():
    cfg = _cfg()
    with pytest.raises(ValueError, match="total_power_w"):
        solve_dual(_cfg(total_power_w=0.0), num_states=10)
    with pytest.raises(ValueError, match="realizations or num_states"):
        solve_dual(cfg)
    with pytest.raises(ValueError, match="max_iterations"):
        solve_dual(cfg, num_states=10, max_iterations=0)


def test_trace_rows_and_weak_duality():
    cfg = _cfg()
    result = solve_dual(cfg, num_states=80, max_iterations=12,
                        run_all_iterations=True)
    trace = result.dual.trace
    for key in ("iter", "mu", "primal_ase", "dual_value", "power_gap"):
        assert len(trace[key]) == 12
    assert np.array_equal(trace["iter"], np.arange(1, 13))
    assert result.dual.iterations == 12
    scale = np.abs(trace["dual_value"]).max()
    assert np.all(trace["dual_value"] >= trace["primal_ase"] - 1e-9 * scale)


def test_probabilistic_budget_is_collision_surrogate():
    cfg = imperfect_benchmark()
    result = solve_dual(cfg, num_states=30)
    expected = surrogate_budget(cfg.interference_limit_w[0],
                                cfg.collision_limit[0], cfg.num_subcarriers)
    assert result.budgets_w[0] == pytest.approx(expected, rel=1e-12)
    assert np.all(result.enforced_interference <= result.budgets_w * (1.0 + 1e-6))
    assert result.ase > 0.0


def test_nonconvergence_attaches_partial_result(monkeypatch):
    cfg = _cfg(num_subcarriers=4, total_power_w=2.0, rng_seed=3,
               interference_limit_w="1e9")
    monkeypatch.setattr(
        optimizer_module, "_warm_start_mu",
        lambda ws, tol: (50.0, np.zeros((ws.count, ws.cfg.num_primaries))))
    with pytest.raises(ConvergenceError) as excinfo:
        solve_dual(cfg, num_states=6, max_iterations=4)
    result = excinfo.value.result
    assert result is not None and not result.dual.converged
    trace = result.dual.trace
    assert len(trace["mu"]) == 4
    assert np.all(np.diff(trace["mu"]) < 0.0)
    p_t = cfg.total_power_w
    for t in range(1, 4):
        step = 1.0 / (p_t * (10.0 + t))
        predicted = max(trace["mu"][t - 1] + step * trace["power_gap"][t - 1], 0.0)
        assert trace["mu"][t] == pytest.approx(predicted, rel=1e-12)
    assert np.isfinite(result.ase)


def test_policy_batch_state_densifies_one_state():
    cfg = _cfg()
    result = solve_dual(cfg, num_states=20)
    policy = result.policies.state(0)
    assert np.array_equal(np.unique(policy.phi), np.array([0.0, 1.0]))
    assert np.all(policy.phi.sum(axis=0) == 1.0)
    assert np.all((policy.power > 0.0) <= (policy.phi == 1.0))
    cols = np.arange(cfg.num_subcarriers)
    winners = result.policies.user[0]
    assert np.array_equal(policy.power[winners, cols], result.policies.power[0])
    assert np.allclose(policy.constellation[winners, cols],
                       1.0 + result.policies.x[0])
    losers = policy.phi == 0.0
    assert np.all(policy.power[losers] == 0.0)
    assert np.all(policy.constellation[losers] == 1.0)
