"""Interference accounting at the primary receivers.

Deterministic mode checks the realized aggregate
``sum_{n,k} phi P |H_sp|^2`` against each primary's limit.  Probabilistic
mode works with the posterior of the cross links given their estimates:
normalizing each coefficient by the posterior std gives unit-variance
noncentral terms |Xi_k|^2 with noncentrality ``mu_xi = |mean|^2 / var``,
so the received interference is a positively weighted sum of noncentral
chi-squares.  That sum is approximated by a single scaled noncentral
chi-square via first-moment matching of the weights, its tail by a
central chi-square with a stretched threshold, and the chance constraint
``P(interference > I) <= eps`` is replaced by the linear surrogate

    sum_k alpha_k * P_k <= K I / ((K!)^(1/K) |ln(1 - (1-eps)^(1/K))|)

with certainty-equivalent weights alpha_k = var * (2 + mu_xi_k).  The
right-hand side, the collision budget, is what the allocator enforces
per state; Monte Carlo resampling from the posterior validates it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .channel import ChannelRealization, PosteriorCrossStats
from .config import ScenarioConfig
from .errors import ShapeError
from .sinr import gaussian_sum_params

__all__ = [
    "InterferenceAudit",
    "CollisionAudit",
    "audit_deterministic",
    "xi_mean",
    "xi_means",
    "alpha_weights",
    "posterior_aggregate",
    "posterior_aggregate_params",
    "composite_chisq",
    "central_tail_approx",
    "surrogate_budget",
    "audit_probabilistic",
    "deterministic_audit_csv",
    "collision_audit_csv",
]

_AUDIT_TAG = 0xA0D17


@dataclass(frozen=True)
class InterferenceAudit:
    """Realized interference against each primary's limit."""

    interference_w: np.ndarray
    limit_w: np.ndarray
    violated: np.ndarray


@dataclass(frozen=True)
class CollisionAudit:
    """Monte Carlo exceedance estimate per primary."""

    collision_prob: np.ndarray
    stderr: np.ndarray
    limit_w: np.ndarray
    epsilon: np.ndarray
    samples: int


def audit_deterministic(alloc, real: ChannelRealization,
                        cfg: ScenarioConfig) -> InterferenceAudit:
    """Recompute sum_{n,k} phi P |H_sp|^2 for every primary receiver."""
    power = np.sum(alloc.phi * alloc.power, axis=0)        # (K,) assigned power
    gains = real.cross_true.real ** 2 + real.cross_true.imag ** 2
    if gains.shape[1] != power.shape[0]:
        raise ShapeError("allocation and realization disagree on num_subcarriers")
    interference = gains @ power
    limits = np.asarray(cfg.interference_limit_w)
    return InterferenceAudit(interference_w=interference, limit_w=limits,
                             violated=interference > limits)


def xi_mean(post: PosteriorCrossStats, m: int, k: int) -> float:
    """Noncentrality |posterior mean|^2 / posterior variance of one link."""
    if post.variance <= 0.0:
        raise ValueError("posterior variance is zero: noncentrality undefined")
    return float(abs(post.mean[m, k]) ** 2 / post.variance)


def xi_means(post: PosteriorCrossStats) -> np.ndarray:
    """All noncentralities at once, shape (M, K)."""
    if post.variance <= 0.0:
        raise ValueError("posterior variance is zero: noncentrality undefined")
    mean = post.mean
    return (mean.real ** 2 + mean.imag ** 2) / post.variance


def alpha_weights(post: PosteriorCrossStats) -> np.ndarray:
    """Certainty-equivalent interference weights var*(2 + mu_xi), shape (M, K)."""
    return post.variance * (2.0 + xi_means(post))


def posterior_aggregate(post: PosteriorCrossStats) -> np.ndarray:
    """Posterior mean of the aggregate cross gain per primary (sums alpha)."""
    return np.sum(alpha_weights(post), axis=1)


def posterior_aggregate_params(cfg: ScenarioConfig):
    """Normal moments of the posterior aggregate gain before estimates arrive.

    The posterior aggregate is an affine map of sum_k |Hhat_k|^2, so its
    law across estimate draws follows from the Gaussian sum approximation
    applied to the estimates.
    """
    mu_hat, var_hat = gaussian_sum_params(cfg.cross_mean, cfg.estimate_var,
                                          cfg.num_subcarriers)
    scale = (1.0 + cfg.correlation ** 2) ** 2
    offset = 2.0 * cfg.num_subcarriers * cfg.posterior_var
    return scale * mu_hat + offset, scale * scale * var_hat


def composite_chisq(beta, mu_xi):
    """Single-chi-square surrogate for sum_k beta_k |Xi_k|^2.

    Returns (delta, dof, weight): noncentrality, degrees of freedom and
    the common weight matching the first moment of the weighted sum.
    """
    beta = np.asarray(beta, dtype=float)
    mu_xi = np.asarray(mu_xi, dtype=float)
    if beta.shape != mu_xi.shape or beta.ndim != 1:
        raise ShapeError("beta and mu_xi must be 1-d arrays of equal length")
    if np.any(beta < 0.0) or np.any(mu_xi < 0.0):
        raise ValueError("beta and mu_xi must be >= 0")
    k = beta.size
    delta = float(np.sum(mu_xi))
    dof = 2 * k
    weight = float(np.sum(beta * (2.0 + mu_xi)) / (dof + delta))
    return delta, dof, weight


def central_tail_approx(i_th: float, weight: float, delta: float, dof: int) -> float:
    """P(weight * chisq_dof(delta) > i_th), central approximation.

    Scales the threshold by the mean inflation 1 + delta/dof and evaluates
    the central chi-square tail through the regularized upper incomplete
    gamma function.
    """
    if i_th <= 0.0:
        raise ValueError("threshold must be positive")
    if delta < 0.0 or dof < 1:
        raise ValueError("delta must be >= 0 and dof >= 1")
    if weight <= 0.0:
        raise ValueError("weight must be positive")
    threshold = (i_th / weight) / (1.0 + delta / dof)
    return float(special.gammaincc(dof / 2.0, threshold / 2.0))


def surrogate_budget(i_th: float, eps: float, k: int) -> float:
    """Deterministic budget whose satisfaction keeps exceedance below eps.

    Computed as K * i_th / ((K!)^(1/K) * |ln(1 - (1-eps)^(1/K))|); the log
    argument is evaluated through expm1/log1p so small eps at large K does
    not lose precision.
    """
    if i_th <= 0.0:
        raise ValueError("interference limit must be positive")
    if not 0.0 < eps < 1.0:
        raise ValueError("exceedance probability must lie in (0, 1)")
    if k < 1:
        raise ValueError("need at least one subcarrier")
    fact_root = math.exp(math.lgamma(k + 1.0) / k)
    tail = -math.expm1(math.log1p(-eps) / k)       # 1 - (1-eps)^(1/K)
    return k * i_th / (fact_root * abs(math.log(tail)))


def audit_probabilistic(alloc, post: PosteriorCrossStats, cfg: ScenarioConfig,
                        samples: int = 100_000, seed: int | None = None) -> CollisionAudit:
    """Monte Carlo exceedance probability of an allocation under the posterior.

    Redraws the true cross links from the posterior ``samples`` times,
    recomputes the received interference, and returns the fraction above
    each primary's limit together with its binomial standard error.
    """
    if samples < 10_000:
        raise ValueError("need >= 1e4 samples for a usable exceedance estimate")
    power = np.sum(alloc.phi * alloc.power, axis=0)        # (K,)
    m_count, k_count = post.mean.shape
    if power.shape[0] != k_count:
        raise ShapeError("allocation and posterior disagree on num_subcarriers")
    if seed is None:
        seed = cfg.rng_seed
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), _AUDIT_TAG)))
    std = math.sqrt(post.variance)
    limits = np.asarray(cfg.interference_limit_w)

    hits = np.zeros(m_count)
    chunk = 1 << 14
    done = 0
    while done < samples:
        size = min(chunk, samples - done)
        re = rng.standard_normal((size, m_count, k_count))
        im = rng.standard_normal((size, m_count, k_count))
        re = post.mean.real + std * re
        im = post.mean.imag + std * im
        interference = (re * re + im * im) @ power          # (size, M)
        hits += np.sum(interference > limits, axis=0)
        done += size
    prob = hits / samples
    stderr = np.sqrt(prob * (1.0 - prob) / samples)
    eps = np.asarray(cfg.collision_limit, dtype=float)
    return CollisionAudit(collision_prob=prob, stderr=stderr,
                          limit_w=limits, epsilon=eps, samples=samples)


def deterministic_audit_csv(audit: InterferenceAudit) -> str:
    """Render a deterministic audit as CSV, one row per primary."""
    lines = ["prx,interference_w,limit_w,violated"]
    for m in range(audit.interference_w.shape[0]):
        lines.append("%d,%.12g,%.12g,%d" % (
            m, audit.interference_w[m], audit.limit_w[m], bool(audit.violated[m])))
    return "\n".join(lines) + "\n"


def collision_audit_csv(audit: CollisionAudit) -> str:
    """Render a Monte Carlo collision audit as CSV, one row per primary."""
    lines = ["prx,collision_prob,stderr,epsilon"]
    for m in range(audit.collision_prob.shape[0]):
        lines.append("%d,%.12g,%.12g,%.12g" % (
            m, audit.collision_prob[m], audit.stderr[m], audit.epsilon[m]))
    return "\n".join(lines) + "\n"
