"""Non-orthogonal beam design: three WMMSE-type solvers and three baselines.

The solvers maximize the orthogonal-beam bound on the weighted sum rate by
block-coordinate descent on the weighted-MSE surrogate

    sum_{k,c} alpha_k (beta_kc * MSE_kc - ln beta_kc)

alternating the MMSE receivers ``v``, the MSE weights ``beta = 1 / MSE`` and
the powers.  With ``v`` and ``beta`` fixed the power subproblem separates
per variable into ``A x - 2 B sqrt(x)`` terms, whose minimizer under a
multiplier ``mu`` is ``x = (B / (A + mu))**2``; the multiplier is driven to
the budget by projected subgradient steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusteredScenario
from .rates import BeamDesign, RateReport, _report, draw_fading_batch, _CHUNK

__all__ = [
    "SolverConfig",
    "SolverTrace",
    "solve_full_space",
    "select_beams",
    "solve_partial_space",
    "solve_single_beam",
    "baseline_mf",
    "baseline_sdma",
    "baseline_tdma",
    "mf_beam_index",
    "ALGORITHMS",
    "design_for",
]

_TINY = 1e-300


@dataclass(frozen=True)
class SolverConfig:
    max_outer_iters: int = 50
    max_inner_iters: int = 500
    outer_tol: float = 1e-4
    multiplier_tol: float | None = None  # defaults to 1e-6 * P_max
    step_mu: float = 0.01
    step_mu2: float = 0.01
    step_omega: float = 0.01
    initial_multiplier: float = 1.0

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.multiplier_tol is not None and not self.multiplier_tol > 0:
            raise ValueError("multiplier_tol must be positive")
        if min(self.step_mu, self.step_mu2, self.step_omega) <= 0:
            raise ValueError("step sizes must be positive")
        if self.initial_multiplier < 0:
            raise ValueError("initial_multiplier must be nonnegative")

    def budget_tol(self, p_max: float) -> float:
        return self.multiplier_tol if self.multiplier_tol is not None else 1e-6 * p_max


@dataclass
class SolverTrace:
    """Per outer iteration: surrogate value, total power and update count.

    ``ops_per_iter`` counts scalar power variables refreshed per inner sweep.
    """

    surrogate_per_outer_iter: list = field(default_factory=list)
    budget_usage_per_iter: list = field(default_factory=list)
    ops_per_iter: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    outer_iters_used: int = 0
    converged: bool = False
    extras: dict = field(default_factory=dict)


def _multiplier_search(power_of, target, mu0, step, tol, max_iter, lower=0.0, equality=False):
    """Drive a vector of multipliers until each group meets its target.

    ``power_of(mu)`` returns ``(x, totals)`` with ``totals`` decreasing in
    ``mu``.  Each group takes steps ``mu += step * (total - target)``,
    projected onto ``mu >= lower`` (strictly above ``lower`` for equality
    constraints).  The step is halved whenever the residual changes sign and
    doubled after two same-sign steps; steps leaving the bracket spanned by
    the residual signs seen so far fall back to its midpoint.  Inequality
    groups stop at ``mu = lower`` when the budget is slack there.

    Returns ``(x, mu, iterations, converged)``.
    """
    mu = np.array(mu0, dtype=float)
    target = np.broadcast_to(np.asarray(target, dtype=float), mu.shape)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), mu.shape)
    step = np.full(mu.shape, float(step))
    lo = lower.copy()                     # largest mu seen with too much power
    hi = np.full(mu.shape, np.inf)        # smallest mu seen with too little
    prev = np.zeros(mu.shape)
    streak = np.zeros(mu.shape, dtype=int)
    tried_lower = np.zeros(mu.shape, dtype=bool)
    if equality:
        mu = np.maximum(mu, lower + np.maximum(np.abs(lower), 1.0) * 1e-9)
    else:
        mu = np.maximum(mu, lower)
    x = None
    for it in range(1, max_iter + 1):
        x, totals = power_of(mu)
        r = totals - target
        done = np.abs(r) <= tol
        if not equality:
            tried_lower |= mu <= lower
            done |= (mu <= lower) & (r <= 0)
        if np.all(done):
            return x, mu, it, True
        sign = np.sign(r)
        flip = (prev != 0) & (sign != prev)
        streak = np.where(flip | (prev == 0), 1, streak + 1)
        step = np.where(flip, step / 2, np.where(streak >= 2, step * 2, step))
        prev = sign
        lo = np.where(r > 0, np.maximum(lo, mu), lo)
        hi = np.where(r < 0, np.minimum(hi, mu), hi)
        cand = mu + step * r
        proj = np.zeros(mu.shape, dtype=bool)
        if not equality:
            proj = (cand <= lower) & ~tried_lower
            cand = np.where(proj, lower, cand)
        outside = ~proj & ((cand <= lo) | (cand >= hi))
        mid = np.where(np.isfinite(hi), (lo + hi) / 2, np.maximum(2 * mu, mu + 1))
        cand = np.where(outside, mid, cand)
        mu = np.where(done, mu, cand)
    x, _ = power_of(mu)
    return x, mu, max_iter, False


def _onto_budget(x, mu, p_max):
    """Rescale onto the budget when the multiplier is active.

    The search stops within ``multiplier_tol`` of the budget; at the
    constrained optimum the gradient is normal to the budget plane, so the
    rescaling changes the objective only to second order.
    """
    total = x.sum()
    if mu > 0 and total > 0:
        return x * (p_max / total)
    return x


def _mmse(eta, p, interference):
    noise = eta * interference + 1
    phi = noise + eta * p
    v = np.sqrt(eta * p) / phi
    mse = noise / phi
    return v, mse


def _surrogate(scenario, mse):
    # value at beta = 1/MSE, the exact minimizer of beta*MSE - ln(beta)
    return float(np.sum(scenario.weights[:, None] * (1 + np.log(mse))))


def _rel_change(new, old):
    scale = max(np.max(np.abs(old)), np.max(np.abs(new)), _TINY)
    return float(np.max(np.abs(new - old)) / scale)


def _multibeam_stats(scenario, p):
    """Receivers and MSE for per-UE per-beam powers ``p`` (inactive entries 0)."""
    eta = scenario.eta
    inter = p.sum(axis=0)[None, :] - scenario.cluster_total(p)[scenario.cluster_of]
    lower = scenario.cluster_cumsum(p) - p
    return _mmse(eta, p, inter + lower)


def _wmmse_multibeam(scenario: ClusteredScenario, active: np.ndarray, p0: np.ndarray, p_max: float,
                     cfg: SolverConfig, step: float):
    """Shared power loop of the full-space and partial-space solvers."""
    eta = scenario.eta
    alpha = scenario.weights[:, None]
    p = np.where(active, p0, 0.0)
    tol = cfg.budget_tol(p_max)
    trace = SolverTrace()
    n_vars = int(np.count_nonzero(active))
    for t in range(cfg.max_outer_iters):
        v, mse = _multibeam_stats(scenario, p)
        beta = 1 / mse
        g = alpha * beta * v ** 2 * eta
        # every (j, i, c) whose received-power term contains p_kc: all other
        # clusters on beam c, plus positions >= n of the own cluster
        a = g.sum(axis=0)[None, :] - scenario.cluster_total(g)[scenario.cluster_of] + scenario.cluster_tail_sum(g)
        b = np.where(active, alpha * beta * v * np.sqrt(eta), 0.0)

        def power_of(mu, a=a, b=b):
            x = np.where(b > 0, (b / np.maximum(a + mu[0], _TINY)) ** 2, 0.0)
            return x, np.array([x.sum()])

        with np.errstate(over="ignore"):
            p_new, mu, inner, _ = _multiplier_search(power_of, p_max, [cfg.initial_multiplier], step, tol,
                                                     cfg.max_inner_iters)
        p_new = _onto_budget(p_new, mu[0], p_max)
        change = _rel_change(p_new, p)
        p = p_new
        _, mse = _multibeam_stats(scenario, p)
        trace.surrogate_per_outer_iter.append(_surrogate(scenario, mse))
        trace.budget_usage_per_iter.append(float(p.sum()))
        trace.ops_per_iter.append(n_vars)
        trace.inner_iters.append(inner)
        trace.outer_iters_used = t + 1
        if change < cfg.outer_tol:
            trace.converged = True
            break
    return p, trace


def solve_full_space(scenario: ClusteredScenario, config: SolverConfig | None = None, p_max: float = 10.0):
    """Every UE may use every base beam; only the powers are optimized."""
    cfg = config or SolverConfig()
    k, n_t = scenario.eta.shape
    active = np.ones((k, n_t), dtype=bool)
    p0 = np.full((k, n_t), p_max / (k * n_t))
    p, trace = _wmmse_multibeam(scenario, active, p0, p_max, cfg, cfg.step_mu)
    return BeamDesign(active.astype(np.int8), p, p_max), trace


def _initial_partial_powers(scenario, p_max):
    n_t = scenario.num_beams
    return np.repeat((p_max / (scenario.cluster_sizes * n_t))[:, None], scenario.cluster_sizes, axis=0) \
        * np.ones((1, n_t))


def select_beams(current_powers, scenario: ClusteredScenario) -> np.ndarray:
    """Give each base beam to the cluster with the largest weighted rate on it.

    Returns the 0-based cluster index per beam; ties go to the lowest index.
    """
    p = np.asarray(current_powers, dtype=float)
    eta = scenario.eta
    lower = (scenario.cluster_cumsum(p) - p) * eta
    rate = scenario.weights[:, None] * np.log2(1 + p * eta / (lower + 1))
    return np.argmax(scenario.cluster_total(rate), axis=0)


def _selection_matrix(scenario, owner):
    return (scenario.cluster_of[:, None] == owner[None, :]).astype(np.int8)


def solve_partial_space(scenario: ClusteredScenario, config: SolverConfig | None = None, p_max: float = 10.0):
    """Base beams are split exclusively among clusters, then powers optimized."""
    cfg = config or SolverConfig()
    p0 = _initial_partial_powers(scenario, p_max)
    selection = _selection_matrix(scenario, select_beams(p0, scenario))
    p, trace = _wmmse_multibeam(scenario, selection.astype(bool), p0, p_max, cfg, cfg.step_mu)
    return BeamDesign(selection, p, p_max), trace


def solve_single_beam(scenario: ClusteredScenario, config: SolverConfig | None = None, p_max: float = 10.0):
    """One shared beam per cluster: beam powers ``p_c`` and intra-cluster shares ``iota``.

    Every UE's beam is ``sqrt(iota_k)`` times its cluster beam.  Each outer
    iteration refreshes the receivers and MSE weights, then updates ``p_c``
    (total-power multiplier) and ``iota`` (one sum-to-one multiplier per
    cluster) as two exact blocks.
    """
    cfg = config or SolverConfig()
    k, n_t = scenario.eta.shape
    alpha = scenario.weights[:, None]
    tol = cfg.budget_tol(p_max)
    sel = _selection_matrix(scenario, select_beams(_initial_partial_powers(scenario, p_max), scenario))
    eta = scenario.eta * sel
    sizes = scenario.cluster_sizes
    pc = np.full(n_t, p_max / n_t)
    iota = np.repeat(1.0 / sizes, sizes)
    multi = sizes[scenario.cluster_of] > 1
    trace = SolverTrace()
    n_vars = n_t + k

    def stats(pc, iota):
        p = iota[:, None] * pc[None, :] * sel
        return _mmse(eta, p, scenario.cluster_cumsum(p) - p)

    for t in range(cfg.max_outer_iters):
        v, mse = stats(pc, iota)
        beta = 1 / mse
        abv2e = alpha * beta * v ** 2 * eta
        abve = alpha * beta * v * np.sqrt(eta)
        # beam powers given shares
        a_c = np.sum(abv2e * scenario.cluster_cumsum(np.broadcast_to(iota[:, None], eta.shape)), axis=0)
        b_c = np.sum(abve * np.sqrt(iota)[:, None], axis=0)

        def pc_of(mu, a_c=a_c, b_c=b_c):
            x = np.where(b_c > 0, (b_c / np.maximum(a_c + mu[0], _TINY)) ** 2, 0.0)
            return x, np.array([x.sum()])

        with np.errstate(over="ignore"):
            pc_new, mu, inner, _ = _multiplier_search(pc_of, p_max, [cfg.initial_multiplier], cfg.step_mu2,
                                                      tol, cfg.max_inner_iters)
        pc_new = _onto_budget(pc_new, mu[0], p_max)
        # shares given the new beam powers
        a_k = scenario.cluster_tail_sum(abv2e * pc_new[None, :]).sum(axis=1)
        b_k = (abve * np.sqrt(pc_new)[None, :]).sum(axis=1)
        iota_new = _solve_shares(scenario, a_k, b_k, iota, multi, cfg)
        pc_old, iota_old = pc, iota
        pc, iota = pc_new, iota_new
        change = max(_rel_change(pc, pc_old), _rel_change(iota, iota_old))
        _, mse = stats(pc, iota)
        trace.surrogate_per_outer_iter.append(_surrogate(scenario, mse))
        trace.budget_usage_per_iter.append(float(pc.sum()))
        trace.ops_per_iter.append(n_vars)
        trace.inner_iters.append(inner)
        trace.outer_iters_used = t + 1
        if change < cfg.outer_tol:
            trace.converged = True
            break
    trace.extras = {"beam_powers": pc, "shares": iota}
    return BeamDesign(sel, iota[:, None] * pc[None, :] * sel, p_max), trace


def _solve_shares(scenario, a_k, b_k, iota, multi, cfg):
    """Minimize sum_k (a_k x_k - 2 b_k sqrt(x_k)) with sum x = 1 per cluster."""
    out = iota.copy()
    sizes = scenario.cluster_sizes
    out[~multi] = 1.0
    clusters = np.flatnonzero(sizes > 1)
    if clusters.size == 0:
        return out
    rows = np.concatenate([np.arange(scenario.starts[m], scenario.starts[m + 1]) for m in clusters])
    group = np.repeat(np.arange(clusters.size), sizes[clusters])
    a, b = a_k[rows], b_k[rows]
    live = np.zeros(clusters.size, dtype=bool)
    np.logical_or.at(live, group, b > 0)
    # multiplier must keep a + omega > 0 for every UE with signal
    lower = np.full(clusters.size, np.inf)
    np.minimum.at(lower, group, np.where(b > 0, a, np.inf))
    lower = np.where(live, -lower, 0.0)

    if np.any(live):
        idx = np.flatnonzero(live)
        sel = np.isin(group, idx)
        sub_group = np.searchsorted(idx, group[sel])
        a_s, b_s = a[sel], b[sel]

        def sub_shares(omega):
            x = np.where(b_s > 0, (b_s / np.maximum(a_s + omega[sub_group], _TINY)) ** 2, 0.0)
            return x, np.bincount(sub_group, weights=x, minlength=idx.size)

        with np.errstate(over="ignore"):
            x, _, _, _ = _multiplier_search(sub_shares, 1.0, np.full(idx.size, cfg.initial_multiplier),
                                            cfg.step_omega, 1e-12, 50 * cfg.max_inner_iters,
                                            lower=lower[idx], equality=True)
        # land exactly on sum-to-one; a second-order change in the objective
        x = x / np.bincount(sub_group, weights=x, minlength=idx.size)[sub_group]
        out[rows[sel]] = x
    return out


# --- baselines -------------------------------------------------------------

def mf_beam_index(sector: int, num_sectors: int, num_beams: int) -> int:
    """0-based base beam serving a 1-based sector (identity when the grids match)."""
    return int(np.ceil(sector * num_beams / num_sectors)) - 1


def baseline_mf(scenario: ClusteredScenario, p_max: float) -> BeamDesign:
    """Each cluster gets its sector's base beam; equal power per cluster, then per UE."""
    k, n_t = scenario.eta.shape
    m = scenario.num_clusters
    sel = np.zeros((k, n_t), dtype=np.int8)
    for c, sector in enumerate(scenario.sectors):
        sel[scenario.cluster_rows(c), mf_beam_index(sector, scenario.num_sectors, n_t)] = 1
    share = p_max / (m * scenario.cluster_sizes[scenario.cluster_of])
    return BeamDesign(sel, sel * share[:, None], p_max)


def _best_beams(scenario):
    return np.argmax(scenario.eta, axis=1)


def baseline_sdma(scenario: ClusteredScenario, p_max: float) -> BeamDesign:
    """Best base beam per UE, equal power, no SIC."""
    k, n_t = scenario.eta.shape
    sel = np.zeros((k, n_t), dtype=np.int8)
    sel[np.arange(k), _best_beams(scenario)] = 1
    return BeamDesign(sel, sel * (p_max / k), p_max, sic=False)


def baseline_tdma(scenario: ClusteredScenario, p_max: float, num_realizations: int = 1000,
                  seed: int = 0) -> RateReport:
    """Each UE alone in a 1/K time share with full power on its best beam."""
    if num_realizations < 1:
        raise ValueError("num_realizations must be >= 1")
    k, n_t = scenario.eta.shape
    best = _best_beams(scenario)
    gain = scenario.eta[np.arange(k), best]
    s1 = np.zeros(k)
    s2 = np.zeros(k)
    ws1 = ws2 = 0.0
    for start in range(0, num_realizations, _CHUNK):
        stop = min(start + _CHUNK, num_realizations)
        hbar = draw_fading_batch(seed, start, stop, (k, n_t))[:, np.arange(k), best]
        rates = np.log2(1 + p_max * gain * np.abs(hbar) ** 2) / k
        s1 += rates.sum(axis=0)
        s2 += (rates ** 2).sum(axis=0)
        wsr = rates @ scenario.weights
        ws1 += wsr.sum()
        ws2 += (wsr ** 2).sum()
    ub = float(np.dot(scenario.weights, np.log2(1 + p_max * gain)) / k)
    return _report(scenario, s1, s2, ws1, ws2, num_realizations, seed, ub)


ALGORITHMS = ("alg1", "alg2", "alg3", "mf", "sdma", "tdma")


def design_for(algorithm: str, scenario: ClusteredScenario, p_max: float, config: SolverConfig | None = None):
    """Return ``(design, trace)`` for a named algorithm; baselines have no trace.

    TDMA has no simultaneous-transmission design and is rejected here.
    """
    if algorithm == "alg1":
        return solve_full_space(scenario, config, p_max)
    if algorithm == "alg2":
        return solve_partial_space(scenario, config, p_max)
    if algorithm == "alg3":
        return solve_single_beam(scenario, config, p_max)
    if algorithm == "mf":
        return baseline_mf(scenario, p_max), None
    if algorithm == "sdma":
        return baseline_sdma(scenario, p_max), None
    raise ValueError(f"unknown or non-design algorithm {algorithm!r}")
