"""Stage sizing under a pipeline yield constraint.

Inner sizer
-----------
For one stage, minimise ``sum(a_g x_g)`` subject to
``mu + k sigma <= budget`` and ``L <= x <= U``.  With gate delays
``m_g = p_g + q_g / x_g`` the constraint is convex in ``x``, so the optimum
is the KKT point ``x_g = clip(sqrt(lam * w_g * q_g / a_g), L_g, U_g)`` where
``w_g = d(mu + k sigma)/d m_g``.  The multiplier is found by root bracketing
and ``w`` by fixed-point iteration.  The same family of points, indexed by
``lam``, is the stage's optimal area/delay curve, which the area-neutral
transfers of ``unbalance_explore`` move along.

Pipeline level
--------------
``global_optimize`` sizes one stage at a time in ascending order of
``|dA/dD|`` with a per-stage constraint at the full target yield, refolds
the pipeline after each stage and moves the shared working budget by the
pipeline slack ``T - (mu_T + Phi^-1(Y) sigma_T)``.  In ``min-area`` mode it
then trades budget between stages (tighten a cheap stage, relax an
expensive one) while the total area keeps falling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ._validation import DomainError
from .gaussian import GaussianMoments, max_reduce
from .variation import (
    PipelineModel,
    StageModel,
    VariationSpec,
    _correlation_from,
    _stage_stats,
    stage_correlation_matrix,
    stage_distribution,
)
from .yield_analysis import (
    YieldQuery,
    _stringent_quantile,
    pipeline_distribution,
    yield_gaussian,
)

__all__ = [
    "AreaDelayPoint",
    "MODES",
    "SizingSolution",
    "area_delay_curve",
    "balanced_baseline",
    "global_optimize",
    "pipeline_sensitivities",
    "size_stage",
    "size_stage_for_area",
    "stage_constraint",
    "stage_sensitivity",
    "unbalance_explore",
]

log = logging.getLogger(__name__)

MODES = ("ensure-yield", "min-area")
SIZE_RTOL = 1e-10
SLACK_RTOL = 1e-3  # outer convergence: slack change below 0.1 % of the target
SLACK_MARGIN = 1e-5  # budget updates aim this fraction of T above zero slack
MAX_ITER = 50


@dataclass(frozen=True)
class AreaDelayPoint:
    area: float
    delay_mean: float
    delay_sigma: float


@dataclass(frozen=True)
class SizingSolution:
    pipeline: PipelineModel
    sizes: tuple
    per_stage: tuple
    total_area: float
    achieved_yield: float
    iterations: int
    feasible: bool
    history: tuple = field(default=(), compare=False)


# ---------------------------------------------------------------- inner sizer


class _Stage:
    """Array view of a stage for repeated sizing."""

    def __init__(self, stage: StageModel, v: VariationSpec):
        self.stage = stage
        self.v = v
        self.p, self.q, self.a, self.lower, self.upper = stage.arrays()
        self.latch = stage.latch_overhead
        r = v.total_sigma_ratio
        self.shared = (v.inter_die_fraction + v.systematic_fraction) * r * r
        self.indep = v.random_fraction * r * r

    def stats(self, x):
        return _stage_stats(self.p, self.q, x, self.latch, self.v)

    def constraint(self, x, k):
        d = self.stats(x)
        return d.mean + k * d.std_dev

    def area(self, x):
        return float(np.dot(self.a, x))

    def kkt_coefficients(self, x, k):
        m = self.p + self.q / x
        total = m.sum()
        var = self.shared * total * total + self.indep * float(np.dot(m, m))
        if var > 0.0 and k > 0.0:
            w = 1.0 + k * (self.shared * total + self.indep * m) / math.sqrt(var)
        else:
            w = np.ones_like(m)
        return w * self.q / self.a

    def sizes_at(self, lam, c):
        return np.clip(np.sqrt(lam * c), self.lower, self.upper)

    def solve(self, k, target, measure, x0):
        """KKT point whose ``measure`` (decreasing or increasing in lam) equals ``target``."""
        x = np.clip(x0, self.lower, self.upper)
        for _ in range(200):
            c = self.kkt_coefficients(x, k)
            live = c > 0
            if not np.any(live):
                return np.array(self.lower, dtype=float)
            lo = math.log(float(np.min(self.lower[live] ** 2 / c[live])))
            hi = math.log(float(np.max(self.upper[live] ** 2 / c[live])))
            if hi - lo < 1e-14:
                x_new = self.sizes_at(math.exp(hi), c)
            else:
                f = lambda t: measure(self.sizes_at(math.exp(t), c)) - target  # noqa: E731
                f_lo, f_hi = f(lo), f(hi)
                if f_lo * f_hi > 0:
                    t = lo if abs(f_lo) < abs(f_hi) else hi
                else:
                    t = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
                x_new = self.sizes_at(math.exp(t), c)
            done = np.max(np.abs(x_new - x) / x) < SIZE_RTOL
            x = x_new
            if done:
                break
        return x


def _check_k(k):
    if not (math.isfinite(k) and k >= 0):
        raise DomainError(f"k must be finite and >= 0, got {k!r}")


def stage_constraint(s: StageModel, v: VariationSpec, k) -> float:
    """``mu + k sigma`` of the stage at its current sizes."""
    d = stage_distribution(s, v)
    return d.mean + k * d.std_dev


def _size_stage(st: _Stage, budget, k, x0):
    """Optimal sizes and a feasibility flag for one stage."""
    if st.constraint(st.upper, k) > budget:
        return np.array(st.upper, dtype=float), False
    if st.constraint(st.lower, k) <= budget:
        return np.array(st.lower, dtype=float), True
    x = st.solve(k, budget, lambda x: st.constraint(x, k), x0)
    # Nudge onto the feasible side of the root if rounding left us above it.
    for _ in range(60):
        if st.constraint(x, k) <= budget * (1.0 + 1e-12):
            break
        x = np.clip(x * (1.0 + 1e-9), st.lower, st.upper)
    return x, True


def size_stage(s: StageModel, v: VariationSpec, budget, k) -> StageModel:
    """Minimum-area sizing of one stage subject to ``mu + k sigma <= budget``.

    If the budget cannot be met even at maximum sizes the stage comes back
    fully upsized; callers detect that with ``stage_constraint``.
    """
    if not (math.isfinite(budget) and budget > 0):
        raise DomainError(f"budget must be > 0, got {budget!r}")
    _check_k(k)
    st = _Stage(s, v)
    x, _ = _size_stage(st, budget, k, s.sizes)
    return s.with_sizes(x)


def size_stage_for_area(s: StageModel, v: VariationSpec, area, k) -> StageModel:
    """Point on the stage's optimal curve with the given total area."""
    _check_k(k)
    st = _Stage(s, v)
    a_min, a_max = st.area(st.lower), st.area(st.upper)
    if area <= a_min:
        return s.with_sizes(st.lower)
    if area >= a_max:
        return s.with_sizes(st.upper)
    return s.with_sizes(st.solve(k, area, st.area, s.sizes))


def area_delay_curve(s: StageModel, v: VariationSpec, k, points=25):
    """Sampled optimal area/delay curve of a stage, from minimum to maximum area."""
    st = _Stage(s, v)
    out = []
    for area in np.linspace(st.area(st.lower), st.area(st.upper), points):
        d = stage_distribution(size_stage_for_area(s, v, area, k), v)
        out.append(AreaDelayPoint(float(area), d.mean, d.std_dev))
    return out


def stage_sensitivity(s: StageModel, v: VariationSpec, scale=1.0, step=1e-4):
    """Normalised ``|dA/dD|`` under uniform relative scaling of all sizes.

    Central difference of area against mean stage delay; ``scale`` is the
    pipeline's total area over total mean delay, which makes the value
    comparable across stages.  Returns ``None`` when no size can move.
    """
    x = s.sizes
    lower = np.array([g.lower for g in s.gates])
    upper = np.array([g.upper for g in s.gates])
    plus, minus = s.with_sizes(np.clip(x * (1 + step), lower, upper)), s.with_sizes(
        np.clip(x * (1 - step), lower, upper))
    d_delay = stage_distribution(plus, v).mean - stage_distribution(minus, v).mean
    d_area = plus.area - minus.area
    if d_delay == 0.0 or d_area == 0.0:
        return None
    return abs(d_area / d_delay) / scale


def pipeline_sensitivities(p: PipelineModel):
    total_delay = sum(stage_distribution(s, p.variation).mean for s in p.stages)
    scale = p.area / total_delay
    return [stage_sensitivity(s, p.variation, scale) for s in p.stages]


# ------------------------------------------------------------ pipeline timing


class _Timing:
    """Stage moments and correlations kept up to date one stage at a time."""

    def __init__(self, p: PipelineModel):
        self.p = p
        self.v = p.variation
        self.stages = list(p.stages)
        self.dists = [stage_distribution(s, self.v) for s in self.stages]
        self.positions = np.array([s.position for s in self.stages], dtype=float)
        self.override = p.correlation is not None
        self.corr = stage_correlation_matrix(p, self.dists)

    def update(self, i, stage):
        self.stages[i] = stage
        self.dists[i] = stage_distribution(stage, self.v)
        if not self.override:
            row = _correlation_from(
                [self.dists[i]] + self.dists, np.r_[self.positions[i], self.positions], self.v
            )[0, 1:]
            self.corr[i, :] = row
            self.corr[:, i] = row
            self.corr[i, i] = 1.0

    def snapshot(self):
        return list(self.stages), list(self.dists), self.corr.copy()

    def restore(self, snap):
        self.stages, self.dists, self.corr = list(snap[0]), list(snap[1]), snap[2].copy()

    def distribution(self):
        return max_reduce([d.moments for d in self.dists], self.corr)

    def pipeline(self):
        return PipelineModel(tuple(self.stages), self.v, self.p.correlation)

    @property
    def area(self):
        return float(sum(s.area for s in self.stages))


def _slack(timing, q, k):
    d = timing.distribution()
    return q.target_delay - (d.mean + k * d.std_dev)


def _solution(p, q, iterations, feasible, history=()):
    per_stage = tuple(stage_distribution(s, p.variation).moments for s in p.stages)
    achieved = yield_gaussian(pipeline_distribution(p), q.target_delay)
    return SizingSolution(
        pipeline=p,
        sizes=tuple(tuple(float(g.x) for g in s.gates) for s in p.stages),
        per_stage=per_stage,
        total_area=p.area,
        achieved_yield=achieved,
        iterations=iterations,
        feasible=feasible,
        history=tuple(history),
    )


# -------------------------------------------------------------- baseline


def balanced_baseline(p: PipelineModel, q: YieldQuery) -> SizingSolution:
    """Each stage sized alone for yield ``Y**(1/N)`` at the target delay."""
    k = _stringent_quantile(q, p.n_stages)
    stages, ok = [], True
    for s in p.stages:
        st = _Stage(s, p.variation)
        x, feasible = _size_stage(st, q.target_delay, k, s.sizes)
        stages.append(s.with_sizes(x))
        ok = ok and feasible
    sized = PipelineModel(tuple(stages), p.variation, p.correlation)
    sol = _solution(sized, q, 1, ok)
    return _with_history(sol, ((sol.total_area, sol.achieved_yield),))


def _with_history(sol, history):
    return SizingSolution(sol.pipeline, sol.sizes, sol.per_stage, sol.total_area,
                          sol.achieved_yield, sol.iterations, sol.feasible, tuple(history))


# ------------------------------------------------------- imbalance explorer


def _transfer(timing, donor, recipient, amount, k):
    """Move ``amount`` of area from donor to recipient along their optimal curves."""
    v = timing.v
    d_stage, r_stage = timing.stages[donor], timing.stages[recipient]
    d_st, r_st = _Stage(d_stage, v), _Stage(r_stage, v)
    room = min(d_stage.area - d_st.area(d_st.lower), r_st.area(r_st.upper) - r_stage.area)
    amount = min(amount, room)
    if amount <= 1e-12 * timing.area:
        return False
    timing.update(donor, size_stage_for_area(d_stage, v, d_stage.area - amount, k))
    timing.update(recipient, size_stage_for_area(r_stage, v, r_stage.area + amount, k))
    return True


def unbalance_explore(p: PipelineModel, q: YieldQuery, steps=50, step_fraction=0.02,
                      min_step_fraction=1e-4, overshoot=0) -> SizingSolution:
    """Area-neutral hill climb on the Clark yield, starting from ``p``.

    Each move shrinks a stage with large ``|dA/dD|`` and spends the freed
    area on a stage with small ``|dA/dD|``; candidate pairs are tried in
    order of decreasing sensitivity gap and a move is kept only if the
    yield rises.  When no pair improves, the step is halved.  With
    ``overshoot > 0`` the last accepted move is then repeated that many more
    times regardless of yield; the result is the final, over-unbalanced
    design and ``history`` holds the whole (area, yield) trajectory.
    """
    k = _stringent_quantile(q, p.n_stages)
    timing = _Timing(p)
    T = q.target_delay
    current = yield_gaussian(timing.distribution(), T)
    history = [(timing.area, current)]
    step = step_fraction * p.area
    last = None
    accepted_moves = 0
    while accepted_moves < steps:
        sens = pipeline_sensitivities(timing.pipeline())
        live = [i for i, r in enumerate(sens) if r is not None]
        pairs = sorted(
            ((d, r) for d in live for r in live if sens[d] > sens[r]),
            key=lambda dr: (-(sens[dr[0]] - sens[dr[1]]), dr),
        )
        moved = False
        for donor, recipient in pairs:
            snap = timing.snapshot()
            if not _transfer(timing, donor, recipient, step, k):
                continue
            y = yield_gaussian(timing.distribution(), T)
            if y > current + 1e-12:
                current, last, moved = y, (donor, recipient), True
                history.append((timing.area, y))
                break
            timing.restore(snap)
        if moved:
            accepted_moves += 1
            continue
        step *= 0.5
        if step < min_step_fraction * p.area:
            break
    if last is not None:
        for _ in range(overshoot):
            if not _transfer(timing, last[0], last[1], step, k):
                break
            history.append((timing.area, yield_gaussian(timing.distribution(), T)))
    return _with_history(_solution(timing.pipeline(), q, accepted_moves, True), history)


# ---------------------------------------------------------- global optimizer


def _stage_budget(dist, k):
    return dist.mean + k * dist.std_dev


def _budget_pass(timing, q, k, order, caps, max_iter):
    """Shared working budget loop: size every stage to the budget, then move it by the slack.

    The budget moves once per sweep.  Moving it after every stage applies
    the whole pipeline slack m times per sweep and oscillates for m >~ 8.
    """
    T = q.target_delay
    margin = SLACK_MARGIN * T
    # Budgets above every cap are no-ops in tighten-only mode.
    budget = T if caps is None else min(T, max(caps[i] for i in order))
    prev = _slack(timing, q, k)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        changed = False
        all_eligible = caps is None or budget < min(caps[i] for i in order)
        for i in order:
            if caps is None or budget < caps[i]:
                stage = timing.stages[i]
                x, _ = _size_stage(_Stage(stage, timing.v), budget, k, stage.sizes)
                if not np.array_equal(x, stage.sizes):
                    changed = True
                    timing.update(i, stage.with_sizes(x))
        slack = _slack(timing, q, k)
        step = slack - margin
        lower_caps = [] if caps is None or changed else [caps[i] for i in order if caps[i] < budget]
        # Nothing moved: skip the dead band down to the next stage that can tighten.
        budget = min(budget + step, max(lower_caps) + step) if lower_caps and step < 0 else budget + step
        change = abs(slack - prev)
        prev = slack
        if change < SLACK_RTOL * T and slack >= 0:
            break
        # Every stage was eligible and none moved: pinned at its bounds.
        if not changed and all_eligible:
            break
    return iterations


def _relax_to_slack(timing, q, k, j):
    """Loosen stage ``j`` as far as the pipeline slack allows."""
    T = q.target_delay
    margin = SLACK_MARGIN * T
    stage = timing.stages[j]
    st = _Stage(stage, timing.v)
    b_now = _stage_budget(timing.dists[j], k)
    b_max = st.constraint(st.lower, k)

    def slack_at(b):
        x, _ = _size_stage(st, b, k, stage.sizes)
        timing.update(j, stage.with_sizes(x))
        return _slack(timing, q, k) - margin

    if b_max <= b_now or slack_at(b_now) < 0:
        timing.update(j, stage)
        return
    if slack_at(b_max) >= 0:
        return
    b = optimize.brentq(slack_at, b_now, b_max, xtol=1e-7 * T)
    for cand in (b, b - 2e-7 * T, b_now):
        if slack_at(cand) >= 0:
            return


def _trade_pairs(order):
    """(tighten, relax) candidates: every stage against the one with the largest R."""
    return [(i, order[-1]) for i in order[:-1]]


def _trade_phase(timing, q, k, max_rounds):
    T = q.target_delay
    delta = 1e-2 * T
    rounds = 0
    history = []
    while delta > 1e-5 * T and rounds < max_rounds:
        rounds += 1
        sens = pipeline_sensitivities(timing.pipeline())
        order = sorted((i for i, r in enumerate(sens) if r is not None), key=lambda i: (sens[i], i))
        improved = False
        # Every improving trade of the sweep is kept, so the number of rounds
        # follows the delta schedule rather than the number of stages.
        for i, j in _trade_pairs(order):
            snap = timing.snapshot()
            area_before = timing.area
            st = _Stage(timing.stages[i], timing.v)
            b_i = _stage_budget(timing.dists[i], k) - delta
            x, feasible = _size_stage(st, b_i, k, timing.stages[i].sizes)
            if not feasible:
                continue
            timing.update(i, timing.stages[i].with_sizes(x))
            _relax_to_slack(timing, q, k, j)
            if _slack(timing, q, k) >= 0 and timing.area < area_before * (1 - 1e-9):
                improved = True
                history.append((timing.area, yield_gaussian(timing.distribution(), T)))
                continue
            timing.restore(snap)
        if not improved:
            delta *= 0.5
    return rounds, history


def global_optimize(p: PipelineModel, q: YieldQuery, mode="min-area", max_iter=MAX_ITER,
                    start: SizingSolution | None = None) -> SizingSolution:
    """Divide-and-conquer pipeline sizing for yield ``Y`` at delay ``T``.

    ``start`` defaults to ``balanced_baseline(p, q)``.  ``ensure-yield``
    returns a start that already meets the yield untouched; otherwise it
    only tightens stages until the yield is met.  ``min-area`` also relaxes
    stages and trades budget between them to cut area while holding the
    yield.  ``history`` lists the accepted (area, yield) states in order.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    k = q.quantile
    T = q.target_delay
    base = start if start is not None else balanced_baseline(p, q)
    timing = _Timing(base.pipeline)

    sens = pipeline_sensitivities(base.pipeline)
    order = sorted((i for i, r in enumerate(sens) if r is not None), key=lambda i: (sens[i], i))
    best = (timing.snapshot(), base.achieved_yield, base.total_area)
    history = [(base.total_area, base.achieved_yield)]

    def better(y, area):
        _, by, barea = best
        if by >= q.target_yield:
            return y >= q.target_yield and area < barea * (1 - 1e-9)
        return y > by

    if mode == "ensure-yield":
        if base.achieved_yield >= q.target_yield:
            return _with_history(_solution(base.pipeline, q, 0, True), history)
        caps = [_stage_budget(d, k) for d in timing.dists]
        iterations = _budget_pass(timing, q, k, order, caps, max_iter)
        y = yield_gaussian(timing.distribution(), T)
        if better(y, timing.area):
            history.append((timing.area, y))
        else:
            timing.restore(best[0])
    else:
        iterations = _budget_pass(timing, q, k, order, None, max_iter)
        y = yield_gaussian(timing.distribution(), T)
        if better(y, timing.area):
            history.append((timing.area, y))
        else:
            timing.restore(best[0])
        if yield_gaussian(timing.distribution(), T) >= q.target_yield:
            rounds, trades = _trade_phase(timing, q, k, max_iter * max(1, len(order)))
            iterations += rounds
            history.extend(trades)

    sol = _solution(timing.pipeline(), q, iterations, False)
    feasible = sol.achieved_yield >= q.target_yield
    log.debug("global_optimize mode=%s iterations=%d area=%.6g yield=%.6f",
              mode, iterations, sol.total_area, sol.achieved_yield)
    return SizingSolution(sol.pipeline, sol.sizes, sol.per_stage, sol.total_area,
                          sol.achieved_yield, iterations, feasible, tuple(history))
