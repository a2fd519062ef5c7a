"""Collaborator selection policies and the bandit knowledge base.

Policies: ``all``, ``closest``, ``coverage`` (greedy weighted coverage from
geometry), ``etc`` (periodic explore-then-commit), ``mass`` (UCB on
per-agent utility under Brownian drift) and ``cmass`` (multi-round greedy
UCB on per-object learned detection indicators with redundancy discount).

Every policy breaks ties by the lower agent id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import PerceptionParams, PolicyParams
from .geometry import points_in_rects
from .perception import importance, visibility
from .world import BUILDING, WorldState

UNSEEN = math.inf  # UCB sentinel for agents never scheduled
_TIE_TOL = 1e-9


def allocate_bandwidth(total: float, n_selected: int) -> float:
    """Equal split of ``total`` Hz among the selected CoVs."""
    if total <= 0:
        raise ValueError("total bandwidth must be positive")
    return total / max(1, n_selected)


@dataclass(frozen=True)
class ScheduleDecision:
    selected: tuple
    per_cov_bandwidth: float


@dataclass
class UtilityRecord:
    agent: int
    u_hat: float = 0.0
    tau: int = 0
    times_scheduled: int = 0


@dataclass
class KnowledgeBase:
    """Bandit state of one ego: last observed utilities and per-object detection indicators."""

    sigma: float = 0.1
    beta: float = 2.0
    stale_frames: int = 50
    credit: str = "split"
    records: dict = field(default_factory=dict)
    p_hat: dict = field(default_factory=dict)  # agent -> {object: (value, frame)}
    etc_epoch_start: int | None = None
    etc_explore: tuple = ()

    @classmethod
    def from_params(cls, p: PolicyParams) -> "KnowledgeBase":
        return cls(sigma=p.sigma, beta=p.beta, stale_frames=p.stale_frames, credit=p.credit)

    def active_p_hat(self, agent: int, t: int) -> dict:
        entries = self.p_hat.get(agent, {})
        return {o: v for o, (v, f) in entries.items() if t - f <= self.stale_frames}


@dataclass
class FrameContext:
    frame: int
    candidates: list
    distances: dict
    ego_detections: frozenset = frozenset()
    weights: dict = field(default_factory=dict)
    total_bandwidth: float = 600000.0
    world: WorldState | None = None
    perception: PerceptionParams = field(default_factory=PerceptionParams)
    coverage_roi: float = 160.0
    coverage_cell: float = 4.0


def _decision(ctx: FrameContext, selected) -> ScheduleDecision:
    selected = tuple(int(s) for s in selected)
    return ScheduleDecision(selected, allocate_bandwidth(ctx.total_bandwidth, len(selected)))


def _top(scores: dict, n: int) -> list:
    return [a for a, _ in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:n]]


def all_candidates(ctx: FrameContext) -> ScheduleDecision:
    return _decision(ctx, ctx.candidates)


def closest_candidates(ctx: FrameContext, n: int) -> ScheduleDecision:
    order = sorted(ctx.candidates, key=lambda a: (ctx.distances[a], a))
    return _decision(ctx, order[:n])


# --- greedy coverage -------------------------------------------------------

def coverage_cells(ctx: FrameContext) -> tuple[np.ndarray, np.ndarray]:
    """Centres and weights of the street cells in the square ROI around the ego."""
    w = ctx.world
    ego = w.position(w.ego_id)
    m = int(math.ceil(ctx.coverage_roi / ctx.coverage_cell))
    offs = -ctx.coverage_roi / 2 + ctx.coverage_cell * (np.arange(m) + 0.5)
    gx, gy = np.meshgrid(ego[0] + offs, ego[1] + offs, indexing="ij")
    cells = np.column_stack([gx.ravel(), gy.ravel()])
    # cells inside a building can never be seen and hold no traffic
    inside = points_in_rects(cells, w.layout.buildings).any(axis=1)
    cells = cells[~inside]
    weights = importance(np.hypot(*(cells - ego).T), ctx.perception)
    return cells, np.atleast_1d(weights)


def coverage_matrix(ctx: FrameContext) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(cover, ego_cover, cell_weights)``; ``cover[i, c]`` is candidate ``i`` seeing cell ``c``.

    Line of sight is judged from what the ego actually knows: the map's
    buildings plus the footprints of itself and the beaconing candidates.
    Vehicles that do not beacon are invisible to this reasoning.
    """
    w = ctx.world
    cells, weights = coverage_cells(ctx)
    src = np.array([w.ego_index] + [w.index_of(a) for a in ctx.candidates], dtype=np.int64)
    known = np.concatenate([np.flatnonzero(w.kind == BUILDING), src])
    vis, _ = visibility(w, src, cells, np.full(len(cells), -1), ctx.perception.sense_range, occluders=known)
    return vis[1:], vis[0], weights


def greedy_select(cover: np.ndarray, weights: np.ndarray, n: int, ids, covered=None) -> list:
    """``n`` rounds of max marginal covered weight; ties go to the lower id."""
    ids = [int(i) for i in ids]
    covered = np.zeros(cover.shape[1], dtype=bool) if covered is None else covered.copy()
    remaining = list(range(len(ids)))
    chosen = []
    for _ in range(min(n, len(ids))):
        gains = (cover[remaining] & ~covered) @ weights
        best = gains.max()
        pick = min((ids[remaining[k]], k) for k in np.flatnonzero(gains >= best - _TIE_TOL))[1]
        j = remaining.pop(pick)
        chosen.append(ids[j])
        covered |= cover[j]
    return chosen


def greedy_coverage(ctx: FrameContext, n: int) -> ScheduleDecision:
    if n <= 0 or not ctx.candidates:
        return _decision(ctx, [])
    cover, ego_cover, weights = coverage_matrix(ctx)
    return _decision(ctx, greedy_select(cover, weights, n, ctx.candidates, covered=ego_cover))


# --- bandit policies -------------------------------------------------------

def ucb(kb: KnowledgeBase, agent: int, t: int) -> float:
    """Optimistic utility: last observation plus a bonus growing with the square root of staleness."""
    rec = kb.records.get(agent)
    if rec is None:
        return UNSEEN
    return rec.u_hat + kb.beta * kb.sigma * math.sqrt(max(0, t - rec.tau))


def etc_schedule(ctx: FrameContext, kb: KnowledgeBase, n: int, epoch_len: int) -> ScheduleDecision:
    """Periodic explore-then-commit.

    At each epoch start the current candidates (id order) are frozen into an
    exploration list that is scheduled ``n`` at a time; for the rest of the
    epoch the top-``n`` by last observed utility are scheduled. Candidates
    appearing mid-epoch wait for the next epoch's exploration.
    """
    t = ctx.frame
    if n <= 0 or not ctx.candidates:
        if kb.etc_epoch_start is None or t - kb.etc_epoch_start >= epoch_len:
            kb.etc_epoch_start, kb.etc_explore = t, tuple(sorted(ctx.candidates))
        return _decision(ctx, [])
    if kb.etc_epoch_start is None or t - kb.etc_epoch_start >= epoch_len:
        kb.etc_epoch_start, kb.etc_explore = t, tuple(sorted(ctx.candidates))
    present = set(ctx.candidates)
    leader = {a: (kb.records[a].u_hat if a in kb.records else -math.inf) for a in ctx.candidates}
    i = t - kb.etc_epoch_start
    if i < math.ceil(len(kb.etc_explore) / n):
        chunk = [a for a in kb.etc_explore[i * n:(i + 1) * n] if a in present]
        rest = {a: s for a, s in leader.items() if a not in chunk}
        return _decision(ctx, chunk + _top(rest, n - len(chunk)))
    return _decision(ctx, _top(leader, n))


def mass_schedule(ctx: FrameContext, kb: KnowledgeBase, n: int = 1) -> ScheduleDecision:
    """Highest-UCB candidate(s); never-scheduled candidates come first."""
    scores = {a: ucb(kb, a, ctx.frame) for a in ctx.candidates}
    return _decision(ctx, _top(scores, n))


def _residual(ctx: FrameContext) -> dict:
    return {o: (0.0 if o in ctx.ego_detections else w) for o, w in ctx.weights.items()}


def _cmass_round(ctx, kb, residual, selected, p_hat) -> dict:
    t = ctx.frame
    scores = {}
    for a in ctx.candidates:
        if a in selected:
            continue
        rec = kb.records.get(a)
        if rec is None:
            scores[a] = UNSEEN
            continue
        gain = sum(p * residual[o] for o, p in p_hat[a].items() if o in residual)
        scores[a] = gain + kb.beta * kb.sigma * math.sqrt(max(0, t - rec.tau))
    return scores


def _discount(residual: dict, p_hat: dict) -> None:
    for o, p in p_hat.items():
        if o in residual:
            residual[o] *= 1.0 - p


def cmass_scores(ctx: FrameContext, kb: KnowledgeBase, selected=()) -> dict:
    """UCB of each unselected candidate's marginal utility given ``selected``.

    Marginal utility sums, over tracked objects, importance weight times the
    learned detection indicator times the chance that neither the ego nor any
    selected agent already provides the object.
    """
    p_hat = {a: kb.active_p_hat(a, ctx.frame) for a in set(ctx.candidates) | set(selected)}
    residual = _residual(ctx)
    for k in selected:
        _discount(residual, p_hat[k])
    return _cmass_round(ctx, kb, residual, set(selected), p_hat)


def cmass_schedule(ctx: FrameContext, kb: KnowledgeBase, n: int) -> ScheduleDecision:
    """``n`` greedy rounds, each picking the best UCB of marginal utility (unseen agents first)."""
    p_hat = {a: kb.active_p_hat(a, ctx.frame) for a in ctx.candidates}
    residual = _residual(ctx)
    selected: list = []
    for _ in range(min(n, len(ctx.candidates))):
        pick = _top(_cmass_round(ctx, kb, residual, set(selected), p_hat), 1)[0]
        selected.append(pick)
        _discount(residual, p_hat[pick])
    return _decision(ctx, selected)


def schedule(policy: str, ctx: FrameContext, kb: KnowledgeBase, n: int,
             epoch_len: int = 100) -> ScheduleDecision:
    if n < 0:
        raise ValueError("n must be >= 0")
    if policy == "all":
        return all_candidates(ctx)
    if policy == "closest":
        return closest_candidates(ctx, n)
    if policy == "coverage":
        return greedy_coverage(ctx, n)
    if policy == "etc":
        return etc_schedule(ctx, kb, n, epoch_len)
    if policy == "mass":
        return mass_schedule(ctx, kb, n)
    if policy == "cmass":
        return cmass_schedule(ctx, kb, n)
    raise ValueError(f"unknown policy {policy!r}")


def observe_utilities(kb: KnowledgeBase, decision: ScheduleDecision, ego_set, delivered: dict,
                      weights: dict, t: int) -> KnowledgeBase:
    """Credit each scheduled agent with the weight of objects it added beyond the ego's own view.

    ``delivered`` maps agent -> delivered object ids. A shared extra object is
    split evenly among the agents that delivered it (``credit="split"``) or
    credited in full to each (``credit="full"``). Detection indicators are
    set to 1 for delivered objects and 0 for known objects the agent did not
    deliver. Unscheduled agents are left untouched. Mutates and returns ``kb``.
    """
    ego_set = set(ego_set)
    sets = {a: set(delivered.get(a, ())) for a in decision.selected}
    known = set(ego_set).union(*sets.values()) if sets else set(ego_set)
    share: dict = {}
    for objs in sets.values():
        for o in objs - ego_set:
            share[o] = share.get(o, 0) + 1
    for a, objs in sets.items():
        if kb.credit == "split":
            u = sum(weights.get(o, 0.0) / share[o] for o in objs - ego_set)
        else:
            u = sum(weights.get(o, 0.0) for o in objs - ego_set)
        rec = kb.records.setdefault(a, UtilityRecord(a))
        rec.u_hat = float(u)
        rec.tau = t
        rec.times_scheduled += 1
        entries = {o: vf for o, vf in kb.p_hat.get(a, {}).items() if t - vf[1] <= kb.stale_frames}
        for o in known:
            entries[o] = (1.0 if o in objs else 0.0, t)
        kb.p_hat[a] = entries
    return kb
