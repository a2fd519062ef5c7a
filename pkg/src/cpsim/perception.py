"""Perception topology, stochastic detection, Top-K RFM truncation and fusion.

A detection set is a ``frozenset`` of object ids. Each co-agent answers a
request with at most ``K = floor(rate * tx_budget / s_rfm)`` regional
feature maps (one fixed-size packet per detected object), highest
``confidence * weight`` first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import PerceptionParams
from .geometry import hit_matrix, visible_from
from .world import PEDESTRIAN, VEHICLE, WorldState

DetectionSet = frozenset


@dataclass(frozen=True)
class PerceptObject:
    object_id: int
    position: tuple
    weight: float


@dataclass(frozen=True)
class RfmPacket:
    origin: int
    object_id: int
    confidence: float
    size_bits: float


@dataclass(frozen=True)
class PerceptionTopology:
    """Ground-truth detectability of ``objects`` (columns) by ``agents`` (rows)."""

    agents: np.ndarray
    objects: np.ndarray
    visible: np.ndarray
    detect_prob: np.ndarray
    distance: np.ndarray

    def row(self, agent) -> int:
        hit = np.flatnonzero(self.agents == agent)
        if len(hit) == 0:
            raise KeyError(f"agent {agent} not in topology")
        return int(hit[0])

    def prob(self, agent, obj) -> float:
        col = np.flatnonzero(self.objects == obj)
        return float(self.detect_prob[self.row(agent), col[0]]) if len(col) else 0.0


def importance(distance, params: PerceptionParams):
    """Importance weight of an object at ``distance`` from the ego, in (0, 1]."""
    d = np.asarray(distance, dtype=float)
    with np.errstate(divide="ignore"):
        w = np.minimum(1.0, params.importance_ref / d)
    return float(w) if w.ndim == 0 else w


def p_base(distance, params: PerceptionParams):
    """Detection probability of a visible object: flat up to ``d_near``, linear down to ``p_far`` at range."""
    d = np.asarray(distance, dtype=float)
    frac = np.clip((d - params.d_near) / (params.sense_range - params.d_near), 0.0, 1.0)
    p = params.p_near + (params.p_far - params.p_near) * frac
    p = np.where(d <= params.sense_range, p, 0.0)
    return float(p) if p.ndim == 0 else p


def ground_truth(w: WorldState, params: PerceptionParams) -> dict[int, float]:
    """Traffic participants within ``eval_range`` of the ego, mapped to their weights (id order)."""
    idx = np.flatnonzero((w.kind == VEHICLE) | (w.kind == PEDESTRIAN))
    idx = idx[idx != w.ego_index]
    dist = np.hypot(*(w.center[idx] - w.center[w.ego_index]).T)
    keep = dist <= params.eval_range
    ids, dist = w.ids[idx[keep]], dist[keep]
    order = np.argsort(ids, kind="stable")
    weights = importance(dist[order], params)
    return {int(i): float(x) for i, x in zip(ids[order], np.atleast_1d(weights))}


def line_of_sight(w: WorldState, a, b, exclude=()) -> tuple[bool, list[int]]:
    """Is segment ``a``-``b`` free of buildings and vehicles (other than ``exclude``)?"""
    occ = w.occluders
    keep = ~np.isin(w.ids[occ], np.asarray(list(exclude), dtype=np.int64))
    occ = occ[keep]
    seg = np.array([[a[0], a[1], b[0], b[1]]], dtype=float)
    hits = hit_matrix(seg, w.rects[occ], np.full((1, 1), -1, dtype=np.int64))[0]
    blockers = sorted(int(x) for x in w.ids[occ[hits]])
    return not blockers, blockers


def visibility(w: WorldState, from_idx: np.ndarray, to_points: np.ndarray, to_idx: np.ndarray,
               max_range: float, occluders: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Range-gated line of sight from entities ``from_idx`` to points.

    ``to_idx`` gives the entity owning each point (-1 for bare points); both
    endpoint footprints are ignored as blockers. ``occluders`` restricts the
    blocking entities (default: every building and vehicle). Returns
    ``(visible, distance)`` arrays of shape ``(len(from_idx), len(to_points))``.
    """
    src = w.center[from_idx]
    to_points = np.asarray(to_points, dtype=float).reshape(-1, 2)
    to_idx = np.asarray(to_idx, dtype=np.int64)
    dist = np.hypot(src[:, None, 0] - to_points[None, :, 0], src[:, None, 1] - to_points[None, :, 1])
    occ = w.occluders if occluders is None else np.asarray(occluders, dtype=np.int64)
    slot = np.full(len(w.ids), -1, dtype=np.int64)
    slot[occ] = np.arange(len(occ))
    to_slot = np.where(to_idx >= 0, slot[np.maximum(to_idx, 0)], -1)
    visible = visible_from(src, slot[from_idx], to_points, to_slot, w.rects[occ], float(max_range))
    visible &= from_idx[:, None] != to_idx[None, :]
    return visible, dist


def build_topology(w: WorldState, params: PerceptionParams, agents=None, objects=None) -> PerceptionTopology:
    """Who can see and detect which object this frame.

    ``agents`` defaults to the ego followed by every CoV, ``objects`` to the
    ground-truth set around the ego. An agent never detects itself.
    """
    if agents is None:
        covs = [int(i) for i in w.ids[w.is_cov] if i != w.ego_id]
        agents = [w.ego_id] + sorted(covs)
    if objects is None:
        objects = list(ground_truth(w, params))
    agents = np.asarray(agents, dtype=np.int64)
    objects = np.asarray(objects, dtype=np.int64)
    a_idx = np.array([w.index_of(a) for a in agents], dtype=np.int64)
    o_idx = np.array([w.index_of(o) for o in objects], dtype=np.int64)
    pts = w.center[o_idx] if len(o_idx) else np.zeros((0, 2))
    visible, dist = visibility(w, a_idx, pts, o_idx, params.sense_range)
    prob = np.where(visible, p_base(dist, params), 0.0) if dist.size else np.zeros(dist.shape)
    return PerceptionTopology(agents, objects, visible, prob, dist)


def local_detect(topo: PerceptionTopology, agent, rng: np.random.Generator | None = None,
                 uniforms=None) -> DetectionSet:
    """Independent Bernoulli(detect_prob) draw per object for one agent.

    Pass pre-drawn ``uniforms`` (one per object) to share randomness across runs.
    """
    p = topo.detect_prob[topo.row(agent)]
    if uniforms is None:
        uniforms = rng.random(len(p))
    return frozenset(int(o) for o in topo.objects[np.asarray(uniforms) < p])


def rfm_budget(rate: float, tx_budget: float, s_rfm: float) -> int:
    """Number of RFMs that fit in ``rate * tx_budget`` bits."""
    if rate <= 0:
        return 0
    return int(math.floor(rate * tx_budget / s_rfm))


def rank_and_truncate(detections, weights: dict, confidences: dict, rate: float, tx_budget: float,
                      s_rfm: float, origin: int = -1, k: int | None = None) -> list[RfmPacket]:
    """Top-K detected objects by ``confidence * weight`` (ties by object id) as RFM packets.

    ``k`` overrides the rate-derived budget.
    """
    if tx_budget <= 0:
        raise ValueError("tx_budget must be positive")
    if k is None:
        k = rfm_budget(rate, tx_budget, s_rfm)
    if k <= 0 or not detections:
        return []
    ranked = sorted(detections, key=lambda o: (-confidences.get(o, 0.0) * weights.get(o, 0.0), o))
    return [RfmPacket(origin, int(o), float(confidences.get(o, 0.0)), s_rfm) for o in ranked[:k]]


def fuse(ego, delivered) -> DetectionSet:
    """Union of the ego's detections and every delivered packet's object."""
    out = set(ego)
    for packets in delivered:
        out.update(p.object_id for p in packets)
    return frozenset(out)
