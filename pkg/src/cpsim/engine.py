"""Frame loop: beaconing, Request/Response/Fusion, metrics and bandit updates.

Randomness comes from one root seed split into named streams (mobility,
fading, shadowing, detection, policy). The channel and detection draws of a
frame do not depend on which CoVs get scheduled, so different policies run
on the same seed see the same world and the same luck.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from .config import ExperimentConfig, validate
from .metrics import FrameMetrics, aggregate, frame_metrics
from .perception import build_topology, fuse, ground_truth, rank_and_truncate
from .scheduling import (FrameContext, KnowledgeBase, ScheduleDecision, allocate_bandwidth,
                         observe_utilities, schedule)
from .world import WorldState, build_scenario, step_world

STREAMS = ("mobility", "fading", "shadowing", "detection", "policy")

__all__ = ["Beacon", "CpRequest", "CpResponse", "FrameLog", "Streams", "Simulation", "allocate_bandwidth",
           "collect_beacons", "candidates_from_beacons", "run_frame", "run_experiment",
           "write_frames_csv", "write_summary_csv", "FRAME_COLUMNS", "SUMMARY_COLUMNS"]


@dataclass(frozen=True)
class Beacon:
    sender: int
    position: tuple
    is_cov: bool
    frame: int


@dataclass(frozen=True)
class CpRequest:
    requester: int
    target: int
    max_rate: float
    bandwidth: float


@dataclass(frozen=True)
class CpResponse:
    responder: int
    packets: tuple

    @property
    def size_bits(self) -> float:
        return sum(p.size_bits for p in self.packets)


@dataclass(frozen=True)
class FrameLog:
    frame: int
    policy: str
    decision: ScheduleDecision
    delivered: dict
    fused_size: int
    loss: float
    recall: float
    n_ground_truth: int
    schedule_time: float = 0.0
    requests: tuple = ()
    responses: tuple = ()

    @property
    def n_selected(self) -> int:
        return len(self.decision.selected)

    @property
    def delivered_rfms(self) -> int:
        return sum(self.delivered.values())

    @property
    def metrics(self) -> FrameMetrics:
        return FrameMetrics(self.loss, self.recall, self.n_ground_truth,
                            round(self.recall * self.n_ground_truth))


@dataclass
class Streams:
    fading: np.random.Generator
    shadowing: np.random.Generator
    detection: np.random.Generator
    policy: np.random.Generator
    shadow_process: ch.ShadowingProcess

    @classmethod
    def from_seed(cls, seed: int, cfg: ExperimentConfig) -> tuple["Streams", int]:
        """Named generators for ``seed`` plus the integer seed of the mobility stream."""
        gens = {name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
                for k, name in enumerate(STREAMS)}
        mobility_seed = int(gens.pop("mobility").integers(2**63))
        return cls(shadow_process=ch.ShadowingProcess(cfg.channel), **gens), mobility_seed


def collect_beacons(w: WorldState) -> list[Beacon]:
    """One status beacon per CoV (the ego does not serve itself)."""
    idx = np.flatnonzero(w.is_cov)
    return [Beacon(int(w.ids[i]), (float(w.center[i, 0]), float(w.center[i, 1])), True, w.frame_index)
            for i in idx if w.ids[i] != w.ego_id]


def candidates_from_beacons(beacons, ego_position, comm_range: float) -> tuple[list, dict]:
    """CoVs heard within ``comm_range``: ids nearest-first (ties by id) and their distances."""
    dist = {}
    for b in beacons:
        if b.is_cov:
            d = float(np.hypot(b.position[0] - ego_position[0], b.position[1] - ego_position[1]))
            if d <= comm_range:
                dist[b.sender] = d
    return sorted(dist, key=lambda a: (dist[a], a)), dist


def _pathloss(params, cls, d: float) -> float:
    if cls == ch.LinkClass.NLOS:
        return params.nlos_a + params.nlos_b * math.log10(d) + params.nlos_c * math.log10(params.carrier_freq_ghz)
    return params.los_a + params.los_b * math.log10(d) + params.los_c * math.log10(params.carrier_freq_ghz)


def _link_parts(w: WorldState, candidates, cfg: ExperimentConfig, streams: Streams) -> dict:
    """Policy-independent channel realisation towards the ego for every candidate."""
    params = cfg.channel
    if not candidates:
        streams.shadow_process.retain(())
        return {}
    ego = w.ego_id
    ego_pos = w.position(ego)
    classes = ch.classify_links(w, candidates, ego)
    z_shadow = streams.shadowing.standard_normal(len(candidates))
    z_fade = streams.fading.standard_normal((len(candidates), 2))
    rel = ego_pos[None, :] - w.center[[w.index_of(a) for a in candidates]]
    dist = np.maximum(np.hypot(rel[:, 0], rel[:, 1]), 1.0)
    k_los = ch.rician_k_linear(params, ch.LinkClass.LOS)
    parts = {}
    for k, (a, (cls, n_blk)) in enumerate(zip(candidates, classes)):
        shadow = streams.shadow_process.sample(a, rel[k], cls, streams.shadowing, z=z_shadow[k])
        block = ch.blockage_loss_db(params, n_blk, streams.fading) if cls == ch.LinkClass.NLOSV else 0.0
        fade = float(ch.fading_from_normals(0.0 if cls == ch.LinkClass.NLOS else k_los, z_fade[k]))
        parts[a] = (cls, _pathloss(params, cls, float(dist[k])), shadow, block, fade)
    streams.shadow_process.retain(candidates)
    return parts


def run_frame(w: WorldState, kb: KnowledgeBase, cfg: ExperimentConfig, streams: Streams,
              n: int | None = None) -> tuple[FrameLog, KnowledgeBase, WorldState]:
    """One 100 ms frame of pull-based collaborative perception for the ego."""
    pp = cfg.perception
    n = cfg.n_select if n is None else n
    t = w.frame_index

    # beacons -> candidates
    candidates, distances = candidates_from_beacons(collect_beacons(w), w.position(w.ego_id),
                                                    cfg.scenario.comm_range)

    # ground truth and who could detect what; uniforms drawn for every candidate
    weights = ground_truth(w, pp)
    agents = [w.ego_id] + candidates
    topo = build_topology(w, pp, agents, list(weights))
    uniforms = streams.detection.random(topo.detect_prob.shape)
    detected = uniforms < topo.detect_prob
    ego_set = frozenset(int(o) for o in topo.objects[detected[0]])

    links = _link_parts(w, candidates, cfg, streams)

    # (1) request
    ctx = FrameContext(frame=t, candidates=candidates, distances=distances, ego_detections=ego_set,
                       weights=weights, total_bandwidth=cfg.total_bandwidth, world=w, perception=pp,
                       coverage_roi=cfg.policy.coverage_roi, coverage_cell=cfg.policy.coverage_cell)
    t0 = time.perf_counter()
    decision = schedule(cfg.policy.name, ctx, kb, n, epoch_len=cfg.policy.etc_epoch)
    sched_time = time.perf_counter() - t0

    # (2) response
    rows = {a: k for k, a in enumerate(agents)}
    requests, responses = [], []
    for a in decision.selected:
        cls, pl, sh, bl, fade = links[a]
        state = ch.link_state(cfg.channel, cls, pl, sh, bl, fade, decision.per_cov_bandwidth)
        req = CpRequest(w.ego_id, a, state.rate, decision.per_cov_bandwidth)
        requests.append(req)
        row = rows[a]
        dets = frozenset(int(o) for o in topo.objects[detected[row]])
        conf = {int(o): float(p) for o, p in zip(topo.objects, topo.detect_prob[row])}
        packets = rank_and_truncate(dets, weights, conf, req.max_rate, pp.tx_budget, pp.s_rfm, origin=a)
        responses.append(CpResponse(a, tuple(packets)))

    # (3) fusion
    fused = fuse(ego_set, [r.packets for r in responses])
    m = frame_metrics(weights, fused)
    delivered = {r.responder: [p.object_id for p in r.packets] for r in responses}
    kb = observe_utilities(kb, decision, ego_set, delivered, weights, t)

    log = FrameLog(frame=t, policy=cfg.policy.name, decision=decision,
                   delivered={a: len(v) for a, v in delivered.items()}, fused_size=len(fused),
                   loss=m.loss, recall=m.recall, n_ground_truth=m.n_ground_truth,
                   schedule_time=sched_time, requests=tuple(requests), responses=tuple(responses))
    return log, kb, step_world(w)


class Simulation:
    """Stateful wrapper holding world, knowledge base and random streams of one run."""

    def __init__(self, cfg: ExperimentConfig):
        validate(cfg)
        self.cfg = cfg
        self.streams, mobility_seed = Streams.from_seed(cfg.seed, cfg)
        self.world = build_scenario(cfg.scenario, mobility_seed)
        self.kb = KnowledgeBase.from_params(cfg.policy)

    def step(self) -> FrameLog:
        log, self.kb, self.world = run_frame(self.world, self.kb, self.cfg, self.streams)
        return log


@dataclass
class ExperimentResult:
    cfg: ExperimentConfig
    logs: list = field(repr=False)
    mean_loss: float
    mean_recall: float
    wall_time_s: float
    schedule_time_s: float

    @property
    def frames(self) -> int:
        return len(self.logs)

    def summary_row(self, status: str = "ok") -> dict:
        return {"policy": self.cfg.policy.name, "N": self.cfg.n_select, "seed": self.cfg.seed,
                "frames": self.frames, "mean_loss": self.mean_loss, "mean_recall": self.mean_recall,
                "wall_time_s": self.wall_time_s, "status": status}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run ``cfg.frames`` frames and summarise them."""
    validate(cfg)
    t0 = time.perf_counter()
    sim = Simulation(cfg)
    logs = [sim.step() for _ in range(cfg.frames)]
    s = aggregate(log.metrics for log in logs)
    return ExperimentResult(cfg, logs, s.mean_loss, s.mean_recall, time.perf_counter() - t0,
                            sum(log.schedule_time for log in logs))


FRAME_COLUMNS = ("frame", "policy", "n_selected", "delivered_rfms", "loss", "recall")
SUMMARY_COLUMNS = ("policy", "N", "seed", "frames", "mean_loss", "mean_recall", "wall_time_s", "status")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(round(x, 12))
    return str(x)


def write_frames_csv(logs, path) -> None:
    with open(path, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(FRAME_COLUMNS)
        for log in logs:
            out.writerow([log.frame, log.policy, log.n_selected, log.delivered_rfms,
                          _fmt(log.loss), _fmt(log.recall)])


def write_summary_csv(rows, path, timing: bool = False) -> None:
    """Summary rows; ``wall_time_s`` is left blank unless ``timing`` so reruns stay byte-identical."""
    with open(path, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(SUMMARY_COLUMNS)
        for row in rows:
            vals = dict(row)
            if not timing or vals.get("wall_time_s") is None:
                vals["wall_time_s"] = ""
            out.writerow([_fmt(vals.get(c, "")) if vals.get(c) != "" else "" for c in SUMMARY_COLUMNS])
