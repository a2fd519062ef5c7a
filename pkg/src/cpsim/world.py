"""Urban grid scenario: streets, buildings, vehicles and pedestrians.

The road network is a rectangular grid of bi-directional two-lane streets
with sidewalks on both sides. Buildings fill every block. Streets extend a
short stub past the outermost intersections; non-ego vehicles that leave
through a stub are replaced by a fresh vehicle entering at a random stub.

Coordinates are metres, the map spans ``[0, width] x [0, height]``.
Directions are ``E, N, W, S = 0, 1, 2, 3``; traffic keeps to the right.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .config import ConfigError, ScenarioConfig, validate, ExperimentConfig
from .geometry import pack_rects

BUILDING, VEHICLE, PEDESTRIAN = 0, 1, 2
KIND_NAMES = {BUILDING: "building", VEHICLE: "vehicle", PEDESTRIAN: "pedestrian"}

E, N, W, S = 0, 1, 2, 3
DIR_VEC = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
AXIS = np.array([0, 1, 0, 1])
SIGN = np.array([1, 1, -1, -1])
# perpendicular offset of a lane centerline from its street centerline, in lane widths / 2
LANE_SIDE = np.array([-1.0, 1.0, 1.0, -1.0])

STRAIGHT, LEFT, RIGHT, EXIT = 0, 1, 2, 3


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float


@dataclass(frozen=True)
class Rect:
    center: Vec2
    half_extent: Vec2
    heading: float = 0.0

    def __post_init__(self):
        if not (self.half_extent.x > 0 and self.half_extent.y > 0):
            raise ValueError("rectangle half extents must be positive")


@dataclass(frozen=True)
class Entity:
    id: int
    kind: str
    footprint: Rect
    velocity: Vec2
    is_cov: bool = False


@dataclass(frozen=True)
class RoadLayout:
    """Static street grid. ``nodes[a]`` are the crossing coordinates met when travelling along axis ``a``."""

    nodes: tuple
    sidewalk_nodes: tuple
    extent: tuple
    lane_width: float
    buildings: np.ndarray  # packed rects

    @classmethod
    def from_config(cls, s: ScenarioConfig) -> "RoadLayout":
        corridor = 2 * s.lane_width + 2 * s.sidewalk_width
        pitch = s.block_size + corridor
        xs = s.stub_length + pitch * np.arange(s.blocks_x + 1)
        ys = s.stub_length + pitch * np.arange(s.blocks_y + 1)
        extent = (float(xs[-1] + s.stub_length), float(ys[-1] + s.stub_length))
        off = s.lane_width + s.sidewalk_width / 2
        sw = tuple(np.sort(np.concatenate([v - off, v + off])) for v in (xs, ys))
        centers = [((xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2)
                   for i in range(s.blocks_x) for j in range(s.blocks_y)]
        half = np.full((len(centers), 2), s.block_size / 2)
        buildings = pack_rects(np.array(centers), half, np.zeros(len(centers)))
        return cls(nodes=(xs, ys), sidewalk_nodes=sw, extent=extent,
                   lane_width=s.lane_width, buildings=buildings)

    def lane_offset(self, direction: int) -> float:
        return LANE_SIDE[direction] * self.lane_width / 2


@dataclass(frozen=True, eq=False)
class WorldState:
    """One frame of the scenario. Treat as immutable; ``step_world`` returns a new state.

    Entity attributes are stored column-wise; index ``i`` of every array
    refers to the same entity. Buildings come first, then vehicles, then
    pedestrians. The mobility RNG state travels with the world so that
    stepping is a pure function of the state.
    """

    frame_index: int
    time: float
    ids: np.ndarray
    kind: np.ndarray
    center: np.ndarray
    half_extent: np.ndarray
    heading: np.ndarray
    velocity: np.ndarray
    is_cov: np.ndarray
    ego_id: int
    cfg: ScenarioConfig
    layout: RoadLayout
    # mobility internals
    direction: np.ndarray
    speed: np.ndarray
    street: np.ndarray
    next_node: np.ndarray
    event: np.ndarray
    choice: np.ndarray
    rng_state: dict = field(repr=False)
    next_id: int = 0
    n_spawned: int = 0
    n_cov_spawned: int = 0

    @cached_property
    def index(self) -> dict:
        return {int(i): k for k, i in enumerate(self.ids)}

    def index_of(self, entity_id) -> int:
        try:
            return self.index[int(entity_id)]
        except KeyError:
            raise KeyError(f"unknown entity id {entity_id}") from None

    def position(self, entity_id) -> np.ndarray:
        return self.center[self.index_of(entity_id)]

    @property
    def ego_index(self) -> int:
        return self.index_of(self.ego_id)

    @cached_property
    def rects(self) -> np.ndarray:
        return pack_rects(self.center, self.half_extent, self.heading)

    @cached_property
    def occluders(self) -> np.ndarray:
        """Indices of entities that block sight and radio: buildings and vehicles."""
        return np.flatnonzero(self.kind != PEDESTRIAN)

    @property
    def entities(self) -> list[Entity]:
        out = []
        for i in range(len(self.ids)):
            out.append(Entity(
                id=int(self.ids[i]),
                kind=KIND_NAMES[int(self.kind[i])],
                footprint=Rect(Vec2(*self.center[i]), Vec2(*self.half_extent[i]), float(self.heading[i])),
                velocity=Vec2(*self.velocity[i]),
                is_cov=bool(self.is_cov[i]),
            ))
        return out

    def fingerprint(self) -> bytes:
        """Byte string identifying the full state, for replay checks."""
        parts = [np.int64(self.frame_index).tobytes(), self.ids.tobytes(), self.center.tobytes(),
                 self.velocity.tobytes(), self.is_cov.tobytes(), self.choice.tobytes()]
        return b"".join(parts)


def _rng(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


class _Builder:
    """Mutable scratch space used while spawning or stepping."""

    def __init__(self, cfg: ScenarioConfig, layout: RoadLayout, rng: np.random.Generator, arrays: dict,
                 ego_index: int, next_id: int, n_spawned: int, n_cov_spawned: int):
        self.cfg = cfg
        self.layout = layout
        self.rng = rng
        self.a = arrays
        self.ego_index = ego_index
        self.next_id = next_id
        self.n_spawned = n_spawned
        self.n_cov_spawned = n_cov_spawned

    def new_id(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i

    # --- vehicles ---------------------------------------------------------

    def _allowed(self, i: int, d: int, k: int) -> bool:
        """Is moving in direction ``d`` from crossing ``k`` allowed (the ego never leaves the grid)."""
        if i != self.ego_index:
            return True
        return True if k is None else 0 <= k < len(self.layout.nodes[AXIS[d]])

    def draw_vehicle_choice(self, i: int) -> None:
        a = self.a
        d = int(a["direction"][i])
        ax, sg = AXIS[d], SIGN[d]
        nodes = self.layout.nodes[ax]
        k = int(a["next_node"][i])
        if not 0 <= k < len(nodes):
            a["choice"][i] = EXIT
            a["event"][i] = self.layout.extent[ax] if sg > 0 else 0.0
            return
        j = int(a["street"][i])
        left, right = (d + 1) % 4, (d + 3) % 4
        p_turn = (1.0 - self.cfg.p_straight) / 2
        options = [
            (STRAIGHT, self.cfg.p_straight, self._allowed(i, d, k + sg)),
            (LEFT, p_turn, self._allowed(i, left, j + SIGN[left])),
            (RIGHT, p_turn, self._allowed(i, right, j + SIGN[right])),
        ]
        options = [(c, p) for c, p, ok in options if ok]
        probs = np.array([p for _, p in options])
        probs = probs / probs.sum() if probs.sum() > 0 else np.full(len(options), 1 / len(options))
        u = self.rng.random()
        c = options[min(int(np.searchsorted(np.cumsum(probs), u, side="right")), len(options) - 1)][0]
        if c == STRAIGHT:
            ev = nodes[k]
        else:
            ev = nodes[k] + self.layout.lane_offset(left if c == LEFT else right)
        if sg * (ev - a["center"][i, ax]) < 0:
            # turn point already behind (only possible right after spawning)
            c, ev = STRAIGHT, nodes[k]
        a["choice"][i] = c
        a["event"][i] = ev

    def place_vehicle(self, i: int, d: int, street: int, u: float, fresh_id: bool = True) -> None:
        a = self.a
        cfg = self.cfg
        ax = AXIS[d]
        nodes = self.layout.nodes[ax]
        perp = self.layout.nodes[1 - ax][street] + self.layout.lane_offset(d)
        a["center"][i, ax] = u
        a["center"][i, 1 - ax] = perp
        a["direction"][i] = d
        a["street"][i] = street
        if SIGN[d] > 0:
            a["next_node"][i] = np.searchsorted(nodes, u, side="right")
        else:
            a["next_node"][i] = np.searchsorted(nodes, u, side="left") - 1
        a["speed"][i] = self.rng.uniform(cfg.vehicle_speed_min, cfg.vehicle_speed_max)
        cov = bool(self.rng.random() < cfg.mpr)
        a["is_cov"][i] = cov
        self.n_spawned += 1
        self.n_cov_spawned += cov
        if fresh_id:
            a["ids"][i] = self.new_id()
        self._orient(i)
        self.draw_vehicle_choice(i)

    def respawn_vehicle(self, i: int) -> None:
        side = int(self.rng.integers(4))
        d = (E, N, W, S)[side]
        ax = AXIS[d]
        street = int(self.rng.integers(len(self.layout.nodes[1 - ax])))
        u = 0.0 if SIGN[d] > 0 else self.layout.extent[ax]
        self.place_vehicle(i, d, street, u)

    def vehicle_event(self, i: int) -> bool:
        """Apply the pending event of vehicle ``i``; False if it left the map."""
        a = self.a
        c = int(a["choice"][i])
        d = int(a["direction"][i])
        if c == EXIT:
            self.respawn_vehicle(i)
            return False
        if c == STRAIGHT:
            a["next_node"][i] += SIGN[d]
        else:
            nd = (d + 1) % 4 if c == LEFT else (d + 3) % 4
            old_street = int(a["street"][i])
            a["street"][i] = a["next_node"][i]
            a["next_node"][i] = old_street + SIGN[nd]
            a["direction"][i] = nd
            self._orient(i)
        self.draw_vehicle_choice(i)
        return True

    # --- pedestrians ------------------------------------------------------

    def _set_ped_event(self, i: int) -> None:
        a = self.a
        d = int(a["direction"][i])
        ax = AXIS[d]
        nodes = self.layout.sidewalk_nodes[ax]
        k = int(a["next_node"][i])
        if 0 <= k < len(nodes):
            a["choice"][i] = STRAIGHT
            a["event"][i] = nodes[k]
        else:
            a["choice"][i] = EXIT
            a["event"][i] = self.layout.extent[ax] if SIGN[d] > 0 else 0.0

    def place_pedestrian(self, i: int, d: int, line: int, u: float) -> None:
        a = self.a
        ax = AXIS[d]
        nodes = self.layout.sidewalk_nodes[ax]
        a["center"][i, ax] = u
        a["center"][i, 1 - ax] = self.layout.sidewalk_nodes[1 - ax][line]
        a["direction"][i] = d
        a["street"][i] = line
        if SIGN[d] > 0:
            a["next_node"][i] = np.searchsorted(nodes, u, side="right")
        else:
            a["next_node"][i] = np.searchsorted(nodes, u, side="left") - 1
        a["speed"][i] = self.rng.uniform(self.cfg.pedestrian_speed_min, self.cfg.pedestrian_speed_max)
        a["ids"][i] = self.new_id()
        self._orient(i)
        self._set_ped_event(i)

    def pedestrian_event(self, i: int) -> None:
        a = self.a
        d = int(a["direction"][i])
        if a["choice"][i] == EXIT:
            # end of the sidewalk: walk back
            nd = (d + 2) % 4
            n_nodes = len(self.layout.sidewalk_nodes[AXIS[d]])
            a["next_node"][i] = n_nodes - 1 if SIGN[d] > 0 else 0
            a["direction"][i] = nd
        elif self.rng.random() < self.cfg.pedestrian_p_turn:
            nd = (d + 1) % 4 if self.rng.random() < 0.5 else (d + 3) % 4
            old_line = int(a["street"][i])
            a["street"][i] = a["next_node"][i]
            a["next_node"][i] = old_line + SIGN[nd]
            a["direction"][i] = nd
        else:
            a["next_node"][i] += SIGN[d]
        self._orient(i)
        self._set_ped_event(i)

    def _orient(self, i: int) -> None:
        a = self.a
        d = int(a["direction"][i])
        a["heading"][i] = 0.0 if AXIS[d] == 0 else np.pi / 2
        a["velocity"][i] = a["speed"][i] * DIR_VEC[d]


_ARRAY_FIELDS = ("ids", "kind", "center", "half_extent", "heading", "velocity", "is_cov",
                 "direction", "speed", "street", "next_node", "event", "choice")


def build_scenario(cfg: ScenarioConfig, seed: int) -> WorldState:
    """Frame 0 of a fresh scenario, fully determined by ``(cfg, seed)``."""
    validate(ExperimentConfig(scenario=cfg))
    if seed < 0:
        raise ConfigError("seed", "must be >= 0")
    layout = RoadLayout.from_config(cfg)
    rng = np.random.default_rng(seed)
    nb = len(layout.buildings)
    nv, npd = cfg.n_vehicles, cfg.n_pedestrians
    n = nb + nv + npd
    arrays = {
        "ids": np.zeros(n, dtype=np.int64),
        "kind": np.array([BUILDING] * nb + [VEHICLE] * nv + [PEDESTRIAN] * npd, dtype=np.int8),
        "center": np.zeros((n, 2)),
        "half_extent": np.zeros((n, 2)),
        "heading": np.zeros(n),
        "velocity": np.zeros((n, 2)),
        "is_cov": np.zeros(n, dtype=bool),
        "direction": np.zeros(n, dtype=np.int8),
        "speed": np.zeros(n),
        "street": np.zeros(n, dtype=np.int64),
        "next_node": np.zeros(n, dtype=np.int64),
        "event": np.zeros(n),
        "choice": np.zeros(n, dtype=np.int8),
    }
    arrays["center"][:nb] = layout.buildings[:, :2]
    arrays["half_extent"][:nb] = layout.buildings[:, 2:4]
    arrays["half_extent"][nb:nb + nv] = (cfg.vehicle_length / 2, cfg.vehicle_width / 2)
    arrays["half_extent"][nb + nv:] = cfg.pedestrian_size / 2
    b = _Builder(cfg, layout, rng, arrays, ego_index=nb, next_id=0, n_spawned=0, n_cov_spawned=0)
    for i in range(nb):
        arrays["ids"][i] = b.new_id()

    # ego: mid-block on an interior position so its first crossing is inside the grid
    d = int(rng.integers(4))
    ax = AXIS[d]
    nodes = layout.nodes[ax]
    k = int(rng.integers(len(nodes) - 1))
    lo, hi = nodes[k] + cfg.lane_width, nodes[k + 1] - cfg.lane_width
    street = int(rng.integers(len(layout.nodes[1 - ax])))
    b.place_vehicle(nb, d, street, rng.uniform(lo, hi))
    for i in range(nb + 1, nb + nv):
        d = int(rng.integers(4))
        ax = AXIS[d]
        street = int(rng.integers(len(layout.nodes[1 - ax])))
        b.place_vehicle(i, d, street, rng.uniform(0.0, layout.extent[ax]))
    for i in range(nb + nv, n):
        d = int(rng.integers(4))
        ax = AXIS[d]
        line = int(rng.integers(len(layout.sidewalk_nodes[1 - ax])))
        b.place_pedestrian(i, d, line, rng.uniform(0.0, layout.extent[ax]))

    return WorldState(
        frame_index=0, time=0.0, ego_id=int(arrays["ids"][nb]), cfg=cfg, layout=layout,
        rng_state=rng.bit_generator.state, next_id=b.next_id, n_spawned=b.n_spawned,
        n_cov_spawned=b.n_cov_spawned, **arrays,
    )


def step_world(w: WorldState) -> WorldState:
    """Advance every mover by one frame (``cfg.dt`` seconds)."""
    rng = _rng(w.rng_state)
    arrays = {name: getattr(w, name).copy() for name in _ARRAY_FIELDS}
    b = _Builder(w.cfg, w.layout, rng, arrays, ego_index=w.ego_index, next_id=w.next_id,
                 n_spawned=w.n_spawned, n_cov_spawned=w.n_cov_spawned)
    movers = np.flatnonzero(arrays["kind"] != BUILDING)
    d = arrays["direction"][movers]
    ax = AXIS[d]
    sg = SIGN[d]
    step = arrays["speed"][movers] * w.cfg.dt
    gap = sg * (arrays["event"][movers] - arrays["center"][movers, ax])
    free = gap > step
    fm = movers[free]
    arrays["center"][fm, ax[free]] += sg[free] * step[free]

    for i, r in zip(movers[~free], step[~free]):
        is_vehicle = arrays["kind"][i] == VEHICLE
        while True:
            di = int(arrays["direction"][i])
            a_, s_ = AXIS[di], SIGN[di]
            g = s_ * (arrays["event"][i] - arrays["center"][i, a_])
            if g > r:
                arrays["center"][i, a_] += s_ * r
                break
            arrays["center"][i, a_] = arrays["event"][i]
            r -= max(g, 0.0)
            if is_vehicle:
                if not b.vehicle_event(i):
                    break
            else:
                b.pedestrian_event(i)

    return replace(
        w, frame_index=w.frame_index + 1, time=(w.frame_index + 1) * w.cfg.dt,
        rng_state=rng.bit_generator.state, next_id=b.next_id, n_spawned=b.n_spawned,
        n_cov_spawned=b.n_cov_spawned, **arrays,
    )


def candidates_in_range(w: WorldState, comm_range: float | None = None) -> list[int]:
    """CoV ids within ``comm_range`` of the ego, nearest first, ties by id."""
    comm_range = w.cfg.comm_range if comm_range is None else comm_range
    ids, dist = _cov_distances(w)
    keep = dist <= comm_range
    ids, dist = ids[keep], dist[keep]
    order = np.lexsort((ids, dist))
    return [int(x) for x in ids[order]]


def _cov_distances(w: WorldState):
    mask = w.is_cov & (w.kind == VEHICLE)
    mask[w.ego_index] = False
    idx = np.flatnonzero(mask)
    dist = np.hypot(*(w.center[idx] - w.center[w.ego_index]).T)
    return w.ids[idx], dist


def world_from_entities(entities, ego_id: int, cfg: ScenarioConfig | None = None, seed: int = 0,
                        frame_index: int = 0) -> WorldState:
    """Hand-built world for scripted scenes.

    Movers keep their velocity forever (no turning, no despawn); use
    ``build_scenario`` for the full mobility model.
    """
    cfg = cfg or ScenarioConfig()
    layout = RoadLayout.from_config(cfg)
    kinds = {v: k for k, v in KIND_NAMES.items()}
    n = len(entities)
    ids = np.array([e.id for e in entities], dtype=np.int64)
    if len(set(ids.tolist())) != n:
        raise ValueError("entity ids must be unique")
    if ego_id not in ids:
        raise ValueError("ego must be one of the entities")
    vel = np.array([[e.velocity.x, e.velocity.y] for e in entities], dtype=float).reshape(n, 2)
    speed = np.hypot(vel[:, 0], vel[:, 1])
    direction = np.where(np.abs(vel[:, 0]) >= np.abs(vel[:, 1]),
                         np.where(vel[:, 0] >= 0, E, W), np.where(vel[:, 1] >= 0, N, S)).astype(np.int8)
    kind = np.array([kinds[e.kind] for e in entities], dtype=np.int8)
    center = np.array([[e.footprint.center.x, e.footprint.center.y] for e in entities], dtype=float).reshape(n, 2)
    event = np.where(SIGN[direction] > 0, np.inf, -np.inf)
    # diagonal velocities are snapped to the dominant axis
    vel = speed[:, None] * DIR_VEC[direction]
    if np.any((kind == BUILDING) & (speed > 0)):
        raise ValueError("buildings cannot move")
    return WorldState(
        frame_index=frame_index, time=frame_index * cfg.dt, ids=ids, kind=kind, center=center,
        half_extent=np.array([[e.footprint.half_extent.x, e.footprint.half_extent.y] for e in entities],
                             dtype=float).reshape(n, 2),
        heading=np.array([e.footprint.heading for e in entities], dtype=float),
        velocity=vel, is_cov=np.array([e.is_cov for e in entities], dtype=bool), ego_id=int(ego_id),
        cfg=cfg, layout=layout, direction=direction, speed=speed, street=np.zeros(n, dtype=np.int64),
        next_node=np.zeros(n, dtype=np.int64), event=event, choice=np.zeros(n, dtype=np.int8),
        rng_state=np.random.default_rng(seed).bit_generator.state, next_id=int(ids.max()) + 1 if n else 0,
    )


def vehicle(id: int, x: float, y: float, vx: float = 0.0, vy: float = 0.0, is_cov: bool = True,
            length: float = 4.5, width: float = 2.0) -> Entity:
    heading = 0.0 if abs(vx) >= abs(vy) else np.pi / 2
    return Entity(id, "vehicle", Rect(Vec2(x, y), Vec2(length / 2, width / 2), heading), Vec2(vx, vy), is_cov)


def pedestrian(id: int, x: float, y: float, vx: float = 0.0, vy: float = 0.0, size: float = 0.5) -> Entity:
    return Entity(id, "pedestrian", Rect(Vec2(x, y), Vec2(size / 2, size / 2)), Vec2(vx, vy))


def building(id: int, x: float, y: float, hx: float, hy: float, heading: float = 0.0) -> Entity:
    return Entity(id, "building", Rect(Vec2(x, y), Vec2(hx, hy), heading), Vec2(0.0, 0.0))
