"""Delivery gridworld: obstacles, sensing, dynamics and mid-episode world changes.

Coordinates are ``(x, y)`` with ``y`` growing "up". Grids derived from an
obstacle map are indexed ``[x, y]``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np


class Cell(NamedTuple):
    x: int
    y: int


class Action(IntEnum):
    """Four-connected moves. The integer value is the tie-break order."""
    LEFT = 0
    RIGHT = 1
    UP = 2
    DOWN = 3


# (dx, dy) indexed by Action value
ACTION_DELTAS = np.array([(-1, 0), (1, 0), (0, 1), (0, -1)], dtype=np.int64)
N_ACTIONS = len(Action)


class Kind(Enum):
    CRATER = "crater"
    DUST = "dust"


class PlacementError(RuntimeError):
    """Raised when obstacles cannot be placed away from the excluded cell."""


class EpisodeOver(RuntimeError):
    """Raised when stepping an episode that is already finished."""


@dataclass(frozen=True)
class Obstacle:
    center: Cell
    radius: float
    kind: Kind

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")

    def contains(self, cell: Sequence[int]) -> bool:
        dx = cell[0] - self.center.x
        dy = cell[1] - self.center.y
        return dx * dx + dy * dy <= self.radius * self.radius

    def in_fov(self, pos: Sequence[int], fov_radius: float) -> bool:
        dx = pos[0] - self.center.x
        dy = pos[1] - self.center.y
        reach = fov_radius + self.radius
        return dx * dx + dy * dy <= reach * reach


@dataclass
class EnvConfig:
    """Environment parameters. Every field can be overridden from a config file."""
    width: int = 50
    height: int = 50
    fov_radius: float = 10.0
    n_craters: int = 25
    n_dust: int = 10
    crater_radius: float = 1.5
    dust_radius: float = 3.0
    slip_prob: float = 0.25
    sensor_miss_prob: float = 0.5
    hit_budget: int = 2
    horizon: int = 100
    start: Cell = Cell(25, 2)
    goals: tuple[Cell, ...] = (Cell(10, 45), Cell(25, 45), Cell(40, 45))
    dust_near_crater_prob: float = 0.7
    dust_near_crater_dist: int = 5
    seed: int = 0

    def __post_init__(self):
        self.start = Cell(*self.start)
        self.goals = tuple(Cell(*g) for g in self.goals)
        self.validate()

    def validate(self) -> None:
        for name in ("slip_prob", "sensor_miss_prob", "dust_near_crater_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if len(set(self.goals)) != len(self.goals):
            raise ValueError("goals must be distinct")
        for c in (self.start, *self.goals):
            if not self.in_bounds(c):
                raise ValueError(f"cell {c} outside {self.width}x{self.height} grid")
        if self.hit_budget < 1:
            raise ValueError("hit_budget must be >= 1")

    def in_bounds(self, cell: Sequence[int]) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height


@dataclass(frozen=True)
class ObstacleMap:
    """Craters and dust zones on a ``width x height`` grid.

    Membership and field-of-view counts are precomputed lazily for every cell so
    that sensing inside rollouts is a table lookup.
    """
    craters: tuple[Obstacle, ...] = ()
    dust: tuple[Obstacle, ...] = ()
    width: int = 50
    height: int = 50
    fov_radius: float = 10.0

    @classmethod
    def empty(cls, cfg: EnvConfig) -> "ObstacleMap":
        return cls(width=cfg.width, height=cfg.height, fov_radius=cfg.fov_radius)

    def with_obstacles(self, craters=(), dust=()) -> "ObstacleMap":
        return replace(self, craters=tuple(craters), dust=tuple(dust))

    def __len__(self) -> int:
        return len(self.craters) + len(self.dust)

    @property
    def obstacles(self) -> tuple[Obstacle, ...]:
        return self.craters + self.dust

    def _coords(self):
        xs, ys = np.meshgrid(np.arange(self.width), np.arange(self.height), indexing="ij")
        return xs, ys

    def _grid(self, obstacles, extra: float, count: bool) -> np.ndarray:
        xs, ys = self._coords()
        out = np.zeros((self.width, self.height), dtype=np.int64)
        for ob in obstacles:
            reach = ob.radius + extra
            d2 = (xs - ob.center.x) ** 2 + (ys - ob.center.y) ** 2
            out += d2 <= reach * reach
        if not count:
            return out > 0
        return out

    @cached_property
    def crater_mask(self) -> np.ndarray:
        return self._grid(self.craters, 0.0, count=False)

    @cached_property
    def dust_mask(self) -> np.ndarray:
        return self._grid(self.dust, 0.0, count=False)

    @cached_property
    def crater_fov_counts(self) -> np.ndarray:
        return self._grid(self.craters, self.fov_radius, count=True)

    @cached_property
    def dust_fov_counts(self) -> np.ndarray:
        return self._grid(self.dust, self.fov_radius, count=True)

    def in_crater(self, cell: Sequence[int]) -> bool:
        return bool(self.crater_mask[cell[0], cell[1]])

    def in_dust(self, cell: Sequence[int]) -> bool:
        return bool(self.dust_mask[cell[0], cell[1]])

    def digest(self) -> str:
        """Short stable hash of the obstacle layout."""
        h = hashlib.sha256()
        for ob in self.obstacles:
            h.update(f"{ob.kind.value}:{ob.center.x},{ob.center.y}:{ob.radius!r};".encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class AgentState:
    pos: Cell
    s_c: int = 0
    s_z: int = 0
    hits: int = 0
    t: int = 0
    broken: bool = False
    delivered: bool = False

    @property
    def finished(self) -> bool:
        return self.broken or self.delivered


@dataclass(frozen=True)
class StepEvents:
    crater_hit: bool = False
    broken: bool = False
    reached_goal: bool = False
    in_dust: bool = False
    visible: tuple[Obstacle, ...] = ()


# ---------------------------------------------------------------------------
# Change events applied to the true world
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResampleAll:
    pass


@dataclass(frozen=True)
class DeleteAll:
    pass


@dataclass(frozen=True)
class AddRandom:
    n_craters: int
    n_dust: int


ChangeEvent = ResampleAll | DeleteAll | AddRandom

_MAX_PLACEMENT_TRIES = 1000


def _draw_cell(rng: np.random.Generator, cfg: EnvConfig, exclude: Cell,
               taken: set[Cell]) -> Cell:
    for _ in range(_MAX_PLACEMENT_TRIES):
        c = Cell(int(rng.integers(cfg.width)), int(rng.integers(cfg.height)))
        if c != exclude and c not in taken:
            return c
    raise PlacementError(f"could not place an obstacle away from {exclude} "
                         f"after {_MAX_PLACEMENT_TRIES} tries")


def _draw_near(rng: np.random.Generator, cfg: EnvConfig, anchor: Cell, exclude: Cell,
               taken: set[Cell]) -> Cell:
    d = cfg.dust_near_crater_dist
    for _ in range(_MAX_PLACEMENT_TRIES):
        x = int(np.clip(anchor.x + rng.integers(-d, d + 1), 0, cfg.width - 1))
        y = int(np.clip(anchor.y + rng.integers(-d, d + 1), 0, cfg.height - 1))
        if (x, y) != exclude and (x, y) not in taken:
            return Cell(x, y)
    raise PlacementError(f"could not place dust near {anchor} away from {exclude}")


def spawn_obstacles(cfg: EnvConfig, rng: np.random.Generator, exclude: Cell,
                    n_craters: int | None = None, n_dust: int | None = None,
                    existing: Sequence[Obstacle] = ()) -> ObstacleMap:
    """Place craters uniformly, then dust zones, biased towards crater centers.

    No two obstacles of one kind share a center. ``existing`` obstacles (when
    adding to a map) keep their centers reserved and their craters also
    attract new dust.
    """
    exclude = Cell(*exclude)
    if not cfg.in_bounds(exclude):
        raise ValueError(f"exclude cell {exclude} is out of bounds")
    n_craters = cfg.n_craters if n_craters is None else n_craters
    n_dust = cfg.n_dust if n_dust is None else n_dust
    taken_c = {ob.center for ob in existing if ob.kind is Kind.CRATER}
    taken_z = {ob.center for ob in existing if ob.kind is Kind.DUST}

    craters = []
    for _ in range(n_craters):
        center = _draw_cell(rng, cfg, exclude, taken_c)
        taken_c.add(center)
        craters.append(Obstacle(center, cfg.crater_radius, Kind.CRATER))
    pool = craters + [ob for ob in existing if ob.kind is Kind.CRATER]
    dust = []
    for _ in range(n_dust):
        if pool and rng.random() < cfg.dust_near_crater_prob:
            anchor = pool[int(rng.integers(len(pool)))].center
            center = _draw_near(rng, cfg, anchor, exclude, taken_z)
        else:
            center = _draw_cell(rng, cfg, exclude, taken_z)
        taken_z.add(center)
        dust.append(Obstacle(center, cfg.dust_radius, Kind.DUST))
    return ObstacleMap.empty(cfg).with_obstacles(craters, dust)


def apply_change_event(obstacles: ObstacleMap, event: ChangeEvent, cfg: EnvConfig,
                       rng: np.random.Generator, exclude: Cell) -> ObstacleMap:
    if isinstance(event, ResampleAll):
        return spawn_obstacles(cfg, rng, exclude)
    if isinstance(event, DeleteAll):
        return obstacles.with_obstacles()
    if isinstance(event, AddRandom):
        fresh = spawn_obstacles(cfg, rng, exclude, event.n_craters, event.n_dust,
                                existing=obstacles.obstacles)
        return obstacles.with_obstacles(obstacles.craters + fresh.craters,
                                        obstacles.dust + fresh.dust)
    raise TypeError(f"unknown change event {event!r}")


# ---------------------------------------------------------------------------
# Sensing and dynamics
# ---------------------------------------------------------------------------

def sense(obstacles: ObstacleMap, pos: Cell, in_dust: bool, rng: np.random.Generator,
          miss_prob: float = 0.0) -> tuple[int, int, tuple[Obstacle, ...]]:
    """Count craters and dust zones intersecting the field of view at ``pos``.

    Inside dust each obstacle in view is dropped independently with probability
    ``miss_prob``. Random numbers are drawn only when ``in_dust`` is true.
    """
    visible = []
    for ob in obstacles.obstacles:
        if not ob.in_fov(pos, obstacles.fov_radius):
            continue
        if in_dust and rng.random() < miss_prob:
            continue
        visible.append(ob)
    s_c = sum(1 for ob in visible if ob.kind is Kind.CRATER)
    return s_c, len(visible) - s_c, tuple(visible)


def move(x, y, action, width: int, height: int):
    """One-cell move clamped to the grid. Works elementwise on arrays."""
    d = ACTION_DELTAS[action]
    nx = np.clip(x + d[..., 0], 0, width - 1)
    ny = np.clip(y + d[..., 1], 0, height - 1)
    return nx, ny


def step(state: AgentState, action: Action, obstacles: ObstacleMap, cfg: EnvConfig,
         rng: np.random.Generator) -> tuple[AgentState, StepEvents]:
    if state.finished or state.t >= cfg.horizon:
        raise EpisodeOver(f"cannot step a finished episode (t={state.t}, "
                          f"broken={state.broken}, delivered={state.delivered})")
    a = int(action)
    if obstacles.in_dust(state.pos) and rng.random() < cfg.slip_prob:
        a = int(rng.integers(N_ACTIONS))
    nx, ny = move(state.pos.x, state.pos.y, a, cfg.width, cfg.height)
    pos = Cell(int(nx), int(ny))

    crater_hit = obstacles.in_crater(pos) and not obstacles.in_crater(state.pos)
    hits = state.hits + int(crater_hit)
    broken = hits >= cfg.hit_budget
    reached = (not broken) and pos in cfg.goals
    in_dust = obstacles.in_dust(pos)
    s_c, s_z, visible = sense(obstacles, pos, in_dust, rng, cfg.sensor_miss_prob)
    new = AgentState(pos, s_c, s_z, hits, state.t + 1, broken, reached)
    return new, StepEvents(crater_hit, broken, reached, in_dust, visible)


@dataclass
class DeliveryEnv:
    """The true world an agent acts in, with optional scheduled changes.

    ``schedule`` maps a timestep to the change applied right after the agent
    arrives at that timestep, before it observes.
    """
    cfg: EnvConfig
    obstacles: ObstacleMap
    rng: np.random.Generator
    world_rng: np.random.Generator
    schedule: dict[int, ChangeEvent] = field(default_factory=dict)
    state: AgentState | None = None
    last_events: StepEvents | None = None

    def reset(self, start: Cell | None = None) -> AgentState:
        pos = Cell(*(start or self.cfg.start))
        in_dust = self.obstacles.in_dust(pos)
        s_c, s_z, visible = sense(self.obstacles, pos, in_dust, self.rng,
                                  self.cfg.sensor_miss_prob)
        self.state = AgentState(pos, s_c, s_z, 0, 0, False, pos in self.cfg.goals)
        self.last_events = StepEvents(in_dust=in_dust, visible=visible)
        return self.state

    @property
    def done(self) -> bool:
        return self.state.finished or self.state.t >= self.cfg.horizon

    def step(self, action: Action) -> tuple[AgentState, StepEvents]:
        state, events = step(self.state, action, self.obstacles, self.cfg, self.rng)
        change = self.schedule.get(state.t)
        if change is not None:
            self.obstacles = apply_change_event(self.obstacles, change, self.cfg,
                                                self.world_rng, exclude=state.pos)
            in_dust = self.obstacles.in_dust(state.pos)
            s_c, s_z, visible = sense(self.obstacles, state.pos, in_dust, self.rng,
                                      self.cfg.sensor_miss_prob)
            state = replace(state, s_c=s_c, s_z=s_z)
            events = replace(events, in_dust=in_dust, visible=visible)
        self.state, self.last_events = state, events
        return state, events
