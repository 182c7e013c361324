"""Monte Carlo world model: predicted observation marginals and outcome samples.

Rollouts are advanced together as arrays. Each rollout follows the greedy
policy for its task in a copy of the environment that holds only the
obstacles the agent knows about.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .gridworld import (ACTION_DELTAS, N_ACTIONS, AgentState, Cell, EnvConfig, Kind,
                        Obstacle, ObstacleMap)
from .policy import QTable

MARGINALS = ("s_c", "s_z")


@dataclass(frozen=True)
class MarginalDistribution:
    support: Mapping[int, float]

    @classmethod
    def from_samples(cls, samples: Iterable[int]) -> "MarginalDistribution":
        values, counts = np.unique(np.fromiter(samples, dtype=np.int64), return_counts=True)
        total = counts.sum()
        return cls({int(v): c / total for v, c in zip(values, counts)})

    def mass(self, value: int) -> float:
        return self.support.get(value, 0.0)

    def total(self) -> float:
        return float(sum(self.support.values()))


@dataclass(frozen=True)
class OutcomeSample:
    craters_hit: int
    delivered: bool
    steps: int


@dataclass(frozen=True)
class BufferEntry:
    t: int
    marginals: tuple[MarginalDistribution, ...]
    outcomes: tuple[OutcomeSample, ...]


@dataclass(frozen=True)
class ExperienceBuffer:
    """Predictions from ``start`` through ``horizon`` inclusive.

    ``counts[k, i, r]`` is marginal ``i`` of rollout ``r`` at time ``start + k``.
    """
    start: int
    counts: np.ndarray
    outcomes: tuple[OutcomeSample, ...]
    goal_id: int = 0

    @property
    def horizon(self) -> int:
        return self.start + self.counts.shape[0] - 1

    def get(self, t: int) -> BufferEntry:
        if not self.start <= t <= self.horizon:
            raise IndexError(f"t={t} outside buffer coverage [{self.start}, {self.horizon}]")
        row = self.counts[t - self.start]
        return BufferEntry(t, tuple(MarginalDistribution.from_samples(r) for r in row),
                           self.outcomes)

    def dump(self, path: str | Path) -> None:
        """Write per-timestep histograms as JSON lines, for inspection."""
        with open(path, "w") as fh:
            for t in range(self.start, self.horizon + 1):
                entry = self.get(t)
                fh.write(json.dumps({
                    "t": t,
                    **{name: {str(k): v for k, v in m.support.items()}
                       for name, m in zip(MARGINALS, entry.marginals)},
                }) + "\n")


@dataclass(frozen=True)
class WorldModel:
    cfg: EnvConfig
    known: ObstacleMap
    policies: tuple[QTable, ...]

    def __post_init__(self):
        if len(self.policies) != len(self.cfg.goals):
            raise ValueError(f"{len(self.policies)} policies for {len(self.cfg.goals)} goals")

    def with_known(self, known: ObstacleMap) -> "WorldModel":
        return replace(self, known=known)


def _goal_mask(cfg: EnvConfig) -> np.ndarray:
    mask = np.zeros((cfg.width, cfg.height), dtype=bool)
    for g in cfg.goals:
        mask[g.x, g.y] = True
    return mask


def simulate(model: WorldModel, goal_id: int, state: AgentState, n_rollouts: int,
             rng: np.random.Generator) -> ExperienceBuffer:
    """Roll the greedy policy for ``goal_id`` forward from ``state``.

    Predicted counts use noiseless sensing of the known map. Finished rollouts
    hold their last observation until the horizon.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    cfg, known = model.cfg, model.known
    if state.t >= cfg.horizon and not state.finished:
        raise ValueError(f"state at t={state.t} is already at the horizon {cfg.horizon}")

    acts = model.policies[goal_id].actions
    crater, dust = known.crater_mask, known.dust_mask
    fov_c, fov_z = known.crater_fov_counts, known.dust_fov_counts
    goals = _goal_mask(cfg)

    n = n_rollouts
    x = np.full(n, state.pos.x, dtype=np.int64)
    y = np.full(n, state.pos.y, dtype=np.int64)
    hits = np.full(n, state.hits, dtype=np.int64)
    broken = np.full(n, state.broken)
    delivered = np.full(n, state.delivered)
    end = np.full(n, state.t, dtype=np.int64)
    alive = ~(broken | delivered)

    n_t = max(cfg.horizon - state.t, 0) + 1
    counts = np.empty((n_t, len(MARGINALS), n), dtype=np.int64)
    counts[0, 0] = fov_c[x, y]
    counts[0, 1] = fov_z[x, y]

    for k in range(1, n_t):
        idx = np.flatnonzero(alive)
        if idx.size:
            cx, cy = x[idx], y[idx]
            a = acts[cx, cy]
            slipping = np.flatnonzero(dust[cx, cy])
            if slipping.size:
                slip = rng.random(slipping.size) < cfg.slip_prob
                a[slipping[slip]] = rng.integers(N_ACTIONS, size=int(slip.sum()))
            d = ACTION_DELTAS[a]
            nx = np.clip(cx + d[:, 0], 0, cfg.width - 1)
            ny = np.clip(cy + d[:, 1], 0, cfg.height - 1)
            hit = crater[nx, ny] & ~crater[cx, cy]
            hits[idx] += hit
            b = hits[idx] >= cfg.hit_budget
            g = goals[nx, ny] & ~b
            x[idx], y[idx] = nx, ny
            broken[idx] = b
            delivered[idx] = g
            end[idx] = state.t + k
            alive[idx] = ~(b | g)
        counts[k, 0] = fov_c[x, y]
        counts[k, 1] = fov_z[x, y]

    counts.flags.writeable = False
    outcomes = tuple(OutcomeSample(int(h), bool(dv), int(e))
                     for h, dv, e in zip(hits, delivered, end))
    return ExperienceBuffer(state.t, counts, outcomes, goal_id)


def get(buffer: ExperienceBuffer, t: int) -> BufferEntry:
    return buffer.get(t)


def sync_known_map(model: WorldModel, visible: Sequence[Obstacle], pos: Cell,
                   degraded: bool = False) -> WorldModel:
    """Fold an observation into the model's known obstacles.

    Visible obstacles are added. Known obstacles that should be in view but
    were not seen are dropped, unless ``degraded`` marks the reading as
    unreliable (taken inside dust), in which case nothing is removed.
    """
    known = model.known
    fov = known.fov_radius
    seen = set(visible)
    keep_c = [ob for ob in known.craters
              if degraded or ob in seen or not ob.in_fov(pos, fov)]
    keep_z = [ob for ob in known.dust
              if degraded or ob in seen or not ob.in_fov(pos, fov)]
    have = set(keep_c) | set(keep_z)
    for ob in visible:
        if ob not in have:
            (keep_c if ob.kind is Kind.CRATER else keep_z).append(ob)
            have.add(ob)
    if tuple(keep_c) == known.craters and tuple(keep_z) == known.dust:
        return model
    return model.with_known(known.with_obstacles(keep_c, keep_z))
