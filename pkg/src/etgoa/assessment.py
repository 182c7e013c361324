"""Surprise Index, Generalized Outcome Assessment and the event-triggered loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .gridworld import Action, AgentState, DeliveryEnv, EnvConfig
from .policy import greedy_action
from .rollout import (MARGINALS, ExperienceBuffer, MarginalDistribution, OutcomeSample,
                      WorldModel, simulate, sync_known_map)

NORMALIZATION_TOL = 1e-9


# ---------------------------------------------------------------------------
# Surprise Index
# ---------------------------------------------------------------------------

def surprise_index(observed: int, dist: MarginalDistribution) -> float:
    """Total mass of support values no more probable than ``observed``.

    0 is maximally surprising (``observed`` has no mass), 1 means ``observed``
    is a mode. Values tied in mass with ``observed`` are included.
    """
    total = math.fsum(dist.support.values())
    if abs(total - 1.0) > NORMALIZATION_TOL or any(m < 0 for m in dist.support.values()):
        raise ValueError(f"distribution is not normalized (total mass {total!r})")
    p = dist.mass(observed)
    if p <= 0.0:
        return 0.0
    return min(1.0, math.fsum(m for m in dist.support.values() if m <= p))


# ---------------------------------------------------------------------------
# Generalized Outcome Assessment
# ---------------------------------------------------------------------------

class Outcome(Enum):
    CRATERS_HIT = "craters_hit"
    DELIVERED = "delivered"


class Direction(Enum):
    FEWER_IS_BETTER = "fewer"
    MORE_IS_BETTER = "more"


_DIRECTIONS = {
    Outcome.CRATERS_HIT: Direction.FEWER_IS_BETTER,
    Outcome.DELIVERED: Direction.MORE_IS_BETTER,
}


@dataclass(frozen=True)
class OutcomeThreshold:
    outcome: Outcome
    value: float

    @property
    def direction(self) -> Direction:
        return _DIRECTIONS[self.outcome]

    def attained(self, sample: OutcomeSample) -> bool:
        v = getattr(sample, self.outcome.value)
        if self.direction is Direction.FEWER_IS_BETTER:
            return v <= self.value
        return v >= self.value


def default_thresholds(cfg: EnvConfig) -> tuple[OutcomeThreshold, ...]:
    """Survive (fewer hits than the budget) and deliver the cargo."""
    return (OutcomeThreshold(Outcome.CRATERS_HIT, cfg.hit_budget - 1),
            OutcomeThreshold(Outcome.DELIVERED, 1))


def goa(samples: Sequence[OutcomeSample], thresholds: Iterable[OutcomeThreshold]) -> float:
    """Fraction of rollouts meeting each threshold, minimised over thresholds."""
    if not samples:
        raise ValueError("goa needs at least one outcome sample")
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("goa needs at least one outcome threshold")
    n = len(samples)
    return min(sum(th.attained(s) for s in samples) / n for th in thresholds)


_LABELS = ((0.25, "highly unlikely"), (0.5, "unlikely"), (0.75, "likely"))


def semantic_label(confidence: float) -> str:
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence must be in [0, 1], got {confidence}")
    for upper, label in _LABELS:
        if confidence < upper:
            return label
    return "highly likely"


# ---------------------------------------------------------------------------
# Event-triggered session
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriggerConfig:
    """Per-marginal surprise thresholds.

    A scalar ``delta`` is shared by all marginals. Any negative value disables
    triggering since the Surprise Index is never below zero.
    """
    delta: float | tuple[float, ...] = 0.05
    marginals: tuple[str, ...] = MARGINALS

    def __post_init__(self):
        for d in self.deltas:
            if d > 1.0:
                raise ValueError(f"surprise threshold {d} above 1 would always trigger")

    @property
    def deltas(self) -> tuple[float, ...]:
        if isinstance(self.delta, (int, float)):
            return (float(self.delta),) * len(self.marginals)
        if len(self.delta) != len(self.marginals):
            raise ValueError("need one threshold per monitored marginal")
        return tuple(float(d) for d in self.delta)


INITIAL = "initial"
SURPRISE = "surprise"


@dataclass(frozen=True)
class ConfidenceReport:
    t: int
    per_goal: Mapping[int, float]
    trigger: str = INITIAL
    si_min: float | None = None
    marginal: str | None = None

    @property
    def triggered(self) -> bool:
        return self.trigger == SURPRISE

    def row(self, episode: int, n_goals: int = 3) -> dict:
        out = {"episode": episode, "t": self.t,
               "trigger": self.trigger if not self.marginal else f"{self.trigger}:{self.marginal}",
               "si_min": "" if self.si_min is None else repr(self.si_min)}
        for g in range(n_goals):
            c = self.per_goal.get(g)
            out[f"goa_g{g}"] = "" if c is None else repr(c)
        return out


@dataclass
class EpisodeRecord:
    states: list[AgentState] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    goals: list[int] = field(default_factory=list)
    reports: list[ConfidenceReport] = field(default_factory=list)
    world_hash: str = ""

    @property
    def final(self) -> AgentState:
        return self.states[-1]

    @property
    def delivered(self) -> bool:
        return self.final.delivered

    @property
    def broken(self) -> bool:
        return self.final.broken

    @property
    def craters_hit(self) -> int:
        return self.final.hits

    @property
    def steps(self) -> int:
        return self.final.t

    @property
    def n_triggers(self) -> int:
        return sum(r.triggered for r in self.reports)

    @property
    def goal_history(self) -> list[int]:
        """Goal ids in the order they were adopted, without repeats."""
        out: list[int] = []
        for g in self.goals:
            if not out or out[-1] != g:
                out.append(g)
        return out


def assess(model: WorldModel, state: AgentState, goal_ids: Sequence[int],
           thresholds: Sequence[OutcomeThreshold], n_rollouts: int,
           rng: np.random.Generator) -> tuple[dict[int, ExperienceBuffer], dict[int, float]]:
    """Simulate every goal from ``state`` and score each one."""
    buffers = {g: simulate(model, g, state, n_rollouts, rng) for g in goal_ids}
    return buffers, {g: goa(b.outcomes, thresholds) for g, b in buffers.items()}


def observed_marginals(state: AgentState) -> tuple[int, int]:
    return state.s_c, state.s_z


GoalSelector = Callable[[ConfidenceReport, AgentState, int], int]


def et_goa_session(model: WorldModel, env: DeliveryEnv, goal_id: int,
                   thresholds: Sequence[OutcomeThreshold], trigger: TriggerConfig,
                   rng: np.random.Generator, *, n_rollouts: int = 50,
                   assess_goals: Sequence[int] | None = None,
                   select: GoalSelector | None = None,
                   ) -> tuple[EpisodeRecord, list[ConfidenceReport]]:
    """Run one episode, re-assessing whenever an observation is surprising.

    ``env`` must already be reset. ``select(report, state, current_goal)`` is
    called after every report and returns the goal to pursue from then on;
    without it the agent keeps ``goal_id``.
    """
    goal_ids = list(range(len(model.policies))) if assess_goals is None else list(assess_goals)
    deltas = trigger.deltas
    state = env.state
    record = EpisodeRecord(states=[state])

    def report(kind, si_min=None, marginal=None):
        nonlocal goal_id
        buffers, conf = assess(model, state, goal_ids, thresholds, n_rollouts, rng)
        rep = ConfidenceReport(state.t, conf, kind, si_min, marginal)
        record.reports.append(rep)
        if select is not None:
            goal_id = select(rep, state, goal_id)
        if goal_id not in buffers:
            buffers[goal_id] = simulate(model, goal_id, state, n_rollouts, rng)
        return buffers[goal_id]

    buffer = report(INITIAL)
    while not env.done:
        action = greedy_action(model.policies[goal_id], state.pos)
        state, events = env.step(action)
        record.actions.append(action)
        record.goals.append(goal_id)
        record.states.append(state)
        if env.done:
            break
        model = sync_known_map(model, events.visible, state.pos, degraded=events.in_dust)
        try:
            entry = buffer.get(state.t)
        except IndexError as exc:
            raise RuntimeError(f"experience buffer has no prediction for t={state.t}") from exc
        sis = [surprise_index(obs, m) for obs, m in zip(observed_marginals(state), entry.marginals)]
        margin = [si - d for si, d in zip(sis, deltas)]
        worst = int(np.argmin(margin))
        if margin[worst] <= 0.0:
            buffer = report(SURPRISE, min(sis), trigger.marginals[worst])
    return record, record.reports
