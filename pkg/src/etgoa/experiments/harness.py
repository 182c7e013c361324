"""Experiment runners: goal choice under three assessment conditions, and
confidence tracking through scheduled difficulty changes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import policy as qpolicy
from ..assessment import (ConfidenceReport, EpisodeRecord, TriggerConfig, default_thresholds,
                          et_goa_session)
from ..gridworld import (AddRandom, AgentState, Cell, DeleteAll, DeliveryEnv, EnvConfig,
                         ObstacleMap, ResampleAll, spawn_obstacles)
from ..policy import QTable, TrainingConfig, greedy_action
from ..rollout import WorldModel

log = logging.getLogger(__name__)

CONDITIONS = ("none", "goa", "etgoa")
ENVIRONMENTS = ("static", "dynamic")
SCHEDULES = ("ehe", "heh")
SNAPSHOTS = ("initial", "change1", "change2")


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    n_rollouts: int = 50
    delta: float = 0.05
    change_time: int = 10
    exp2_goal: int = 1
    exp2_change_times: tuple[int, int] = (10, 30)
    # obstacles added by the exp2 AddRandom event; None means the EnvConfig counts
    add_craters: int | None = None
    add_dust: int | None = None


@dataclass(frozen=True)
class Condition:
    kind: str
    environment: str

    def __post_init__(self):
        if self.kind not in CONDITIONS:
            raise ValueError(f"unknown condition {self.kind!r}; expected one of {CONDITIONS}")
        if self.environment not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.environment!r}")


@dataclass
class TrialResult:
    episode: int
    condition: str
    env: str
    delivered: bool
    craters_hit: int
    steps: int
    n_triggers: int
    seed: int
    world_hash: str
    goals: tuple[int, ...] = ()
    n_assessments: int = 0


@dataclass
class ConfidenceTrace:
    episode: int
    schedule: str
    reports: list[ConfidenceReport]
    # snapshot name -> (t, confidence, triggered)
    snapshots: dict[str, tuple[int, float, bool]]
    seed: int = 0


# ---------------------------------------------------------------------------
# Goal choice
# ---------------------------------------------------------------------------

def select_goal(confidences: dict[int, float] | Sequence[float], pos: Cell,
                goals: Sequence[Cell]) -> int:
    """Most confident goal; ties go to the nearest (Manhattan), then lowest id."""
    if not isinstance(confidences, dict):
        confidences = dict(enumerate(confidences))
    if not confidences:
        raise ValueError("no confidences to choose from")
    best = max(confidences.values())

    def key(g):
        return abs(goals[g][0] - pos[0]) + abs(goals[g][1] - pos[1]), g

    return min((g for g, c in confidences.items() if c == best), key=key)


def _selector(cfg: EnvConfig):
    def choose(report: ConfidenceReport, state: AgentState, current: int) -> int:
        return select_goal(dict(report.per_goal), state.pos, cfg.goals)
    return choose


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

def policy_path(directory: str | Path, goal_id: int) -> Path:
    return Path(directory) / f"goal{goal_id}.qtable"


def load_policies(directory: str | Path, cfg: EnvConfig) -> tuple[QTable, ...]:
    out = []
    for i, goal in enumerate(cfg.goals):
        path = policy_path(directory, i)
        if not path.exists():
            raise FileNotFoundError(f"missing policy for goal {i} at {path}; run `etgoa train` first")
        q = qpolicy.load(path, cfg.width, cfg.height)
        if q.goal != goal:
            raise qpolicy.PolicyFormatError(f"{path} was trained for goal {tuple(q.goal)}, "
                                            f"config expects {tuple(goal)}")
        out.append(q)
    return tuple(out)


def train_policies(directory: str | Path, cfg: EnvConfig, training: TrainingConfig,
                   seed: int = 0, goal_ids: Sequence[int] | None = None,
                   overwrite: bool = False) -> None:
    Path(directory).mkdir(parents=True, exist_ok=True)
    for i in goal_ids if goal_ids is not None else range(len(cfg.goals)):
        path = policy_path(directory, i)
        if path.exists() and not overwrite:
            continue
        rng = np.random.default_rng([seed, i])
        q = qpolicy.train(cfg.goals[i], training, rng, cfg.width, cfg.height)
        qpolicy.save(q, path)
        log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

def episode_streams(seed: int, episode: int) -> dict[str, np.random.Generator]:
    """Independent generators for one episode.

    The same ``(seed, episode)`` yields the same worlds and noise in every
    condition, so conditions are compared on matched worlds.
    """
    children = np.random.SeedSequence(seed, spawn_key=(episode,)).spawn(4)
    return {name: np.random.default_rng(c)
            for name, c in zip(("world", "env", "model", "choice"), children)}


def drive(env: DeliveryEnv, q: QTable, goal_id: int) -> EpisodeRecord:
    """Follow one greedy policy to the end of the episode without assessing."""
    record = EpisodeRecord(states=[env.state])
    while not env.done:
        action = greedy_action(q, env.state.pos)
        state, _ = env.step(action)
        record.actions.append(action)
        record.goals.append(goal_id)
        record.states.append(state)
    return record


def run_trial(xcfg: ExperimentConfig, policies: Sequence[QTable], condition: Condition,
              seed: int, episode: int) -> tuple[TrialResult, list[ConfidenceReport]]:
    cfg = xcfg.env
    rng = episode_streams(seed, episode)
    truth = spawn_obstacles(cfg, rng["world"], exclude=cfg.start)
    schedule = {xcfg.change_time: ResampleAll()} if condition.environment == "dynamic" else {}
    env = DeliveryEnv(cfg, truth, rng["env"], rng["world"], schedule)
    env.reset()

    if condition.kind == "none":
        goal = int(rng["choice"].integers(len(cfg.goals)))
        record, reports = drive(env, policies[goal], goal), []
    else:
        model = WorldModel(cfg, truth, tuple(policies))
        delta = xcfg.delta if condition.kind == "etgoa" else -1.0
        record, reports = et_goa_session(
            model, env, 0, default_thresholds(cfg), TriggerConfig(delta), rng["model"],
            n_rollouts=xcfg.n_rollouts, select=_selector(cfg))
    record.world_hash = truth.digest()
    result = TrialResult(
        episode=episode, condition=condition.kind, env=condition.environment,
        delivered=record.delivered, craters_hit=record.craters_hit, steps=record.steps,
        n_triggers=record.n_triggers, seed=seed, world_hash=record.world_hash,
        goals=tuple(record.goal_history), n_assessments=len(reports))
    return result, reports


def run_experiment_1(xcfg: ExperimentConfig, policies: Sequence[QTable], n_episodes: int = 100,
                     seed: int = 0, environments: Sequence[str] = ENVIRONMENTS,
                     conditions: Sequence[str] = CONDITIONS,
                     ) -> dict[Condition, tuple[list[TrialResult], list[tuple[int, ConfidenceReport]]]]:
    """Trials for every requested (environment, condition) pair.

    Returns, per condition, the trial results in episode order and the
    ``(episode, report)`` pairs emitted during those trials.
    """
    out = {}
    for environment in environments:
        for kind in conditions:
            cond = Condition(kind, environment)
            results, reports = [], []
            for ep in range(n_episodes):
                res, reps = run_trial(xcfg, policies, cond, seed, ep)
                results.append(res)
                reports.extend((ep, r) for r in reps)
            log.info("exp1 %s/%s: %d/%d delivered", environment, kind,
                     sum(r.delivered for r in results), n_episodes)
            out[cond] = (results, reports)
    return out


def _initial_world(schedule: str, cfg: EnvConfig, rng: np.random.Generator) -> ObstacleMap:
    if schedule == "ehe":
        return ObstacleMap.empty(cfg)
    return spawn_obstacles(cfg, rng, exclude=cfg.start)


def _change_schedule(schedule: str, xcfg: ExperimentConfig) -> dict:
    add = AddRandom(xcfg.env.n_craters if xcfg.add_craters is None else xcfg.add_craters,
                    xcfg.env.n_dust if xcfg.add_dust is None else xcfg.add_dust)
    first, second = xcfg.exp2_change_times
    if schedule == "ehe":
        return {first: add, second: DeleteAll()}
    return {first: DeleteAll(), second: add}


def snapshots(reports: Sequence[ConfidenceReport], goal_id: int,
              change_times: Sequence[int]) -> dict[str, tuple[int, float, bool]]:
    """Confidence at the start and after each change.

    After change ``k`` the snapshot is the first report at or after the change
    and before the next one. Without such a report the previous snapshot value
    carries over with ``triggered=False``.
    """
    first = reports[0]
    out = {SNAPSHOTS[0]: (first.t, first.per_goal[goal_id], False)}
    bounds = list(change_times) + [float("inf")]
    prev = out[SNAPSHOTS[0]]
    for k, name in enumerate(SNAPSHOTS[1:]):
        lo, hi = bounds[k], bounds[k + 1]
        hit = next((r for r in reports if lo <= r.t < hi), None)
        if hit is None:
            out[name] = (prev[0], prev[1], False)
        else:
            out[name] = (hit.t, hit.per_goal[goal_id], True)
        prev = out[name]
    return out


def run_trace(xcfg: ExperimentConfig, policies: Sequence[QTable], schedule: str, seed: int,
              episode: int) -> ConfidenceTrace:
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}; expected one of {SCHEDULES}")
    cfg = xcfg.env
    rng = episode_streams(seed, episode)
    truth = _initial_world(schedule, cfg, rng["world"])
    env = DeliveryEnv(cfg, truth, rng["env"], rng["world"], _change_schedule(schedule, xcfg))
    env.reset()
    model = WorldModel(cfg, truth, tuple(policies))
    goal = xcfg.exp2_goal
    _, reports = et_goa_session(model, env, goal, default_thresholds(cfg),
                                TriggerConfig(xcfg.delta), rng["model"],
                                n_rollouts=xcfg.n_rollouts, assess_goals=[goal])
    return ConfidenceTrace(episode, schedule, reports,
                           snapshots(reports, goal, xcfg.exp2_change_times), seed)


def run_experiment_2(xcfg: ExperimentConfig, policies: Sequence[QTable], n_episodes: int = 100,
                     seed: int = 0, schedules: Sequence[str] = SCHEDULES,
                     ) -> dict[str, list[ConfidenceTrace]]:
    out = {}
    for schedule in schedules:
        out[schedule] = [run_trace(xcfg, policies, schedule, seed, ep) for ep in range(n_episodes)]
    return out
