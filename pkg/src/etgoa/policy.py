"""Tabular Q-learning: one obstacle-free navigation policy per goal."""
from __future__ import annotations

import logging
import random
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gridworld import ACTION_DELTAS, N_ACTIONS, Action, Cell

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_MAGIC = b"ETQT"
_HEADER = struct.Struct("<4sIIIiiI")  # magic, version, width, height, goal_x, goal_y, n_actions


class TrainingError(RuntimeError):
    pass


class PolicyFormatError(ValueError):
    pass


@dataclass
class TrainingConfig:
    episodes: int = 400_000
    learning_rate: float = 0.1
    discount: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    step_reward: float = -1.0
    goal_reward: float = 100.0
    horizon: int = 100


@dataclass(frozen=True)
class QTable:
    values: np.ndarray  # (width, height, n_actions)
    goal: Cell

    @property
    def width(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def actions(self) -> np.ndarray:
        """Greedy action for every cell, ``[x, y]`` indexed."""
        cached = self.__dict__.get("_actions")
        if cached is None:
            # argmax returns the first maximum, i.e. the lowest Action value
            cached = np.argmax(self.values, axis=2)
            cached.flags.writeable = False
            object.__setattr__(self, "_actions", cached)
        return cached

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return self.goal == other.goal and np.array_equal(self.values, other.values)

    __hash__ = None


def greedy_action(q: QTable, pos: Cell) -> Action:
    return Action(int(q.actions[pos[0], pos[1]]))


def greedy_path_lengths(q: QTable, max_steps: int | None = None) -> np.ndarray:
    """Steps needed by the greedy policy from every cell to reach the goal.

    Cells that fail to arrive within ``max_steps`` get -1.
    """
    w, h = q.width, q.height
    max_steps = max_steps or 2 * (w + h)
    xs, ys = np.meshgrid(np.arange(w), np.arange(h), indexing="ij")
    xs, ys = xs.ravel(), ys.ravel()
    steps = np.full(xs.shape, -1, dtype=np.int64)
    active = ~((xs == q.goal.x) & (ys == q.goal.y))
    steps[~active] = 0
    acts = q.actions
    for k in range(1, max_steps + 1):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        d = ACTION_DELTAS[acts[xs[idx], ys[idx]]]
        xs[idx] = np.clip(xs[idx] + d[:, 0], 0, w - 1)
        ys[idx] = np.clip(ys[idx] + d[:, 1], 0, h - 1)
        arrived = (xs[idx] == q.goal.x) & (ys[idx] == q.goal.y)
        steps[idx[arrived]] = k
        active[idx[arrived]] = False
    return steps.reshape(w, h)


def _check_converged(q: QTable) -> None:
    lengths = greedy_path_lengths(q)
    xs, ys = np.meshgrid(np.arange(q.width), np.arange(q.height), indexing="ij")
    manhattan = np.abs(xs - q.goal.x) + np.abs(ys - q.goal.y)
    bad = (lengths < 0) | (lengths > 2 * manhattan)
    if bad.any():
        worst = np.argwhere(bad)[:5].tolist()
        raise TrainingError(
            f"greedy policy for goal {tuple(q.goal)} fails from {int(bad.sum())} of "
            f"{bad.size} start cells (e.g. {worst}); "
            f"mean excess steps {float(np.mean(np.maximum(lengths - manhattan, 0))):.2f}")


def train(goal: Cell, hyper: TrainingConfig | None = None, rng: np.random.Generator | None = None,
          width: int = 50, height: int = 50, check: bool = True) -> QTable:
    """Q-learning on an empty grid with uniformly random start cells."""
    hyper = hyper or TrainingConfig()
    goal = Cell(*goal)
    if not (0 <= goal.x < width and 0 <= goal.y < height):
        raise ValueError(f"goal {goal} outside {width}x{height} grid")
    rng = rng if rng is not None else np.random.default_rng(0)
    # The inner loop is scalar; the stdlib generator is much cheaper per draw.
    r = random.Random(int(rng.integers(2**63)))

    n_states = width * height
    goal_s = goal.x * height + goal.y
    # successor table: nxt[s * 4 + a]
    nxt = []
    for x in range(width):
        for y in range(height):
            for dx, dy in ACTION_DELTAS.tolist():
                nx = min(max(x + dx, 0), width - 1)
                ny = min(max(y + dy, 0), height - 1)
                nxt.append(nx * height + ny)
    q = [0.0] * (n_states * N_ACTIONS)
    lr, gamma = hyper.learning_rate, hyper.discount
    step_r, goal_r = hyper.step_reward, hyper.goal_reward
    span = max(hyper.episodes - 1, 1)
    arange = range(N_ACTIONS)

    for ep in range(hyper.episodes):
        eps = hyper.epsilon_start + (hyper.epsilon_end - hyper.epsilon_start) * ep / span
        s = goal_s
        while s == goal_s:
            s = r.randrange(n_states)
        for _ in range(hyper.horizon):
            base = s * N_ACTIONS
            if r.random() < eps:
                a = r.randrange(N_ACTIONS)
            else:
                row = q[base:base + N_ACTIONS]
                a = max(arange, key=row.__getitem__)
            s2 = nxt[base + a]
            if s2 == goal_s:
                q[base + a] += lr * (goal_r - q[base + a])
                break
            b2 = s2 * N_ACTIONS
            target = step_r + gamma * max(q[b2:b2 + N_ACTIONS])
            q[base + a] += lr * (target - q[base + a])
            s = s2

    table = QTable(np.array(q, dtype=np.float64).reshape(width, height, N_ACTIONS), goal)
    if check:
        _check_converged(table)
    log.info("trained policy for goal %s over %d episodes", tuple(goal), hyper.episodes)
    return table


def save(q: QTable, path: str | Path) -> None:
    header = _HEADER.pack(_MAGIC, FORMAT_VERSION, q.width, q.height, q.goal.x, q.goal.y,
                          q.values.shape[2])
    Path(path).write_bytes(header + np.ascontiguousarray(q.values, dtype="<f8").tobytes())


def load(path: str | Path, width: int | None = None, height: int | None = None) -> QTable:
    """Read a policy file; ``width``/``height`` if given must match the header."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise PolicyFormatError(f"{path}: truncated header")
    magic, version, w, h, gx, gy, na = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise PolicyFormatError(f"{path}: not a policy file")
    if version != FORMAT_VERSION:
        raise PolicyFormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if na != N_ACTIONS:
        raise PolicyFormatError(f"{path}: {na} actions, expected {N_ACTIONS}")
    if (width is not None and w != width) or (height is not None and h != height):
        raise PolicyFormatError(f"{path}: grid {w}x{h} does not match {width}x{height}")
    body = data[_HEADER.size:]
    expected = w * h * na * 8
    if len(body) != expected:
        raise PolicyFormatError(f"{path}: expected {expected} value bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").reshape(w, h, na).astype(np.float64)
    return QTable(values, Cell(gx, gy))
