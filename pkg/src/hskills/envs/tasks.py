"""Task wrappers around the planar robot: randomized obstacle courses,
ball-kicking, and pole balancing, plus a flat variant used for skill
pre-training.

Each task provides three observation blocks per frame: proprioceptive state,
goal features (torso/feet measurements used for goal-directed control), and
task-specific features such as distances to upcoming obstacles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .robot import (
    ACTION_DIM,
    DT,
    GRAVITY,
    PROPRIO_DIM,
    RobotState,
    foot_contacts,
    goal_features,
    initial_state,
    proprio_features,
    step_dynamics,
)

TASK_KINDS = (
    "pretrain",
    "hurdles",
    "limbo",
    "hurdleslimbo",
    "stairs",
    "gaps",
    "goalwall",
    "polebalance",
)

N_COURSE_OBSTACLES = 80

HURDLE_SPACING = (3.0, 6.0)
HURDLE_HEIGHT = (0.1, 0.3)
HURDLE_HALF_WIDTH = 0.05
LIMBO_HEIGHT = (1.2, 1.5)
LIMBO_RADIUS = 0.1
STAIR_HEIGHT = 0.2
STAIR_LENGTH = (0.5, 1.0)
N_STAIRS = 10
STAIR_PLATFORM_LENGTH = 3.0
COURSE_START = 4.0
GAP_WIDTH = (0.2, 0.7)
PLATFORM_LENGTH = (0.5, 2.5)
GAP_DEPTH = 0.05
BALL_START_X = 2.5
BALL_RADIUS = 0.12
WALL_DISTANCE = 4.0
TARGET_HEIGHT = 1.0
TARGET_RADIUS = 0.4
KICK_RADIUS = 0.3
KICK_GAIN = 2.5
POLE_LENGTH = 0.5
POLE_MASS = 0.5
POLE_FALL_FRACTION = 0.8
GOALWALL_EPISODE_LIMIT = 250
DEFAULT_EPISODE_LIMIT = 1000

TASK_DIMS = {
    "pretrain": 0,
    "hurdles": 2,
    "limbo": 2,
    "hurdleslimbo": 3,
    "stairs": 2,
    "gaps": 2,
    "goalwall": 4,
    "polebalance": 2,
}


@dataclass
class TaskConfig:
    kind: str
    layout: dict
    episode_limit: Optional[int]

    def describe(self) -> str:
        lines = [f"task: {self.kind}", f"episode_limit: {self.episode_limit}"]
        for k in sorted(self.layout):
            v = self.layout[k]
            if isinstance(v, np.ndarray):
                v = np.array2string(v, precision=3, threshold=12)
            lines.append(f"{k}: {v}")
        return "\n".join(lines)


@dataclass
class EnvFrame:
    s_p: np.ndarray
    s_g: np.ndarray
    s_plus: np.ndarray
    reward: float
    done: bool
    invalid: bool


def sample_layout(kind: str, rng: np.random.Generator) -> dict:
    """Draw the randomized course layout for one episode of ``kind``.

    Exposed separately so the layout distributions can be checked directly.
    """
    if kind in ("pretrain", "polebalance"):
        return {}
    if kind in ("hurdles", "limbo", "hurdleslimbo"):
        spacings = rng.uniform(*HURDLE_SPACING, size=N_COURSE_OBSTACLES)
        xs = np.cumsum(spacings)
        if kind == "hurdles":
            kinds = np.zeros(N_COURSE_OBSTACLES, dtype=int)
        elif kind == "limbo":
            kinds = np.ones(N_COURSE_OBSTACLES, dtype=int)
        else:
            kinds = np.arange(N_COURSE_OBSTACLES) % 2   # hurdle first
        heights = np.where(
            kinds == 0,
            rng.uniform(*HURDLE_HEIGHT, size=N_COURSE_OBSTACLES),
            rng.uniform(*LIMBO_HEIGHT, size=N_COURSE_OBSTACLES),
        )
        return {"xs": xs, "heights": heights, "kinds": kinds}
    if kind == "stairs":
        lengths = rng.uniform(*STAIR_LENGTH, size=2 * N_STAIRS)
        edges = [COURSE_START]
        for ln in lengths[:N_STAIRS]:
            edges.append(edges[-1] + ln)
        edges.append(edges[-1] + STAIR_PLATFORM_LENGTH)
        for ln in lengths[N_STAIRS:]:
            edges.append(edges[-1] + ln)
        edges = np.array(edges)
        up = STAIR_HEIGHT * np.arange(1, N_STAIRS + 1)
        down = up[::-1][1:]   # 1.8 .. 0.2, then ground level after the last drop
        levels = np.concatenate([[0.0], up, [up[-1]], down, [0.0], [0.0]])
        return {"edges": edges, "levels": levels, "lengths": lengths}
    if kind == "gaps":
        gaps = rng.uniform(*GAP_WIDTH, size=N_COURSE_OBSTACLES)
        platforms = rng.uniform(*PLATFORM_LENGTH, size=N_COURSE_OBSTACLES)
        gap_starts = np.empty(N_COURSE_OBSTACLES)
        platform_starts = np.empty(N_COURSE_OBSTACLES)
        x = COURSE_START
        for i in range(N_COURSE_OBSTACLES):
            gap_starts[i] = x
            x += gaps[i]
            platform_starts[i] = x
            x += platforms[i]
        return {
            "gap_starts": gap_starts, "gap_widths": gaps,
            "platform_starts": platform_starts, "platform_lengths": platforms,
        }
    if kind == "goalwall":
        return {
            "ball_x": BALL_START_X + rng.normal(0.0, 0.01),
            "ball_z": max(BALL_RADIUS + rng.normal(0.0, 0.01), BALL_RADIUS),
            "ball_rot": rng.normal(0.0, 0.1),
            "wall_x": BALL_START_X + WALL_DISTANCE,
        }
    raise ValueError(f"unknown task kind: {kind}")


class TaskEnv:
    """Gym-style planar robot task: ``reset(seed)`` then ``step(action)``."""

    action_dim = ACTION_DIM
    proprio_dim = PROPRIO_DIM

    def __init__(self, kind: str):
        if kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind: {kind}")
        self.kind = kind
        self.task_dim = TASK_DIMS[kind]
        self.config: Optional[TaskConfig] = None
        self.state: Optional[RobotState] = None
        self._steps = 0
        self._passed = 0
        self._ball = None
        self._pole = None
        self._done = True

    # -- layout-dependent terrain ------------------------------------------

    def ground_height(self, x: float) -> float:
        if self.kind == "stairs":
            lay = self.config.layout
            i = int(np.searchsorted(lay["edges"], x, side="right"))
            return float(lay["levels"][i])
        if self.kind == "gaps":
            lay = self.config.layout
            i = int(np.searchsorted(lay["gap_starts"], x, side="right")) - 1
            if i >= 0 and x < lay["platform_starts"][i]:
                return -GAP_DEPTH
            return 0.0
        if self.kind == "hurdles" or self.kind == "hurdleslimbo":
            lay = self.config.layout
            i = int(np.searchsorted(lay["xs"], x))
            for j in (i - 1, i):
                if 0 <= j < len(lay["xs"]) and lay["kinds"][j] == 0 \
                        and abs(x - lay["xs"][j]) <= HURDLE_HALF_WIDTH:
                    return float(lay["heights"][j])
            return 0.0
        return 0.0

    def _in_gap(self, x: float) -> bool:
        lay = self.config.layout
        i = int(np.searchsorted(lay["gap_starts"], x, side="right")) - 1
        return i >= 0 and x < lay["platform_starts"][i]

    # -- episode interface -------------------------------------------------

    def reset(self, seed: int) -> EnvFrame:
        rng = np.random.default_rng(seed)
        layout = sample_layout(self.kind, rng)
        limit = None if self.kind == "pretrain" else (
            GOALWALL_EPISODE_LIMIT if self.kind == "goalwall" else DEFAULT_EPISODE_LIMIT
        )
        self.config = TaskConfig(self.kind, layout, limit)
        self.state = initial_state(rng)
        self._steps = 0
        self._passed = 0
        self._done = False
        if self.kind == "goalwall":
            self._ball = np.array([layout["ball_x"], layout["ball_z"], 0.0, 0.0])
        if self.kind == "polebalance":
            self._pole = rng.normal(0.0, 0.01, size=2)
        contacts = foot_contacts(self.state, self.ground_height)
        return EnvFrame(
            s_p=proprio_features(self.state, contacts),
            s_g=goal_features(self.state),
            s_plus=self._task_features(),
            reward=0.0,
            done=False,
            invalid=False,
        )

    def step(self, action: np.ndarray) -> EnvFrame:
        if self._done or self.state is None:
            raise RuntimeError("step() called on a finished episode; call reset()")
        self.state, contacts, ax = step_dynamics(self.state, action, self.ground_height)
        self._steps += 1
        reward = 0.0
        done = False
        invalid = False

        reward += self._course_rewards()

        if self.kind == "limbo" or self.kind == "hurdleslimbo":
            if self._hits_limbo_bar():
                done, invalid = True, True
        if self.kind == "gaps" and self._touches_gap():
            done, invalid = True, True
        if self.kind == "goalwall":
            hit, finished = self._step_ball()
            if finished:
                done = True
                reward += 1.0 if hit else 0.0
        if self.kind == "polebalance":
            fallen = self._step_pole(ax)
            if fallen:
                done = True
            else:
                reward += 1.0

        if self.state.is_invalid():
            done, invalid = True, True
        if invalid:
            reward = -1.0
        if self.config.episode_limit is not None and self._steps >= self.config.episode_limit:
            done = True

        self._done = done
        return EnvFrame(
            s_p=proprio_features(self.state, contacts),
            s_g=goal_features(self.state),
            s_plus=self._task_features(),
            reward=reward,
            done=done,
            invalid=invalid,
        )

    # -- task internals ----------------------------------------------------

    def _course_rewards(self) -> float:
        """One point per obstacle/step/platform edge the torso passes."""
        xs = self._reward_edges()
        if xs is None:
            return 0.0
        r = 0.0
        while self._passed < len(xs) and self.state.x > xs[self._passed]:
            r += 1.0
            self._passed += 1
        return r

    def _reward_edges(self):
        if self.kind in ("hurdles", "limbo", "hurdleslimbo"):
            return self.config.layout["xs"]
        if self.kind == "stairs":
            return self.config.layout["edges"]
        if self.kind == "gaps":
            return self.config.layout["platform_starts"]
        return None

    def _hits_limbo_bar(self) -> bool:
        lay = self.config.layout
        xs, kinds, heights = lay["xs"], lay["kinds"], lay["heights"]
        i = int(np.searchsorted(xs, self.state.x))
        for j in (i - 1, i):
            if 0 <= j < len(xs) and kinds[j] == 1 \
                    and abs(self.state.x - xs[j]) <= LIMBO_RADIUS \
                    and self.state.z >= heights[j] - LIMBO_RADIUS:
                return True
        return False

    def _touches_gap(self) -> bool:
        for off in (self.state.lf, self.state.rf):
            fx, fz = self.state.x + off[0], self.state.z + off[1]
            if fz <= -GAP_DEPTH + 1e-9 and self._in_gap(fx):
                return True
        return False

    def _step_ball(self) -> tuple[bool, bool]:
        b = self._ball
        for off, vel in ((self.state.lf, self.state.lf_v), (self.state.rf, self.state.rf_v)):
            foot = np.array([self.state.x + off[0], self.state.z + off[1]])
            if np.hypot(*(foot - b[:2])) < KICK_RADIUS:
                b[2] = KICK_GAIN * (self.state.vx + vel[0])
                b[3] = KICK_GAIN * max(self.state.vz + vel[1], 0.0)
        b[3] -= GRAVITY * DT
        b[0] += b[2] * DT
        b[1] += b[3] * DT
        if b[1] < BALL_RADIUS:
            b[1] = BALL_RADIUS
            b[3] = -0.6 * b[3]
        if b[0] >= self.config.layout["wall_x"]:
            hit = abs(b[1] - TARGET_HEIGHT) <= TARGET_RADIUS
            return hit, True
        return False, False

    def _step_pole(self, torso_ax: float) -> bool:
        phi, phidot = self._pole
        acc = (GRAVITY * math.sin(phi) - torso_ax * math.cos(phi)) / POLE_LENGTH
        acc -= 0.05 * phidot
        phidot += DT * acc
        phi += DT * phidot
        self._pole = np.array([phi, phidot])
        return math.cos(phi) < POLE_FALL_FRACTION

    def _task_features(self) -> np.ndarray:
        x = self.state.x
        if self.kind == "pretrain":
            return np.zeros(0)
        if self.kind in ("hurdles", "limbo"):
            xs, heights = self.config.layout["xs"], self.config.layout["heights"]
            i = min(int(np.searchsorted(xs, x, side="right")), len(xs) - 1)
            return np.array([xs[i] - x, heights[i]])
        if self.kind == "hurdleslimbo":
            lay = self.config.layout
            i = min(int(np.searchsorted(lay["xs"], x, side="right")), len(lay["xs"]) - 1)
            return np.array([float(lay["kinds"][i]), lay["xs"][i] - x, lay["heights"][i]])
        if self.kind == "stairs":
            edges = self.config.layout["edges"]
            i = min(int(np.searchsorted(edges, x, side="right")), len(edges) - 2)
            return np.array([edges[i] - x, edges[i + 1] - x])
        if self.kind == "gaps":
            lay = self.config.layout
            i = min(int(np.searchsorted(lay["gap_starts"], x, side="right")),
                    len(lay["gap_starts"]) - 1)
            return np.array([lay["gap_starts"][i] - x, lay["platform_starts"][i] - x])
        if self.kind == "goalwall":
            b = self._ball
            return np.array([b[0] - x, b[1], b[2], b[3]])
        if self.kind == "polebalance":
            return self._pole.copy()
        raise AssertionError(self.kind)


def make_env(kind: str) -> TaskEnv:
    return TaskEnv(kind)
