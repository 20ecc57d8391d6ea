"""Planar robot environments and task wrappers."""

from .robot import (
    ACTION_DIM,
    DT,
    GOAL_DIM,
    PROPRIO_DIM,
    RobotState,
    goal_features,
    initial_state,
    proprio_features,
    step_dynamics,
)
from .tasks import (
    TASK_DIMS,
    TASK_KINDS,
    EnvFrame,
    TaskConfig,
    TaskEnv,
    make_env,
    sample_layout,
)

__all__ = [
    "ACTION_DIM", "DT", "GOAL_DIM", "PROPRIO_DIM", "RobotState",
    "goal_features", "initial_state", "proprio_features", "step_dynamics",
    "TASK_DIMS", "TASK_KINDS", "EnvFrame", "TaskConfig", "TaskEnv",
    "make_env", "sample_layout",
]
