"""Planar robot dynamics: a rigid torso (x, z, rotation) driven by direct
forces and torque, with two kinematic velocity-actuated feet that provide
ground support and traction.

The model is deliberately simple — a 6-DOF planar body rather than an
articulated chain — but every goal feature (torso position/rotation, foot
offsets) is directly controllable, which is what skill pre-training and the
downstream tasks exercise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DT = 0.025
GRAVITY = 9.81
TORSO_MASS = 1.0
TORSO_INERTIA = 1.0

# actuation scales applied to actions in [-1, 1]
FORCE_X = 8.0
FORCE_Z = 16.0
TORQUE = 4.0
FOOT_SPEED = 2.0

LIN_DAMPING = 0.3
ANG_DAMPING = 1.0
CONTACT_STIFFNESS = 400.0
CONTACT_DAMPING = 20.0
TRACTION = 0.8

FOOT_X_RANGE = (-0.72, 0.99)
FOOT_Z_RANGE = (-1.3, 0.0)
START_Z = 1.3
START_FOOT_X = (-0.2, 0.2)

INVALID_Z = 0.9
INVALID_ANGLE = 1.4

ACTION_DIM = 7   # torso fx, fz, torque; per-foot vx, vz
PROPRIO_DIM = 15
GOAL_DIM = 7

FlatGround: Callable[[float], float] = lambda x: 0.0


@dataclass
class RobotState:
    """Full planar robot configuration; foot offsets are relative to the torso."""

    x: float = 0.0
    z: float = START_Z
    theta: float = 0.0
    vx: float = 0.0
    vz: float = 0.0
    omega: float = 0.0
    lf: np.ndarray = field(default_factory=lambda: np.array([START_FOOT_X[0], FOOT_Z_RANGE[0]]))
    rf: np.ndarray = field(default_factory=lambda: np.array([START_FOOT_X[1], FOOT_Z_RANGE[0]]))
    lf_v: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rf_v: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def validate(self) -> None:
        vals = np.concatenate(
            [[self.x, self.z, self.theta, self.vx, self.vz, self.omega],
             self.lf, self.rf, self.lf_v, self.rf_v]
        )
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite robot state")
        slack = 0.1
        for off in (self.lf, self.rf):
            if not (FOOT_X_RANGE[0] - slack <= off[0] <= FOOT_X_RANGE[1] + slack):
                raise ValueError(f"foot x offset {off[0]} outside range")
            if not (FOOT_Z_RANGE[0] - slack <= off[1] <= FOOT_Z_RANGE[1] + slack):
                raise ValueError(f"foot z offset {off[1]} outside range")

    def copy(self) -> "RobotState":
        return RobotState(
            self.x, self.z, self.theta, self.vx, self.vz, self.omega,
            self.lf.copy(), self.rf.copy(), self.lf_v.copy(), self.rf_v.copy(),
        )

    def is_invalid(self) -> bool:
        return self.z < INVALID_Z or abs(self.theta) > INVALID_ANGLE


def goal_features(state: RobotState) -> np.ndarray:
    """Feature vector in catalog order: torso x, rotation, height, then
    left/right foot offsets (x, z)."""
    return np.array(
        [state.x, state.theta, state.z,
         state.lf[0], state.lf[1], state.rf[0], state.rf[1]]
    )


def goal_from_proprio(s_p: np.ndarray) -> np.ndarray:
    """Reconstruct goal features from a proprioceptive vector; the absolute x
    position is not locally observable and is reported as 0 (it is a
    displacement feature, measured from the observer's own frame)."""
    return np.array([0.0, s_p[1], s_p[0], s_p[2], s_p[3], s_p[4], s_p[5]])


def proprio_features(state: RobotState, contacts: tuple[bool, bool]) -> np.ndarray:
    """Proprioceptive observation: everything the robot can sense locally
    (no absolute x position)."""
    return np.array(
        [state.z, state.theta,
         state.lf[0], state.lf[1], state.rf[0], state.rf[1],
         state.vx, state.vz, state.omega,
         state.lf_v[0], state.lf_v[1], state.rf_v[0], state.rf_v[1],
         float(contacts[0]), float(contacts[1])]
    )


def foot_contacts(state: RobotState, ground: Callable[[float], float]) -> tuple[bool, bool]:
    out = []
    for off in (state.lf, state.rf):
        fx, fz = state.x + off[0], state.z + off[1]
        out.append(fz <= ground(fx) + 1e-9)
    return out[0], out[1]


def step_dynamics(
    state: RobotState,
    action: np.ndarray,
    ground: Callable[[float], float] = FlatGround,
) -> tuple[RobotState, tuple[bool, bool], float]:
    """Advance one control step with semi-implicit Euler integration.

    Returns the next state, the post-step foot contact flags, and the net
    torso x-acceleration applied during the step (used by tasks that couple
    extra bodies to the torso).
    """
    action = np.asarray(action, dtype=float)
    if action.shape != (ACTION_DIM,):
        raise ValueError(f"action must have shape ({ACTION_DIM},)")
    if not np.all(np.isfinite(action)):
        raise ValueError("non-finite action")
    a = np.clip(action, -1.0, 1.0)

    nxt = state.copy()

    fx = FORCE_X * a[0] - LIN_DAMPING * state.vx
    fz = FORCE_Z * a[1] - GRAVITY * TORSO_MASS - LIN_DAMPING * state.vz
    tq = TORQUE * a[2] - ANG_DAMPING * state.omega

    foot_cmd = [FOOT_SPEED * a[3:5], FOOT_SPEED * a[5:7]]
    for off, cmd in zip((state.lf, state.rf), foot_cmd):
        foot_x = state.x + off[0]
        foot_z = state.z + off[1]
        pen = ground(foot_x) - foot_z
        if pen >= 0.0:
            normal = CONTACT_STIFFNESS * pen - CONTACT_DAMPING * state.vz
            fz += max(normal, 0.0)
            # traction opposes the foot's absolute slip velocity, so driving
            # a planted foot backwards propels the torso forward
            slip = state.vx + cmd[0]
            fx -= TRACTION * slip

    ax = fx / TORSO_MASS
    nxt.vx = state.vx + DT * ax
    nxt.vz = state.vz + DT * fz / TORSO_MASS
    nxt.omega = state.omega + DT * tq / TORSO_INERTIA
    nxt.x = state.x + DT * nxt.vx
    nxt.z = state.z + DT * nxt.vz
    nxt.theta = state.theta + DT * nxt.omega

    for off, new_off, cmd, vel in (
        (state.lf, nxt.lf, foot_cmd[0], nxt.lf_v),
        (state.rf, nxt.rf, foot_cmd[1], nxt.rf_v),
    ):
        new_off[0] = min(max(off[0] + DT * cmd[0], FOOT_X_RANGE[0]), FOOT_X_RANGE[1])
        new_off[1] = min(max(off[1] + DT * cmd[1], FOOT_Z_RANGE[0]), FOOT_Z_RANGE[1])
        vel[:] = (new_off - off) / DT

    contacts = foot_contacts(nxt, ground)
    return nxt, contacts, ax


def initial_state(rng: np.random.Generator) -> RobotState:
    """Start pose with the standard position and velocity perturbations."""
    s = RobotState()
    s.z += rng.uniform(-0.1, 0.1)
    s.theta += rng.uniform(-0.1, 0.1)
    s.lf = s.lf + rng.uniform(-0.1, 0.1, size=2)
    s.rf = s.rf + rng.uniform(-0.1, 0.1, size=2)
    s.lf[0] = min(max(s.lf[0], FOOT_X_RANGE[0]), FOOT_X_RANGE[1])
    s.lf[1] = min(max(s.lf[1], FOOT_Z_RANGE[0]), FOOT_Z_RANGE[1])
    s.rf[0] = min(max(s.rf[0], FOOT_X_RANGE[0]), FOOT_X_RANGE[1])
    s.rf[1] = min(max(s.rf[1], FOOT_Z_RANGE[0]), FOOT_Z_RANGE[1])
    s.vx, s.vz, s.omega = 0.1 * rng.standard_normal(3)
    return s
