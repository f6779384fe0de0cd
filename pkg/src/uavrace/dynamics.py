"""Fixed-timestep 6-DoF quadcopter sim with a racing-mode assist controller.

Stick semantics follow a four-channel transmitter in angle ("racing") mode:
aileron/elevator command roll/pitch angles up to `max_tilt`, rudder commands
a yaw rate, and throttle sets a climb-rate setpoint around hover (mid-stick
holds altitude).  Rotational inertia is normalized to 1, so attitude gains
are angular accelerations per radian of error.

All state math is scalar float64 on tuples: one step is a pure function of
(state, sticks, params) and whole episodes replay bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

from .geom import (
    Quat,
    Vec3,
    euler_zyx,
    quat_exp_rotvec,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_from_yaw,
    wrap_angle,
)

GRAVITY = 9.81
SIM_DT = 1.0 / 60.0


class SimulationError(RuntimeError):
    """Non-finite state or other unrecoverable sim failure."""


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


@dataclass(frozen=True)
class StickInput:
    """One tick of transmitter input: throttle, elevator, aileron, rudder."""

    throttle: float = 0.5
    elevator: float = 0.0
    aileron: float = 0.0
    rudder: float = 0.0

    def __post_init__(self):
        for name in ("throttle", "elevator", "aileron", "rudder"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite stick channel {name}")
        object.__setattr__(self, "throttle", _clamp(self.throttle, 0.0, 1.0))
        object.__setattr__(self, "elevator", _clamp(self.elevator, -1.0, 1.0))
        object.__setattr__(self, "aileron", _clamp(self.aileron, -1.0, 1.0))
        object.__setattr__(self, "rudder", _clamp(self.rudder, -1.0, 1.0))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.throttle, self.elevator, self.aileron, self.rudder)


@dataclass(frozen=True)
class UavState:
    position: Vec3 = (0.0, 0.0, 0.0)
    velocity: Vec3 = (0.0, 0.0, 0.0)
    orientation: Quat = (1.0, 0.0, 0.0, 0.0)
    angular_velocity: Vec3 = (0.0, 0.0, 0.0)
    tick: int = 0
    att_integral: tuple[float, float] = (0.0, 0.0)  # roll/pitch PID I-terms
    crashed: bool = False

    def speed(self) -> float:
        vx, vy, vz = self.velocity
        return math.sqrt(vx * vx + vy * vy + vz * vz)

    def is_finite(self) -> bool:
        vals = (*self.position, *self.velocity, *self.orientation, *self.angular_velocity)
        return all(math.isfinite(v) for v in vals)


@dataclass(frozen=True)
class UavParams:
    """Airframe and controller constants for a 250-class racing quad."""

    mass: float = 0.7
    max_tilt: float = math.radians(60.0)
    max_yaw_rate: float = 2.0 * math.pi
    max_thrust: float = 0.7 * GRAVITY * 4.0  # thrust-to-weight 4.0
    linear_drag: float = 0.05
    quadratic_drag: float = 0.014
    att_kp: float = 170.0
    att_ki: float = 0.0
    att_kd: float = 24.0
    yaw_rate_kp: float = 30.0
    climb_gain: float = 6.0  # climb-rate loop, 1/s
    v_climb_max: float = 4.0
    dt: float = SIM_DT

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.max_thrust <= self.mass * GRAVITY:
            raise ValueError("max_thrust too low to hover")
        if self.dt != SIM_DT:
            raise ValueError("dt is locked to 1/60 s")

    def to_json(self) -> str:
        return json.dumps(
            {"format": "uavrace-params", "version": 1, **self.__dict__},
            sort_keys=True,
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "UavParams":
        doc = json.loads(text)
        doc.pop("format", None)
        doc.pop("version", None)
        return cls(**doc)

    def params_hash(self) -> int:
        """Stable 64-bit content hash, embedded in logs for replay safety."""
        digest = hashlib.sha256(self.to_json().encode()).digest()
        return int.from_bytes(digest[:8], "little")


def hover_trim(params: UavParams) -> StickInput:
    """Sticks holding altitude: mid throttle maps to zero climb rate."""
    return StickInput(throttle=0.5, elevator=0.0, aileron=0.0, rudder=0.0)


def spawn(track) -> UavState:
    """Initial state at gate 0: on its center, facing race direction, at rest."""
    if not track.gates:
        raise ValueError("track has no gates")
    g0 = track.gates[0]
    return UavState(
        position=g0.center,
        orientation=quat_from_yaw(g0.heading),
        velocity=(0.0, 0.0, 0.0),
        angular_velocity=(0.0, 0.0, 0.0),
        tick=0,
    )


def _command_forces(
    state: UavState, sticks: StickInput, params: UavParams
) -> tuple[Vec3, float, tuple[float, float]]:
    """Racing-mode assist: sticks -> (body angular accel, thrust N, new I-terms)."""
    roll, pitch, _ = euler_zyx(state.orientation)
    roll_t = sticks.aileron * params.max_tilt
    pitch_t = sticks.elevator * params.max_tilt
    yaw_rate_t = -sticks.rudder * params.max_yaw_rate  # stick right = CW from above

    err_r = wrap_angle(roll_t - roll)
    err_p = wrap_angle(pitch_t - pitch)
    i_r, i_p = state.att_integral
    if params.att_ki > 0.0:
        i_r = _clamp(i_r + err_r * params.dt, -0.5, 0.5)
        i_p = _clamp(i_p + err_p * params.dt, -0.5, 0.5)
    wx, wy, wz = state.angular_velocity
    alpha = (
        params.att_kp * err_r + params.att_ki * i_r - params.att_kd * wx,
        params.att_kp * err_p + params.att_ki * i_p - params.att_kd * wy,
        params.yaw_rate_kp * (yaw_rate_t - wz),
    )

    # climb-rate loop with hover feed-forward and tilt compensation
    vz_set = (2.0 * sticks.throttle - 1.0) * params.v_climb_max
    up_z = 1.0 - 2.0 * (
        state.orientation[1] * state.orientation[1]
        + state.orientation[2] * state.orientation[2]
    )  # world z of body up axis
    comp = 1.0 / max(up_z, 0.35)
    thrust = params.mass * (GRAVITY + params.climb_gain * (vz_set - state.velocity[2])) * comp
    thrust = _clamp(thrust, 0.0, params.max_thrust)
    return alpha, thrust, (i_r, i_p)


def _integrate(
    state: UavState,
    alpha: Vec3,
    thrust: float,
    params: UavParams,
    att_integral: tuple[float, float] | None = None,
) -> UavState:
    """Semi-implicit Euler step for given body angular accel + thrust."""
    dt = params.dt
    vx, vy, vz = state.velocity
    px, py, pz = state.position

    speed = math.sqrt(vx * vx + vy * vy + vz * vz)
    drag = params.linear_drag + params.quadratic_drag * speed
    tw = quat_rotate(state.orientation, (0.0, 0.0, thrust))
    ax = (tw[0] - drag * vx) / params.mass
    ay = (tw[1] - drag * vy) / params.mass
    az = (tw[2] - drag * vz) / params.mass - GRAVITY

    vx += dt * ax
    vy += dt * ay
    vz += dt * az

    wx, wy, wz = state.angular_velocity
    wx += dt * alpha[0]
    wy += dt * alpha[1]
    wz += dt * alpha[2]
    dq = quat_exp_rotvec(wx * dt, wy * dt, wz * dt)
    q = quat_normalize(quat_mul(state.orientation, dq))

    px += dt * vx
    py += dt * vy
    pz += dt * vz
    crashed = state.crashed
    if pz < 0.0:
        pz = 0.0
        crashed = True

    return UavState(
        position=(px, py, pz),
        velocity=(vx, vy, vz),
        orientation=q,
        angular_velocity=(wx, wy, wz),
        tick=state.tick + 1,
        att_integral=state.att_integral if att_integral is None else att_integral,
        crashed=crashed,
    )


def step(state: UavState, sticks: StickInput, params: UavParams) -> UavState:
    """Advance the sim by exactly one 60 Hz tick."""
    if not state.is_finite():
        raise SimulationError(f"non-finite state at tick {state.tick}")
    alpha, thrust, integ = _command_forces(state, sticks, params)
    return _integrate(state, alpha, thrust, params, att_integral=integ)
