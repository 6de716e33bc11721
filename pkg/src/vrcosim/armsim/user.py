"""The simulated user as seen by the bridge: arm + fatigue + virtual sensors."""
from __future__ import annotations

import struct
from collections import deque

import numpy as np

from ..bridge.coords import CoordinateMap, map_pose
from ..bridge.messages import ObservationMsg, StateUpdateMsg
from .dynamics import ArmState, Dynamics, pack_arm_state, rest_state, unpack_arm_state
from .fatigue import FatigueState, fatigue_step, pack_fatigue_state, target_load, unpack_fatigue_state
from .kinematics import forward_kinematics
from .model import ArmModel
from .perception import HeadsetConfig, debug_target_block, hammer_tip_in_bridge, observe


def neural_effort(controls) -> float:
    """Mean squared control signal."""
    u = np.asarray(controls, dtype=float)
    return float(np.mean(u * u))


class UserSimulator:
    """Steps the arm and produces the sensor messages sent to the application.

    The controller pose sent in a STATE_UPDATE is the hammer-tip pose at the
    *end* of the window ``[t_current, t_next)``.
    """

    def __init__(
        self,
        model: ArmModel | None = None,
        dt: float = 0.05,
        cmap: CoordinateMap | None = None,
        headset: HeadsetConfig | None = None,
        stack_delay: float | None = None,
        debug_targets: bool = False,
    ):
        self.model = model or ArmModel()
        self.dt = dt
        self.cmap = cmap or CoordinateMap()
        self.headset = headset or HeadsetConfig()
        self.debug_targets = debug_targets
        self.dynamics = Dynamics(self.model)
        self.stack_steps = None if stack_delay is None else max(1, int(round(stack_delay / dt)))
        self.reset()

    def reset(self, state: ArmState | None = None) -> None:
        self.state = state.copy() if state is not None else rest_state(self.model)
        self.fatigue = FatigueState.rested(self.model.fatigue)
        self.step_index = 0
        self.last_controls = np.zeros(6)
        self._images = deque(maxlen=(self.stack_steps or 0) + 1)

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    def hmd_pose(self):
        return map_pose(self.cmap, self.model.hmd_pose)

    def controller_pose(self, q=None):
        tip = forward_kinematics(self.model, self.state.q if q is None else q)[1]
        return map_pose(self.cmap, tip)

    def sensor_message(self, t_current: float, t_next: float) -> StateUpdateMsg:
        return StateUpdateMsg(
            t_current,
            t_next,
            self.hmd_pose(),
            (self.controller_pose(),),
            (("fatigue", self.fatigue.fatigued_fraction), ("effort", neural_effort(self.last_controls))),
        )

    def step(self, controls) -> StateUpdateMsg:
        """Advance arm and fatigue by one control step; return the sensor message."""
        t_current = self.time
        controls = np.clip(np.asarray(controls, dtype=float), 0.0, 1.0)
        self.state = self.dynamics.step(self.state, controls, self.dt)
        self.fatigue = fatigue_step(self.fatigue, target_load(self.state.activations), self.dt)
        self.last_controls = controls
        self.step_index += 1
        return self.sensor_message(t_current, self.time)

    act = step

    def observe(self, obs: ObservationMsg) -> np.ndarray:
        self._images.append(obs.image)
        delayed = None
        if self.stack_steps is not None:
            delayed = self._images[0]
        debug = None
        if self.debug_targets:
            debug = debug_target_block(obs.log(), hammer_tip_in_bridge(self.model, self.state.q, self.cmap))
        return observe(
            self.model, self.state, self.fatigue, obs.image, obs.time_feature,
            self.headset, self.cmap, delayed, debug,
        )

    # -- snapshots -----------------------------------------------------------
    def snapshot(self) -> bytes:
        return struct.pack("<Q", self.step_index) + pack_arm_state(self.state) + pack_fatigue_state(self.fatigue)

    def restore(self, data: bytes) -> None:
        (self.step_index,) = struct.unpack_from("<Q", data, 0)
        n_arm = len(pack_arm_state(self.state))
        self.state = unpack_arm_state(data[8 : 8 + n_arm])
        self.fatigue = unpack_fatigue_state(data[8 + n_arm :], self.model.fatigue)
