"""Observation assembly for the simulated user.

Flat observation layout (all float64)::

    [0:3]    q                  joint angles (rad)
    [3:6]    qdot               joint velocities (rad/s)
    [6:9]    qddot              joint accelerations over the last step (rad/s^2)
    [9:15]   activations        agonist/antagonist per DOF
    [15:18]  hammer tip         position in the bridge frame (m)
    [18:21]  fatigue            m_f / 100 per joint motor
    [21:21+K] headset           pooled cells, channel-major, row-major within a channel
                                (K = n_channels * (H/8) * (W/8), doubled when stacking)
    [-1]     time feature

In debug mode a block of per-cell target features (see ``debug_target_block``)
is inserted between the fatigue and headset blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bridge.coords import CoordinateMap
from ..bridge.messages import CHANNEL_B, CHANNEL_DEPTH, CHANNEL_G, CHANNEL_R, RgbdImage
from .dynamics import ArmState
from .fatigue import FatigueState
from .kinematics import forward_kinematics
from .model import ArmModel

POOL = 8
N_CELLS = 9
DEBUG_FEATURES_PER_CELL = 5


class ObservationError(ValueError):
    pass


@dataclass(frozen=True)
class HeadsetConfig:
    width: int = 120
    height: int = 80
    channels: int = CHANNEL_G | CHANNEL_DEPTH
    far_plane: float = 2.0
    pool: int = POOL

    @property
    def channel_list(self) -> tuple[int, ...]:
        return tuple(c for c in (CHANNEL_R, CHANNEL_G, CHANNEL_B, CHANNEL_DEPTH) if self.channels & c)

    @property
    def n_values(self) -> int:
        if self.width == 0 or self.height == 0:
            return 0
        return len(self.channel_list) * (self.width // self.pool) * (self.height // self.pool)


def pool_image(image: RgbdImage, cfg: HeadsetConfig) -> np.ndarray:
    """Mean-pool the selected channels into ``pool x pool`` cells, values in [0, 1]."""
    if image.width != cfg.width or image.height != cfg.height:
        raise ObservationError(
            f"image is {image.width}x{image.height}, negotiated {cfg.width}x{cfg.height}"
        )
    if cfg.n_values == 0:
        return np.zeros(0)
    if cfg.width % cfg.pool or cfg.height % cfg.pool:
        raise ObservationError("image dimensions must be multiples of the pooling size")
    gh, gw, p = cfg.height // cfg.pool, cfg.width // cfg.pool, cfg.pool
    blocks = []
    for ch in cfg.channel_list:
        if ch == CHANNEL_DEPTH:
            plane = np.minimum(image.depth.astype(np.float64) / cfg.far_plane, 1.0)
        else:
            idx = {CHANNEL_R: 0, CHANNEL_G: 1, CHANNEL_B: 2}[ch]
            plane = image.rgb[:, :, idx].astype(np.float64) / 255.0
        blocks.append(plane.reshape(gh, p, gw, p).mean(axis=(1, 3)).ravel())
    return np.concatenate(blocks)


def proprioception(state: ArmState, fstate: FatigueState, tip_position) -> np.ndarray:
    return np.concatenate(
        (
            state.q,
            state.qdot,
            state.qddot,
            state.activations,
            np.asarray(tip_position, dtype=float),
            fstate.m_f / 100.0,
        )
    )


def debug_target_block(log: dict[str, float], tip_position) -> np.ndarray:
    """Per grid cell: (active, age fraction, dx, dy, dz) with d = target - tip.

    Built from the ``cell/<k>/...`` log entries the app emits in debug mode.
    """
    tip = np.asarray(tip_position, dtype=float)
    out = np.zeros(N_CELLS * DEBUG_FEATURES_PER_CELL)
    for k in range(N_CELLS):
        pre = f"cell/{k}/"
        active = log.get(pre + "active", 0.0)
        pos = np.array([log.get(pre + "x", 0.0), log.get(pre + "y", 0.0), log.get(pre + "z", 0.0)])
        base = k * DEBUG_FEATURES_PER_CELL
        out[base] = active
        out[base + 1] = log.get(pre + "age", 0.0)
        out[base + 2 : base + 5] = (pos - tip) * active
    return out


def hammer_tip_in_bridge(model: ArmModel, q, cmap: CoordinateMap | None = None) -> np.ndarray:
    tip = forward_kinematics(model, q)[1].position
    if cmap is not None:
        tip = cmap.apply_point(tip)
    return np.asarray(tip, dtype=float)


def observe(
    model: ArmModel,
    state: ArmState,
    fstate: FatigueState,
    image: RgbdImage,
    time_feature: float,
    headset: HeadsetConfig | None = None,
    cmap: CoordinateMap | None = None,
    delayed_image: RgbdImage | None = None,
    debug_block: np.ndarray | None = None,
) -> np.ndarray:
    """Pure function assembling the flat observation vector (layout above)."""
    headset = headset or HeadsetConfig()
    parts = [proprioception(state, fstate, hammer_tip_in_bridge(model, state.q, cmap))]
    if debug_block is not None:
        parts.append(debug_block)
    parts.append(pool_image(image, headset))
    if delayed_image is not None:
        parts.append(pool_image(delayed_image, headset))
    parts.append(np.array([float(time_feature)]))
    obs = np.concatenate(parts)
    if not np.all(np.isfinite(obs)):
        raise ObservationError("non-finite observation entry")
    return obs
