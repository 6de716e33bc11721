"""Typed protocol messages exchanged between the user simulator and the app."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from ..geometry import IDENTITY_QUAT, quat_norm

PROTOCOL_VERSION = 1

CHANNEL_R = 0b0001
CHANNEL_G = 0b0010
CHANNEL_B = 0b0100
CHANNEL_DEPTH = 0b1000
ALL_CHANNELS = CHANNEL_R | CHANNEL_G | CHANNEL_B | CHANNEL_DEPTH


class MsgType(IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    STATE_UPDATE = 3
    OBSERVATION = 4
    RESET = 5
    RESET_ACK = 6
    CLOSE = 7


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, float, float, float] = IDENTITY_QUAT

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "orientation", tuple(float(c) for c in self.orientation))

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (
            len(self.position) == 3
            and len(self.orientation) == 4
            and all(math.isfinite(c) for c in self.position)
            and all(math.isfinite(c) for c in self.orientation)
            and abs(quat_norm(self.orientation) - 1.0) <= tol
        )


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION
    dt: float = 0.05
    width: int = 120
    height: int = 80
    channels: int = ALL_CHANNELS


@dataclass(frozen=True)
class HelloAck:
    version: int = PROTOCOL_VERSION
    dt: float = 0.05
    width: int = 120
    height: int = 80
    channels: int = ALL_CHANNELS


@dataclass(frozen=True)
class StateUpdateMsg:
    """Simulated-user state for the window ``[t_current, t_next)``.

    ``extensions`` carries scalar side-channel values computed by the user
    simulator (e.g. ``"fatigue"``, the mean fatigued motor-unit fraction).
    """

    t_current: float
    t_next: float
    hmd: Pose = field(default_factory=Pose)
    controllers: tuple[Pose, ...] = ()
    extensions: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "controllers", tuple(self.controllers))
        object.__setattr__(self, "extensions", tuple((str(k), float(v)) for k, v in self.extensions))

    def extension(self, key: str, default: float | None = None) -> float | None:
        for k, v in self.extensions:
            if k == key:
                return v
        return default


class RgbdImage:
    """Row-major RGB (uint8, HxWx3) plus linear depth in meters (float32, HxW)."""

    __slots__ = ("width", "height", "rgb", "depth")

    def __init__(self, width: int, height: int, rgb: np.ndarray | None = None, depth: np.ndarray | None = None):
        self.width = int(width)
        self.height = int(height)
        if rgb is None:
            rgb = np.zeros((self.height, self.width, 3), dtype=np.uint8)
        if depth is None:
            depth = np.full((self.height, self.width), np.inf, dtype=np.float32)
        self.rgb = np.ascontiguousarray(rgb, dtype=np.uint8).reshape(self.height, self.width, 3)
        self.depth = np.ascontiguousarray(depth, dtype=np.float32).reshape(self.height, self.width)

    @classmethod
    def empty(cls) -> "RgbdImage":
        return cls(0, 0)

    def __eq__(self, other):
        if not isinstance(other, RgbdImage):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.rgb.tobytes() == other.rgb.tobytes()
            and self.depth.tobytes() == other.depth.tobytes()
        )

    def __repr__(self):
        return f"RgbdImage({self.width}x{self.height})"


@dataclass(frozen=True)
class ObservationMsg:
    image: RgbdImage
    reward: float
    is_finished: bool
    time_feature: float
    log_entries: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "log_entries", tuple((str(k), float(v)) for k, v in self.log_entries))

    def log(self) -> dict[str, float]:
        return dict(self.log_entries)


@dataclass(frozen=True)
class Reset:
    """Reset request carrying an opaque episode configuration."""

    config: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        cfg = self.config
        if isinstance(cfg, dict):
            cfg = cfg.items()
        object.__setattr__(self, "config", tuple((str(k), _config_value(v)) for k, v in cfg))

    def as_dict(self) -> dict[str, str]:
        return dict(self.config)


@dataclass(frozen=True)
class ResetAck:
    observation: ObservationMsg


@dataclass(frozen=True)
class Close:
    pass


Message = Hello | HelloAck | StateUpdateMsg | ObservationMsg | Reset | ResetAck | Close

MSG_TYPE_OF = {
    Hello: MsgType.HELLO,
    HelloAck: MsgType.HELLO_ACK,
    StateUpdateMsg: MsgType.STATE_UPDATE,
    ObservationMsg: MsgType.OBSERVATION,
    Reset: MsgType.RESET,
    ResetAck: MsgType.RESET_ACK,
    Close: MsgType.CLOSE,
}

# Messages flowing from the user simulator to the application.
USER_TO_APP = frozenset({MsgType.HELLO, MsgType.STATE_UPDATE, MsgType.RESET, MsgType.CLOSE})


def _config_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    return str(v)
