"""Lockstep co-simulation bridge: wire format, session automaton, transports."""
from .codec import decode_frame, decode_prefix, encode_frame, iter_frames
from .coords import CoordinateMap, map_pose
from .dump import FrameRecorder, MemoryRecorder, read_dump, replay_dump
from .errors import BridgeError, ConnectionLost, EncodeError, MalformedPose, NeedMoreBytes, ProtocolViolation
from .messages import (
    ALL_CHANNELS,
    CHANNEL_B,
    CHANNEL_DEPTH,
    CHANNEL_G,
    CHANNEL_R,
    Close,
    Hello,
    HelloAck,
    MsgType,
    ObservationMsg,
    Pose,
    Reset,
    ResetAck,
    RgbdImage,
    StateUpdateMsg,
)
from .session import AppSession, ClientSession, LockstepAutomaton, LockstepState, LoopbackTransport, validate_trace

__all__ = [name for name in dir() if not name.startswith("_")]
