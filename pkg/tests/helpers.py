"""Shared hypothesis strategies and small fixtures for the test suite."""
from __future__ import annotations

import math

import numpy as np
from hypothesis import strategies as st

from vrcosim.bridge.messages import (
    Close,
    Hello,
    HelloAck,
    ObservationMsg,
    Pose,
    Reset,
    ResetAck,
    RgbdImage,
    StateUpdateMsg,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
any_f64 = st.floats(allow_nan=True, allow_infinity=True, width=64)
keys = st.text(max_size=24)


@st.composite
def unit_quats(draw):
    v = draw(st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=4, max_size=4))
    n = math.sqrt(sum(c * c for c in v))
    if n < 1e-3:
        return (1.0, 0.0, 0.0, 0.0)
    return tuple(c / n for c in v)


poses = st.builds(Pose, st.tuples(finite, finite, finite), unit_quats())
scalars = st.lists(st.tuples(keys, any_f64), max_size=8).map(tuple)

hellos = st.builds(Hello, st.integers(0, 0xFFFF), any_f64, st.integers(0, 0xFFFF), st.integers(0, 0xFFFF),
                   st.integers(0, 0xFF))
hello_acks = st.builds(HelloAck, st.integers(0, 0xFFFF), any_f64, st.integers(0, 0xFFFF), st.integers(0, 0xFFFF),
                       st.integers(0, 0xFF))
state_updates = st.builds(StateUpdateMsg, any_f64, any_f64, poses, st.lists(poses, max_size=2).map(tuple), scalars)


@st.composite
def images(draw, max_side: int = 6):
    w = draw(st.integers(0, max_side))
    h = draw(st.integers(0, max_side))
    rgb = np.frombuffer(draw(st.binary(min_size=w * h * 3, max_size=w * h * 3)), dtype=np.uint8)
    depth = np.array(draw(st.lists(st.floats(width=32), min_size=w * h, max_size=w * h)), dtype=np.float32)
    return RgbdImage(w, h, rgb.reshape(h, w, 3), depth.reshape(h, w))


observations = st.builds(ObservationMsg, images(), any_f64, st.booleans(), any_f64, scalars)
resets = st.builds(Reset, st.lists(st.tuples(keys, keys), max_size=6).map(tuple))
reset_acks = st.builds(ResetAck, observations)
closes = st.just(Close())

ALL_MESSAGE_STRATEGIES = {
    "hello": hellos,
    "hello_ack": hello_acks,
    "state_update": state_updates,
    "observation": observations,
    "reset": resets,
    "reset_ack": reset_acks,
    "close": closes,
}


def same_float(a: float, b: float) -> bool:
    """Bitwise float equality (NaN payloads included)."""
    return np.float64(a).tobytes() == np.float64(b).tobytes()


def messages_equal(a, b) -> bool:
    """Structural equality that treats NaN == NaN bitwise."""
    if type(a) is not type(b):
        return False
    if isinstance(a, (Hello, HelloAck)):
        return (a.version, a.width, a.height, a.channels) == (b.version, b.width, b.height, b.channels) and same_float(
            a.dt, b.dt)
    if isinstance(a, StateUpdateMsg):
        return (same_float(a.t_current, b.t_current) and same_float(a.t_next, b.t_next) and a.hmd == b.hmd
                and a.controllers == b.controllers and _scalars_equal(a.extensions, b.extensions))
    if isinstance(a, ObservationMsg):
        return (a.image == b.image and same_float(a.reward, b.reward) and a.is_finished == b.is_finished
                and same_float(a.time_feature, b.time_feature) and _scalars_equal(a.log_entries, b.log_entries))
    if isinstance(a, ResetAck):
        return messages_equal(a.observation, b.observation)
    return a == b


def _scalars_equal(a, b) -> bool:
    return len(a) == len(b) and all(ka == kb and same_float(va, vb) for (ka, va), (kb, vb) in zip(a, b))
