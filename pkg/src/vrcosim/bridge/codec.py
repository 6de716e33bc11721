"""Length-prefixed binary framing.

Frame layout::

    u32 LE payload length | u8 msg_type | payload

All integers are little-endian, floats are IEEE-754 binary64 little-endian
(depth pixels binary32), strings are ``u16 length + UTF-8 bytes``.

Payloads:

* HELLO / HELLO_ACK: ``u16 version, f64 dt, u16 width, u16 height, u8 channels``
* STATE_UPDATE: ``f64 t_current, f64 t_next, pose hmd, u8 n, n*pose,
  u16 m, m*(str key, f64 value)``; a pose is 7 f64 ``px py pz qw qx qy qz``
* OBSERVATION: ``u16 w, u16 h, w*h*3 rgb bytes, w*h f32 depth, f64 reward,
  u8 is_finished, f64 time_feature, u16 m, m*(str key, f64 value)``
* RESET: ``(str key, str value)*`` until end of payload (empty config -> empty payload)
* RESET_ACK: same as OBSERVATION
* CLOSE: empty
"""
from __future__ import annotations

import math
import struct
from functools import lru_cache

import numpy as np

from ..geometry import quat_norm
from .errors import EncodeError, MalformedPose, NeedMoreBytes, ProtocolViolation
from .messages import (
    MSG_TYPE_OF,
    Close,
    Hello,
    HelloAck,
    Message,
    MsgType,
    ObservationMsg,
    Pose,
    Reset,
    ResetAck,
    RgbdImage,
    StateUpdateMsg,
)

HEADER = struct.Struct("<IB")
HEADER_SIZE = HEADER.size
DEFAULT_MAX_PAYLOAD = 16 * 1024 * 1024

MAX_CONTROLLERS = 2
DECODE_QUAT_TOL = 1e-6

_HELLO = struct.Struct("<HdHHB")
_POSE = struct.Struct("<7d")
_TIMES = struct.Struct("<dd")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_F64 = struct.Struct("<d")
_DIMS = struct.Struct("<HH")
_OBS_TAIL = struct.Struct("<dBd")
_VALID_TYPES = frozenset(int(t) for t in MsgType)


# --------------------------------------------------------------------------
# encoding
# --------------------------------------------------------------------------
@lru_cache(maxsize=4096)
def _enc_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise EncodeError("string longer than 65535 bytes")
    return _U16.pack(len(raw)) + raw


def _enc_pose(p: Pose) -> bytes:
    if not isinstance(p, Pose) or not p.is_valid(DECODE_QUAT_TOL):
        raise EncodeError(f"invalid pose {p!r}")
    return _POSE.pack(*p.position, *p.orientation)


def _enc_scalars(entries) -> bytes:
    if len(entries) > 0xFFFF:
        raise EncodeError("too many key/value entries")
    parts = [_U16.pack(len(entries))]
    f64 = _F64.pack
    for key, value in entries:
        parts.append(_enc_str(key))
        parts.append(f64(value))
    return b"".join(parts)


def _enc_hello(m: Hello | HelloAck) -> bytes:
    try:
        return _HELLO.pack(m.version, m.dt, m.width, m.height, m.channels)
    except struct.error as exc:
        raise EncodeError(str(exc)) from exc


def _enc_state(m: StateUpdateMsg) -> bytes:
    if len(m.controllers) > MAX_CONTROLLERS:
        raise EncodeError("at most two controllers")
    parts = [_TIMES.pack(m.t_current, m.t_next), _enc_pose(m.hmd), _U8.pack(len(m.controllers))]
    parts.extend(_enc_pose(c) for c in m.controllers)
    parts.append(_enc_scalars(m.extensions))
    return b"".join(parts)


def _enc_obs(m: ObservationMsg) -> bytes:
    img = m.image
    if not (0 <= img.width <= 0xFFFF and 0 <= img.height <= 0xFFFF):
        raise EncodeError("image dimensions out of range")
    if img.rgb.shape != (img.height, img.width, 3) or img.depth.shape != (img.height, img.width):
        raise EncodeError("image buffers do not match declared dimensions")
    return b"".join(
        (
            _DIMS.pack(img.width, img.height),
            img.rgb.tobytes(),
            img.depth.astype("<f4", copy=False).tobytes(),
            _OBS_TAIL.pack(m.reward, 1 if m.is_finished else 0, m.time_feature),
            _enc_scalars(m.log_entries),
        )
    )


def _enc_reset(m: Reset) -> bytes:
    return b"".join(_enc_str(k) + _enc_str(v) for k, v in m.config)


def encode_payload(msg: Message) -> tuple[MsgType, bytes]:
    mtype = MSG_TYPE_OF.get(type(msg))
    if mtype is None:
        raise EncodeError(f"not a protocol message: {type(msg).__name__}")
    if mtype in (MsgType.HELLO, MsgType.HELLO_ACK):
        payload = _enc_hello(msg)
    elif mtype is MsgType.STATE_UPDATE:
        payload = _enc_state(msg)
    elif mtype is MsgType.OBSERVATION:
        payload = _enc_obs(msg)
    elif mtype is MsgType.RESET_ACK:
        payload = _enc_obs(msg.observation)
    elif mtype is MsgType.RESET:
        payload = _enc_reset(msg)
    else:
        payload = b""
    return mtype, payload


def encode_frame(msg: Message, max_payload: int = DEFAULT_MAX_PAYLOAD) -> bytes:
    mtype, payload = encode_payload(msg)
    if len(payload) > max_payload:
        raise EncodeError(f"payload of {len(payload)} bytes exceeds limit {max_payload}")
    return HEADER.pack(len(payload), int(mtype)) + payload


# --------------------------------------------------------------------------
# decoding
# --------------------------------------------------------------------------
@lru_cache(maxsize=4096)
def _dec_str(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolViolation("invalid UTF-8 string") from exc


class _Reader:
    __slots__ = ("buf", "pos", "end")

    def __init__(self, buf, start: int, end: int):
        self.buf = buf
        self.pos = start
        self.end = end

    def take(self, n: int) -> int:
        start = self.pos
        if self.end - start < n:
            raise ProtocolViolation("payload shorter than its contents")
        self.pos = start + n
        return start

    def unpack(self, st: struct.Struct):
        return st.unpack_from(self.buf, self.take(st.size))

    def string(self) -> str:
        (n,) = self.unpack(_U16)
        start = self.take(n)
        try:
            return bytes(self.buf[start : start + n]).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolViolation("invalid UTF-8 string") from exc

    def pose(self) -> Pose:
        vals = self.unpack(_POSE)
        if not all(math.isfinite(v) for v in vals):
            raise MalformedPose("non-finite pose component")
        if abs(quat_norm(vals[3:]) - 1.0) > DECODE_QUAT_TOL:
            raise MalformedPose("orientation is not a unit quaternion")
        return Pose(vals[:3], vals[3:])

    def scalars(self) -> tuple[tuple[str, float], ...]:
        (n,) = self.unpack(_U16)
        buf, pos, end = self.buf, self.pos, self.end
        u16, f64 = _U16.unpack_from, _F64.unpack_from
        out = []
        for _ in range(n):
            if end - pos < 2:
                raise ProtocolViolation("payload shorter than its contents")
            (k,) = u16(buf, pos)
            pos += 2
            if end - pos < k + 8:
                raise ProtocolViolation("payload shorter than its contents")
            out.append((_dec_str(bytes(buf[pos : pos + k])), f64(buf, pos + k)[0]))
            pos += k + 8
        self.pos = pos
        return tuple(out)

    def finish(self):
        if self.pos != self.end:
            raise ProtocolViolation(f"{self.end - self.pos} trailing payload bytes")


def _dec_hello(r: _Reader, cls):
    version, dt, width, height, channels = r.unpack(_HELLO)
    return cls(version, dt, width, height, channels)


def _dec_state(r: _Reader) -> StateUpdateMsg:
    t_current, t_next = r.unpack(_TIMES)
    hmd = r.pose()
    (n,) = r.unpack(_U8)
    if n > MAX_CONTROLLERS:
        raise ProtocolViolation(f"{n} controllers, at most {MAX_CONTROLLERS} allowed")
    controllers = tuple(r.pose() for _ in range(n))
    return StateUpdateMsg(t_current, t_next, hmd, controllers, r.scalars())


def _dec_obs(r: _Reader) -> ObservationMsg:
    width, height = r.unpack(_DIMS)
    npx = width * height
    rgb_start = r.take(npx * 3)
    depth_start = r.take(npx * 4)
    rgb = np.frombuffer(r.buf, dtype=np.uint8, count=npx * 3, offset=rgb_start)
    depth = np.frombuffer(r.buf, dtype="<f4", count=npx, offset=depth_start)
    reward, finished, time_feature = r.unpack(_OBS_TAIL)
    if finished > 1:
        raise ProtocolViolation("is_finished must be 0 or 1")
    image = RgbdImage(width, height, rgb.copy(), depth.astype(np.float32))
    return ObservationMsg(image, reward, bool(finished), time_feature, r.scalars())


def _dec_reset(r: _Reader) -> Reset:
    entries = []
    while r.pos < r.end:
        key = r.string()
        entries.append((key, r.string()))
    return Reset(tuple(entries))


def peek_frame(buf, offset: int = 0, max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple[MsgType, int]:
    """Validate the header at ``offset``; return ``(msg_type, total frame size)``.

    Raises NeedMoreBytes if the header or payload is incomplete.
    """
    avail = len(buf) - offset
    if avail < HEADER_SIZE:
        raise NeedMoreBytes(HEADER_SIZE - avail)
    length, mtype = HEADER.unpack_from(buf, offset)
    if mtype not in _VALID_TYPES:
        raise ProtocolViolation(f"unknown msg_type {mtype}")
    if length > max_payload:
        raise ProtocolViolation(f"declared payload {length} exceeds limit {max_payload}")
    total = HEADER_SIZE + length
    if avail < total:
        raise NeedMoreBytes(total - avail)
    return MsgType(mtype), total


def decode_prefix(buf, offset: int = 0, max_payload: int = DEFAULT_MAX_PAYLOAD) -> tuple[Message, int]:
    """Decode the frame starting at ``offset``; return ``(message, frame size)``."""
    mtype, total = peek_frame(buf, offset, max_payload)
    r = _Reader(buf, offset + HEADER_SIZE, offset + total)
    if mtype is MsgType.HELLO:
        msg = _dec_hello(r, Hello)
    elif mtype is MsgType.HELLO_ACK:
        msg = _dec_hello(r, HelloAck)
    elif mtype is MsgType.STATE_UPDATE:
        msg = _dec_state(r)
    elif mtype is MsgType.OBSERVATION:
        msg = _dec_obs(r)
    elif mtype is MsgType.RESET_ACK:
        msg = ResetAck(_dec_obs(r))
    elif mtype is MsgType.RESET:
        msg = _dec_reset(r)
    else:
        msg = Close()
    r.finish()
    return msg, total


def decode_frame(data, max_payload: int = DEFAULT_MAX_PAYLOAD) -> Message:
    """Decode exactly one frame; trailing bytes are a protocol violation."""
    msg, total = decode_prefix(data, 0, max_payload)
    if total != len(data):
        raise ProtocolViolation(f"{len(data) - total} bytes after the frame")
    return msg


def iter_frames(data, max_payload: int = DEFAULT_MAX_PAYLOAD):
    """Yield ``(index, offset, raw_frame, message)`` for a concatenated frame dump."""
    offset = 0
    index = 0
    while offset < len(data):
        msg, total = decode_prefix(data, offset, max_payload)
        yield index, offset, bytes(data[offset : offset + total]), msg
        offset += total
        index += 1
