"""Session trace dumps: the raw frames of a session, concatenated in wire order.

Direction is implied by the message type, so a dump needs no extra framing.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .codec import iter_frames
from .messages import USER_TO_APP, MSG_TYPE_OF, Close, Message


class FrameRecorder:
    """File-like sink used as ``ClientSession(recorder=...)``."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "wb")

    def write(self, frame: bytes) -> None:
        self._fh.write(frame)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class MemoryRecorder:
    def __init__(self):
        self.frames: list[bytes] = []

    def write(self, frame: bytes) -> None:
        self.frames.append(bytes(frame))

    def getvalue(self) -> bytes:
        return b"".join(self.frames)


@dataclass
class DumpFrame:
    index: int
    offset: int
    raw: bytes
    message: Message

    @property
    def from_user(self) -> bool:
        return MSG_TYPE_OF[type(self.message)] in USER_TO_APP


def read_dump(data: bytes | str | Path) -> list[DumpFrame]:
    if not isinstance(data, (bytes, bytearray, memoryview)):
        data = Path(data).read_bytes()
    return [DumpFrame(i, off, raw, msg) for i, off, raw, msg in iter_frames(data)]


@dataclass
class ReplayResult:
    matched: bool
    frames_checked: int
    first_divergence: int | None = None
    detail: str = ""


def replay_dump(frames: list[DumpFrame], app, throttle=None) -> ReplayResult:
    """Feed the recorded user-side frames to ``app`` and compare its replies.

    ``first_divergence`` is the index (within the dump) of the first
    app-side frame whose bytes differ from the recording.
    """
    from .codec import encode_frame
    from .session import AppSession

    endpoint = AppSession(app)
    checked = 0
    pending: list[bytes] = []
    for frame in frames:
        if frame.from_user:
            if pending:
                return ReplayResult(False, checked, frame.index, "recorded reply missing")
            if throttle is not None:
                throttle(frame.message)
            reply = endpoint.handle(frame.message)
            if reply is not None:
                pending.append(encode_frame(reply))
            if isinstance(frame.message, Close):
                break
        else:
            if not pending:
                return ReplayResult(False, checked, frame.index, "unexpected app frame in recording")
            produced = pending.pop(0)
            checked += 1
            if produced != frame.raw:
                return ReplayResult(False, checked, frame.index, "reply bytes differ")
    return ReplayResult(True, checked)
