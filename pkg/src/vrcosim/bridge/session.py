"""Lockstep session automaton plus the two endpoints built on it.

The automaton models one conversation and is driven with every frame in
wire order, whichever side sent it::

    Idle --HELLO--> AwaitingHelloAck --HELLO_ACK--> ReadyToStep
    ReadyToStep --STATE_UPDATE--> AwaitingObservation --OBSERVATION--> ReadyToStep
    ReadyToStep --RESET--> Resetting --RESET_ACK--> ReadyToStep
    any --CLOSE--> Closed

After an OBSERVATION with ``is_finished`` set, only RESET or CLOSE are legal.
Within an episode ``t_current`` must start at 0 and equal the previous
``t_next`` exactly.
"""
from __future__ import annotations

import logging
import math
from enum import Enum
from typing import Protocol

from .codec import DEFAULT_MAX_PAYLOAD, decode_prefix, encode_frame
from .errors import BridgeError, ConnectionLost, NeedMoreBytes, ProtocolViolation
from .messages import (
    MSG_TYPE_OF,
    Close,
    Hello,
    HelloAck,
    Message,
    MsgType,
    ObservationMsg,
    Reset,
    ResetAck,
    StateUpdateMsg,
)

log = logging.getLogger(__name__)


class LockstepState(Enum):
    IDLE = "Idle"
    AWAITING_HELLO_ACK = "AwaitingHelloAck"
    READY_TO_STEP = "ReadyToStep"
    AWAITING_OBSERVATION = "AwaitingObservation"
    RESETTING = "Resetting"
    CLOSED = "Closed"


class LockstepAutomaton:
    def __init__(self):
        self.state = LockstepState.IDLE
        self.finished = False
        self.expected_t = 0.0
        self.n_updates = 0
        self.n_observations = 0

    def advance(self, msg: Message) -> LockstepState:
        """Apply one message; raise ProtocolViolation (state unchanged) if illegal."""
        mtype = MSG_TYPE_OF.get(type(msg))
        s = self.state
        S = LockstepState
        if s is S.CLOSED:
            raise ProtocolViolation(f"{mtype.name if mtype else msg!r} after CLOSE")
        if mtype is MsgType.CLOSE:
            self.state = S.CLOSED
        elif mtype is MsgType.HELLO:
            if s is not S.IDLE:
                raise ProtocolViolation(f"HELLO in state {s.value}")
            self.state = S.AWAITING_HELLO_ACK
        elif mtype is MsgType.HELLO_ACK:
            if s is not S.AWAITING_HELLO_ACK:
                raise ProtocolViolation(f"HELLO_ACK in state {s.value}")
            self._new_episode()
            self.state = S.READY_TO_STEP
        elif mtype is MsgType.STATE_UPDATE:
            if s is not S.READY_TO_STEP:
                raise ProtocolViolation(f"STATE_UPDATE in state {s.value}")
            if self.finished:
                raise ProtocolViolation("STATE_UPDATE after a finished episode; reset first")
            self._check_times(msg)
            self.expected_t = msg.t_next
            self.n_updates += 1
            self.state = S.AWAITING_OBSERVATION
        elif mtype is MsgType.OBSERVATION:
            if s is not S.AWAITING_OBSERVATION:
                raise ProtocolViolation(f"OBSERVATION in state {s.value}")
            self.n_observations += 1
            self.finished = msg.is_finished
            self.state = S.READY_TO_STEP
        elif mtype is MsgType.RESET:
            if s is not S.READY_TO_STEP:
                raise ProtocolViolation(f"RESET in state {s.value}")
            self.state = S.RESETTING
        elif mtype is MsgType.RESET_ACK:
            if s is not S.RESETTING:
                raise ProtocolViolation(f"RESET_ACK in state {s.value}")
            self._new_episode()
            self.finished = msg.observation.is_finished
            self.state = S.READY_TO_STEP
        else:
            raise ProtocolViolation(f"not a protocol message: {msg!r}")
        return self.state

    def _new_episode(self):
        self.finished = False
        self.expected_t = 0.0

    def _check_times(self, msg: StateUpdateMsg):
        tc, tn = msg.t_current, msg.t_next
        if not (math.isfinite(tc) and math.isfinite(tn)):
            raise ProtocolViolation("non-finite timestamp")
        if tc != self.expected_t:
            raise ProtocolViolation(f"t_current={tc!r} but expected {self.expected_t!r}")
        if not tn > tc:
            raise ProtocolViolation(f"t_next={tn!r} must exceed t_current={tc!r}")


def validate_trace(messages) -> LockstepAutomaton:
    """Run a whole message trace through a fresh automaton."""
    automaton = LockstepAutomaton()
    for msg in messages:
        automaton.advance(msg)
    return automaton


# --------------------------------------------------------------------------
# transports
# --------------------------------------------------------------------------
class Transport(Protocol):
    def send(self, data: bytes) -> None: ...

    def recv(self, max_bytes: int) -> bytes:
        """Return at least one byte, or ``b""`` when the peer has closed."""

    def close(self) -> None: ...


class _FrameReader:
    def __init__(self, transport: Transport, max_payload: int):
        self.transport = transport
        self.max_payload = max_payload
        self.buf = bytearray()

    def read(self) -> tuple[Message, bytes]:
        while True:
            try:
                msg, total = decode_prefix(self.buf, 0, self.max_payload)
            except NeedMoreBytes as exc:
                chunk = self.transport.recv(max(exc.needed, 65536))
                if not chunk:
                    raise ConnectionLost("peer closed the connection") from None
                self.buf += chunk
                continue
            raw = bytes(self.buf[:total])
            del self.buf[:total]
            return msg, raw


# --------------------------------------------------------------------------
# user-simulator endpoint
# --------------------------------------------------------------------------
class ClientSession:
    """User-simulator side of one bridge connection (single-threaded)."""

    def __init__(
        self,
        transport: Transport,
        hello: Hello | None = None,
        recorder=None,
        max_payload: int = DEFAULT_MAX_PAYLOAD,
    ):
        self.transport = transport
        self.hello_msg = hello or Hello()
        self.recorder = recorder
        self.max_payload = max_payload
        self.automaton = LockstepAutomaton()
        self.negotiated: HelloAck | None = None
        self._reader = _FrameReader(transport, max_payload)

    @property
    def state(self) -> LockstepState:
        return self.automaton.state

    @property
    def needs_reset(self) -> bool:
        return self.automaton.finished

    def _send(self, msg: Message):
        frame = encode_frame(msg, self.max_payload)
        self.automaton.advance(msg)
        if self.recorder is not None:
            self.recorder.write(frame)
        try:
            self.transport.send(frame)
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc

    def _recv(self) -> Message:
        try:
            msg, raw = self._reader.read()
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc
        if isinstance(msg, Close):
            self.automaton.advance(msg)
            raise ConnectionLost("peer sent CLOSE")
        self.automaton.advance(msg)
        if self.recorder is not None:
            self.recorder.write(raw)
        return msg

    def connect(self) -> HelloAck:
        self._send(self.hello_msg)
        ack = self._recv()
        self.negotiated = ack
        return ack

    def send_update(self, update: StateUpdateMsg) -> None:
        self._send(update)

    def recv_observation(self) -> ObservationMsg:
        msg = self._recv()
        if not isinstance(msg, ObservationMsg):  # pragma: no cover - automaton rejects first
            raise ProtocolViolation(f"expected OBSERVATION, got {type(msg).__name__}")
        return msg

    def step_exchange(self, update: StateUpdateMsg) -> ObservationMsg:
        self.send_update(update)
        return self.recv_observation()

    def reset_handshake(self, episode_config=()) -> ObservationMsg:
        """Reset both endpoints to t=0 and return the initial observation.

        A reset requested while an observation is outstanding is queued: the
        observation is received (and discarded) first.
        """
        reset = episode_config if isinstance(episode_config, Reset) else Reset(episode_config)
        if self.state is LockstepState.AWAITING_OBSERVATION:
            self.recv_observation()
        self._send(reset)
        ack = self._recv()
        return ack.observation

    def close(self) -> None:
        if self.state is not LockstepState.CLOSED:
            try:
                self._send(Close())
            except BridgeError:
                pass
        self.transport.close()


# --------------------------------------------------------------------------
# application endpoint
# --------------------------------------------------------------------------
class BridgeApp(Protocol):
    def on_hello(self, hello: Hello) -> HelloAck: ...

    def on_reset(self, config: dict[str, str]) -> ObservationMsg: ...

    def on_update(self, update: StateUpdateMsg) -> ObservationMsg: ...


class AppSession:
    """Application side: turns incoming frames into response frames.

    Every inbound frame is validated by the automaton before the application
    sees it, so an app never observes an out-of-order message.
    """

    def __init__(self, app: BridgeApp, max_payload: int = DEFAULT_MAX_PAYLOAD):
        self.app = app
        self.max_payload = max_payload
        self.automaton = LockstepAutomaton()
        self.buf = bytearray()

    @property
    def closed(self) -> bool:
        return self.automaton.state is LockstepState.CLOSED

    def handle(self, msg: Message) -> Message | None:
        self.automaton.advance(msg)
        if isinstance(msg, Hello):
            reply = self.app.on_hello(msg)
        elif isinstance(msg, StateUpdateMsg):
            reply = self.app.on_update(msg)
        elif isinstance(msg, Reset):
            reply = ResetAck(self.app.on_reset(msg.as_dict()))
        elif isinstance(msg, Close):
            return None
        else:
            raise ProtocolViolation(f"{type(msg).__name__} may not be sent to the application")
        self.automaton.advance(reply)
        return reply

    def feed(self, data: bytes) -> bytes:
        """Consume raw bytes, return the concatenated response frames."""
        self.buf += data
        out = []
        while self.buf:
            try:
                msg, total = decode_prefix(self.buf, 0, self.max_payload)
            except NeedMoreBytes:
                break
            del self.buf[:total]
            reply = self.handle(msg)
            if reply is not None:
                out.append(encode_frame(reply, self.max_payload))
        return b"".join(out)


class LoopbackTransport:
    """In-process transport: every frame still goes through the codec."""

    def __init__(self, app: BridgeApp, max_payload: int = DEFAULT_MAX_PAYLOAD):
        self.endpoint = AppSession(app, max_payload)
        self._inbox = bytearray()
        self._closed = False

    def send(self, data: bytes) -> None:
        if self._closed:
            raise ConnectionLost("loopback closed")
        self._inbox += self.endpoint.feed(data)

    def recv(self, max_bytes: int) -> bytes:
        if not self._inbox:
            return b""
        chunk = bytes(self._inbox[:max_bytes])
        del self._inbox[:max_bytes]
        return chunk

    def close(self) -> None:
        self._closed = True
