from __future__ import annotations


class BridgeError(Exception):
    """Base class for every error raised by the bridge."""


class EncodeError(BridgeError):
    pass


class NeedMoreBytes(BridgeError):
    """The buffer ends before a complete frame; ``needed`` more bytes are required."""

    def __init__(self, needed: int):
        super().__init__(f"need {needed} more bytes")
        self.needed = needed


class ProtocolViolation(BridgeError):
    pass


class MalformedPose(ProtocolViolation):
    pass


class ConnectionLost(BridgeError):
    pass
