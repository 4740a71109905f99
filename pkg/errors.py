class SpekeError(Exception):
    pass


# ============================================================
# GROUP
# ============================================================


class GroupError(SpekeError):
    pass


class NotSafePrime(GroupError):
    """p != 2q + 1"""


class NotPrime(GroupError):
    pass


class DegenerateGenerator(GroupError):
    """The derived generator is 0 or 1 and would confine the exchange."""


class InvalidExponent(GroupError):
    pass


class UnknownGroup(GroupError):
    pass


# ============================================================
# CODEC
# ============================================================


class CodecError(SpekeError):
    pass


class EmptyIdentity(CodecError):
    pass


class IdentityTooLong(CodecError):
    pass


class FrameDecodeError(CodecError):
    pass


class ConnectionClosed(FrameDecodeError):
    """The peer closed the connection on a frame boundary."""


# ============================================================
# PROTOCOL
# ============================================================


class ProtocolError(SpekeError):
    pass


class IdentitiesEqual(ProtocolError):
    """A session must not be opened with itself as the peer."""


class EmptyPassword(ProtocolError):
    pass


class WrongPhase(ProtocolError):
    pass


class ConfirmationDisabled(ProtocolError):
    pass


# Recorded by name in SessionState.abort_reason. Only the socket transport
# raises one of them (SessionTimeout).


class RangeCheckFailed(ProtocolError):
    pass


class PeerIdentityMismatch(ProtocolError):
    pass


class ConfirmationMismatch(ProtocolError):
    pass


class DuplicateMessage(ProtocolError):
    pass


class SessionTimeout(ProtocolError):
    pass


# ============================================================
# HARNESS
# ============================================================


class ConfigError(SpekeError):
    """Invalid user input; mapped to exit status 2."""


class GoldenMismatch(SpekeError):
    def __init__(self, cells: list[str]):
        self.cells = cells
        super().__init__(f"{len(cells)} cell(s) differ from golden: " + "; ".join(cells))


class UnknownEndpoint(SpekeError):
    """An adversary action names a session the simulator does not know."""
