"""Deterministic in-memory network for SPEKE sessions.

Every message travels as an Envelope through a FIFO queue. When an adversary
is attached, each envelope an honest endpoint sends is handed to it first and
only its InterceptActions decide what gets delivered. Adversary injections are
delivered without a second interception. The same endpoint logic also runs
over a TCP socket for the serve/connect demo.
"""

import logging
import random
import socket
from collections import deque
from enum import Enum
from typing import Callable, Optional, Protocol

from pydantic import BaseModel, ConfigDict, Field

import codec
from errors import (
    ConfirmationDisabled,
    ConfirmationMismatch,
    ConnectionClosed,
    FrameDecodeError,
    SessionTimeout,
    UnknownEndpoint,
    WrongPhase,
)
from group import GroupParams, RandomSource, Scalar, sample_scalar
from protocol import (
    ORDERED_METHODS,
    ConfirmationMethod,
    Identity,
    Message,
    MessageKind,
    Phase,
    Role,
    SessionState,
    Variant,
    abort,
    is_complete,
    make_confirmation,
    process_exchange,
    start_session,
    verify_confirmation,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 64
ADVERSARY_LABEL = "M"
SOCKET_TIMEOUT = 10.0
MAX_FRAME_OCTETS = 1 << 20

KIND_EXCHANGE = 0x01
KIND_CONFIRM = 0x02


# ============================================================
# TRACE
# ============================================================


class EventKind(str, Enum):
    SENT = "SENT"
    DELIVERED = "DELIVERED"
    MODIFIED = "MODIFIED"
    DROPPED = "DROPPED"
    KEY_DERIVED = "KEY_DERIVED"
    ACCEPTED = "ACCEPTED"
    ABORTED = "ABORTED"


class TraceEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: int
    kind: EventKind
    session: str
    src: Optional[str] = None
    dst: Optional[str] = None
    round: Optional[int] = None
    detail: Optional[str] = None

    def to_line(self) -> str:
        parts = [f"step={self.step}", f"event={self.kind.value}", f"session={self.session}"]
        for name in ("src", "dst", "round"):
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{name}={value}")
        if self.detail is not None:
            parts.append(f"detail={self.detail}")
        return " ".join(parts)


class EventTrace(BaseModel):
    events: list[TraceEvent] = Field(default_factory=list)

    def record(self, **fields) -> TraceEvent:
        event = TraceEvent(**fields)
        self.events.append(event)
        return event

    def of_kind(self, *kinds: EventKind) -> list[TraceEvent]:
        return [e for e in self.events if e.kind in kinds]

    def to_lines(self) -> list[str]:
        return [e.to_line() for e in self.events]


# ============================================================
# CHANNEL TYPES
# ============================================================


class Envelope(BaseModel):
    model_config = ConfigDict(frozen=True)

    src: str
    dst: str
    message: Message
    round: int
    injected: bool = False


class ActionKind(str, Enum):
    FORWARD = "FORWARD"
    MODIFY = "MODIFY"
    DROP = "DROP"
    INJECT = "INJECT"


class InterceptAction(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ActionKind
    message: Optional[Message] = None
    session: Optional[str] = None

    @classmethod
    def forward(cls) -> "InterceptAction":
        return cls(kind=ActionKind.FORWARD)

    @classmethod
    def modify(cls, message: Message) -> "InterceptAction":
        return cls(kind=ActionKind.MODIFY, message=message)

    @classmethod
    def drop(cls) -> "InterceptAction":
        return cls(kind=ActionKind.DROP)

    @classmethod
    def inject(cls, session: str, message: Message) -> "InterceptAction":
        return cls(kind=ActionKind.INJECT, session=session, message=message)


class PublicView(BaseModel):
    """Everything an adversary is allowed to know about a run."""

    model_config = ConfigDict(frozen=True)

    identities: tuple[str, ...]
    params: GroupParams
    variant: Variant
    confirm: ConfirmationMethod


class SessionSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    host: str
    label: str
    role: Role
    self_id: Identity
    peer_id: Identity
    route: str
    eager: bool = True


class ExchangeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: Variant
    confirm: ConfirmationMethod
    params: GroupParams
    identity_a: str = "A"
    identity_b: str = "B"
    password_a: bytes = Field(repr=False)
    password_b: Optional[bytes] = Field(default=None, repr=False)
    duplicate_detection: bool = False
    max_steps: int = DEFAULT_MAX_STEPS

    @property
    def view(self) -> PublicView:
        return PublicView(
            identities=(self.identity_a, self.identity_b),
            params=self.params,
            variant=self.variant,
            confirm=self.confirm,
        )


class SimResult(BaseModel):
    states: dict[str, SessionState]
    trace: EventTrace
    steps: int

    @property
    def rounds(self) -> int:
        """Highest causal round of any sent message."""
        return max((e.round for e in self.trace.of_kind(EventKind.SENT)), default=0)

    def fingerprint(self, label: str) -> Optional[str]:
        state = self.states.get(label)
        if state is None or state.key is None:
            return None
        return state.key.fingerprint


class HonestRun(SimResult):
    initiator: str
    responder: str

    @property
    def keys_match(self) -> bool:
        a = self.states[self.initiator].key
        b = self.states[self.responder].key
        return a is not None and b is not None and a.value == b.value

    @property
    def ok(self) -> bool:
        return self.keys_match and all(
            is_complete(self.states[label]) for label in (self.initiator, self.responder)
        )


class Adversary(Protocol):
    def on_start(self, channel: "AdversaryChannel") -> list[InterceptAction]: ...

    def intercept(
        self, envelope: Envelope, channel: "AdversaryChannel"
    ) -> list[InterceptAction]: ...


# ============================================================
# ENDPOINTS
# ============================================================


class Host:
    """A party holding one password and possibly several sessions."""

    def __init__(self, name: str, password: bytes, duplicate_detection: bool = False):
        self.name = name
        self.password = password
        self.duplicate_detection = duplicate_detection
        # elements sent or received by any session of this host
        self.seen: set[int] = set()

    def __repr__(self) -> str:
        return f"Host({self.name!r})"


class Endpoint:
    def __init__(self, net: "SimNet", spec: SessionSpec, host: Host):
        self.net = net
        self.spec = spec
        self.host = host
        self.state: Optional[SessionState] = None
        self.pending: list[tuple[Message, int]] = []
        # set when the session this endpoint sent its tag to aborted on it
        self.tag_rejected = False

    @property
    def label(self) -> str:
        return self.spec.label

    def start(self, round_: int) -> None:
        self.state, msg = start_session(
            self.spec.role,
            self.spec.self_id,
            self.spec.peer_id,
            self.host.password,
            self.net.variant,
            self.net.confirm,
            self.net.params,
            self.net.rng,
            duplicate_detection=self.host.duplicate_detection,
        )
        self.host.seen.add(self.state.own_element.value)
        self.net.send(self.label, self.spec.route, msg, round_)

    def receive(self, msg: Message, round_: int) -> None:
        if self.state is None:
            if msg.kind is MessageKind.CONFIRM:
                self.pending.append((msg, round_))
                return
            # lazy responder: answer the first inbound exchange
            self.start(round_ + 1)
        if self.state.phase in (Phase.ACCEPTED, Phase.ABORTED):
            logger.debug(f"{self.label}: ignoring {msg.kind.value} in {self.state.phase.value}")
            return
        try:
            if msg.kind is MessageKind.EXCHANGE:
                self._on_exchange(msg, round_)
            else:
                self._on_confirm(msg, round_)
        except (WrongPhase, ConfirmationDisabled) as e:
            logger.debug(f"{self.label}: ignoring {msg.kind.value}: {e}")

    def update(self, new: SessionState) -> None:
        old, self.state = self.state, new
        self.net.note_transition(self.label, old, new)

    def _on_exchange(self, msg: Message, round_: int) -> None:
        seen = self.host.seen if self.host.duplicate_detection else ()
        self.update(process_exchange(self.state, msg, seen_elements=seen))
        self.host.seen.add(msg.element.value)
        if self.state.phase is not Phase.KEYED:
            return
        self._confirm_if_due(round_ + 1)
        pending, self.pending = self.pending, []
        for confirm_msg, confirm_round in pending:
            if self.state.phase in (Phase.ACCEPTED, Phase.ABORTED):
                break
            self._on_confirm(confirm_msg, max(round_, confirm_round))

    def _on_confirm(self, msg: Message, round_: int) -> None:
        if self.state.phase is Phase.SENT:
            self.pending.append((msg, round_))
            return
        self.update(verify_confirmation(self.state, msg))
        if self.state.phase is Phase.KEYED and self.state.peer_verified:
            self._confirm_if_due(round_ + 1)

    def _confirm_if_due(self, round_: int) -> None:
        state = self.state
        if state.confirm is ConfirmationMethod.NONE:
            return
        if state.confirm in ORDERED_METHODS and state.role is Role.RESPONDER and not state.peer_verified:
            return
        new, msg = make_confirmation(state)
        self.update(new)
        self.net.send(self.label, self.spec.route, msg, round_)


# ============================================================
# SIMULATOR
# ============================================================


class AdversaryChannel:
    """The only handle an adversary gets on a run.

    It holds the public view and two callables, never the simulator, its
    hosts or any session state.
    """

    __slots__ = ("_view", "_open", "_draw")

    def __init__(
        self,
        view: PublicView,
        open_session: Callable[[SessionSpec], None],
        draw_scalar: Callable[[], Scalar],
    ):
        self._view = view
        self._open = open_session
        self._draw = draw_scalar

    @property
    def view(self) -> PublicView:
        return self._view

    def open_session(
        self,
        host: str,
        label: str,
        role: Role,
        self_id: Identity,
        peer_id: Identity,
        route: str = ADVERSARY_LABEL,
        *,
        eager: bool = False,
    ) -> None:
        """Make an honest host open a session, as if prompted by an inbound claim."""
        spec = SessionSpec(
            host=host, label=label, role=role, self_id=self_id, peer_id=peer_id, route=route, eager=eager
        )
        self._open(spec)

    def sample_scalar(self) -> Scalar:
        return self._draw()


class SimNet:
    def __init__(
        self,
        params: GroupParams,
        variant: Variant,
        confirm: ConfirmationMethod,
        rng: RandomSource,
        *,
        max_steps: int = DEFAULT_MAX_STEPS,
        adversary: Optional[Adversary] = None,
        adversary_rng: Optional[RandomSource] = None,
        view: Optional[PublicView] = None,
    ):
        self.params = params
        self.variant = variant
        self.confirm = confirm
        self.rng = rng
        self.max_steps = max_steps
        self.adversary = adversary
        self._adversary_rng = adversary_rng
        self.view = view or PublicView(identities=(), params=params, variant=variant, confirm=confirm)
        self.hosts: dict[str, Host] = {}
        self.endpoints: dict[str, Endpoint] = {}
        self.queue: deque[Envelope] = deque()
        self.trace = EventTrace()
        self.step = 0

    @property
    def adversary_rng(self) -> RandomSource:
        # drawn on first use only, so scripted honest randomness stays aligned
        if self._adversary_rng is None:
            self._adversary_rng = random.Random(self.rng.getrandbits(64))
        return self._adversary_rng

    def add_host(self, name: str, password: bytes, *, duplicate_detection: bool = False) -> Host:
        host = Host(name, password, duplicate_detection)
        self.hosts[name] = host
        return host

    def open_session(self, spec: SessionSpec) -> Endpoint:
        if spec.host not in self.hosts:
            raise UnknownEndpoint(f"no host named {spec.host!r}")
        if spec.label in self.endpoints or spec.label == ADVERSARY_LABEL:
            raise UnknownEndpoint(f"session label {spec.label!r} already in use")
        endpoint = Endpoint(self, spec, self.hosts[spec.host])
        self.endpoints[spec.label] = endpoint
        return endpoint

    def send(self, src: str, dst: str, msg: Message, round_: int, *, injected: bool = False) -> None:
        self.trace.record(
            step=self.step, kind=EventKind.SENT, session=src, src=src, dst=dst, round=round_, detail=msg.describe()
        )
        self.queue.append(Envelope(src=src, dst=dst, message=msg, round=round_, injected=injected))

    def note_transition(self, label: str, old: SessionState, new: SessionState) -> None:
        if old.key is None and new.key is not None:
            self.trace.record(
                step=self.step, kind=EventKind.KEY_DERIVED, session=label, detail=new.key.fingerprint
            )
        if new.phase is Phase.ACCEPTED and old.phase is not Phase.ACCEPTED:
            self.trace.record(step=self.step, kind=EventKind.ACCEPTED, session=label)
        if new.phase is Phase.ABORTED and old.phase is not Phase.ABORTED:
            self.trace.record(step=self.step, kind=EventKind.ABORTED, session=label, detail=new.abort_reason)

    def _channel(self) -> AdversaryChannel:
        def open_session(spec: SessionSpec) -> None:
            endpoint = self.open_session(spec)
            if spec.eager:
                endpoint.start(1)

        def draw_scalar() -> Scalar:
            return sample_scalar(self.adversary_rng, self.params)

        return AdversaryChannel(self.view, open_session, draw_scalar)

    def run(self) -> SimResult:
        channel = self._channel()
        for endpoint in list(self.endpoints.values()):
            if endpoint.spec.eager:
                endpoint.start(1)
        if self.adversary is not None:
            self._apply(self.adversary.on_start(channel), None)

        while self.queue and self.step < self.max_steps:
            envelope = self.queue.popleft()
            self.step += 1
            logger.debug(f"step {self.step}: {envelope.src} -> {envelope.dst} {envelope.message.describe()}")
            if envelope.injected or self.adversary is None:
                self._deliver(envelope)
            else:
                self._apply(self.adversary.intercept(envelope, channel), envelope)

        if self.queue:
            logger.warning(f"Step budget of {self.max_steps} exhausted with {len(self.queue)} message(s) queued")
        self._expire()
        states = {label: ep.state for label, ep in self.endpoints.items() if ep.state is not None}
        return SimResult(states=states, trace=self.trace, steps=self.step)

    def _apply(self, actions: list[InterceptAction], envelope: Optional[Envelope]) -> None:
        if envelope is not None and not actions:
            self.trace.record(step=self.step, kind=EventKind.DROPPED, session=envelope.dst, src=envelope.src, dst=envelope.dst)
            return
        for action in actions:
            if action.kind is ActionKind.INJECT:
                if action.session not in self.endpoints:
                    raise UnknownEndpoint(f"cannot inject into unknown session {action.session!r}")
                round_ = envelope.round + 1 if envelope is not None else 1
                self.send(ADVERSARY_LABEL, action.session, action.message, round_, injected=True)
            elif envelope is None:
                raise ValueError(f"{action.kind.value} needs an intercepted envelope")
            elif action.kind is ActionKind.FORWARD:
                self._deliver(envelope)
            elif action.kind is ActionKind.MODIFY:
                self.trace.record(
                    step=self.step,
                    kind=EventKind.MODIFIED,
                    session=envelope.dst,
                    src=envelope.src,
                    dst=envelope.dst,
                    detail=action.message.describe(),
                )
                self._deliver(envelope.model_copy(update={"message": action.message}))
            else:
                self.trace.record(
                    step=self.step, kind=EventKind.DROPPED, session=envelope.dst, src=envelope.src, dst=envelope.dst
                )

    def _deliver(self, envelope: Envelope) -> None:
        endpoint = self.endpoints.get(envelope.dst)
        if endpoint is None:
            self.trace.record(
                step=self.step,
                kind=EventKind.DROPPED,
                session=envelope.dst,
                src=envelope.src,
                dst=envelope.dst,
                detail="no such endpoint",
            )
            return
        self.trace.record(
            step=self.step, kind=EventKind.DELIVERED, session=envelope.dst, src=envelope.src, dst=envelope.dst, round=envelope.round
        )
        was_aborted = endpoint.state is not None and endpoint.state.phase is Phase.ABORTED
        endpoint.receive(envelope.message, envelope.round)
        sender = self.endpoints.get(envelope.src)
        if (
            sender is not None
            and envelope.message.kind is MessageKind.CONFIRM
            and not was_aborted
            and endpoint.state is not None
            and endpoint.state.abort_reason == ConfirmationMismatch.__name__
        ):
            sender.tag_rejected = True

    def _expire(self) -> None:
        for endpoint in self.endpoints.values():
            state = endpoint.state
            if state is None or is_complete(state) or state.phase is Phase.ABORTED:
                continue
            if state.phase is Phase.CONFIRM_SENT and endpoint.tag_rejected:
                # the responder's abort is what ended the run
                endpoint.update(abort(state, ConfirmationMismatch, "peer rejected the confirmation tag"))
                continue
            endpoint.update(abort(state, SessionTimeout, f"still {state.phase.value} after {self.step} steps"))


# ============================================================
# RUNNERS
# ============================================================


def honest_sessions(config: ExchangeConfig) -> list[SessionSpec]:
    a, b = config.identity_a, config.identity_b
    return [
        SessionSpec(host=a, label=a, role=Role.INITIATOR, self_id=Identity(base_name=a), peer_id=Identity(base_name=b), route=b),
        SessionSpec(host=b, label=b, role=Role.RESPONDER, self_id=Identity(base_name=b), peer_id=Identity(base_name=a), route=a),
    ]


def _build(
    config: ExchangeConfig,
    rng: RandomSource,
    sessions: list[SessionSpec],
    adversary: Optional[Adversary] = None,
    adversary_rng: Optional[RandomSource] = None,
) -> SimNet:
    net = SimNet(
        config.params,
        config.variant,
        config.confirm,
        rng,
        max_steps=config.max_steps,
        adversary=adversary,
        adversary_rng=adversary_rng,
        view=config.view,
    )
    net.add_host(config.identity_a, config.password_a, duplicate_detection=config.duplicate_detection)
    net.add_host(
        config.identity_b,
        config.password_b if config.password_b is not None else config.password_a,
        duplicate_detection=config.duplicate_detection,
    )
    for spec in sessions:
        net.open_session(spec)
    return net


def run_honest_exchange(config: ExchangeConfig, rng: RandomSource) -> HonestRun:
    sessions = honest_sessions(config)
    result = _build(config, rng, sessions).run()
    run = HonestRun(
        steps=result.steps,
        states=result.states,
        trace=result.trace,
        initiator=sessions[0].label,
        responder=sessions[1].label,
    )
    logger.info(
        f"Honest run {config.variant.value}/{config.confirm.value}: "
        f"{'ok' if run.ok else 'failed'} in {run.rounds} round(s)"
    )
    return run


def run_with_adversary(
    config: ExchangeConfig,
    adversary: Adversary,
    rng: RandomSource,
    *,
    sessions: Optional[list[SessionSpec]] = None,
    adversary_rng: Optional[RandomSource] = None,
) -> SimResult:
    """Run `sessions` (the honest pair by default) with every message routed through `adversary`."""
    net = _build(config, rng, sessions if sessions is not None else honest_sessions(config), adversary, adversary_rng)
    return net.run()


# ============================================================
# WIRE FORMAT
# ============================================================


def encode_message(msg: Message) -> bytes:
    if msg.kind is MessageKind.EXCHANGE:
        return (
            bytes([KIND_EXCHANGE])
            + codec.encode_identity(msg.sender_identity)
            + codec.encode_element(msg.element)
        )
    return bytes([KIND_CONFIRM]) + msg.tag


def decode_message(payload: bytes, params: GroupParams) -> Message:
    if not payload:
        raise FrameDecodeError("empty payload")
    kind, body = payload[0], payload[1:]
    if kind == KIND_EXCHANGE:
        identity, end = codec.decode_identity(body)
        return Message.exchange(identity, codec.decode_element(body[end:], params))
    if kind == KIND_CONFIRM:
        if len(body) != codec.DIGEST_SIZE:
            raise FrameDecodeError(f"confirmation tag must be {codec.DIGEST_SIZE} octets, got {len(body)}")
        return Message.confirm(body)
    raise FrameDecodeError(f"unknown message kind 0x{kind:02x}")


def encode_frame(msg: Message) -> bytes:
    payload = encode_message(msg)
    return len(payload).to_bytes(4, "big") + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except TimeoutError as e:
            raise SessionTimeout("peer did not answer in time") from e
        if not chunk:
            if buf:
                raise FrameDecodeError(f"connection closed after {len(buf)} of {n} octets")
            break
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes:
    header = _recv_exact(sock, 4)
    if not header:
        raise ConnectionClosed("peer closed the connection")
    size = int.from_bytes(header, "big")
    if not 0 < size <= MAX_FRAME_OCTETS:
        raise FrameDecodeError(f"invalid frame length {size}")
    payload = _recv_exact(sock, size)
    if len(payload) < size:
        raise FrameDecodeError(f"connection closed after {len(payload)} of {size} octets")
    return payload


def run_socket_session(
    sock: socket.socket,
    role: Role,
    self_id: Identity,
    peer_id: Identity,
    password: bytes,
    variant: Variant,
    confirm: ConfirmationMethod,
    params: GroupParams,
    rng: RandomSource,
    *,
    timeout: float = SOCKET_TIMEOUT,
) -> SessionState:
    """One handshake over a connected socket; returns the final state."""
    sock.settimeout(timeout)

    def send(msg: Message) -> None:
        sock.sendall(encode_frame(msg))

    def receive() -> Message:
        return decode_message(read_frame(sock), params)

    state, msg = start_session(role, self_id, peer_id, password, variant, confirm, params, rng)
    send(msg)
    state = process_exchange(state, receive())
    if state.phase is Phase.ABORTED or confirm is ConfirmationMethod.NONE:
        return state

    if confirm in ORDERED_METHODS and role is Role.RESPONDER:
        state = verify_confirmation(state, receive())
        if state.phase is Phase.ABORTED:
            return state
        state, msg = make_confirmation(state)
        send(msg)
        return state

    state, msg = make_confirmation(state)
    send(msg)
    try:
        reply = receive()
    except ConnectionClosed:
        if state.phase is not Phase.CONFIRM_SENT:
            raise
        # an ordered-method responder closes after rejecting our tag
        return abort(state, ConfirmationMismatch, "peer closed without confirming")
    return verify_confirmation(state, reply)
