"""Variant-parameterised SPEKE session state machine.

One SessionState is one party's view of one session. The functions below are
pure: each returns a new state, so a caller can keep the history of a session
or replay it. Failures caused by the peer (range check, identity mismatch,
confirmation mismatch, duplicates) move the session to ABORTED and record the
reason; misuse by the caller raises.
"""

import hmac
import logging
from collections.abc import Collection
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import codec
from errors import (
    ConfirmationDisabled,
    ConfirmationMismatch,
    DuplicateMessage,
    EmptyPassword,
    IdentitiesEqual,
    PeerIdentityMismatch,
    ProtocolError,
    RangeCheckFailed,
    WrongPhase,
)
from group import (
    GroupElement,
    GroupParams,
    RandomSource,
    Scalar,
    derive_generator_hashed,
    derive_generator_original,
    exp,
    sample_scalar,
    validate_element_range,
)

logger = logging.getLogger(__name__)


# ============================================================
# ENUMS
# ============================================================


class Role(str, Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"

    @property
    def other(self) -> "Role":
        return Role.RESPONDER if self is Role.INITIATOR else Role.INITIATOR


class Variant(str, Enum):
    JABLON96 = "jablon96"
    IEEE_P1363_2 = "ieee-p1363-2"
    ISO_11770_4_2006 = "iso-11770-4-2006"
    PATCH_2014 = "patch-2014"
    P_SPEKE_2017 = "p-speke-2017"


class ConfirmationMethod(str, Enum):
    NONE = "none"
    JABLON_DOUBLE_HASH = "jablon-double-hash"
    TAGGED_HASH_3_4 = "tagged-hash-3-4"
    SYMMETRIC_HASH = "symmetric-hash"
    SYMMETRIC_MAC = "symmetric-mac"


class Phase(str, Enum):
    CREATED = "CREATED"
    SENT = "SENT"
    KEYED = "KEYED"
    CONFIRM_SENT = "CONFIRM_SENT"
    ACCEPTED = "ACCEPTED"
    ABORTED = "ABORTED"


class MessageKind(str, Enum):
    EXCHANGE = "EXCHANGE"
    CONFIRM = "CONFIRM"


# Variants whose session key is H(g^xy) alone
LEGACY_VARIANTS = frozenset(
    {Variant.JABLON96, Variant.IEEE_P1363_2, Variant.ISO_11770_4_2006}
)

# The second confirmation flow depends on the first
ORDERED_METHODS = frozenset(
    {ConfirmationMethod.JABLON_DOUBLE_HASH, ConfirmationMethod.TAGGED_HASH_3_4}
)

PRESET_CONFIRMATION = {
    Variant.JABLON96: ConfirmationMethod.JABLON_DOUBLE_HASH,
    Variant.IEEE_P1363_2: ConfirmationMethod.TAGGED_HASH_3_4,
    Variant.ISO_11770_4_2006: ConfirmationMethod.TAGGED_HASH_3_4,
    Variant.PATCH_2014: ConfirmationMethod.SYMMETRIC_MAC,
    Variant.P_SPEKE_2017: ConfirmationMethod.SYMMETRIC_HASH,
}


def preset_confirmation(variant: Variant) -> ConfirmationMethod:
    return PRESET_CONFIRMATION[variant]


def is_historical_pairing(variant: Variant, confirm: ConfirmationMethod) -> bool:
    return confirm in (ConfirmationMethod.NONE, PRESET_CONFIRMATION[variant])


def round_count(confirm: ConfirmationMethod) -> int:
    """Total rounds including the single exchange round."""
    if confirm is ConfirmationMethod.NONE:
        return 1
    if confirm in ORDERED_METHODS:
        return 3
    return 2


# ============================================================
# TYPES
# ============================================================


class Identity(BaseModel):
    model_config = ConfigDict(frozen=True)

    base_name: str
    session_extension: Optional[int] = None

    @field_validator("session_extension")
    @classmethod
    def validate_extension(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError("session extension must be a positive integer")
        return v

    @property
    def rendered(self) -> str:
        if self.session_extension is None:
            return self.base_name
        return f"{self.base_name} ({self.session_extension})"

    def __str__(self) -> str:
        return self.rendered


class Message(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: MessageKind
    sender_identity: Optional[str] = None
    element: Optional[GroupElement] = None
    tag: Optional[bytes] = None

    @model_validator(mode="after")
    def check_fields(self) -> "Message":
        if self.kind is MessageKind.EXCHANGE:
            if self.sender_identity is None or self.element is None or self.tag is not None:
                raise ValueError("EXCHANGE carries exactly an identity and an element")
        elif self.tag is None or self.sender_identity is not None or self.element is not None:
            raise ValueError("CONFIRM carries exactly a tag")
        return self

    @classmethod
    def exchange(cls, sender_identity: str, element: GroupElement) -> "Message":
        return cls(kind=MessageKind.EXCHANGE, sender_identity=sender_identity, element=element)

    @classmethod
    def confirm(cls, tag: bytes) -> "Message":
        return cls(kind=MessageKind.CONFIRM, tag=tag)

    def describe(self) -> str:
        if self.kind is MessageKind.EXCHANGE:
            value = str(self.element.value)
            if len(value) > 16:
                value = value[:16] + "..."
            return f"EXCHANGE({self.sender_identity}, {value})"
        return f"CONFIRM({self.tag.hex()[:16]})"


class SessionKey(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: bytes = Field(repr=False)
    sid: Optional[bytes] = Field(default=None, repr=False)

    @property
    def fingerprint(self) -> str:
        return codec.fingerprint(self.value)


class SessionState(BaseModel):
    model_config = ConfigDict(frozen=True)

    role: Role
    self_id: Identity
    peer_id: Identity
    variant: Variant
    confirm: ConfirmationMethod
    params: GroupParams = Field(repr=False)
    g: GroupElement = Field(repr=False)
    x: Scalar = Field(repr=False)
    own_element: GroupElement
    peer_element: Optional[GroupElement] = None
    shared: Optional[GroupElement] = Field(default=None, repr=False)
    key: Optional[SessionKey] = None
    phase: Phase = Phase.CREATED
    peer_verified: bool = False
    duplicate_detection: bool = False
    abort_reason: Optional[str] = None

    @property
    def label(self) -> str:
        return f"{self.self_id}->{self.peer_id}"


# ============================================================
# HELPERS
# ============================================================


def derive_generator(variant: Variant, password: bytes, params: GroupParams) -> GroupElement:
    if variant is Variant.JABLON96:
        return derive_generator_original(password, params)
    return derive_generator_hashed(password, params)


def is_complete(state: SessionState) -> bool:
    if state.phase is Phase.ACCEPTED:
        return True
    return state.phase is Phase.KEYED and state.confirm is ConfirmationMethod.NONE


def abort(state: SessionState, reason: type[ProtocolError], detail: str) -> SessionState:
    logger.info(f"Session {state.label} aborted: {reason.__name__} ({detail})")
    return state.model_copy(
        update={
            "phase": Phase.ABORTED,
            "key": None,
            "shared": None,
            "abort_reason": reason.__name__,
        }
    )


def _require_phase(state: SessionState, *allowed: Phase) -> None:
    if state.phase not in allowed:
        raise WrongPhase(
            f"{state.label} is {state.phase.value}, expected {'/'.join(p.value for p in allowed)}"
        )


# ============================================================
# OPERATIONS
# ============================================================


def start_session(
    role: Role,
    self_id: Identity,
    peer_id: Identity,
    password: bytes,
    variant: Variant,
    confirm: ConfirmationMethod,
    params: GroupParams,
    rng: RandomSource,
    *,
    duplicate_detection: bool = False,
) -> tuple[SessionState, Message]:
    # encode_identity raises EmptyIdentity / IdentityTooLong
    codec.encode_identity(self_id.rendered)
    codec.encode_identity(peer_id.rendered)
    if self_id.rendered == peer_id.rendered:
        raise IdentitiesEqual(f"self and peer are both {self_id.rendered!r}")
    if not password:
        raise EmptyPassword("password must not be empty")

    g = derive_generator(variant, password, params)
    x = sample_scalar(rng, params)
    X = exp(g, x)
    state = SessionState(
        role=role,
        self_id=self_id,
        peer_id=peer_id,
        variant=variant,
        confirm=confirm,
        params=params,
        g=g,
        x=x,
        own_element=X,
        phase=Phase.SENT,
        duplicate_detection=duplicate_detection,
    )
    logger.debug(f"Session {state.label} started as {role.value} ({variant.value}/{confirm.value})")
    return state, Message.exchange(self_id.rendered, X)


def derive_session_key(
    variant: Variant,
    self_id: str,
    peer_id: str,
    own_element: GroupElement,
    peer_element: GroupElement,
    shared: GroupElement,
    role: Role,
) -> SessionKey:
    """Session key per variant.

    `role` does not enter any derivation: the 2014 patch and P-SPEKE order
    their inputs with min/max, so both sides compute the same key whichever
    role they play.
    """
    enc_shared = codec.encode_element(shared)

    if variant in LEGACY_VARIANTS:
        return SessionKey(value=codec.kdf(enc_shared, codec.SESSION_KEY_TAG))

    if variant is Variant.PATCH_2014:
        ids = sorted([codec.encode_identity(self_id), codec.encode_identity(peer_id)])
        elements = sorted([codec.encode_element(own_element), codec.encode_element(peer_element)])
        M = codec.digest(ids[0] + ids[1])
        N = codec.digest(elements[0] + elements[1])
        return SessionKey(value=codec.kdf(M + N + enc_shared, codec.SESSION_KEY_TAG))

    s_own = codec.digest(codec.encode_identity(self_id) + codec.encode_element(own_element))
    s_peer = codec.digest(codec.encode_identity(peer_id) + codec.encode_element(peer_element))
    sid = max(s_own, s_peer) + min(s_own, s_peer)
    return SessionKey(value=codec.kdf(sid + enc_shared, codec.SESSION_KEY_TAG), sid=sid)


def confirmation_tag(
    confirm: ConfirmationMethod,
    *,
    sender_role: Role,
    sender_id: str,
    receiver_id: str,
    sender_element: GroupElement,
    receiver_element: GroupElement,
    key: SessionKey,
    shared: GroupElement,
    g: GroupElement,
) -> bytes:
    """The confirmation string the sender emits under `confirm`."""
    if confirm is ConfirmationMethod.NONE:
        raise ConfirmationDisabled("confirmation method is NONE")

    if confirm is ConfirmationMethod.JABLON_DOUBLE_HASH:
        if sender_role is Role.INITIATOR:
            return codec.digest(codec.digest(key.value))
        return codec.digest(key.value)

    if confirm is ConfirmationMethod.TAGGED_HASH_3_4:
        if sender_role is Role.INITIATOR:
            tag, x_i, y_r = codec.INITIATOR_TAG, sender_element, receiver_element
        else:
            tag, x_i, y_r = codec.RESPONDER_TAG, receiver_element, sender_element
        return codec.digest(
            tag
            + codec.encode_element(x_i)
            + codec.encode_element(y_r)
            + codec.encode_element(shared)
            + codec.encode_element(g)
        )

    transcript = (
        codec.encode_identity(sender_id)
        + codec.encode_identity(receiver_id)
        + codec.encode_element(sender_element)
        + codec.encode_element(receiver_element)
    )
    if confirm is ConfirmationMethod.SYMMETRIC_HASH:
        return codec.digest(transcript + codec.encode_element(shared) + codec.encode_element(g))

    k_c = codec.kdf(codec.encode_element(shared), codec.CONFIRMATION_KEY_TAG)
    return codec.mac(k_c, codec.encode_identity(codec.UNILATERAL_LABEL) + transcript)


def process_exchange(
    state: SessionState,
    msg: Message,
    *,
    seen_elements: Collection[int] = (),
) -> SessionState:
    """Consume the peer's EXCHANGE message and derive the session key.

    `seen_elements` holds the element values this host already sent or
    received in other sessions; it is only consulted when the session has
    duplicate detection enabled.
    """
    _require_phase(state, Phase.SENT)
    if msg.kind is not MessageKind.EXCHANGE:
        raise WrongPhase(f"{state.label} expects EXCHANGE, got {msg.kind.value}")

    if msg.sender_identity != state.peer_id.rendered:
        return abort(
            state,
            PeerIdentityMismatch,
            f"expected {state.peer_id.rendered!r}, got {msg.sender_identity!r}",
        )
    Y = msg.element
    if Y.params != state.params or not validate_element_range(Y):
        return abort(state, RangeCheckFailed, f"element {Y.value} outside [2, p-2]")
    if state.duplicate_detection and (
        Y.value == state.own_element.value or Y.value in seen_elements
    ):
        return abort(state, DuplicateMessage, "element already seen by this host")

    shared = exp(Y, state.x)
    key = derive_session_key(
        state.variant,
        state.self_id.rendered,
        state.peer_id.rendered,
        state.own_element,
        Y,
        shared,
        state.role,
    )
    logger.debug(f"Session {state.label} keyed ({key.fingerprint[:16]})")
    return state.model_copy(
        update={"peer_element": Y, "shared": shared, "key": key, "phase": Phase.KEYED}
    )


def _tag_from(state: SessionState, *, outgoing: bool) -> bytes:
    if outgoing:
        sender_role, sender_id, receiver_id = state.role, state.self_id, state.peer_id
        sender_element, receiver_element = state.own_element, state.peer_element
    else:
        sender_role, sender_id, receiver_id = state.role.other, state.peer_id, state.self_id
        sender_element, receiver_element = state.peer_element, state.own_element
    return confirmation_tag(
        state.confirm,
        sender_role=sender_role,
        sender_id=sender_id.rendered,
        receiver_id=receiver_id.rendered,
        sender_element=sender_element,
        receiver_element=receiver_element,
        key=state.key,
        shared=state.shared,
        g=state.g,
    )


def make_confirmation(state: SessionState) -> tuple[SessionState, Message]:
    """Emit this side's confirmation message.

    Under the ordered methods the initiator speaks first; a responder may only
    reply after it has verified the initiator's tag, and doing so completes it.
    """
    if state.confirm is ConfirmationMethod.NONE:
        raise ConfirmationDisabled("confirmation method is NONE")
    _require_phase(state, Phase.KEYED)
    if (
        state.confirm in ORDERED_METHODS
        and state.role is Role.RESPONDER
        and not state.peer_verified
    ):
        raise WrongPhase(f"{state.label}: responder must verify the initiator's tag first")

    tag = _tag_from(state, outgoing=True)
    phase = Phase.ACCEPTED if state.peer_verified else Phase.CONFIRM_SENT
    if phase is Phase.ACCEPTED:
        logger.debug(f"Session {state.label} accepted")
    return state.model_copy(update={"phase": phase}), Message.confirm(tag)


def verify_confirmation(state: SessionState, msg: Message) -> SessionState:
    if state.confirm is ConfirmationMethod.NONE:
        raise ConfirmationDisabled("confirmation method is NONE")
    if msg.kind is not MessageKind.CONFIRM:
        raise WrongPhase(f"{state.label} expects CONFIRM, got {msg.kind.value}")
    _require_phase(state, Phase.KEYED, Phase.CONFIRM_SENT)
    if state.peer_verified:
        raise WrongPhase(f"{state.label} already verified its peer")
    if (
        state.confirm in ORDERED_METHODS
        and state.role is Role.INITIATOR
        and state.phase is Phase.KEYED
    ):
        raise WrongPhase(f"{state.label}: initiator must send its tag first")

    expected = _tag_from(state, outgoing=False)
    if not hmac.compare_digest(expected, msg.tag):
        return abort(state, ConfirmationMismatch, "peer tag does not match")

    if state.phase is Phase.CONFIRM_SENT:
        logger.debug(f"Session {state.label} accepted")
        return state.model_copy(update={"phase": Phase.ACCEPTED, "peer_verified": True})
    return state.model_copy(update={"peer_verified": True})
