"""Canonical byte encodings for every hash, KDF and MAC input.

Every "||" in the protocol formulas is a concatenation of self-delimiting
pieces: identities carry a 2-octet length prefix, group elements use the
fixed width of p, numeric tags are single octets.
"""

import hashlib
import hmac

from errors import EmptyIdentity, FrameDecodeError, IdentityTooLong
from group import GroupElement, GroupParams

DIGEST_SIZE = 32
MAX_IDENTITY_OCTETS = 0xFFFF

# KDF domain-separation tags
SESSION_KEY_TAG = b"SK"
CONFIRMATION_KEY_TAG = b"KC"

# Numeric tags of the standards' confirmation strings
INITIATOR_TAG = b"\x03"
RESPONDER_TAG = b"\x04"
UNILATERAL_LABEL = "KC_1_U"


def encode_element(X: GroupElement) -> bytes:
    return X.value.to_bytes(X.params.element_width, "big")


def decode_element(data: bytes, params: GroupParams) -> GroupElement:
    if len(data) != params.element_width:
        raise FrameDecodeError(
            f"element needs {params.element_width} octets, got {len(data)}"
        )
    value = int.from_bytes(data, "big")
    if value >= params.p:
        raise FrameDecodeError("element not below p")
    return GroupElement(value=value, params=params)


def encode_identity(identity: str) -> bytes:
    """2-octet big-endian length prefix followed by the UTF-8 bytes."""
    if not identity:
        raise EmptyIdentity("identity must not be empty")
    raw = identity.encode("utf-8")
    if len(raw) > MAX_IDENTITY_OCTETS:
        raise IdentityTooLong(f"identity is {len(raw)} octets (max {MAX_IDENTITY_OCTETS})")
    return len(raw).to_bytes(2, "big") + raw


def decode_identity(data: bytes, offset: int = 0) -> tuple[str, int]:
    if len(data) < offset + 2:
        raise FrameDecodeError("truncated identity length")
    size = int.from_bytes(data[offset : offset + 2], "big")
    end = offset + 2 + size
    if size == 0 or len(data) < end:
        raise FrameDecodeError("truncated or empty identity")
    try:
        return data[offset + 2 : end].decode("utf-8"), end
    except UnicodeDecodeError as e:
        raise FrameDecodeError(f"identity is not UTF-8: {e}") from e


def digest(data: bytes) -> bytes:
    """H: SHA-256 everywhere in the lab."""
    return hashlib.sha256(data).digest()


def kdf(data: bytes, context_tag: bytes) -> bytes:
    return digest(context_tag + data)


def mac(key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, hashlib.sha256).digest()


def fingerprint(data: bytes) -> str:
    """Hex SHA-256 of key material, safe to print and log."""
    return hashlib.sha256(data).hexdigest()
