import hashlib

import pytest
from hypothesis import given, settings, strategies as st

import codec
from errors import EmptyIdentity, FrameDecodeError, IdentityTooLong
from group import element, get_group

identities = st.text(min_size=1, max_size=64)


def test_digest_empty_input():
    assert codec.digest(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_mac_rfc4231_case_1():
    key = b"\x0b" * 20
    assert codec.mac(key, b"Hi There").hex() == (
        "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
    )


def test_mac_rfc4231_case_2():
    assert codec.mac(b"Jefe", b"what do ya want for nothing?").hex() == (
        "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
    )


def test_kdf_prefixes_tag():
    assert codec.kdf(b"\x02", codec.SESSION_KEY_TAG) == hashlib.sha256(b"SK\x02").digest()
    assert codec.kdf(b"\x02", codec.SESSION_KEY_TAG) != codec.kdf(b"\x02", codec.CONFIRMATION_KEY_TAG)


def test_encode_element_fixed_width(toy, modp):
    assert codec.encode_element(element(8, toy)) == b"\x08"
    encoded = codec.encode_element(element(2, modp))
    assert len(encoded) == 256
    assert encoded[-1] == 2 and encoded[:-1] == bytes(255)


def test_decode_element_rejects(toy):
    with pytest.raises(FrameDecodeError):
        codec.decode_element(b"\x00\x08", toy)
    with pytest.raises(FrameDecodeError):
        codec.decode_element(b"\x17", toy)


def test_encode_identity_prefix():
    assert codec.encode_identity("A") == b"\x00\x01A"
    assert codec.encode_identity("é") == b"\x00\x02\xc3\xa9"


def test_encode_identity_limits():
    with pytest.raises(EmptyIdentity):
        codec.encode_identity("")
    assert len(codec.encode_identity("x" * 0xFFFF)) == 0xFFFF + 2
    with pytest.raises(IdentityTooLong):
        codec.encode_identity("x" * 0x10000)


@settings(max_examples=50, deadline=None)
@given(identities, identities)
def test_identity_concatenation_is_unambiguous(a, b):
    data = codec.encode_identity(a) + codec.encode_identity(b)
    first, end = codec.decode_identity(data)
    second, end = codec.decode_identity(data, end)
    assert (first, second) == (a, b)
    assert end == len(data)


@settings(max_examples=50, deadline=None)
@given(identities, identities, identities, identities)
def test_distinct_identity_pairs_encode_differently(a, b, c, d):
    if (a, b) == (c, d):
        return
    assert codec.encode_identity(a) + codec.encode_identity(b) != codec.encode_identity(c) + codec.encode_identity(d)


def test_decode_identity_truncated():
    with pytest.raises(FrameDecodeError):
        codec.decode_identity(b"\x00")
    with pytest.raises(FrameDecodeError):
        codec.decode_identity(b"\x00\x05AB")
    with pytest.raises(FrameDecodeError):
        codec.decode_identity(b"\x00\x00")


def test_fingerprint_is_hex_sha256():
    assert codec.fingerprint(b"") == codec.digest(b"").hex()


def test_digest_separates_zero_runs():
    assert codec.digest(b"\x00") != codec.digest(b"\x00\x00")


def test_mac_changes_with_any_input_bit():
    key, data = b"\x0b" * 20, b"Hi There"
    reference = codec.mac(key, data)
    for i in range(len(data) * 8):
        flipped = bytearray(data)
        flipped[i // 8] ^= 1 << (i % 8)
        assert codec.mac(key, bytes(flipped)) != reference, i


toy_values = st.integers(min_value=0, max_value=22)


@settings(max_examples=100, deadline=None)
@given(identities, toy_values, identities, toy_values)
def test_identity_element_tuples_encode_injectively(a, x, b, y):
    params = get_group("toy23")

    def encode(identity: str, value: int) -> bytes:
        return codec.encode_identity(identity) + codec.encode_element(element(value, params))

    assert (encode(a, x) == encode(b, y)) == ((a, x) == (b, y))
