"""Safe-prime group arithmetic and secret-generator derivation.

All SPEKE variants work in the order-q subgroup of Z*_p with p = 2q + 1.
Squaring any residue other than 0 and +-1 lands in that subgroup, which is how
both generator derivations below produce a valid base.
"""

import logging
from functools import lru_cache
from typing import Protocol, Union

from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from sympy import isprime

from errors import DegenerateGenerator, GroupError, InvalidExponent, NotPrime, NotSafePrime, UnknownGroup

logger = logging.getLogger(__name__)


# ============================================================
# TYPES
# ============================================================


class GroupParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: int
    q: int
    element_width: int

    @model_validator(mode="after")
    def check_width(self) -> "GroupParams":
        if self.element_width != (self.p.bit_length() + 7) // 8:
            raise ValueError("element_width must be the byte length of p")
        return self


class GroupElement(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: int
    params: GroupParams

    @model_validator(mode="after")
    def check_range(self) -> "GroupElement":
        if not 0 <= self.value < self.params.p:
            raise ValueError("element must lie in [0, p)")
        return self

    def __str__(self) -> str:
        return str(self.value)


class Scalar(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: int

    @field_validator("value")
    @classmethod
    def validate_value(cls, v: int) -> int:
        if v < 1:
            raise ValueError("scalar must be at least 1")
        return v

    @classmethod
    def for_group(cls, value: int, params: GroupParams) -> "Scalar":
        if not 1 <= value <= params.q - 1:
            raise InvalidExponent(f"exponent {value} outside [1, q-1]")
        return cls(value=value)


class RandomSource(Protocol):
    def getrandbits(self, k: int) -> int: ...


# ============================================================
# PARAMETERS
# ============================================================


def validate_group(p: int, q: int) -> GroupParams:
    if p <= 3 or q <= 3:
        raise GroupError("p and q must both exceed 3")
    if p != 2 * q + 1:
        raise NotSafePrime(f"p != 2q + 1 (2*{q}+1 = {2 * q + 1})")
    # sympy runs strong base-2 Miller-Rabin plus a strong Lucas test (BPSW)
    if not isprime(q):
        raise NotPrime("q is not prime")
    if not isprime(p):
        raise NotPrime("p is not prime")
    return GroupParams(p=p, q=q, element_width=(p.bit_length() + 7) // 8)


# RFC 3526 group 14
_MODP2048_P = int(
    """
    FFFFFFFF FFFFFFFF C90FDAA2 2168C234 C4C6628B 80DC1CD1
    29024E08 8A67CC74 020BBEA6 3B139B22 514A0879 8E3404DD
    EF9519B3 CD3A431B 302B0A6D F25F1437 4FE1356D 6D51C245
    E485B576 625E7EC6 F44C42E9 A637ED6B 0BFF5CB6 F406B7ED
    EE386BFB 5A899FA5 AE9F2411 7C4B1FE6 49286651 ECE45B3D
    C2007CB8 A163BF05 98DA4836 1C55D39A 69163FA8 FD24CF5F
    83655D23 DCA3AD96 1C62F356 208552BB 9ED52907 7096966D
    670C354E 4ABC9804 F1746C08 CA18217C 32905E46 2E36CE3B
    E39E772C 180E8603 9B2783A2 EC07A28F B5C55DF0 6F4C52C9
    DE2BCBF6 95581718 3995497C EA956AE5 15D22618 98FA0510
    15728E5A 8AACAA68 FFFFFFFF FFFFFFFF""".replace(" ", "").replace("\n", ""),
    16,
)

GROUP_PRESETS: dict[str, tuple[int, int]] = {
    "toy23": (23, 11),
    "modp2048": (_MODP2048_P, (_MODP2048_P - 1) // 2),
}


@lru_cache(maxsize=None)
def get_group(preset_id: str) -> GroupParams:
    """Validated preset lookup; primality is checked once per process."""
    try:
        p, q = GROUP_PRESETS[preset_id]
    except KeyError:
        raise UnknownGroup(
            f"unknown group {preset_id!r}; choose one of {', '.join(GROUP_PRESETS)}"
        ) from None
    params = validate_group(p, q)
    logger.debug(f"Group {preset_id} validated ({p.bit_length()}-bit p)")
    return params


# ============================================================
# ELEMENTS AND SCALARS
# ============================================================


def element(value: int, params: GroupParams) -> GroupElement:
    return GroupElement(value=value % params.p, params=params)


def exp(base: GroupElement, e: Union[Scalar, int]) -> GroupElement:
    """base^e mod p with a fixed-length Montgomery ladder.

    The ladder length depends on q (and on e only when e >= 2^bitlen(q)), so
    the sequence of multiplications does not depend on the bits of a scalar.
    """
    n = e.value if isinstance(e, Scalar) else e
    if n < 0:
        raise InvalidExponent("negative exponent")
    p = base.params.p
    r0, r1 = 1, base.value
    for i in reversed(range(max(base.params.q.bit_length(), n.bit_length()))):
        if (n >> i) & 1:
            r0 = (r0 * r1) % p
            r1 = (r1 * r1) % p
        else:
            r1 = (r0 * r1) % p
            r0 = (r0 * r0) % p
    return GroupElement(value=r0, params=base.params)


def validate_element_range(X: GroupElement) -> bool:
    """True iff 2 <= X <= p-2 (small subgroup confinement check)."""
    return 2 <= X.value <= X.params.p - 2


def sample_scalar(rng: RandomSource, params: GroupParams) -> Scalar:
    """Uniform over {1, ..., q-1} by rejection sampling."""
    bits = (params.q - 1).bit_length()
    while True:
        v = rng.getrandbits(bits)
        if 1 <= v <= params.q - 1:
            return Scalar(value=v)


# ============================================================
# GENERATOR DERIVATION
# ============================================================


def password_to_int(password: bytes) -> int:
    return int.from_bytes(password, "big")


def int_to_password(n: int) -> bytes:
    return n.to_bytes(max(1, (n.bit_length() + 7) // 8), "big")


def _square(s: int, params: GroupParams) -> GroupElement:
    g = exp(element(s, params), 2).value
    if g in (0, 1):
        raise DegenerateGenerator("password maps to a degenerate generator (0 or 1)")
    return GroupElement(value=g, params=params)


def derive_generator_original(s: bytes, params: GroupParams) -> GroupElement:
    """g = s^2 mod p with s read as a big-endian integer."""
    return _square(password_to_int(s), params)


def derive_generator_hashed(s: bytes, params: GroupParams) -> GroupElement:
    """g = H(s)^2 mod p."""
    from codec import digest

    return _square(int.from_bytes(digest(s), "big"), params)
