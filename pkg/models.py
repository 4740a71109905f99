from datetime import datetime
from typing import List, Optional

from pydantic import field_validator, model_validator
from sqlmodel import Field, SQLModel

from attacks import AttackOutcome, SecurityMatrix, SessionRecord, VictimChoice
from errors import DegenerateGenerator
from group import GROUP_PRESETS, GroupParams, get_group
from protocol import ConfirmationMethod, Variant, derive_generator, preset_confirmation
from simnet import DEFAULT_MAX_STEPS, ExchangeConfig

MAX_SEED = 2**64 - 1

# ============================================================
# DATABASE TABLES
# ============================================================


class RunRecord(SQLModel, table=True):
    """One honest run or attack executed through the lab. Never holds keys or passwords."""

    __tablename__ = "runs"

    id: Optional[int] = Field(default=None, primary_key=True)
    kind: str = Field(max_length=20)  # "run" or an attack name
    variant: str = Field(max_length=30)
    confirm: str = Field(max_length=30)
    group: str = Field(max_length=20)
    seed: str = Field(max_length=20)  # 64-bit unsigned does not fit SQLite INTEGER
    success: bool
    expectation_met: Optional[bool] = Field(default=None)
    detected: bool = Field(default=False)
    artifact: bool = Field(default=False)
    rounds: Optional[int] = Field(default=None)
    reason: Optional[str] = Field(default=None, max_length=200)
    timestamp: datetime = Field(default_factory=datetime.now, index=True)


# ============================================================
# CONFIGURATION
# ============================================================


def _check_identity(v: str) -> str:
    if not v:
        raise ValueError("Identity is required")
    if any(ord(char) < 32 or ord(char) == 127 for char in v):
        raise ValueError("Identity contains control characters")
    if len(v.encode("utf-8")) > 0xFFFF:
        raise ValueError("Identity must be 65535 UTF-8 octets or less")
    return v


class RunConfig(SQLModel):
    """Everything needed to run one command, after flags, config file and env are merged."""

    variant: Variant = Variant.P_SPEKE_2017
    confirm: Optional[ConfirmationMethod] = None
    group: str = "toy23"
    identity_a: str = "A"
    identity_b: str = "B"
    password: str = "password"
    password_b: Optional[str] = None
    seed: int = 1
    dup_detect: bool = False
    steps: int = DEFAULT_MAX_STEPS
    z: Optional[int] = None
    r: int = 3
    s: Optional[str] = None
    victim: VictimChoice = VictimChoice.S_POW_R
    trials: Optional[int] = None

    @field_validator("identity_a", "identity_b")
    @classmethod
    def validate_identity(cls, v: str) -> str:
        return _check_identity(v)

    @field_validator("password")
    @classmethod
    def validate_password(cls, v: str) -> str:
        if not v:
            raise ValueError("Password is required")
        return v

    @field_validator("password_b", "s")
    @classmethod
    def validate_optional_password(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and not v:
            raise ValueError("Password must not be empty")
        return v

    @field_validator("seed")
    @classmethod
    def validate_seed(cls, v: int) -> int:
        if not 0 <= v <= MAX_SEED:
            raise ValueError("Seed must be a 64-bit unsigned integer")
        return v

    @field_validator("group")
    @classmethod
    def validate_group(cls, v: str) -> str:
        if v not in GROUP_PRESETS:
            raise ValueError(f"Group must be one of: {', '.join(GROUP_PRESETS)}")
        return v

    @field_validator("steps", "trials")
    @classmethod
    def validate_positive(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError("Must be at least 1")
        return v

    @model_validator(mode="after")
    def check_identities_distinct(self) -> "RunConfig":
        if self.identity_a == self.identity_b:
            raise ValueError("identity_a and identity_b must differ")
        return self

    @model_validator(mode="after")
    def check_generators(self) -> "RunConfig":
        params = self.params
        for password in (self.password, self.password_b, self.s):
            if password is None:
                continue
            try:
                derive_generator(self.variant, password.encode("utf-8"), params)
            except DegenerateGenerator:
                raise ValueError(
                    f"A password maps to a degenerate generator in {self.group} under {self.variant.value}"
                ) from None
        return self

    @property
    def effective_confirm(self) -> ConfirmationMethod:
        return self.confirm if self.confirm is not None else preset_confirmation(self.variant)

    @property
    def params(self) -> GroupParams:
        return get_group(self.group)

    def to_exchange_config(self) -> ExchangeConfig:
        return ExchangeConfig(
            variant=self.variant,
            confirm=self.effective_confirm,
            params=self.params,
            identity_a=self.identity_a,
            identity_b=self.identity_b,
            password_a=self.password.encode("utf-8"),
            password_b=self.password_b.encode("utf-8") if self.password_b is not None else None,
            duplicate_detection=self.dup_detect,
            max_steps=self.steps,
        )


# ============================================================
# API SCHEMAS (Read Models)
# ============================================================


class RunResponse(SQLModel):
    ok: bool
    keys_match: bool
    rounds: int
    expected_rounds: int
    historical_pairing: bool
    variant: Variant
    confirm: ConfirmationMethod
    sessions: List[SessionRecord]
    trace: List[str]


class AttackResponse(SQLModel):
    outcome: AttackOutcome
    expected_success: bool
    expectation_met: bool
    trace: List[str]


class MatrixResponse(SQLModel):
    matrix: SecurityMatrix
    golden_match: bool
    differences: List[str]


class GroupRead(SQLModel):
    id: str
    bits: int
    element_width: int


class RunRecordRead(SQLModel):
    id: int
    kind: str
    variant: str
    confirm: str
    group: str
    seed: str
    success: bool
    expectation_met: Optional[bool]
    rounds: Optional[int]
    reason: Optional[str]
    timestamp: str

    @classmethod
    def from_record(cls, record: RunRecord):
        return cls(
            id=record.id,
            kind=record.kind,
            variant=record.variant,
            confirm=record.confirm,
            group=record.group,
            seed=record.seed,
            success=record.success,
            expectation_met=record.expectation_met,
            rounds=record.rounds,
            reason=record.reason,
            timestamp=record.timestamp.isoformat(),
        )
