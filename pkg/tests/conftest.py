import os
import random

import pytest
from fastapi.testclient import TestClient
from sqlmodel import Session, SQLModel, create_engine
from sqlmodel.pool import StaticPool

# Keep env-driven defaults out of the tests (Config reads env vars at import time)
for var in ("SPEKE_LAB_SEED", "SPEKE_LAB_GROUP", "SPEKE_LAB_CONFIG", "SPEKE_LAB_STEPS"):
    os.environ.pop(var, None)

from database import get_session
from errors import DegenerateGenerator
from group import GroupParams, get_group
from main import app
from protocol import Variant, derive_generator


class ScriptedRandom(random.Random):
    """Returns the queued values from getrandbits before falling back to the seeded stream."""

    def __new__(cls, *values: int, seed: int = 0):
        # Python < 3.11: Random.__new__ rejects more than one positional argument
        return super().__new__(cls)

    def __init__(self, *values: int, seed: int = 0):
        super().__init__(seed)
        self.values = list(values)

    def getrandbits(self, k: int) -> int:
        if self.values:
            return self.values.pop(0)
        return super().getrandbits(k)


def usable_password(variant: Variant, params: GroupParams) -> bytes:
    """First candidate whose generator is not degenerate under `variant`."""
    for candidate in [b"password"] + [f"password{n}".encode() for n in range(50)]:
        try:
            derive_generator(variant, candidate, params)
        except DegenerateGenerator:
            continue
        return candidate
    raise AssertionError("no usable password found")


# s = 5 gives g = 2 in toy23 under the unhashed derivation
TOY_S5 = b"\x05"


@pytest.fixture(name="toy")
def toy_fixture() -> GroupParams:
    return get_group("toy23")


@pytest.fixture(name="modp")
def modp_fixture() -> GroupParams:
    return get_group("modp2048")


@pytest.fixture(name="session")
def session_fixture():
    engine = create_engine(
        "sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool
    )
    SQLModel.metadata.create_all(engine)
    with Session(engine) as session:
        yield session


@pytest.fixture(name="client")
def client_fixture(session: Session):
    def get_session_override():
        return session

    app.dependency_overrides[get_session] = get_session_override
    client = TestClient(app)
    yield client
    app.dependency_overrides.clear()
