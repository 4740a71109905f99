import pytest
from pydantic import ValidationError

from attacks import AttackName
from errors import ConfigError
from models import RunConfig, RunRecord
from protocol import ConfirmationMethod, Variant
from services import (
    Config,
    build_run_config,
    execute_attack,
    execute_run,
    expectation_met,
    load_config_file,
    record_attack,
    record_run,
)


def test_defaults():
    config = build_run_config({})
    assert config.variant is Variant.P_SPEKE_2017
    assert config.effective_confirm is ConfirmationMethod.SYMMETRIC_HASH
    assert config.group == "toy23"
    assert config.seed == 1


def test_precedence_flags_over_file_over_env(tmp_path, monkeypatch):
    path = tmp_path / "lab.conf"
    path.write_text("# lab settings\nseed = 5\ngroup = toy23\nvariant = jablon96\n", encoding="utf-8")
    monkeypatch.setattr(Config, "SEED", "3")
    monkeypatch.setattr(Config, "STEPS", "32")

    config = build_run_config({"variant": "patch-2014", "seed": None}, str(path))
    assert config.seed == 5
    assert config.steps == 32
    assert config.variant is Variant.PATCH_2014


def test_config_file_errors(tmp_path):
    path = tmp_path / "lab.conf"
    path.write_text("colour = blue\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config_file(str(path))

    path.write_text("seed\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="key = value"):
        load_config_file(str(path))

    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / "missing.conf"))


@pytest.mark.parametrize(
    "flags",
    [
        {"seed": 2**64},
        {"seed": -1},
        {"group": "toy7"},
        {"identity_a": "B"},
        {"identity_a": ""},
        {"identity_a": "A\nB"},
        {"password": ""},
        {"steps": 0},
        {"variant": "speke-2030"},
        # "\x01" squares to the degenerate generator 1
        {"variant": "jablon96", "password": "\x01"},
    ],
)
def test_invalid_config_is_a_config_error(flags):
    with pytest.raises(ConfigError):
        build_run_config(flags)


def test_run_config_model_validation():
    with pytest.raises(ValidationError):
        RunConfig(identity_a="A", identity_b="A")


def test_execute_run_is_seeded():
    config = build_run_config({"variant": "jablon96", "seed": 4})
    first, second = execute_run(config), execute_run(config)
    assert first.ok
    assert first.fingerprint("A") == second.fingerprint("A")


def test_execute_attack_reports_expectation():
    config = build_run_config({"variant": "jablon96", "seed": 2})
    outcome, expected = execute_attack(AttackName.MALLEABILITY, config)
    assert expected is True
    assert expectation_met(outcome, expected)


def test_history_records(session):
    config = build_run_config({"variant": "jablon96", "seed": 4})
    record = record_run(session, config, execute_run(config))
    assert record.id is not None
    assert record.kind == "run"
    assert record.rounds == 3

    outcome, expected = execute_attack(AttackName.SESSION_SWAP, config)
    record = record_attack(session, config, outcome, expected)
    assert record.kind == "session-swap"
    assert record.expectation_met is True
    assert session.get(RunRecord, record.id).confirm == "jablon-double-hash"
