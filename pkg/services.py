import logging
import os
import random
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Optional

from pydantic import ValidationError
from sqlmodel import Session

from attacks import (
    GOLDEN_PATH,
    AttackName,
    AttackOutcome,
    SecurityMatrix,
    golden_differences,
    expected_success,
    run_attack,
    security_matrix,
)
from errors import ConfigError
from models import RunConfig, RunRecord
from protocol import Phase
from simnet import HonestRun, run_honest_exchange

logger = logging.getLogger(__name__)


# Configuration, read from the environment at import time
class Config:
    SEED = os.environ.get("SPEKE_LAB_SEED")
    GROUP = os.environ.get("SPEKE_LAB_GROUP")
    CONFIG_FILE = os.environ.get("SPEKE_LAB_CONFIG")
    DATABASE_URL = os.environ.get("SPEKE_LAB_DB", "sqlite:///speke_lab.db")
    STEPS = os.environ.get("SPEKE_LAB_STEPS")
    LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
    CLI_LOG_LEVEL = os.environ.get("LOG_LEVEL", "WARNING")
    LOG_FILE = os.environ.get("LOG_FILE", "speke_lab.log")


def configure_logging(level: Optional[str] = None) -> None:
    level = (level or Config.LOG_LEVEL).upper()
    os.makedirs("logs", exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s",
        handlers=[
            RotatingFileHandler(
                f"logs/{Config.LOG_FILE}",
                maxBytes=10485760,  # 10MB
                backupCount=5,
                encoding="utf-8",
            ),
            logging.StreamHandler(),
        ],
    )


# ============================================================
# RUN CONFIGURATION
# ============================================================


def load_config_file(path: str) -> dict[str, str]:
    """Flat `key = value` file; full-line `#` comments; keys are RunConfig fields."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e

    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key not in RunConfig.model_fields:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _describe_validation(e: ValidationError) -> str:
    errors = []
    for error in e.errors():
        field = " -> ".join(str(x) for x in error["loc"]) or "config"
        errors.append(f"{field}: {error['msg']}")
    return "; ".join(errors)


def build_run_config(flags: dict[str, Any], config_path: Optional[str] = None) -> RunConfig:
    """Merge with precedence flags > config file > environment > defaults."""
    values: dict[str, Any] = {}
    if Config.SEED is not None:
        values["seed"] = Config.SEED
    if Config.GROUP is not None:
        values["group"] = Config.GROUP
    if Config.STEPS is not None:
        values["steps"] = Config.STEPS

    path = config_path or Config.CONFIG_FILE
    if path:
        logger.debug(f"Loading config file {path}")
        values.update(load_config_file(path))
    values.update({key: value for key, value in flags.items() if value is not None})

    try:
        return RunConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(_describe_validation(e)) from e


# ============================================================
# LAB OPERATIONS
# ============================================================


def execute_run(config: RunConfig) -> HonestRun:
    return run_honest_exchange(config.to_exchange_config(), random.Random(config.seed))


def execute_attack(attack: AttackName, config: RunConfig) -> tuple[AttackOutcome, bool]:
    """Run one attack and return it together with the expected success."""
    confirm = config.effective_confirm
    outcome = run_attack(
        attack,
        config.variant,
        confirm,
        config.params,
        random.Random(config.seed),
        z=config.z,
        r=config.r,
        s=(config.s or config.password).encode("utf-8"),
        victim_choice=config.victim,
        password=config.password.encode("utf-8"),
        duplicate_detection=config.dup_detect,
        identity_a=config.identity_a,
        identity_b=config.identity_b,
    )
    return outcome, expected_success(attack, config.variant, confirm, config.victim)


def expectation_met(outcome: AttackOutcome, expected: bool) -> bool:
    # a toy-group coincidence is reported but does not count against the expectation
    return outcome.success == expected or outcome.artifact


def execute_matrix(config: RunConfig, golden_path: Path = GOLDEN_PATH) -> tuple[SecurityMatrix, list[str]]:
    matrix = security_matrix(config.params, config.group, config.seed, config.trials)
    return matrix, golden_differences(matrix, golden_path)


def abort_reasons(run: HonestRun) -> list[str]:
    return [
        f"{label}: {state.abort_reason}"
        for label, state in run.states.items()
        if state.phase is Phase.ABORTED
    ]


# ============================================================
# HISTORY
# ============================================================


def record_run(session: Session, config: RunConfig, run: HonestRun) -> RunRecord:
    reasons = abort_reasons(run)
    record = RunRecord(
        kind="run",
        variant=config.variant.value,
        confirm=config.effective_confirm.value,
        group=config.group,
        seed=str(config.seed),
        success=run.ok,
        rounds=run.rounds,
        reason="; ".join(reasons)[:200] if reasons else None,
    )
    session.add(record)
    session.commit()
    session.refresh(record)
    logger.info(f"Recorded {record.kind} #{record.id} ({record.variant}/{record.confirm}, success={record.success})")
    return record


def record_attack(session: Session, config: RunConfig, outcome: AttackOutcome, expected: bool) -> RunRecord:
    record = RunRecord(
        kind=outcome.attack_name.value,
        variant=outcome.variant.value,
        confirm=outcome.confirm.value,
        group=config.group,
        seed=str(config.seed),
        success=outcome.success,
        expectation_met=expectation_met(outcome, expected),
        detected=outcome.detected,
        artifact=outcome.artifact,
        reason=outcome.notes[:200] or None,
    )
    session.add(record)
    session.commit()
    session.refresh(record)
    logger.info(f"Recorded {record.kind} #{record.id} ({record.variant}/{record.confirm}, success={record.success})")
    return record
