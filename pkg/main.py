import logging
from contextlib import asynccontextmanager
from datetime import datetime
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.templating import Jinja2Templates
from sqlmodel import Session, SQLModel, func, select

from attacks import EXPLICIT_COLUMNS, IMPLICIT_COLUMNS, AttackName, session_records
from database import engine, get_session
from errors import ConfigError, InvalidExponent, SpekeError
from group import GROUP_PRESETS, get_group
from models import (
    AttackResponse,
    GroupRead,
    MatrixResponse,
    RunConfig,
    RunRecord,
    RunRecordRead,
    RunResponse,
)
from protocol import is_historical_pairing, round_count
from services import (
    Config,
    build_run_config,
    configure_logging,
    execute_attack,
    execute_matrix,
    execute_run,
    expectation_met,
    record_attack,
    record_run,
)

configure_logging()

logger = logging.getLogger(__name__)
logger.info(f"SPEKE Lab service loading (log level {Config.LOG_LEVEL}, database {Config.DATABASE_URL})")

VERSION = "1.0"

# ============================================================
# LIFECYCLE
# ============================================================


@asynccontextmanager
async def lifespan(app: FastAPI):
    SQLModel.metadata.create_all(engine)
    # primality of every preset is checked once, before the first request
    for preset_id in GROUP_PRESETS:
        params = get_group(preset_id)
        logger.info(f"Group {preset_id} ready ({params.p.bit_length()}-bit p)")
    logger.info("Run history tables ready")
    yield
    logger.info("SPEKE Lab service stopped")


app = FastAPI(title="SPEKE Lab", version=VERSION, lifespan=lifespan)


def _rejected(request: Request, details: list[str]) -> JSONResponse:
    logger.warning(f"Rejected input from {request.client.host}: {details}")
    return JSONResponse(status_code=422, content={"error": "Invalid input data", "details": details})


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    # drop the leading "body"/"query" part of each location
    details = [
        f"{' -> '.join(str(part) for part in error['loc'][1:]) or error['loc'][0]}: {error['msg']}"
        for error in exc.errors()
    ]
    return _rejected(request, details)


@app.exception_handler(ConfigError)
@app.exception_handler(InvalidExponent)
async def config_exception_handler(request: Request, exc: SpekeError):
    return _rejected(request, [str(exc)])


@app.exception_handler(SpekeError)
async def protocol_exception_handler(request: Request, exc: SpekeError):
    logger.error(f"{type(exc).__name__}: {exc}")
    return JSONResponse(status_code=400, content={"error": type(exc).__name__, "details": [str(exc)]})


templates = Jinja2Templates(directory=str(Path(__file__).parent / "templates"))


# ============================================================
# ROUTES - HEALTH CHECKS
# ============================================================


@app.get("/health")
async def health_check(session: Session = Depends(get_session)):
    """503 when the run history cannot be read."""
    try:
        runs = session.exec(select(func.count()).select_from(RunRecord)).one()
    except Exception as e:
        logger.error(f"Run history unavailable: {e}", exc_info=True)
        return JSONResponse(
            status_code=503,
            content={"status": "unhealthy", "error": str(e), "checked_at": datetime.now().isoformat()},
        )
    return {
        "status": "healthy",
        "version": VERSION,
        "checked_at": datetime.now().isoformat(),
        "recorded_runs": runs,
        "groups": list(GROUP_PRESETS),
    }


@app.get("/ready")
async def readiness_check():
    return {"status": "ready"}


# ============================================================
# ROUTES - API
# ============================================================


@app.get("/api/groups", response_model=list[GroupRead])
async def list_groups():
    groups = []
    for preset_id in GROUP_PRESETS:
        params = get_group(preset_id)
        groups.append(GroupRead(id=preset_id, bits=params.p.bit_length(), element_width=params.element_width))
    return groups


@app.post("/api/run", response_model=RunResponse)
def run_exchange(config: RunConfig, session: Session = Depends(get_session)):
    run = execute_run(config)
    record_run(session, config, run)
    confirm = config.effective_confirm
    return RunResponse(
        ok=run.ok,
        keys_match=run.keys_match,
        rounds=run.rounds,
        expected_rounds=round_count(confirm),
        historical_pairing=is_historical_pairing(config.variant, confirm),
        variant=config.variant,
        confirm=confirm,
        sessions=session_records(run.states),
        trace=run.trace.to_lines(),
    )


@app.post("/api/attack/{name}", response_model=AttackResponse)
def run_attack_scenario(name: str, config: RunConfig, session: Session = Depends(get_session)):
    try:
        attack = AttackName(name)
    except ValueError:
        raise HTTPException(status_code=404, detail=f"Unknown attack: {name}")

    outcome, expected = execute_attack(attack, config)
    record_attack(session, config, outcome, expected)
    return AttackResponse(
        outcome=outcome,
        expected_success=expected,
        expectation_met=expectation_met(outcome, expected),
        trace=outcome.trace.to_lines(),
    )


@app.get("/api/matrix", response_model=MatrixResponse)
def get_matrix(group: str = "toy23", seed: int = 1, trials: int | None = None):
    config = build_run_config({"group": group, "seed": seed, "trials": trials})
    matrix, differences = execute_matrix(config)
    return MatrixResponse(matrix=matrix, golden_match=not differences, differences=differences)


@app.get("/api/history", response_model=list[RunRecordRead])
async def history(limit: int = 50, session: Session = Depends(get_session)):
    limit = max(1, min(limit, 500))
    records = session.exec(select(RunRecord).order_by(RunRecord.timestamp.desc(), RunRecord.id.desc()).limit(limit)).all()
    return [RunRecordRead.from_record(r) for r in records]


# ============================================================
# ROUTES - PAGES
# ============================================================


@app.get("/matrix", response_class=HTMLResponse)
def matrix_page(request: Request, group: str = "toy23", seed: int = 1, trials: int | None = None):
    config = build_run_config({"group": group, "seed": seed, "trials": trials})
    matrix, differences = execute_matrix(config)
    return templates.TemplateResponse(
        request=request,
        name="matrix.html",
        context={
            "matrix": matrix,
            "sections": [("explicit", EXPLICIT_COLUMNS), ("implicit", IMPLICIT_COLUMNS)],
            "differences": differences,
        },
    )


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("main:app", host="127.0.0.1", port=8000, reload=False)
