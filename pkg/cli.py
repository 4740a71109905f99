"""Command-line entry point: python cli.py {run,attack,matrix,serve,connect}.

Exit status: 0 when the run succeeded or the attack outcome matched its
expectation, 1 on protocol failure or mismatch, 2 on usage errors.
"""

import argparse
import logging
import random
import socket
import sys
from pathlib import Path
from typing import Optional

from attacks import GOLDEN_PATH, AttackName, AttackOutcome, VictimChoice, render_matrix_records, render_matrix_text
from errors import ConfigError, GoldenMismatch, InvalidExponent, SpekeError
from group import GROUP_PRESETS
from models import RunConfig
from protocol import ConfirmationMethod, Identity, Role, SessionState, Variant, is_complete, is_historical_pairing, round_count
from services import (
    Config,
    abort_reasons,
    build_run_config,
    configure_logging,
    execute_attack,
    execute_matrix,
    execute_run,
    expectation_met,
)
from simnet import run_socket_session

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

ACCEPT_TIMEOUT = 60.0

_CONFIG_FLAGS = (
    "variant",
    "confirm",
    "group",
    "seed",
    "password",
    "password_b",
    "identity_a",
    "identity_b",
    "dup_detect",
    "steps",
    "z",
    "r",
    "s",
    "victim",
    "trials",
)


def _run_config(args: argparse.Namespace) -> RunConfig:
    flags = {name: getattr(args, name, None) for name in _CONFIG_FLAGS}
    return build_run_config(flags, args.config)


def _session_line(label: str, state: SessionState) -> str:
    key = state.key.fingerprint if state.key is not None else "-"
    line = f"session={label} role={state.role.value} self={state.self_id} peer={state.peer_id} phase={state.phase.value} key={key}"
    if state.abort_reason:
        line += f" reason={state.abort_reason}"
    return line


def _flag(value: bool) -> str:
    return "true" if value else "false"


def _print_outcome(outcome: AttackOutcome) -> None:
    print(f"attack={outcome.attack_name.value} variant={outcome.variant.value} confirm={outcome.confirm.value}")
    print(
        f"success={_flag(outcome.success)} detected={_flag(outcome.detected)} uks={_flag(outcome.uks)} "
        f"artifact={_flag(outcome.artifact)} adversary_learned_key={_flag(outcome.adversary_learned_key)}"
    )
    if outcome.notes:
        print(f"notes={outcome.notes}")
    for record in outcome.sessions:
        key = record.key_fingerprint or "-"
        line = f"session={record.label} self={record.self_id} peer={record.peer_id} phase={record.phase.value} key={key}"
        if record.abort_reason:
            line += f" reason={record.abort_reason}"
        print(line)


# ============================================================
# COMMANDS
# ============================================================


def cmd_run(args: argparse.Namespace) -> int:
    config = _run_config(args)
    confirm = config.effective_confirm
    run = execute_run(config)

    print(f"variant={config.variant.value} confirm={confirm.value} group={config.group} seed={config.seed}")
    if not is_historical_pairing(config.variant, confirm):
        print("note=non-historical pairing")
    for label, state in run.states.items():
        print(_session_line(label, state))
    print(f"rounds={run.rounds} expected_rounds={round_count(confirm)} keys_match={_flag(run.keys_match)}")
    if args.trace:
        print("trace:")
        for line in run.trace.to_lines():
            print(f"  {line}")

    if run.ok:
        print("result=ok")
        return EXIT_OK
    reasons = abort_reasons(run) or ["keys differ"]
    print(f"result=failed reason={'; '.join(reasons)}")
    return EXIT_FAILURE


def cmd_attack(args: argparse.Namespace) -> int:
    config = _run_config(args)
    attack = AttackName(args.attack)
    outcome, expected = execute_attack(attack, config)
    if args.expect is not None:
        expected = args.expect == "success"

    _print_outcome(outcome)
    met = expectation_met(outcome, expected)
    print(
        f"expected={'success' if expected else 'failure'} "
        f"outcome={'success' if outcome.success else 'failure'} "
        f"expectation={'met' if met else 'not met'}"
    )
    print("trace:")
    for line in outcome.trace.to_lines():
        print(f"  {line}")
    return EXIT_OK if met else EXIT_FAILURE


def cmd_matrix(args: argparse.Namespace) -> int:
    config = _run_config(args)
    matrix, differences = execute_matrix(config, Path(args.golden))
    print(render_matrix_text(matrix), end="")
    if args.out:
        Path(args.out).write_text(render_matrix_records(matrix), encoding="utf-8")
    if differences:
        raise GoldenMismatch(differences)
    print("golden=match")
    return EXIT_OK


def _address(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise ConfigError(f"Address must be host:port, got {value!r}")
    return host or "127.0.0.1", int(port)


def _socket_session(conn: socket.socket, config: RunConfig, role: Role) -> int:
    if role is Role.INITIATOR:
        self_id, peer_id, password = config.identity_a, config.identity_b, config.password
    else:
        self_id, peer_id = config.identity_b, config.identity_a
        password = config.password_b or config.password
    state = run_socket_session(
        conn,
        role,
        Identity(base_name=self_id),
        Identity(base_name=peer_id),
        password.encode("utf-8"),
        config.variant,
        config.effective_confirm,
        config.params,
        random.Random(f"{config.seed}:{role.value}"),
    )
    print(_session_line(self_id, state))
    if is_complete(state):
        print("result=ok")
        return EXIT_OK
    print(f"result=failed reason={state.abort_reason}")
    return EXIT_FAILURE


def cmd_serve(args: argparse.Namespace) -> int:
    config = _run_config(args)
    host, port = _address(args.listen)
    with socket.create_server((host, port)) as server:
        server.settimeout(ACCEPT_TIMEOUT)
        bound_host, bound_port = server.getsockname()[:2]
        print(f"listening on {bound_host}:{bound_port}", flush=True)
        conn, peer = server.accept()
        logger.info(f"Accepted connection from {peer[0]}:{peer[1]}")
        with conn:
            return _socket_session(conn, config, Role.RESPONDER)


def cmd_connect(args: argparse.Namespace) -> int:
    config = _run_config(args)
    host, port = _address(args.connect)
    with socket.create_connection((host, port), timeout=10.0) as conn:
        return _socket_session(conn, config, Role.INITIATOR)


# ============================================================
# PARSER
# ============================================================


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cli.py", description="SPEKE variant lab")
    sub = ap.add_subparsers(dest="cmd", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--variant", choices=[v.value for v in Variant])
    common.add_argument("--confirm", choices=[c.value for c in ConfirmationMethod], help="defaults to the variant's preset")
    common.add_argument("--group", choices=list(GROUP_PRESETS))
    common.add_argument("--seed", type=int, help="falls back to SPEKE_LAB_SEED")
    common.add_argument("--password")
    common.add_argument("--password-b", dest="password_b", help="password of the second party")
    common.add_argument("--identity-a", dest="identity_a")
    common.add_argument("--identity-b", dest="identity_b")
    common.add_argument("--dup-detect", dest="dup_detect", action="store_true", default=None)
    common.add_argument("--steps", type=int, help="simulator step budget")
    common.add_argument("--config", help="flat key = value config file")

    sr = sub.add_parser("run", parents=[common], help="honest exchange between A and B")
    sr.add_argument("--trace", action="store_true", help="print the event trace")
    sr.set_defaults(func=cmd_run)

    sa = sub.add_parser("attack", parents=[common], help="run one scripted attack")
    sa.add_argument("attack", choices=[a.value for a in AttackName])
    sa.add_argument("--z", type=int, help="exponent applied by the man in the middle")
    sa.add_argument("--r", type=int, help="exponent relating the two tested passwords")
    sa.add_argument("--s", help="password guessed by the exponential-equivalence attacker")
    sa.add_argument("--victim", choices=[v.value for v in VictimChoice])
    sa.add_argument("--expect", choices=["success", "failure"], help="override the expected outcome")
    sa.set_defaults(func=cmd_attack)

    sm = sub.add_parser("matrix", parents=[common], help="security matrix checked against the golden file")
    sm.add_argument("--trials", type=int)
    sm.add_argument("--out", help="write the matrix records to this file")
    sm.add_argument("--golden", default=str(GOLDEN_PATH))
    sm.set_defaults(func=cmd_matrix)

    ss = sub.add_parser("serve", parents=[common], help="answer one handshake over TCP")
    ss.add_argument("--listen", default="127.0.0.1:0", help="host:port")
    ss.set_defaults(func=cmd_serve)

    sc = sub.add_parser("connect", parents=[common], help="initiate one handshake over TCP")
    sc.add_argument("--connect", required=True, help="host:port")
    sc.set_defaults(func=cmd_connect)

    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(Config.CLI_LOG_LEVEL)
    try:
        return int(args.func(args))
    except (ConfigError, InvalidExponent) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except GoldenMismatch as e:
        for cell in e.cells:
            print(f"golden mismatch: {cell}", file=sys.stderr)
        return EXIT_FAILURE
    except SpekeError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        logger.error(f"Connection failed: {e}")
        print(f"error: connection failed: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
