"""Scripted adversaries for the four SPEKE attacks and the security matrix.

Each attack builds a simulator run, lets its adversary drive the channel and
then judges the final session states. In the 23-element toy group some
successes come from coincidences (two ephemeral elements happen to be equal,
a hashed generator happens to equal a power of the guess generator); those are
flagged as `artifact` so the matrix can ignore them.
"""

import logging
import random
from enum import Enum
from math import gcd
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field

from errors import ConfigError, ConfirmationMismatch, InvalidExponent
from group import GroupElement, GroupParams, RandomSource, Scalar, exp, int_to_password, password_to_int, validate_element_range
from protocol import (
    LEGACY_VARIANTS,
    ConfirmationMethod,
    Identity,
    Message,
    MessageKind,
    Phase,
    Role,
    SessionState,
    Variant,
    confirmation_tag,
    derive_generator,
    derive_session_key,
    is_complete,
    preset_confirmation,
)
from simnet import (
    AdversaryChannel,
    Envelope,
    EventTrace,
    ExchangeConfig,
    InterceptAction,
    SessionSpec,
    run_honest_exchange,
    run_with_adversary,
)

logger = logging.getLogger(__name__)

DEFAULT_PASSWORD = b"password"
DEFAULT_R = 3
GOLDEN_PATH = Path(__file__).parent / "golden" / "security_matrix.txt"

SYMMETRIC_METHODS = frozenset({ConfirmationMethod.SYMMETRIC_HASH, ConfirmationMethod.SYMMETRIC_MAC})


class AttackName(str, Enum):
    IMPERSONATION = "impersonation"
    MALLEABILITY = "malleability"
    SESSION_SWAP = "session-swap"
    EXP_EQUIVALENCE = "exp-equivalence"


class VictimChoice(str, Enum):
    S = "s"
    S_POW_R = "s_pow_r"


class SessionRecord(BaseModel):
    label: str
    self_id: str
    peer_id: str
    phase: Phase
    key_fingerprint: Optional[str] = None
    abort_reason: Optional[str] = None


class AttackOutcome(BaseModel):
    attack_name: AttackName
    variant: Variant
    confirm: ConfirmationMethod
    success: bool
    sessions: list[SessionRecord] = Field(default_factory=list)
    adversary_learned_key: bool = False
    notes: str = ""
    detected: bool = False
    uks: bool = False
    artifact: bool = False
    trace: EventTrace = Field(default_factory=EventTrace, exclude=True)


def session_records(states: dict[str, SessionState]) -> list[SessionRecord]:
    return [
        SessionRecord(
            label=label,
            self_id=state.self_id.rendered,
            peer_id=state.peer_id.rendered,
            phase=state.phase,
            key_fingerprint=state.key.fingerprint if state.key is not None else None,
            abort_reason=state.abort_reason,
        )
        for label, state in states.items()
    ]


def _same_key(a: Optional[SessionState], b: Optional[SessionState]) -> bool:
    if a is None or b is None or not (is_complete(a) and is_complete(b)):
        return False
    return a.key is not None and b.key is not None and a.key.value == b.key.value


def _config(
    variant: Variant,
    confirm: ConfirmationMethod,
    params: GroupParams,
    password: bytes,
    identity_a: str,
    identity_b: str,
    duplicate_detection: bool = False,
) -> ExchangeConfig:
    return ExchangeConfig(
        variant=variant,
        confirm=confirm,
        params=params,
        identity_a=identity_a,
        identity_b=identity_b,
        password_a=password,
        duplicate_detection=duplicate_detection,
    )


def _pick_exponent(channel: AdversaryChannel, target: GroupElement) -> int:
    """z from {2, ..., q-2}, re-sampled until target^z passes the range check."""
    q = channel.view.params.q
    while True:
        z = channel.sample_scalar().value
        if not 2 <= z <= q - 2:
            continue
        if validate_element_range(exp(target, z)):
            return z
        logger.info(f"Re-sampling z: {z} sends the intercepted element out of range")


# ============================================================
# IMPERSONATION
# ============================================================


class ImpersonationAdversary:
    """Parallel-session attack: Alice talks to herself while believing she talks to B.

    s1 is Alice's own session towards B. Its exchange element is raised to z
    and fed into a second session s2 the adversary opens at Alice claiming to
    be B; Alice's answer in s2 is raised to z and returned to s1 as B's
    element. Confirmation tags are relayed between the two sessions.
    """

    def __init__(self, z: Optional[int] = None):
        self.z = z

    def on_start(self, channel: AdversaryChannel) -> list[InterceptAction]:
        return []

    def intercept(self, envelope: Envelope, channel: AdversaryChannel) -> list[InterceptAction]:
        alice, bob = channel.view.identities
        msg = envelope.message
        if msg.kind is MessageKind.CONFIRM:
            target = "s2" if envelope.src == "s1" else "s1"
            return [InterceptAction.drop(), InterceptAction.inject(target, msg)]

        if envelope.src == "s1":
            if self.z is None:
                self.z = _pick_exponent(channel, msg.element)
            channel.open_session(
                alice, "s2", Role.RESPONDER, Identity(base_name=alice), Identity(base_name=bob)
            )
            forged = Message.exchange(bob, exp(msg.element, self.z))
            return [InterceptAction.drop(), InterceptAction.inject("s2", forged)]

        forged = Message.exchange(bob, exp(msg.element, self.z))
        return [InterceptAction.drop(), InterceptAction.inject("s1", forged)]


def impersonation_attack(
    variant: Variant,
    confirm: ConfirmationMethod,
    params: GroupParams,
    rng: RandomSource,
    *,
    z: Optional[int] = None,
    password: bytes = DEFAULT_PASSWORD,
    duplicate_detection: bool = False,
    identity_a: str = "A",
    identity_b: str = "B",
) -> AttackOutcome:
    """Success: both of Alice's sessions complete with the same key while both believe the peer is B.

    Without an explicit z, tagged confirmation (which binds both exchange
    elements) is attacked with the reflection exponent z = 1; every other
    method gets a random z in {2, ..., q-2}.
    """
    if z is not None:
        Scalar.for_group(z, params)
    elif confirm is ConfirmationMethod.TAGGED_HASH_3_4:
        z = 1
    config = _config(variant, confirm, params, password, identity_a, identity_b, duplicate_detection)
    adversary = ImpersonationAdversary(z)
    sessions = [
        SessionSpec(
            host=identity_a,
            label="s1",
            role=Role.INITIATOR,
            self_id=Identity(base_name=identity_a),
            peer_id=Identity(base_name=identity_b),
            route=identity_b,
        )
    ]
    result = run_with_adversary(config, adversary, rng, sessions=sessions)

    s1, s2 = result.states.get("s1"), result.states.get("s2")
    success = _same_key(s1, s2) and s1.peer_id.base_name == identity_b and s2.peer_id.base_name == identity_b
    artifact = (
        success
        and s1.own_element == s2.own_element
        and not expected_success(AttackName.IMPERSONATION, variant, confirm)
    )
    notes = f"z={adversary.z}"
    if artifact:
        notes += "; Alice's two ephemeral elements coincide"
    outcome = AttackOutcome(
        attack_name=AttackName.IMPERSONATION,
        variant=variant,
        confirm=confirm,
        success=success,
        sessions=session_records(result.states),
        uks=success,
        artifact=artifact,
        notes=notes,
        trace=result.trace,
    )
    logger.info(f"Impersonation {variant.value}/{confirm.value}: success={success} ({notes})")
    return outcome


# ============================================================
# MALLEABILITY
# ============================================================


class MalleabilityAdversary:
    """Raises both exchange elements to z and lets everything else through."""

    def __init__(self, z: Optional[int] = None):
        self.z = z

    def on_start(self, channel: AdversaryChannel) -> list[InterceptAction]:
        return []

    def intercept(self, envelope: Envelope, channel: AdversaryChannel) -> list[InterceptAction]:
        msg = envelope.message
        if msg.kind is MessageKind.CONFIRM:
            return [InterceptAction.forward()]
        if self.z is None:
            self.z = _pick_exponent(channel, msg.element)
        return [InterceptAction.modify(Message.exchange(msg.sender_identity, exp(msg.element, self.z)))]


def malleability_attack(
    variant: Variant,
    confirm: ConfirmationMethod,
    params: GroupParams,
    rng: RandomSource,
    *,
    z: Optional[int] = None,
    password: bytes = DEFAULT_PASSWORD,
    identity_a: str = "A",
    identity_b: str = "B",
) -> AttackOutcome:
    if z is not None and not 2 <= z <= params.q - 2:
        raise InvalidExponent(f"z={z} outside [2, q-2]")
    config = _config(variant, confirm, params, password, identity_a, identity_b)
    adversary = MalleabilityAdversary(z)
    result = run_with_adversary(config, adversary, rng)

    a, b = result.states.get(identity_a), result.states.get(identity_b)
    success = _same_key(a, b)
    detected = (
        a is not None
        and b is not None
        and a.abort_reason == b.abort_reason == ConfirmationMismatch.__name__
    )
    # only a coincidence when the variant would otherwise resist
    artifact = (
        success
        and a.own_element == b.own_element
        and not expected_success(AttackName.MALLEABILITY, variant, confirm)
    )
    notes = f"z={adversary.z}"
    if artifact:
        notes += "; both ephemeral elements coincide"
    logger.info(f"Malleability {variant.value}/{confirm.value}: success={success} detected={detected}")
    return AttackOutcome(
        attack_name=AttackName.MALLEABILITY,
        variant=variant,
        confirm=confirm,
        success=success,
        detected=detected,
        sessions=session_records(result.states),
        artifact=artifact,
        notes=notes,
        trace=result.trace,
    )


# ============================================================
# SESSION SWAP
# ============================================================

_SWAP = {"A1": "B2", "B2": "A1", "A2": "B1", "B1": "A2"}


class SessionSwapAdversary:
    """Cross-wires two concurrent sessions: A1 <-> B2 and A2 <-> B1.

    Exchange messages are relabelled with the identity the receiving session
    expects, which is public.
    """

    def __init__(self, expected_peer: dict[str, str]):
        self.expected_peer = expected_peer

    def on_start(self, channel: AdversaryChannel) -> list[InterceptAction]:
        return []

    def intercept(self, envelope: Envelope, channel: AdversaryChannel) -> list[InterceptAction]:
        target = _SWAP[envelope.src]
        msg = envelope.message
        if msg.kind is MessageKind.EXCHANGE:
            msg = Message.exchange(self.expected_peer[target], msg.element)
        return [InterceptAction.drop(), InterceptAction.inject(target, msg)]


def session_swap_attack(
    variant: Variant,
    confirm: ConfirmationMethod,
    params: GroupParams,
    rng: RandomSource,
    *,
    password: bytes = DEFAULT_PASSWORD,
    identity_a: str = "A",
    identity_b: str = "B",
) -> AttackOutcome:
    config = _config(variant, confirm, params, password, identity_a, identity_b)
    sessions = []
    for n in (1, 2):
        a, b = Identity(base_name=identity_a, session_extension=n), Identity(base_name=identity_b, session_extension=n)
        sessions.append(
            SessionSpec(host=identity_a, label=f"A{n}", role=Role.INITIATOR, self_id=a, peer_id=b, route=f"B{n}")
        )
        sessions.append(
            SessionSpec(host=identity_b, label=f"B{n}", role=Role.RESPONDER, self_id=b, peer_id=a, route=f"A{n}")
        )
    expected_peer = {spec.label: spec.peer_id.rendered for spec in sessions}
    result = run_with_adversary(config, SessionSwapAdversary(expected_peer), rng, sessions=sessions)

    states = result.states
    success = _same_key(states.get("A1"), states.get("B2")) and _same_key(states.get("A2"), states.get("B1"))
    logger.info(f"Session swap {variant.value}/{confirm.value}: success={success}")
    return AttackOutcome(
        attack_name=AttackName.SESSION_SWAP,
        variant=variant,
        confirm=confirm,
        success=success,
        sessions=session_records(states),
        notes="cross pairs A1-B2, A2-B1",
        trace=result.trace,
    )


# ============================================================
# EXPONENTIAL EQUIVALENCE
# ============================================================


class ExpEquivalenceAdversary:
    """Runs one exchange towards the victim with generator f(s) and records Y and the first tag."""

    def __init__(self, variant: Variant, s: bytes, victim_label: str, claimed: str, x: Optional[int] = None):
        self.variant = variant
        self.s = s
        self.victim_label = victim_label
        self.claimed = claimed
        self.x = x
        self.X: Optional[GroupElement] = None
        self.Y: Optional[GroupElement] = None
        self.tag: Optional[bytes] = None

    def on_start(self, channel: AdversaryChannel) -> list[InterceptAction]:
        params = channel.view.params
        if self.x is None:
            self.x = channel.sample_scalar().value
        self.X = exp(derive_generator(self.variant, self.s, params), self.x)
        return [InterceptAction.inject(self.victim_label, Message.exchange(self.claimed, self.X))]

    def intercept(self, envelope: Envelope, channel: AdversaryChannel) -> list[InterceptAction]:
        msg = envelope.message
        if msg.kind is MessageKind.EXCHANGE and self.Y is None:
            self.Y = msg.element
        elif msg.kind is MessageKind.CONFIRM and self.tag is None:
            self.tag = msg.tag
        return [InterceptAction.drop()]


def related_password(s: bytes, r: int, params: GroupParams) -> bytes:
    """s' = s^r mod p, with s read as a big-endian integer."""
    return int_to_password(pow(password_to_int(s), r, params.p))


def exp_equivalence_attack(
    variant: Variant,
    params: GroupParams,
    rng: RandomSource,
    *,
    s: bytes = DEFAULT_PASSWORD,
    r: int = DEFAULT_R,
    victim_choice: VictimChoice = VictimChoice.S_POW_R,
    confirm: Optional[ConfirmationMethod] = None,
    x: Optional[int] = None,
    identity_a: str = "A",
    identity_b: str = "B",
) -> AttackOutcome:
    """Test two passwords, s and s^r, against the victim with a single run.

    The victim plays the initiator so that it sends the first confirmation
    tag; the attacker then checks both candidate keys against it offline.
    """
    if r < 1 or gcd(r, params.q) != 1 or r % params.q == 1:
        raise InvalidExponent(f"r={r} has no useful inverse modulo q")
    if confirm is None:
        confirm = preset_confirmation(variant)
    s_pow_r = related_password(s, r, params)
    victim_password = s if victim_choice is VictimChoice.S else s_pow_r

    config = _config(variant, confirm, params, victim_password, identity_a, identity_b)
    sessions = [
        SessionSpec(
            host=identity_a,
            label=identity_a,
            role=Role.INITIATOR,
            self_id=Identity(base_name=identity_a),
            peer_id=Identity(base_name=identity_b),
            route=identity_b,
        )
    ]
    adversary = ExpEquivalenceAdversary(variant, s, identity_a, identity_b, x)
    result = run_with_adversary(config, adversary, rng, sessions=sessions)

    g1 = derive_generator(variant, s, params)
    g_h = derive_generator(variant, s_pow_r, params)
    generators_related = g_h == exp(g1, r)

    def matches(shared: GroupElement, g: GroupElement) -> bool:
        key = derive_session_key(variant, identity_a, identity_b, adversary.Y, adversary.X, shared, Role.INITIATOR)
        tag = confirmation_tag(
            confirm,
            sender_role=Role.INITIATOR,
            sender_id=identity_a,
            receiver_id=identity_b,
            sender_element=adversary.Y,
            receiver_element=adversary.X,
            key=key,
            shared=shared,
            g=g,
        )
        return tag == adversary.tag

    if adversary.Y is None or adversary.tag is None:
        classification = "neither"
        notes = "victim sent no confirmation tag"
    else:
        match_s = matches(exp(adversary.Y, adversary.x), g1)
        r_inv = pow(r, -1, params.q)
        match_s_pow_r = matches(exp(adversary.Y, (adversary.x * r_inv) % params.q), g_h)
        if match_s and not match_s_pow_r:
            classification = VictimChoice.S.value
        elif match_s_pow_r and not match_s:
            classification = VictimChoice.S_POW_R.value
        else:
            classification = "neither"
        notes = f"classified {classification}; generators_related={generators_related}"
        if victim_choice is VictimChoice.S:
            notes += "; victim holds the guessed password, an ordinary online guess"

    success = classification == victim_choice.value
    artifact = success and victim_choice is VictimChoice.S_POW_R and variant is not Variant.JABLON96
    logger.info(f"Exponential equivalence {variant.value}/{confirm.value}: {notes}")
    return AttackOutcome(
        attack_name=AttackName.EXP_EQUIVALENCE,
        variant=variant,
        confirm=confirm,
        success=success,
        sessions=session_records(result.states),
        # the matching candidate is the key the victim derived
        adversary_learned_key=success,
        artifact=artifact,
        notes=notes,
        trace=result.trace,
    )


# ============================================================
# DISPATCH AND EXPECTATIONS
# ============================================================


def expected_success(
    attack: AttackName,
    variant: Variant,
    confirm: ConfirmationMethod,
    victim_choice: VictimChoice = VictimChoice.S_POW_R,
) -> bool:
    """Expected attack success for a variant/method pairing, cross combinations included."""
    legacy = variant in LEGACY_VARIANTS
    if attack in (AttackName.IMPERSONATION, AttackName.SESSION_SWAP):
        return legacy and confirm not in SYMMETRIC_METHODS
    if attack is AttackName.MALLEABILITY:
        return legacy and confirm in (ConfirmationMethod.NONE, ConfirmationMethod.JABLON_DOUBLE_HASH)
    if victim_choice is VictimChoice.S:
        return confirm is not ConfirmationMethod.NONE
    return variant is Variant.JABLON96 and confirm is not ConfirmationMethod.NONE


def run_attack(
    attack: AttackName,
    variant: Variant,
    confirm: ConfirmationMethod,
    params: GroupParams,
    rng: RandomSource,
    *,
    z: Optional[int] = None,
    r: int = DEFAULT_R,
    s: bytes = DEFAULT_PASSWORD,
    victim_choice: VictimChoice = VictimChoice.S_POW_R,
    password: bytes = DEFAULT_PASSWORD,
    duplicate_detection: bool = False,
    identity_a: str = "A",
    identity_b: str = "B",
) -> AttackOutcome:
    ids = {"identity_a": identity_a, "identity_b": identity_b}
    if attack is AttackName.IMPERSONATION:
        return impersonation_attack(
            variant, confirm, params, rng, z=z, password=password, duplicate_detection=duplicate_detection, **ids
        )
    if attack is AttackName.MALLEABILITY:
        return malleability_attack(variant, confirm, params, rng, z=z, password=password, **ids)
    if attack is AttackName.SESSION_SWAP:
        return session_swap_attack(variant, confirm, params, rng, password=password, **ids)
    return exp_equivalence_attack(
        variant, params, rng, s=s, r=r, victim_choice=victim_choice, confirm=confirm, **ids
    )


# ============================================================
# SECURITY MATRIX
# ============================================================

EXPLICIT_COLUMNS = ("RND", "RND-E", "IKA", "EKA", "WA", "SA", "IMP", "SS", "PFS", "UKS", "MAL")
IMPLICIT_COLUMNS = ("RND", "IMP", "SS", "UKS", "MAL")
FORMAL_ONLY = "n/a"
RESISTS = "✓"
BROKEN = "×"


class MatrixRow(BaseModel):
    section: str
    variant: Variant
    confirm: ConfirmationMethod
    cells: dict[str, str]


class SecurityMatrix(BaseModel):
    group: str
    seed: int
    trials: int
    rows: list[MatrixRow]


def default_trials(params: GroupParams) -> int:
    return 20 if params.q < 2**64 else 1


def _verdict(broken: bool) -> str:
    return BROKEN if broken else RESISTS


def _cell_rng(seed: int, variant: Variant, confirm: ConfirmationMethod, what: str, trial: int = 0) -> random.Random:
    return random.Random(f"{seed}:{variant.value}:{confirm.value}:{what}:{trial}")


def _attack_column(
    attack: AttackName,
    variant: Variant,
    confirm: ConfirmationMethod,
    params: GroupParams,
    seed: int,
    trials: int,
) -> tuple[bool, bool]:
    """(any genuine success, any genuine UKS) over `trials` isolated runs."""
    broken = uks = False
    for trial in range(trials):
        outcome = run_attack(attack, variant, confirm, params, _cell_rng(seed, variant, confirm, attack.value, trial))
        if outcome.artifact:
            continue
        broken |= outcome.success
        uks |= outcome.uks
    return broken, uks


def _rounds(variant: Variant, confirm: ConfirmationMethod, params: GroupParams, seed: int) -> tuple[int, bool]:
    config = _config(variant, confirm, params, DEFAULT_PASSWORD, "A", "B")
    run = run_honest_exchange(config, _cell_rng(seed, variant, confirm, "honest"))
    return run.rounds, run.ok


def security_matrix(params: GroupParams, group: str, seed: int, trials: Optional[int] = None) -> SecurityMatrix:
    trials = trials if trials is not None else default_trials(params)
    rows: list[MatrixRow] = []
    implicit = ConfirmationMethod.NONE
    rnd = {variant: _rounds(variant, implicit, params, seed)[0] for variant in Variant}

    for variant in Variant:
        confirm = preset_confirmation(variant)
        rnd_e, honest_ok = _rounds(variant, confirm, params, seed)
        imp, uks = _attack_column(AttackName.IMPERSONATION, variant, confirm, params, seed, trials)
        ss, _ = _attack_column(AttackName.SESSION_SWAP, variant, confirm, params, seed, trials)
        mal, _ = _attack_column(AttackName.MALLEABILITY, variant, confirm, params, seed, trials)
        cells = {
            "RND": str(rnd[variant]),
            "RND-E": str(rnd_e),
            "IKA": FORMAL_ONLY,
            "EKA": _verdict(not (honest_ok and not imp and not ss)),
            "WA": FORMAL_ONLY,
            "SA": FORMAL_ONLY,
            "IMP": _verdict(imp),
            "SS": _verdict(ss),
            "PFS": FORMAL_ONLY,
            "UKS": _verdict(uks),
            "MAL": _verdict(mal),
        }
        rows.append(MatrixRow(section="explicit", variant=variant, confirm=confirm, cells=cells))

    for variant in Variant:
        imp, uks = _attack_column(AttackName.IMPERSONATION, variant, implicit, params, seed, trials)
        ss, _ = _attack_column(AttackName.SESSION_SWAP, variant, implicit, params, seed, trials)
        mal, _ = _attack_column(AttackName.MALLEABILITY, variant, implicit, params, seed, trials)
        cells = {
            "RND": str(rnd[variant]),
            "IMP": _verdict(imp),
            "SS": _verdict(ss),
            "UKS": _verdict(uks),
            "MAL": _verdict(mal),
        }
        rows.append(MatrixRow(section="implicit", variant=variant, confirm=implicit, cells=cells))

    logger.info(f"Security matrix computed for {group} (seed={seed}, trials={trials})")
    return SecurityMatrix(group=group, seed=seed, trials=trials, rows=rows)


# ============================================================
# RENDERING AND GOLDEN CHECK
# ============================================================


def render_matrix_text(matrix: SecurityMatrix) -> str:
    lines = [f"security matrix group={matrix.group} seed={matrix.seed} trials={matrix.trials}"]
    for section, columns in (("explicit", EXPLICIT_COLUMNS), ("implicit", IMPLICIT_COLUMNS)):
        rows = [row for row in matrix.rows if row.section == section]
        header = ["variant", "confirm", *columns]
        table = [header] + [[row.variant.value, row.confirm.value, *(row.cells[c] for c in columns)] for row in rows]
        widths = [max(len(line[i]) for line in table) for i in range(len(header))]
        lines.append("")
        lines.append(f"[{section}]")
        for line in table:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
    return "\n".join(lines) + "\n"


def render_matrix_records(matrix: SecurityMatrix) -> str:
    lines = []
    for row in matrix.rows:
        fields = [f"section={row.section}", f"variant={row.variant.value}", f"confirm={row.confirm.value}"]
        fields += [f"{column}={value}" for column, value in row.cells.items()]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def parse_matrix_records(text: str) -> dict[tuple[str, str], dict[str, str]]:
    """Parse records back into {(section, variant): {column: value}}; confirm is kept as a column."""
    parsed: dict[tuple[str, str], dict[str, str]] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = {}
        for token in line.split():
            key, sep, value = token.partition("=")
            if not sep or not key:
                raise ConfigError(f"golden line {number}: malformed field {token!r}")
            fields[key] = value
        try:
            key = (fields.pop("section"), fields.pop("variant"))
        except KeyError:
            raise ConfigError(f"golden line {number}: section and variant are required") from None
        parsed[key] = fields
    return parsed


def diff_matrix(matrix: SecurityMatrix, expected: dict[tuple[str, str], dict[str, str]]) -> list[str]:
    actual = parse_matrix_records(render_matrix_records(matrix))
    differences = []
    for key in sorted(set(actual) | set(expected)):
        section, variant = key
        if key not in actual:
            differences.append(f"{section}/{variant}: row missing from result")
            continue
        if key not in expected:
            differences.append(f"{section}/{variant}: row missing from golden")
            continue
        for column in sorted(set(actual[key]) | set(expected[key])):
            got, want = actual[key].get(column), expected[key].get(column)
            if got != want:
                differences.append(f"{section}/{variant}/{column}: expected {want}, got {got}")
    return differences


def golden_differences(matrix: SecurityMatrix, path: Path = GOLDEN_PATH) -> list[str]:
    try:
        expected = parse_matrix_records(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read golden file {path}: {e}") from e
    return diff_matrix(matrix, expected)
