import random
import socket
import threading

import pytest

from conftest import TOY_S5, ScriptedRandom, usable_password
from errors import ConnectionClosed, FrameDecodeError, SessionTimeout, UnknownEndpoint
from group import element
from protocol import (
    ConfirmationMethod,
    Identity,
    Message,
    MessageKind,
    Phase,
    Role,
    SessionState,
    Variant,
    is_complete,
    preset_confirmation,
    round_count,
)
from simnet import (
    AdversaryChannel,
    Endpoint,
    EventKind,
    ExchangeConfig,
    Host,
    InterceptAction,
    SimNet,
    decode_message,
    encode_frame,
    encode_message,
    read_frame,
    run_honest_exchange,
    run_socket_session,
    run_with_adversary,
)


def make_config(params, variant=Variant.P_SPEKE_2017, confirm=None, **kwargs) -> ExchangeConfig:
    return ExchangeConfig(
        variant=variant,
        confirm=confirm if confirm is not None else preset_confirmation(variant),
        params=params,
        password_a=kwargs.pop("password_a", usable_password(variant, params)),
        **kwargs,
    )


class PassThrough:
    def on_start(self, channel):
        return []

    def intercept(self, envelope, channel):
        return [InterceptAction.forward()]


class DropAll:
    def on_start(self, channel):
        return []

    def intercept(self, envelope, channel):
        return []


class DropConfirmations:
    def on_start(self, channel):
        return []

    def intercept(self, envelope, channel):
        if envelope.message.kind is MessageKind.CONFIRM:
            return []
        return [InterceptAction.forward()]


class KnowledgeAudit:
    """Relays everything and keeps whatever the simulator hands it."""

    def __init__(self):
        self.observed = []

    def on_start(self, channel):
        self.observed.append(channel.view)
        self.observed.extend(getattr(channel, name) for name in AdversaryChannel.__slots__)
        return []

    def intercept(self, envelope, channel):
        self.observed.append(envelope)
        return [InterceptAction.forward()]


class ReachForHosts:
    def on_start(self, channel):
        return [InterceptAction.inject("A", Message.exchange("B", channel._net.hosts["A"].password))]

    def intercept(self, envelope, channel):
        return []


class InjectNowhere:
    def on_start(self, channel):
        return [InterceptAction.inject("nobody", Message.exchange("B", element(2, channel.view.params)))]

    def intercept(self, envelope, channel):
        return []


# ============================================================
# HONEST RUNS
# ============================================================


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("preset", [True, False], ids=["preset", "implicit"])
def test_honest_run_completes(toy, variant, preset):
    confirm = preset_confirmation(variant) if preset else ConfirmationMethod.NONE
    run = run_honest_exchange(make_config(toy, variant, confirm), random.Random(1))
    assert run.ok
    assert run.keys_match
    assert run.rounds == round_count(confirm)
    assert run.fingerprint("A") == run.fingerprint("B")


def test_honest_run_modp(modp):
    run = run_honest_exchange(make_config(modp), random.Random(1))
    assert run.ok
    assert run.rounds == 2


def test_trace_is_deterministic(toy):
    config = make_config(toy, Variant.JABLON96)
    first = run_honest_exchange(config, random.Random(7)).trace.to_lines()
    second = run_honest_exchange(config, random.Random(7)).trace.to_lines()
    assert first == second
    assert first[0].startswith("step=0 event=SENT session=A src=A dst=B round=1")


def test_trace_records_lifecycle(toy):
    run = run_honest_exchange(make_config(toy), random.Random(3))
    trace = run.trace
    assert len(trace.of_kind(EventKind.SENT)) == 4
    assert len(trace.of_kind(EventKind.KEY_DERIVED)) == 2
    assert {e.session for e in trace.of_kind(EventKind.ACCEPTED)} == {"A", "B"}
    assert not trace.of_kind(EventKind.ABORTED)


def test_trace_never_contains_keys(toy):
    run = run_honest_exchange(make_config(toy), random.Random(3))
    raw = run.states["A"].key.value.hex()
    assert all(raw not in line for line in run.trace.to_lines())


@pytest.mark.parametrize("confirm", [c for c in ConfirmationMethod if c is not ConfirmationMethod.NONE])
def test_password_mismatch_aborts_both_sides(toy, confirm):
    config = make_config(toy, Variant.JABLON96, confirm, password_a=TOY_S5, password_b=b"\x06")
    run = run_honest_exchange(config, random.Random(1))
    assert not run.ok
    assert {label: (state.phase, state.abort_reason) for label, state in run.states.items()} == {
        "A": (Phase.ABORTED, "ConfirmationMismatch"),
        "B": (Phase.ABORTED, "ConfirmationMismatch"),
    }


def test_identities_are_configurable(toy):
    run = run_honest_exchange(make_config(toy, identity_a="alice", identity_b="bob"), random.Random(1))
    assert run.ok
    assert set(run.states) == {"alice", "bob"}


# ============================================================
# ADVERSARY HOOKS
# ============================================================


def test_pass_through_matches_honest_run(toy):
    config = make_config(toy, Variant.PATCH_2014)
    honest = run_honest_exchange(config, random.Random(5))
    relayed = run_with_adversary(config, PassThrough(), random.Random(5))
    assert relayed.fingerprint("A") == honest.fingerprint("A")
    assert all(is_complete(state) for state in relayed.states.values())


def test_drop_all_times_out(toy):
    result = run_with_adversary(make_config(toy), DropAll(), random.Random(1))
    assert {state.abort_reason for state in result.states.values()} == {"SessionTimeout"}
    assert len(result.trace.of_kind(EventKind.DROPPED)) == 2


def test_step_budget_expires_sessions(toy):
    config = make_config(toy, max_steps=1)
    run = run_honest_exchange(config, random.Random(1))
    assert run.steps == 1
    assert not run.ok
    assert "SessionTimeout" in {state.abort_reason for state in run.states.values()}


def test_inject_into_unknown_session(toy):
    with pytest.raises(UnknownEndpoint):
        run_with_adversary(make_config(toy), InjectNowhere(), random.Random(1))


def test_dropped_tag_is_a_timeout_not_a_rejection(toy):
    config = make_config(toy, Variant.JABLON96, ConfirmationMethod.JABLON_DOUBLE_HASH, password_a=TOY_S5)
    result = run_with_adversary(config, DropConfirmations(), random.Random(1))
    assert result.states["A"].abort_reason == "SessionTimeout"
    assert result.states["B"].abort_reason == "SessionTimeout"


def test_adversary_sees_only_public_knowledge(toy):
    audit = KnowledgeAudit()
    result = run_with_adversary(make_config(toy), audit, random.Random(1))
    assert all(is_complete(state) for state in result.states.values())
    assert audit.observed
    for item in audit.observed:
        assert not isinstance(item, (SimNet, Host, Endpoint, SessionState))
        # closures only, never methods bound to the simulator
        assert not isinstance(getattr(item, "__self__", None), (SimNet, Host, Endpoint))


def test_adversary_cannot_reach_host_state(toy):
    with pytest.raises(AttributeError):
        run_with_adversary(make_config(toy), ReachForHosts(), random.Random(1))


def test_scripted_scalars_reach_the_wire(toy):
    config = make_config(toy, Variant.JABLON96, ConfirmationMethod.NONE, password_a=TOY_S5)
    run = run_honest_exchange(config, ScriptedRandom(3, 4))
    assert run.states["A"].own_element.value == 8
    assert run.states["B"].own_element.value == 16
    assert run.states["A"].shared.value == 2


# ============================================================
# WIRE FORMAT
# ============================================================


def test_exchange_frame_layout(toy):
    frame = encode_frame(Message.exchange("A", element(8, toy)))
    assert frame == b"\x00\x00\x00\x05" + b"\x01" + b"\x00\x01A" + b"\x08"


def test_decode_message(toy):
    msg = Message.exchange("B", element(16, toy))
    assert decode_message(encode_message(msg), toy) == msg
    tag = Message.confirm(bytes(range(32)))
    assert decode_message(encode_message(tag), toy) == tag


@pytest.mark.parametrize("payload", [b"", b"\x07", b"\x02\x00\x01", b"\x01\x00\x01A\x08\x09"])
def test_decode_message_rejects(toy, payload):
    with pytest.raises(FrameDecodeError):
        decode_message(payload, toy)


def socket_exchange(params, confirm, a_side, b_side):
    """Run both roles over a socketpair; each side is a (variant, password) pair."""
    a_sock, b_sock = socket.socketpair()
    results = {}

    def responder():
        variant, password = b_side
        with b_sock:
            results["B"] = run_socket_session(
                b_sock, Role.RESPONDER, Identity(base_name="B"), Identity(base_name="A"),
                password, variant, confirm, params, random.Random(2), timeout=5.0,
            )

    thread = threading.Thread(target=responder)
    thread.start()
    variant, password = a_side
    with a_sock:
        results["A"] = run_socket_session(
            a_sock, Role.INITIATOR, Identity(base_name="A"), Identity(base_name="B"),
            password, variant, confirm, params, random.Random(1), timeout=5.0,
        )
    thread.join(timeout=10)
    return results


@pytest.mark.parametrize("variant", [Variant.JABLON96, Variant.P_SPEKE_2017])
def test_socket_session(toy, variant):
    password = usable_password(variant, toy)
    results = socket_exchange(toy, preset_confirmation(variant), (variant, password), (variant, password))

    assert results["A"].phase is Phase.ACCEPTED
    assert results["B"].phase is Phase.ACCEPTED
    assert results["A"].key == results["B"].key


@pytest.mark.parametrize(
    "confirm",
    [ConfirmationMethod.JABLON_DOUBLE_HASH, ConfirmationMethod.TAGGED_HASH_3_4, ConfirmationMethod.SYMMETRIC_HASH],
)
def test_socket_variant_mismatch(modp, confirm):
    results = socket_exchange(
        modp, confirm, (Variant.JABLON96, b"password"), (Variant.IEEE_P1363_2, b"password")
    )
    assert results["A"].abort_reason == "ConfirmationMismatch"
    assert results["B"].abort_reason == "ConfirmationMismatch"


def test_socket_truncated_frame(toy):
    a_sock, b_sock = socket.socketpair()

    def truncating_peer():
        with b_sock:
            read_frame(b_sock)
            # announces 9 octets, delivers 2
            b_sock.sendall(b"\x00\x00\x00\x09\x01\x00")

    thread = threading.Thread(target=truncating_peer)
    thread.start()
    with a_sock, pytest.raises(FrameDecodeError) as excinfo:
        run_socket_session(
            a_sock, Role.INITIATOR, Identity(base_name="A"), Identity(base_name="B"),
            TOY_S5, Variant.JABLON96, ConfirmationMethod.NONE, toy, random.Random(1), timeout=5.0,
        )
    thread.join(timeout=10)
    assert not isinstance(excinfo.value, ConnectionClosed)


def test_socket_silent_peer_times_out(toy):
    a_sock, b_sock = socket.socketpair()
    with a_sock, b_sock, pytest.raises(SessionTimeout):
        run_socket_session(
            a_sock, Role.INITIATOR, Identity(base_name="A"), Identity(base_name="B"),
            TOY_S5, Variant.JABLON96, ConfirmationMethod.NONE, toy, random.Random(1), timeout=0.2,
        )
