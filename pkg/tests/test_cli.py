import re
import socket
import subprocess
import sys
import threading
from pathlib import Path

import pytest

from attacks import GOLDEN_PATH
from cli import main
from simnet import read_frame

ROOT = Path(__file__).resolve().parent.parent


def test_run_ok(capsys):
    assert main(["run", "--variant", "p-speke-2017", "--confirm", "symmetric-hash", "--group", "toy23", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    keys = re.findall(r"key=([0-9a-f]{64})", out)
    assert len(keys) == 2 and keys[0] == keys[1]
    assert "rounds=2 expected_rounds=2 keys_match=true" in out
    assert out.rstrip().endswith("result=ok")


def test_run_with_trace(capsys):
    assert main(["run", "--variant", "jablon96", "--trace"]) == 0
    out = capsys.readouterr().out
    assert "trace:" in out
    assert "event=ACCEPTED session=A" in out


def test_run_notes_cross_pairing(capsys):
    assert main(["run", "--variant", "jablon96", "--confirm", "symmetric-mac"]) == 0
    assert "note=non-historical pairing" in capsys.readouterr().out


def test_run_password_mismatch_fails(capsys):
    code = main(["run", "--variant", "jablon96", "--password", "\x05", "--password-b", "\x06"])
    assert code == 1
    assert "result=failed reason=A: ConfirmationMismatch; B: ConfirmationMismatch" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--seed", "18446744073709551616"],
        ["run", "--identity-a", "B"],
        ["attack", "malleability", "--z", "1"],
        ["attack", "exp-equivalence", "--variant", "jablon96", "--r", "11"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "lab.conf"
    path.write_text("colour = blue\n", encoding="utf-8")
    assert main(["run", "--config", str(path)]) == 2


def test_attack_meets_expectation(capsys):
    assert main(["attack", "impersonation", "--variant", "jablon96", "--confirm", "jablon-double-hash"]) == 0
    out = capsys.readouterr().out
    assert "expected=success" in out
    assert "expectation=met" in out
    assert "trace:" in out


def test_attack_against_patch(capsys):
    assert main(["attack", "session-swap", "--variant", "p-speke-2017"]) == 0
    out = capsys.readouterr().out
    assert "success=false" in out
    assert "expected=failure" in out


def test_exp_equivalence_default_r(capsys):
    assert main(["attack", "exp-equivalence", "--variant", "jablon96", "--r", "3"]) == 0
    assert "success=true" in capsys.readouterr().out


def test_expect_override_mismatch(capsys):
    assert main(["attack", "malleability", "--variant", "p-speke-2017", "--expect", "success"]) == 1
    assert "expectation=not met" in capsys.readouterr().out


def test_matrix_matches_golden(tmp_path, capsys):
    out_file = tmp_path / "records.txt"
    assert main(["matrix", "--group", "toy23", "--seed", "1", "--out", str(out_file)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("security matrix group=toy23 seed=1 trials=20")
    assert "golden=match" in out
    assert out_file.read_text(encoding="utf-8").count("section=") == 10


def test_matrix_golden_mismatch(tmp_path, capsys):
    golden = tmp_path / "golden.txt"
    golden.write_text(GOLDEN_PATH.read_text(encoding="utf-8").replace("MAL=✓", "MAL=×", 1), encoding="utf-8")
    assert main(["matrix", "--group", "toy23", "--golden", str(golden)]) == 1
    assert "golden mismatch: explicit/ieee-p1363-2/MAL" in capsys.readouterr().err


def serve_and_connect(server_args, client_args):
    """Run `serve` and `connect` as two processes; returns (server code, server stdout, client result)."""
    server = subprocess.Popen(
        [sys.executable, "cli.py", "serve", "--listen", "127.0.0.1:0", *server_args],
        cwd=ROOT,
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        banner = server.stdout.readline()
        match = re.match(r"listening on ([\d.]+):(\d+)", banner)
        assert match, banner
        client = subprocess.run(
            [sys.executable, "cli.py", "connect", "--connect", f"{match[1]}:{match[2]}", *client_args],
            cwd=ROOT,
            capture_output=True,
            text=True,
            timeout=30,
        )
        server_out, _ = server.communicate(timeout=30)
    finally:
        server.kill()
    return server.returncode, server_out, client


def test_serve_and_connect_agree():
    code, server_out, client = serve_and_connect(["--variant", "p-speke-2017"], ["--variant", "p-speke-2017"])

    assert client.returncode == 0, client.stderr
    assert code == 0
    client_key = re.search(r"key=([0-9a-f]{64})", client.stdout)[1]
    server_key = re.search(r"key=([0-9a-f]{64})", server_out)[1]
    assert client_key == server_key


def test_serve_and_connect_variant_mismatch():
    common = ["--group", "modp2048", "--confirm", "jablon-double-hash"]
    code, server_out, client = serve_and_connect(
        ["--variant", "jablon96", *common], ["--variant", "ieee-p1363-2", *common]
    )

    assert code == 1
    assert client.returncode == 1, client.stderr
    assert "result=failed reason=ConfirmationMismatch" in server_out
    assert "result=failed reason=ConfirmationMismatch" in client.stdout


def test_connect_rejects_truncated_frame(capsys):
    server = socket.create_server(("127.0.0.1", 0))
    port = server.getsockname()[1]

    def truncating_peer():
        conn, _ = server.accept()
        with conn:
            read_frame(conn)
            conn.sendall(b"\x00\x00\x00\x09\x01\x00")

    thread = threading.Thread(target=truncating_peer)
    thread.start()
    try:
        assert main(["connect", "--connect", f"127.0.0.1:{port}", "--variant", "jablon96"]) == 1
    finally:
        thread.join(timeout=10)
        server.close()
    assert "FrameDecodeError" in capsys.readouterr().err
