"""Subprocess validator bridge: the JSON wire protocol, its failure
taxonomy, and the bundled quadratic toy validator."""
import json
import subprocess
import sys

import numpy as np
import pytest

from eee.errors import ProtocolError, ValidationInputError
from eee.external import DEFAULT_TIMEOUT, ExternalProblem, ExternalValidatorClient
from eee.toy_validator import EPSILON, TARGET, toy_errors, toy_spec

TOY_CMD = [sys.executable, "-m", "eee.toy_validator"]


def script(body: str) -> list[str]:
    """A throwaway line-oriented validator with the given loop body."""
    return [
        sys.executable,
        "-c",
        "import sys, json\n"
        "for line in sys.stdin:\n"
        "    req = json.loads(line)\n"
        f"    {body}\n",
    ]


# --- client round trips -----------------------------------------------------


def test_round_trip_returns_quadratic_errors():
    with ExternalValidatorClient(TOY_CMD) as client:
        e_imp, e_o = client.request(TARGET)
        assert np.allclose(e_imp, 0.0) and e_o == 0.0
        x = np.array([0.1, 0.2, 0.9])
        e_imp, e_o = client.request(x)
        want_imp, want_o = toy_errors(x)
        np.testing.assert_allclose(e_imp, want_imp, atol=1e-12)
        assert abs(e_o - want_o) < 1e-12


def test_many_requests_share_one_child():
    with ExternalValidatorClient(TOY_CMD) as client:
        for k in range(20):
            x = np.full(3, k / 20.0)
            _, e_o = client.request(x)
            assert abs(e_o - toy_errors(x)[1]) < 1e-12


def test_command_string_is_split_like_a_shell():
    with ExternalValidatorClient(f"{sys.executable} -m eee.toy_validator") as client:
        _, e_o = client.request(TARGET)
        assert e_o == 0.0


def test_client_rejects_bad_construction():
    with pytest.raises(ValueError):
        ExternalValidatorClient([])
    with pytest.raises(ValueError):
        ExternalValidatorClient(TOY_CMD, timeout=0.0)
    with pytest.raises(ProtocolError):
        ExternalValidatorClient(["/nonexistent/validator-binary"])


def test_close_terminates_child_and_blocks_requests():
    client = ExternalValidatorClient(TOY_CMD)
    client.request(TARGET)
    client.close()
    assert client._proc.poll() is not None
    with pytest.raises(ProtocolError):
        client.request(TARGET)
    client.close()  # idempotent


# --- protocol violations ----------------------------------------------------


def test_error_response_raises_with_message():
    cmd = script('print(json.dumps({"id": req["id"], "error": "no such state"}), flush=True)')
    with ExternalValidatorClient(cmd) as client:
        with pytest.raises(ProtocolError, match="no such state"):
            client.request(np.zeros(3))


def test_malformed_json_raises():
    cmd = script('print("{not json", flush=True)')
    with ExternalValidatorClient(cmd) as client:
        with pytest.raises(ProtocolError, match="malformed"):
            client.request(np.zeros(3))


def test_mismatched_id_raises():
    cmd = script(
        'print(json.dumps({"id": req["id"] + 1, "e_imp": [0.0], "e_o": 0.0}), flush=True)'
    )
    with ExternalValidatorClient(cmd) as client:
        with pytest.raises(ProtocolError, match="answered id"):
            client.request(np.zeros(3))


def test_missing_fields_raise():
    cmd = script('print(json.dumps({"id": req["id"], "e_imp": [0.0]}), flush=True)')
    with ExternalValidatorClient(cmd) as client:
        with pytest.raises(ProtocolError, match="missing fields"):
            client.request(np.zeros(3))


def test_non_finite_reply_raises():
    cmd = script(
        'print(json.dumps({"id": req["id"], "e_imp": [0.0], "e_o": float("nan")}), flush=True)'
    )
    with ExternalValidatorClient(cmd) as client:
        with pytest.raises(ProtocolError, match="non-finite"):
            client.request(np.zeros(3))


def test_silent_child_times_out():
    cmd = [sys.executable, "-c", "import time\nimport sys\nsys.stdin.readline()\ntime.sleep(60)"]
    client = ExternalValidatorClient(cmd, timeout=0.2)
    try:
        with pytest.raises(ProtocolError, match="no response within"):
            client.request(np.zeros(3))
    finally:
        client.close()


def test_child_that_exits_immediately_raises():
    with ExternalValidatorClient([sys.executable, "-c", "pass"]) as client:
        with pytest.raises(ProtocolError):
            client.request(np.zeros(3))


def test_default_timeout_is_one_minute():
    assert DEFAULT_TIMEOUT == 60.0


# --- the problem facade -----------------------------------------------------


def test_external_problem_counts_and_accepts():
    with ExternalValidatorClient(TOY_CMD) as client:
        problem = ExternalProblem("toy", toy_spec(), client)
        assert problem.d_x == 3 and problem.epsilon == EPSILON
        near = TARGET + np.array([0.05, 0.0, 0.0])
        report = problem.validate(near)
        assert report.accepted == (report.e_o < EPSILON)
        assert report.e_o == pytest.approx(0.0025, abs=1e-12)
        far = np.zeros(3)
        report = problem.validate(far)
        assert not report.accepted
        assert problem.queries == 2


def test_external_problem_rejects_bad_states_without_queries():
    with ExternalValidatorClient(TOY_CMD) as client:
        problem = ExternalProblem("toy", toy_spec(), client)
        with pytest.raises(ValidationInputError):
            problem.validate(np.zeros(4))
        with pytest.raises(ValidationInputError):
            problem.validate(np.array([0.1, np.nan, 0.2]))
        assert problem.queries == 0


def test_external_problem_checks_component_count():
    cmd = script(
        'print(json.dumps({"id": req["id"], "e_imp": [0.1, 0.2], "e_o": 0.3}), flush=True)'
    )
    with ExternalValidatorClient(cmd) as client:
        problem = ExternalProblem("toy", toy_spec(), client)
        with pytest.raises(ProtocolError, match="implicit components"):
            problem.validate(np.zeros(3))
        assert problem.queries == 0  # broken replies never count


def test_report_reassembles_from_spec_weights():
    spec = toy_spec()
    with ExternalValidatorClient(TOY_CMD) as client:
        problem = ExternalProblem("toy", spec, client)
        report = problem.validate(np.array([0.7, 0.1, 0.5]))
        assert abs(float(spec.w_imp @ report.e_imp) - report.e_o) < 1e-12


# --- the bundled toy validator as a bare process ----------------------------


def test_toy_validator_handles_garbage_and_eof():
    proc = subprocess.Popen(
        TOY_CMD,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
    )
    out, _ = proc.communicate(
        "this is not json\n"
        '{"id": 7, "state": [0.3, 0.6]}\n'
        '{"id": 8, "state": [0.3, 0.6, 0.4]}\n',
        timeout=30,
    )
    lines = [json.loads(line) for line in out.splitlines()]
    assert proc.returncode == 0  # EOF is a clean shutdown
    assert lines[0]["id"] == -1 and "error" in lines[0]
    assert lines[1]["id"] == 7 and "error" in lines[1]
    assert lines[2] == {"id": 8, "e_imp": [0.0, 0.0, 0.0], "e_o": 0.0}
