"""Bridge to a validator living in a child process.

Real validators are usually simulators in another language or environment,
so the contract is deliberately primitive: line-delimited JSON over the
child's stdio, one request in flight at a time.

Request::

    {"id": <int>, "state": [<float>, ...]}

Response, exactly one line per request::

    {"id": <int>, "e_imp": [<float>, ...], "e_o": <float>}
    {"id": <int>, "error": "<message>"}

Anything else -- a timeout, a dead child, malformed JSON, a mismatched id --
raises :class:`~eee.errors.ProtocolError`.
"""
from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading

import numpy as np

from .errors import ProtocolError, ValidationInputError
from .validation import ErrorReport, ErrorSpec

__all__ = ["ExternalValidatorClient", "ExternalProblem", "DEFAULT_TIMEOUT"]

DEFAULT_TIMEOUT = 60.0


class ExternalValidatorClient:
    """Owns one validator subprocess and serializes requests to it.

    The child's stdout is drained by a daemon thread so a hung or silent
    validator turns into a timeout here instead of a blocked read.
    """

    def __init__(self, cmd: str | list[str], timeout: float = DEFAULT_TIMEOUT):
        if isinstance(cmd, str):
            cmd = shlex.split(cmd)
        if not cmd:
            raise ValueError("validator command is empty")
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        self.cmd = list(cmd)
        self.timeout = float(timeout)
        self._next_id = 0
        self._closed = False
        try:
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"could not start validator {self.cmd!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._drain, daemon=True)
        self._reader.start()

    def _drain(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        except ValueError:
            pass  # stream closed under the reader during shutdown
        finally:
            self._lines.put(None)

    def request(self, state: np.ndarray) -> tuple[np.ndarray, float]:
        """One round trip: returns the validator's (e_imp, e_o) for state."""
        if self._closed or self._proc.poll() is not None:
            raise ProtocolError("validator process is not running")
        state = np.asarray(state, dtype=np.float64).ravel()
        req_id = self._next_id
        self._next_id += 1
        line = json.dumps({"id": req_id, "state": state.tolist()})
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"validator closed its stdin: {exc}") from exc
        try:
            raw = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolError(
                f"validator gave no response within {self.timeout:g} s"
            ) from None
        if raw is None:
            raise ProtocolError("validator exited before responding")
        try:
            reply = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"validator sent malformed JSON: {raw!r}") from exc
        if not isinstance(reply, dict):
            raise ProtocolError(f"validator reply is not an object: {raw!r}")
        if reply.get("id") != req_id:
            raise ProtocolError(
                f"validator answered id {reply.get('id')!r} to request {req_id}"
            )
        if "error" in reply:
            raise ProtocolError(f"validator reported: {reply['error']}")
        try:
            e_imp = np.asarray(reply["e_imp"], dtype=np.float64)
            e_o = float(reply["e_o"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"validator reply missing fields: {raw!r}") from exc
        if e_imp.ndim != 1 or not np.all(np.isfinite(e_imp)) or not np.isfinite(e_o):
            raise ProtocolError(f"validator reply contains non-finite values: {raw!r}")
        return e_imp, e_o

    def close(self) -> None:
        """Send EOF, give the child a moment to exit, then make sure it has."""
        if self._closed:
            return
        self._closed = True
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self) -> "ExternalValidatorClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class ExternalProblem:
    """Problem facade over an external validator.

    The error layout (dimensions, explicit terms, threshold) must be declared
    client-side so the search can differentiate the explicit part; the
    subprocess remains the authority on e_imp and e_o.
    """

    def __init__(
        self,
        name: str,
        spec: ErrorSpec,
        client: ExternalValidatorClient,
        codec: str | None = None,
    ):
        self.name = name
        self.spec = spec
        self.codec = codec
        self.client = client
        self.queries = 0

    @property
    def d_x(self) -> int:
        return self.spec.d_x

    @property
    def epsilon(self) -> float:
        return self.spec.epsilon

    def validate(self, x: np.ndarray) -> ErrorReport:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape != (self.spec.d_x,):
            raise ValidationInputError(
                f"state must have {self.spec.d_x} entries, got {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ValidationInputError("state contains non-finite entries")
        e_imp, e_o = self.client.request(x)
        if e_imp.shape != (self.spec.d_e_imp,):
            raise ProtocolError(
                f"validator sent {e_imp.shape[0]} implicit components, "
                f"spec declares {self.spec.d_e_imp}"
            )
        e_exp = self.spec.explicit_values(x[None, :])[0]
        self.queries += 1
        return ErrorReport(
            state=x.copy(),
            e_imp=e_imp,
            e_exp=e_exp,
            e_o=e_o,
            accepted=e_o < self.spec.epsilon,
        )
