"""Bundled toy validator: a quadratic bowl served over the subprocess protocol.

Run as a child process::

    python3 -m eee.toy_validator

It reads one JSON request per line from stdin ({"id": int, "state": [...]})
and answers each with {"id": ..., "e_imp": [...], "e_o": ...}: the implicit
components are the per-entry squared distances to a fixed target and the
overall error is their sum. EOF on stdin ends the process cleanly.

:func:`toy_spec` builds the matching client-side error layout so the
optimizer can be pointed at this validator end to end.
"""
from __future__ import annotations

import json
import sys

import numpy as np

from .validation import ErrorSpec, ImplicitBlock

__all__ = ["TARGET", "EPSILON", "toy_errors", "toy_spec", "main"]

TARGET = np.array([0.3, 0.6, 0.4])
EPSILON = 0.02


def toy_errors(x: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-entry squared distance to the target and their sum."""
    x = np.asarray(x, dtype=np.float64)
    e_imp = (x - TARGET) ** 2
    return e_imp, float(e_imp.sum())


def toy_spec() -> ErrorSpec:
    """Client-side layout: three unit-weight implicit components, no explicit
    terms, so the local assembly w_imp @ e_imp reproduces the validator's e_o."""
    return ErrorSpec(
        implicit_blocks=[ImplicitBlock("quad", np.ones(TARGET.shape[0]))],
        explicit_blocks=[],
        epsilon=EPSILON,
        d_x=TARGET.shape[0],
    )


def main() -> int:
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req_id = -1
        try:
            req = json.loads(line)
            req_id = req["id"]
            x = np.asarray(req["state"], dtype=np.float64)
            if x.shape != TARGET.shape:
                raise ValueError(f"state must have {TARGET.shape[0]} entries")
            if not np.all(np.isfinite(x)):
                raise ValueError("state contains non-finite entries")
            e_imp, e_o = toy_errors(x)
            reply = {"id": req_id, "e_imp": e_imp.tolist(), "e_o": e_o}
        except Exception as exc:  # malformed line must not kill the server
            reply = {"id": req_id, "error": str(exc)}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
