"""Event and message records shared by oracles, engines and traces."""
from __future__ import annotations

from typing import Any, NamedTuple

BETA = "beta"
Q, A, R, S = "Q", "A", "R", "S"


class Message(NamedTuple):
    dest: Any
    payload: tuple


class Event(NamedTuple):
    loc: str  # sanctuary id, or BETA for buffer events
    proc: Any
    time: int
    kind: str
    value: Any  # Value for Q/A, Message (or None for a silent S) for R/S

    @property
    def is_oracle(self) -> bool:
        return self.loc != BETA


def project_process(H, p) -> list:
    return [e for e in H if e.proc == p]


def project_loc(H, loc) -> list:
    return [e for e in H if e.loc == loc]
