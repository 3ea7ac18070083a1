"""Terminating version of an agreement protocol.

Once the inner automaton decides (or a decision notification arrives), the
process sends its decision to every other process, one message per step,
and then sits in a halting state that only self-loops.
"""
from __future__ import annotations

from typing import NamedTuple

from ..events import Message
from .model import Protocol

DEC = "DEC"


class HState(NamedTuple):
    mode: str  # run | bcast | halt
    inner: object
    d: object = None
    todo: tuple = ()


class Halting(Protocol):
    def __init__(self, inner: Protocol):
        self.inner = inner
        self.name = inner.name
        self.processes = inner.processes
        self.sanctuaries = inner.sanctuaries
        self.task = inner.task
        self.params = dict(inner.params, halting=True)
        self._others = {p: tuple(q for q in self.processes if q != p) for p in self.processes}

    def initial(self, p, v):
        return HState("run", self.inner.initial(p, v))

    def query(self, p, s):
        return self.inner.query(p, s.inner) if s.mode == "run" else None

    def _announce(self, p, s, d, out=None):
        todo = tuple(Message(q, (DEC, p, d)) for q in self._others[p])
        if out is None and todo:
            out, todo = todo[0], todo[1:]
        mode = "bcast" if todo else "halt"
        return HState(mode, s.inner, d, todo), out

    def step(self, p, s, payload, answer):
        if s.mode == "halt":
            return s, None
        if s.mode == "bcast":
            out, todo = s.todo[0], s.todo[1:]
            return HState("bcast" if todo else "halt", s.inner, s.d, todo), out
        if payload is not None and payload[0] == DEC:
            return self._announce(p, s, payload[2])
        inner2, out = self.inner.step(p, s.inner, payload, answer)
        d = self.inner.decision(p, inner2)
        if d is not None:
            return self._announce(p, s._replace(inner=inner2), d, out)
        return s._replace(inner=inner2), out

    def decision(self, p, s):
        return self.inner.decision(p, s.inner) if s.mode == "run" else s.d

    def halted(self, p, s):
        return s.mode == "halt"

    def idle(self, p, s):
        if s.mode == "halt":
            return True
        if s.mode == "bcast":
            return False
        return self.inner.idle(p, s.inner)

    def describe(self):
        return dict(self.inner.describe(), halting=True)


def halting_wrapper(protocol: Protocol) -> Protocol:
    return protocol if isinstance(protocol, Halting) else Halting(protocol)
