"""Protocol automata and run records for the asynchronous model."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any

from ..events import BETA, R, S, Message
from ..oracle import restrict_failure_pattern
from ..task_model import FailurePattern, InputVector, ProcessSet


class Protocol:
    """A family of deterministic automata, one per process.

    States must be hashable and immutable.  ``step`` receives the payload of
    the delivered message (or None) and the oracle answer (or None) and
    returns the next state plus at most one outgoing Message.
    """

    name = "protocol"
    processes: ProcessSet
    sanctuaries: tuple = ()
    task = None  # AgreementTask the protocol is meant to solve
    params: dict = {}

    def initial(self, p, v):
        raise NotImplementedError

    def query(self, p, s):
        return None

    def step(self, p, s, payload, answer):
        raise NotImplementedError

    def decision(self, p, s):
        return None

    def halted(self, p, s) -> bool:
        return False

    def idle(self, p, s) -> bool:
        """True when a silent null step would change nothing."""
        if self.query(p, s) is not None:
            return False
        return self.step(p, s, None, None) == (s, None)

    def sanctuary(self, sid):
        for sg in self.sanctuaries:
            if sg.id == sid:
                return sg
        raise KeyError(sid)

    def describe(self) -> dict:
        return {"name": self.name, **self.params}


def sanctuary_patterns(protocol: Protocol, F: FailurePattern) -> dict:
    return {sg.id: restrict_failure_pattern(F, sg.consultants, protocol.processes,
                                            allow_all_faulty=sg.task.lenient)
            for sg in protocol.sanctuaries}


@dataclass
class Run:
    F: FailurePattern
    inputs: InputVector
    events: tuple
    protocol: Any = field(default=None, compare=False, repr=False)
    status: str = "quiescent"  # quiescent | budget | deadlock | stopped
    obligations: tuple = ()
    decisions: tuple = field(default=(), compare=False)  # (time, p, d) when d changes
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def complete(self) -> bool:
        return self.status in ("quiescent", "deadlock")

    def history(self, loc=None, proc=None) -> list:
        return [e for e in self.events
                if (loc is None or e.loc == loc) and (proc is None or e.proc == proc)]

    def prefix(self, t: int) -> tuple:
        return tuple(e for e in self.events if e.time <= t)

    def decided(self) -> dict:
        out = {}
        for _, p, d in self.decisions:
            out[p] = d
        return {p: d for p, d in out.items() if d is not None}

    def last_decision_time(self):
        times = [t for t, _, d in self.decisions if d is not None]
        return max(times) if times else None


def buffer_states(events):
    """The buffer after each event, as signed multisets (index 0 = empty).

    Removing a message that is absent leaves a negative count; on legal
    runs counts never go below zero and this is the usual recurrence.
    """
    cur = Counter()
    out = [Counter()]
    for e in events:
        if e.loc == BETA:
            if e.kind == R:
                cur = cur.copy()
                cur[e.value] -= 1
            elif e.kind == S and e.value is not None:
                cur = cur.copy()
                cur[e.value] += 1
        out.append(cur)
    return out


def as_message(x) -> Message:
    return x if isinstance(x, Message) else Message(x[0], tuple(x[1]))
