"""Lock-step round engine.

Rounds 1..R exchange messages; round R+1 is the oracle consultation.  A crash
of p in round r <= R delivers p's round-r message only to the chosen subset;
a crash in round R+1 means p never queries.  The crash time in the failure
pattern is the crash round.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from ..oracle import AnswerStrategy, OracleInstance, restrict_failure_pattern
from ..task_model import FailurePattern, InputVector


@dataclass
class SyncTrace:
    F: FailurePattern
    inputs: InputVector
    crashes: dict
    received: list  # per round: {p: ((sender, value), ...)}
    oracle_events: tuple
    decisions: dict
    states: dict = field(default_factory=dict)

    @property
    def decided(self):
        return dict(self.decisions)


def run_sync(program, inputs, crashes: dict | None = None,
             strategy: AnswerStrategy | None = None) -> SyncTrace:
    """``crashes`` maps p -> (round, recipients of p's message in that round)."""
    crashes = dict(crashes or {})
    procs = tuple(program.processes)
    if not isinstance(inputs, InputVector):
        inputs = InputVector.of(inputs, program.processes)
    R = program.rounds
    for p, (r, subset) in crashes.items():
        if not 1 <= r <= R + 1:
            raise ValueError(f"crash round {r} of {p} outside 1..{R + 1}")
    F = FailurePattern(program.processes, tuple((p, r) for p, (r, _) in crashes.items()), R + 2)
    states = {p: program.initial(p, inputs[p]) for p in procs}
    received = []
    for r in range(1, R + 1):
        inbox = {p: [] for p in procs}
        for p in procs:
            c = crashes.get(p)
            if c is not None and c[0] < r:
                continue
            v = program.send(p, states[p], r)
            targets = procs if c is None or c[0] > r else tuple(c[1])
            for q in targets:
                inbox[q].append((p, v))
        got = {}
        for p in procs:
            c = crashes.get(p)
            if c is not None and c[0] <= r:
                continue
            got[p] = tuple(sorted(inbox[p]))
            states[p] = program.receive(p, states[p], r, got[p])
        received.append(got)
    sg = program.sanctuary
    oracle = OracleInstance(sg, restrict_failure_pattern(F, sg.consultants, program.processes), strategy)
    t = R + 1
    askers = [p for p in procs if p not in crashes]
    for p in askers:
        sid, v = program.query(p, states[p])
        oracle.record_query(p, t, v)
    decisions = {}
    for p in askers:
        _, d = oracle.record_answer(p, t)
        decisions[p] = program.decide(p, states[p], d)
    return SyncTrace(F, inputs, crashes, received, tuple(oracle.history), decisions, states)


def sync_crash_patterns(program, max_crashes: int):
    """Every crash map with at most ``max_crashes`` crashes.

    Covers every crash round and every recipient subset; a crashed process
    never receives, so subsets range over the other processes only.
    """
    procs = tuple(program.processes)
    R = program.rounds

    def options(p):
        others = tuple(q for q in procs if q != p)
        out = []
        for r in range(1, R + 1):
            for k in range(len(others) + 1):
                out.extend((r, sub) for sub in itertools.combinations(others, k))
        out.append((R + 1, ()))
        return out

    for k in range(min(max_crashes, len(procs) - 1) + 1):
        for who in itertools.combinations(procs, k):
            for choice in itertools.product(*(options(p) for p in who)):
                yield dict(zip(who, choice))
