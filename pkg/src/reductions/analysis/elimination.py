"""Removing an atomic-commitment oracle from a protocol, and lifting runs back.

Given a protocol R whose only oracle is an AC sanctuary and a process p, the
derived protocol A runs on the other processes without any oracle: a step
that would consult the oracle behaves as if the answer were 0, and steps
that need the answer 1 do not exist.  Every run of A then maps to a run of R
in which p crashes at time 0 and the oracle always answers 0.
"""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from ..events import A, BETA, Q, R, S, Event
from ..task_model import (AC, AgreementProblem, AgreementTask, EnumerationBudgetExceeded,
                          FailurePattern, InputVector, ModelError)
from ..runtime.checker import FAIL, PASS, check_run, group_steps
from ..runtime.engine import SeededRandom, run_async
from ..runtime.model import Protocol, Run, sanctuary_patterns


class TransformError(ModelError):
    pass


def _the_sanctuary(R_proto, sid):
    if sid is None:
        sid = R_proto.sanctuaries[0].id if len(R_proto.sanctuaries) == 1 else None
    others = [sg.id for sg in R_proto.sanctuaries if sg.id != sid]
    if others or sid is None:
        raise TransformError(f"protocol consults sanctuaries {others or '(several)'} besides {sid}")
    sg = R_proto.sanctuary(sid)
    if sg.problem.kind != AC:
        raise TransformError(f"sanctuary {sid} is not an atomic commitment oracle")
    return sg


class Eliminated(Protocol):
    """R with the AC oracle replaced by the constant answer 0, minus process p."""

    def __init__(self, source: Protocol, p, sid=None):
        self.source = source
        self.sg = _the_sanctuary(source, sid)
        if p not in source.processes:
            raise TransformError(f"{p} is not a process of {source.name}")
        self.removed = p
        self.processes = source.processes.subset(q for q in source.processes if q != p)
        self.sanctuaries = ()
        self.name = f"{source.name}-no-oracle"
        self.params = dict(source.params, removed=p)
        task = source.task
        if task is not None:
            f = max(task.f - 1, 0)
            self.task = AgreementTask(AgreementProblem(task.problem.kind, self.processes,
                                                       task.problem.value_domain), f, lenient=True)

    def initial(self, q, v):
        return self.source.initial(q, v)

    def query(self, q, s):
        return None

    def step(self, q, s, payload, answer):
        if answer is not None:
            raise TransformError("the derived protocol uses no oracle")
        src = self.source.query(q, s)
        if src is None:
            return self.source.step(q, s, payload, None)
        if src[0] != self.sg.id:
            raise TransformError(f"{q} consults {src[0]}")
        return self.source.step(q, s, payload, 0)

    def decision(self, q, s):
        return self.source.decision(q, s)

    def halted(self, q, s):
        return self.source.halted(q, s)

    def describe(self):
        return {"name": self.name, "source": self.source.describe(), "removed": self.removed}


def remove_ac_oracle(R_proto: Protocol, p, sid=None) -> Eliminated:
    return Eliminated(R_proto, p, sid)


# -- transition bookkeeping ------------------------------------------------

@dataclass
class TransitionCount:
    kept: int = 0
    removed: int = 0
    rewritten: int = 0
    states: int = 0
    payloads: int = 0

    @property
    def total(self):
        return self.kept + self.removed + self.rewritten


def _reachable(proto: Protocol, procs, answers, limit):
    """Reachable (process, state) pairs and delivered payload alphabet.

    Over-approximates reachability: every known state meets every payload
    ever sent to its process.  ``answers`` lists the oracle answers tried in
    querying states (() means the protocol never consults).
    """
    values = proto.task.problem.value_domain if proto.task is not None else (0, 1)
    seen = set()
    todo = deque()
    payloads = {q: set() for q in procs}
    for q in procs:
        for v in values:
            s = proto.initial(q, v)
            if (q, s) not in seen:
                seen.add((q, s))
                todo.append((q, s))
    edges = []
    done_pairs = set()
    while todo:
        if len(seen) > limit:
            raise EnumerationBudgetExceeded(f"more than {limit} reachable states")
        q, s = todo.popleft()
        for m in [None] + sorted(payloads[q], key=repr):
            if (q, s, m) in done_pairs:
                continue
            done_pairs.add((q, s, m))
            qd = proto.query(q, s)
            for d in (answers if qd is not None else (None,)):
                s2, out = proto.step(q, s, m, d)
                edges.append((q, s, m, d, s2, out))
                if (q, s2) not in seen:
                    seen.add((q, s2))
                    todo.append((q, s2))
                if out is not None and out.dest in payloads and out.payload not in payloads[out.dest]:
                    payloads[out.dest].add(out.payload)
                    # states already expanded must meet the new payload
                    todo.extend((qq, ss) for qq, ss in seen if qq == out.dest)
    return seen, payloads, edges


def count_transitions(R_proto: Protocol, sid=None, limit: int = 200_000):
    """Classify every explored transition of R: kept, removed or rewritten."""
    _the_sanctuary(R_proto, sid)
    seen, payloads, edges = _reachable(R_proto, tuple(R_proto.processes), (0, 1), limit)
    c = TransitionCount(states=len(seen), payloads=sum(len(v) for v in payloads.values()))
    for q, s, m, d, s2, out in edges:
        if d is None:
            c.kept += 1
        elif d == 1:
            c.removed += 1
        else:
            c.rewritten += 1
    return c, edges


def derived_transitions(A_proto: Eliminated, R_edges):
    """A's transitions on the states R explored, restricted to A's processes."""
    out = set()
    for q, s, m, d, s2, msg in R_edges:
        if q not in A_proto.processes or d == 1:
            continue
        out.add((q, s, m, None) + A_proto.step(q, s, m, None))
    return out


# -- run lifting -------------------------------------------------------------

def lift_run(run_A: Run, p, sid=None, R_proto: Protocol | None = None) -> Run:
    """Map a run of A = remove_ac_oracle(R, p) to a candidate run of R."""
    A_proto = run_A.protocol
    if R_proto is None:
        R_proto = A_proto.source
    sg = _the_sanctuary(R_proto, sid)
    if any(e.proc == p for e in run_A.events):
        raise TransformError(f"the run of A contains events of {p}")
    F = run_A.F
    crashes = tuple(c for c in F.crashes) + ((p, 0),)
    F2 = FailurePattern(R_proto.processes, crashes, F.horizon)
    I = run_A.inputs.as_dict()
    I[p] = 0 if any(v == 0 for q, v in I.items() if q != p) else 1
    I2 = InputVector(tuple(I.items()))

    extra_before = {}  # index in H -> events inserted before it
    extra_after = {}
    for q in A_proto.processes:
        idx = [(i, e) for i, e in enumerate(run_A.events) if e.proc == q]
        steps, partial, err = group_steps(idx)
        if err is not None:
            raise TransformError(f"run of A is malformed at {err[0]}: {err[1]}")
        s = R_proto.initial(q, I2[q])
        for step in steps + ([partial] if partial else []):
            qd = R_proto.query(q, s)
            kinds = {e.kind: (i, e) for i, e in step}
            if qd is not None:
                _, v = qd
                if R in kinds:
                    i, e = kinds[R]
                    extra_after[i] = [Event(sg.id, q, e.time, Q, v)]
                if S in kinds:
                    i, e = kinds[S]
                    pre = [] if R in kinds else [Event(sg.id, q, e.time, Q, v)]
                    extra_before[i] = pre + [Event(sg.id, q, e.time, A, 0)]
            if S in kinds:
                payload = kinds[R][1].value.payload if R in kinds else None
                s, _ = R_proto.step(q, s, payload, 0 if qd is not None else None)
    H = []
    for i, e in enumerate(run_A.events):
        H.extend(extra_before.get(i, ()))
        H.append(e)
        H.extend(extra_after.get(i, ()))
    return Run(F2, I2, tuple(H), R_proto, run_A.status, (), (),
               {"lifted_from": A_proto.name, "removed": p})


# -- soundness suite -------------------------------------------------------

@dataclass
class TransformReport:
    source: str
    removed_process: object
    kept: int
    removed: int
    rewritten: int
    total: int
    identity_ok: bool
    derived_ok: bool
    runs: int = 0
    passed: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return self.identity_ok and self.derived_ok and self.passed == self.runs

    def to_dict(self):
        return {"source": self.source, "removed_process": self.removed_process,
                "transitions": {"kept": self.kept, "removed": self.removed,
                                "rewritten": self.rewritten, "total": self.total},
                "identity_ok": self.identity_ok, "derived_ok": self.derived_ok,
                "runs": self.runs, "passed": self.passed, "failures": self.failures}


def _random_setting(A_proto, seed, max_crashes, horizon):
    rng = random.Random(seed)
    procs = list(A_proto.processes)
    values = A_proto.task.problem.value_domain if A_proto.task else (0, 1)
    I = InputVector(tuple((q, rng.choice(values)) for q in procs))
    k = rng.randint(0, min(max_crashes, len(procs) - 1))
    who = rng.sample(procs, k)
    F = FailurePattern(A_proto.processes, tuple((q, rng.randrange(horizon)) for q in who), horizon)
    return F, I


def lifted_run_problems(lifted: Run, R_proto, sid) -> list:
    """Why a lifted run is not a run of R with only-zero answers (empty if it is)."""
    problems = []
    rep = check_run(lifted, R_proto)
    problems += [f"{r}: {v.detail}" for r, v in rep.rules.items() if v.status == FAIL]
    if not rep.ok and not problems:
        problems.append(f"unexpected verdicts {[(r, v.status) for r, v in rep.rules.items() if v.status != PASS]}")
    answers = [e.value for e in lifted.events if e.loc == sid and e.kind == A]
    if any(v != 0 for v in answers):
        problems.append("an oracle answer differs from 0")
    sg = R_proto.sanctuary(sid)
    Fs = sanctuary_patterns(R_proto, lifted.F)[sid]
    if not Fs.faulty():
        problems.append("the removed process is not faulty for the oracle")
    for V in sg.problem.input_vectors():
        if 0 not in sg.problem.allowed(Fs, V):
            problems.append(f"0 is not allowed for {V.values()}")
            break
    return problems


def transform_soundness_suite(R_proto: Protocol, p, sid=None, seeds=range(100),
                              max_crashes: int = 1, horizon: int = 40,
                              budget: int = 20_000, limit: int = 200_000) -> TransformReport:
    sg = _the_sanctuary(R_proto, sid)
    A_proto = remove_ac_oracle(R_proto, p, sg.id)
    counts, edges = count_transitions(R_proto, sg.id, limit)
    n_answer1 = sum(1 for e in edges if e[3] == 1)
    identity_ok = counts.removed == n_answer1 and counts.total == len(edges)
    # A keeps exactly the unconsulted transitions and the answer-0 ones, rewritten
    expect = set()
    for q, s, m, d, s2, out in edges:
        if q in A_proto.processes and d != 1:
            expect.add((q, s, m, None, s2, out))
    derived_ok = derived_transitions(A_proto, edges) == expect
    rep = TransformReport(R_proto.name, p, counts.kept, counts.removed, counts.rewritten,
                          counts.total, identity_ok, derived_ok)
    for seed in seeds:
        F, I = _random_setting(A_proto, seed, max_crashes, horizon)
        run_A = run_async(A_proto, F, I, SeededRandom(seed, budget))
        rep.runs += 1
        if any(e.kind in (Q, A) or e.loc != BETA for e in run_A.events):
            rep.failures.append({"seed": seed, "problems": ["A produced oracle events"]})
            continue
        problems = lifted_run_problems(lift_run(run_A, p, sg.id, R_proto), R_proto, sg.id)
        if problems:
            rep.failures.append({"seed": seed, "problems": problems})
        else:
            rep.passed += 1
    return rep
