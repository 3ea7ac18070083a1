"""Sanctuaries and the most general f-resilient oracle of an agreement task.

An ``OracleInstance`` owns the history of one sanctuary.  It accepts queries,
and answers only with values that stay allowed for every completion of the
partial input vector seen so far in the consultation.  Which legal value, and
when, is left to an ``AnswerStrategy``.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from functools import lru_cache

from .events import A, Q, Event
from .task_model import (AC, CONS, FailurePattern, InputVector, ModelError,
                         ProcessSet)


class OracleError(Exception):
    pass


class IllegalQuery(OracleError):
    pass


class NoValidAnswer(OracleError):
    pass


class InvalidSanctuaryConfig(ModelError):
    pass


@dataclass(frozen=True)
class Sanctuary:
    id: str
    consultants: ProcessSet
    task: object  # AgreementTask over the consultants

    def __post_init__(self):
        if set(self.task.processes) != set(self.consultants):
            raise InvalidSanctuaryConfig(f"task of {self.id} is not over its consultants")

    @property
    def f(self):
        return self.task.f

    @property
    def problem(self):
        return self.task.problem


def kth_consultation(H, k: int) -> list:
    seen_q, seen_a = {}, {}
    out = []
    for e in H:
        if e.kind == Q:
            seen_q[e.proc] = seen_q.get(e.proc, 0) + 1
            if seen_q[e.proc] == k:
                out.append(e)
        elif e.kind == A:
            seen_a[e.proc] = seen_a.get(e.proc, 0) + 1
            if seen_a[e.proc] == k:
                out.append(e)
    return out


def consultation_index(H) -> list:
    """k for every event of H (same order)."""
    qn, an, out = {}, {}, []
    for e in H:
        c = qn if e.kind == Q else an
        c[e.proc] = c.get(e.proc, 0) + 1
        out.append(c[e.proc])
    return out


def first_ill_formed(H):
    """Index of the first event that breaks Q/A alternation, or None."""
    expect = {}
    for i, e in enumerate(H):
        want = expect.get(e.proc, Q)
        if e.kind != want:
            return i
        expect[e.proc] = A if want == Q else Q
    return None


def is_well_formed(H) -> bool:
    return first_ill_formed(H) is None


def first_incompatible(H, F: FailurePattern):
    for i, e in enumerate(H):
        c = F.crash_time(e.proc)
        if c is not None and e.time >= c:
            return i
    return None


def is_compatible(H, F: FailurePattern) -> bool:
    return first_incompatible(H, F) is None


@lru_cache(maxsize=1 << 16)
def _candidates(problem, F, W: tuple) -> frozenset:
    known = dict(W)
    missing = [p for p in problem.processes if p not in known]
    result = None
    for vals in itertools.product(problem.value_domain, repeat=len(missing)):
        full = dict(known)
        full.update(zip(missing, vals))
        allowed = problem.allowed(F, InputVector(tuple(full.items())))
        result = allowed if result is None else result & allowed
        if not result:
            break
    return frozenset(result or ())


def candidates_for(problem, F: FailurePattern, W: dict) -> frozenset:
    """Values allowed for every total extension of the partial vector W."""
    return _candidates(problem, F, tuple(sorted(W.items())))


def restrict_failure_pattern(F: FailurePattern, consultants: ProcessSet, members,
                             allow_all_faulty: bool = False) -> FailurePattern:
    members = set(members)
    crashes = [(p, F.crash_time(p)) for p in consultants
               if p in members and F.crash_time(p) is not None]
    crashes += [(p, 0) for p in consultants if p not in members]
    try:
        return FailurePattern(consultants, tuple(crashes), F.horizon, not allow_all_faulty)
    except ModelError as exc:
        raise InvalidSanctuaryConfig(str(exc)) from exc


@dataclass
class AnswerStrategy:
    policy: str = "min"  # min | max | random | scripted
    seed: int = 0
    script: tuple = ()  # answer value per consultation, for "scripted"
    timing: str = "eager"  # eager | lazy | scripted
    timing_script: tuple = ()  # process ids, answered in this order

    def choose(self, cands: frozenset, k: int, rng: random.Random):
        ordered = sorted(cands)
        if self.policy == "min":
            return ordered[0]
        if self.policy == "max":
            return ordered[-1]
        if self.policy == "random":
            return rng.choice(ordered)
        if self.policy == "scripted":
            if k - 1 < len(self.script) and self.script[k - 1] in cands:
                return self.script[k - 1]
            raise NoValidAnswer(f"scripted answer for consultation {k} is not a candidate {ordered}")
        raise ValueError(f"unknown answer policy {self.policy!r}")


class OracleInstance:
    def __init__(self, sanctuary: Sanctuary, pattern: FailurePattern,
                 strategy: AnswerStrategy | None = None):
        self.sanctuary = sanctuary
        self.pattern = pattern
        self.strategy = strategy or AnswerStrategy()
        self.rng = random.Random(self.strategy.seed)
        self.history: list = []
        self.n_q: dict = {}
        self.n_a: dict = {}
        self.queries: dict = {}  # k -> {p: v}
        self.committed: dict = {}  # k -> value
        self._timing_pos = 0

    @property
    def id(self):
        return self.sanctuary.id

    def pending(self, p):
        """Consultation index of p's pending query, or None."""
        q = self.n_q.get(p, 0)
        return q if q > self.n_a.get(p, 0) else None

    def _check_time(self, p, t):
        if self.history and t < self.history[-1].time:
            raise IllegalQuery(f"time {t} goes backwards at {self.id}")
        if self.pattern.crashed(p, t):
            raise IllegalQuery(f"process {p} has crashed by time {t}")

    def record_query(self, p, t: int, v):
        if p not in self.sanctuary.consultants:
            raise IllegalQuery(f"{p} is not a consultant of {self.id}")
        if self.pending(p) is not None:
            raise IllegalQuery(f"{p} already has a pending query at {self.id}")
        if v not in self.sanctuary.problem.value_domain:
            raise IllegalQuery(f"query value {v!r} outside the domain")
        self._check_time(p, t)
        k = self.n_q.get(p, 0) + 1
        self.n_q[p] = k
        self.queries.setdefault(k, {})[p] = v
        e = Event(self.id, p, t, Q, v)
        self.history.append(e)
        return e

    def answer_candidates(self, k: int) -> frozenset:
        if k in self.committed:
            return frozenset({self.committed[k]})
        return candidates_for(self.sanctuary.problem, self.pattern, self.queries.get(k, {}))

    def obligations(self) -> set:
        out = set()
        need = len(self.sanctuary.consultants) - self.sanctuary.f
        correct = self.pattern.correct()
        for k, W in self.queries.items():
            if len(W) < need:
                continue
            for p in W:
                if p in correct and self.n_a.get(p, 0) < k:
                    out.add((k, p))
        return out

    def may_answer(self, p) -> bool:
        """Whether the timing policy lets p be answered now (legality aside)."""
        k = self.pending(p)
        if k is None:
            return False
        timing = self.strategy.timing
        if timing == "lazy":
            return (k, p) in self.obligations()
        if timing == "scripted":
            ts = self.strategy.timing_script
            return self._timing_pos < len(ts) and ts[self._timing_pos] == p
        return True

    def can_answer(self, p) -> bool:
        k = self.pending(p)
        if k is None or not self.may_answer(p):
            return False
        if k in self.committed:
            return True
        cands = self.answer_candidates(k)
        if not cands:
            return False
        if self.strategy.policy == "scripted":
            s = self.strategy.script
            return k - 1 < len(s) and s[k - 1] in cands
        return True

    def record_answer(self, p, t: int, choice=None):
        k = self.pending(p)
        if k is None:
            raise IllegalQuery(f"{p} has no pending query at {self.id}")
        self._check_time(p, t)
        if k in self.committed:
            v = self.committed[k]
            if choice is not None and choice != v:
                raise NoValidAnswer(f"consultation {k} already answered {v}")
        else:
            cands = self.answer_candidates(k)
            if not cands:
                raise NoValidAnswer(f"no value is valid yet for consultation {k} at {self.id}")
            if choice is None:
                v = self.strategy.choose(cands, k, self.rng)
            elif choice in cands:
                v = choice
            else:
                raise NoValidAnswer(f"{choice} not among candidates {sorted(cands)}")
            self.committed[k] = v
        self.n_a[p] = k
        if self.strategy.timing == "scripted":
            self._timing_pos += 1
        e = Event(self.id, p, t, A, v)
        self.history.append(e)
        return e, v


def oracle_violations(H, sanctuary: Sanctuary, F_sigma: FailurePattern, complete: bool = True) -> list:
    """Replay a sanctuary history; returns [(index, condition, detail)].

    Conditions: well-formed, compatible, agreement, validity, resilience.
    Validity is checked against the queries seen when the answer was given
    and against the whole consultation.
    """
    out = []
    bad = first_ill_formed(H)
    if bad is not None:
        out.append((bad, "well-formed", f"event {bad} breaks query/answer alternation"))
    bad = first_incompatible(H, F_sigma)
    if bad is not None:
        out.append((bad, "compatible", f"event {bad} after crash of {H[bad].proc}"))
    if any(e.proc not in sanctuary.consultants for e in H):
        i = next(i for i, e in enumerate(H) if e.proc not in sanctuary.consultants)
        out.append((i, "well-formed", f"{H[i].proc} is not a consultant"))
    ks = consultation_index(H)
    seen_w: dict = {}
    answers: dict = {}
    problem = sanctuary.problem
    for i, (e, k) in enumerate(zip(H, ks)):
        if e.kind == Q:
            seen_w.setdefault(k, {})[e.proc] = e.value
            continue
        if k in answers and answers[k] != e.value:
            out.append((i, "agreement", f"consultation {k} answered {answers[k]} and {e.value}"))
        answers.setdefault(k, e.value)
        if e.value not in candidates_for(problem, F_sigma, seen_w.get(k, {})):
            out.append((i, "validity", f"answer {e.value} not allowed for queries {seen_w.get(k, {})}"))
    # validity against the complete consultation
    for i, (e, k) in enumerate(zip(H, ks)):
        if e.kind == A and e.value not in candidates_for(problem, F_sigma, seen_w.get(k, {})):
            if not any(j == i and c == "validity" for j, c, _ in out):
                out.append((i, "validity", f"answer {e.value} invalidated by later queries"))
    if complete:
        need = len(sanctuary.consultants) - sanctuary.f
        correct = F_sigma.correct()
        answered = {}
        for e, k in zip(H, ks):
            if e.kind == A:
                answered.setdefault(k, set()).add(e.proc)
        for k, W in sorted(seen_w.items()):
            if len(W) >= need:
                missing = sorted(p for p in W if p in correct and p not in answered.get(k, set()))
                if missing:
                    out.append((len(H), "resilience", f"consultation {k}: correct {missing} never answered"))
    out.sort(key=lambda x: x[0])
    return out


def oracle_law_violations(H, sanctuary: Sanctuary) -> list:
    """O_Cons / O_AC consequences checked on every consultation of H."""
    out = []
    ks = consultation_index(H)
    kmax = max(ks, default=0)
    kind = sanctuary.problem.kind
    for k in range(1, kmax + 1):
        cons = [e for e, j in zip(H, ks) if j == k]
        qs = [e.value for e in cons if e.kind == Q]
        ans = {e.value for e in cons if e.kind == A}
        if len(ans) > 1:
            out.append((k, "agreement", sorted(ans)))
        if kind == CONS and qs and len(set(qs)) == 1 and ans - {qs[0]}:
            out.append((k, "O_Cons", f"uniform queries {qs[0]} answered {sorted(ans)}"))
        if kind == AC and 1 in ans:
            queried = {e.proc for e in cons if e.kind == Q}
            if queried != set(sanctuary.consultants) or any(v != 1 for v in qs):
                out.append((k, "O_AC", "answer 1 without unanimous 1 queries"))
    return out
