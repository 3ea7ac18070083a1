"""Asynchronous engine: executes protocol automata against oracles.

The engine emits one event per time tick.  A step of process p is a short
burst of events (R?, Q, A, S or R?, S); the A of a step waits until the
oracle may answer, so other processes' events interleave there.  An oracle
answer at tick t is only given when p is still alive at t+1, so the step can
always be closed by its S event.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from ..events import A, BETA, Q, R, S, Event, Message
from ..oracle import AnswerStrategy, NoValidAnswer, OracleInstance
from ..task_model import FailurePattern, InputVector
from .model import Protocol, Run, sanctuary_patterns


class EngineError(Exception):
    pass


class InvalidEvent(EngineError):
    pass


class SchedulerDeadlock(EngineError):
    pass


class BudgetExhausted(EngineError):
    pass


# partial step stages
_NONE, _RECV, _QUERIED, _ANSWERED = 0, 1, 2, 3


class AsyncEngine:
    def __init__(self, protocol: Protocol, F: FailurePattern, inputs: InputVector,
                 strategies: dict | None = None, record: bool = True):
        self.protocol = protocol
        self.F = F
        self.inputs = inputs
        self.procs = tuple(protocol.processes)
        self.crash = {p: F.crash_time(p) for p in self.procs}
        self.states = {p: protocol.initial(p, inputs[p]) for p in self.procs}
        self.partial = {p: None for p in self.procs}  # (stage, payload, answer)
        self.inbox = {p: [] for p in self.procs}  # [(seq, Message)] in send order
        self.seq = 0
        self.now = 0
        self.events: list = []
        self.record = record
        self.n_events = 0
        strategies = strategies or {}
        pats = sanctuary_patterns(protocol, F)
        self.oracles = {sg.id: OracleInstance(sg, pats[sg.id], strategies.get(sg.id) or strategies.get("*"))
                        for sg in protocol.sanctuaries}
        self.decided = {p: protocol.decision(p, self.states[p]) for p in self.procs}
        self.decisions = [(0, p, d) for p, d in self.decided.items() if d is not None]
        self._idle = {}
        self._query = {}

    # -- helpers ---------------------------------------------------------
    def alive(self, p, t) -> bool:
        c = self.crash[p]
        return c is None or t < c

    def _emit(self, loc, p, kind, value, t=None):
        t = self.now + 1 if t is None else t
        if t < self.now:
            raise InvalidEvent(f"time {t} before {self.now}")
        if not self.alive(p, t):
            raise InvalidEvent(f"{p} has crashed by {t}")
        self.now = t
        self.n_events += 1
        if self.record:
            e = Event(loc, p, t, kind, value)
            self.events.append(e)
            return e
        return None

    def stage(self, p):
        part = self.partial[p]
        return _NONE if part is None else part[0]

    def query_of(self, p):
        s = self.states[p]
        cq = self._query.get(p)
        if cq is not None and cq[0] is s:
            return cq[1]
        q = self.protocol.query(p, s)
        self._query[p] = (s, q)
        return q

    def is_idle(self, p) -> bool:
        s = self.states[p]
        if self._idle.get(p) is s:
            return True
        if self.protocol.idle(p, s):
            self._idle[p] = s
            return True
        return False

    # -- primitive events ------------------------------------------------
    def do_receive(self, p, index=0, t=None, message=None):
        if self.stage(p) != _NONE:
            raise InvalidEvent(f"{p} is inside a step")
        box = self.inbox[p]
        if message is not None:
            for i, (_, m) in enumerate(box):
                if m == message:
                    index = i
                    break
            else:
                raise InvalidEvent(f"{message} is not in the buffer for {p}")
        _, m = box.pop(index)
        self._emit(BETA, p, R, m, t)
        self.partial[p] = (_RECV, m.payload, None)
        return m

    def do_query(self, p, t=None):
        st = self.stage(p)
        if st not in (_NONE, _RECV):
            raise InvalidEvent(f"{p} cannot query now")
        q = self.query_of(p)
        if q is None:
            raise InvalidEvent(f"{p} does not consult an oracle in its state")
        sid, v = q
        tt = self.now + 1 if t is None else t
        self.oracles[sid].record_query(p, tt, v)
        self._emit(sid, p, Q, v, tt)
        payload = None if st == _NONE else self.partial[p][1]
        self.partial[p] = (_QUERIED, payload, None)

    def do_answer(self, p, t=None, choice=None):
        if self.stage(p) != _QUERIED:
            raise InvalidEvent(f"{p} has no pending query")
        sid, _ = self.query_of(p)
        tt = self.now + 1 if t is None else t
        _, v = self.oracles[sid].record_answer(p, tt, choice)
        self._emit(sid, p, A, v, tt)
        self.partial[p] = (_ANSWERED, self.partial[p][1], v)
        return v

    def do_state_change(self, p, t=None, expect=...):
        st = self.stage(p)
        if st == _QUERIED:
            raise InvalidEvent(f"{p} waits for an answer")
        if st == _NONE and self.query_of(p) is not None:
            raise InvalidEvent(f"{p} must consult its oracle in this step")
        payload = answer = None
        if st != _NONE:
            _, payload, answer = self.partial[p]
        s2, out = self.protocol.step(p, self.states[p], payload, answer)
        if expect is not ... and expect != out:
            raise InvalidEvent(f"{p} sends {out}, trace says {expect}")
        self._emit(BETA, p, S, out, t)
        self.partial[p] = None
        self.states[p] = s2
        if out is not None:
            self.seq += 1
            # a destination outside the process set (e.g. an eliminated
            # process) gets a mailbox nobody reads
            self.inbox.setdefault(out.dest, []).append((self.seq, out))
        d = self.protocol.decision(p, s2)
        if d != self.decided[p]:
            self.decided[p] = d
            self.decisions.append((self.now, p, d))
        return out

    def apply(self, e: Event, forced_answers=True):
        """Replay one recorded event."""
        if e.kind == R:
            self.do_receive(e.proc, t=e.time, message=e.value)
        elif e.kind == Q:
            q = self.query_of(e.proc)
            if q is None or q != (e.loc, e.value):
                raise InvalidEvent(f"query {e} does not match state query {q}")
            self.do_query(e.proc, t=e.time)
        elif e.kind == A:
            self.do_answer(e.proc, t=e.time, choice=e.value if forced_answers else None)
        else:
            self.do_state_change(e.proc, t=e.time, expect=e.value)

    # -- obligations -----------------------------------------------------
    def obligations(self):
        out = []
        for sid, o in self.oracles.items():
            out.extend((sid, k, p) for k, p in sorted(o.obligations(), key=repr))
        return out

    def finish(self, status, **meta) -> Run:
        obl = tuple(self.obligations())
        if status == "quiescent" and obl:
            status = "deadlock"
        return Run(self.F, self.inputs, tuple(self.events), self.protocol, status, obl,
                   tuple(self.decisions), dict(meta))


# -- schedulers ----------------------------------------------------------

@dataclass
class SeededRandom:
    seed: int = 0
    budget: int = 100_000
    kind = "random"

    def describe(self):
        return {"kind": "random", "seed": self.seed, "budget": self.budget}


@dataclass
class Scripted:
    events: tuple = ()
    budget: int = 100_000
    kind = "scripted"

    def describe(self):
        return {"kind": "scripted", "budget": self.budget, "length": len(self.events)}


@dataclass
class FairExtension:
    """Deterministic rotating-queue extension of a prefix.

    ``variant`` selects the unqueried-oracle rule: "ac" answers the minimum
    query once every consultant queried and otherwise skips the process;
    "cons" answers the process's own query value.
    """
    queue: tuple = ()
    variant: str = "ac"
    budget: int = 100_000
    prefix: tuple = ()
    kind = "fair"

    def describe(self):
        return {"kind": "fair", "queue": list(self.queue), "variant": self.variant,
                "budget": self.budget, "prefix_length": len(self.prefix)}


def fair_extension_schedule(prefix, queue_order=(), variant="ac", budget=100_000) -> FairExtension:
    events = prefix.events if isinstance(prefix, Run) else tuple(prefix)
    return FairExtension(tuple(queue_order), variant, budget, tuple(events))


def _random_actions(eng: AsyncEngine):
    acts = []
    t2 = eng.now + 2
    crash, partial, inbox, states = eng.crash, eng.partial, eng.inbox, eng.states
    qcache, icache = eng._query, eng._idle
    proto = eng.protocol
    for p in eng.procs:
        c = crash[p]
        if c is not None and t2 >= c:
            continue
        part = partial[p]
        if part is not None:
            if part[0] == _QUERIED:
                sid = eng.query_of(p)[0]
                if eng.oracles[sid].can_answer(p):
                    acts.append((0, p))
            continue
        if inbox[p]:
            acts.append((1, p))
        s = states[p]
        cq = qcache.get(p)
        if cq is not None and cq[0] is s:
            q = cq[1]
        else:
            q = proto.query(p, s)
            qcache[p] = (s, q)
        if q is not None:
            acts.append((2, p))
        elif icache.get(p) is not s:
            if proto.idle(p, s):
                icache[p] = s
            else:
                acts.append((3, p))
    return acts


def _run_random(eng: AsyncEngine, sched: SeededRandom):
    rng = random.Random(sched.seed)
    randrange = rng.randrange
    budget = sched.budget
    inbox = eng.inbox
    while True:
        if eng.n_events >= budget:
            return "budget"
        acts = _random_actions(eng)
        if not acts:
            return "quiescent"
        kind, p = acts[randrange(len(acts))] if len(acts) > 1 else acts[0]
        if kind == 0:
            eng.do_answer(p)
            eng.do_state_change(p)
        elif kind == 1:
            box = inbox[p]
            eng.do_receive(p, randrange(len(box)) if len(box) > 1 else 0)
            if eng.query_of(p) is not None:
                eng.do_query(p)
            else:
                eng.do_state_change(p)
        elif kind == 2:
            eng.do_query(p)
        else:
            eng.do_state_change(p)


def _fair_next(eng: AsyncEngine, q, variant):
    """Perform q's unique next event; False when q's turn is skipped."""
    if not eng.alive(q, eng.now + 1):
        return False
    st = eng.stage(q)
    if st == _NONE:
        if eng.inbox[q]:
            eng.do_receive(q, 0)
            return True
        if eng.query_of(q) is not None:
            eng.do_query(q)
            return True
        if eng.is_idle(q):
            return False
        eng.do_state_change(q)
        return True
    if st == _RECV:
        if eng.query_of(q) is not None:
            eng.do_query(q)
        else:
            eng.do_state_change(q)
        return True
    if st == _ANSWERED:
        eng.do_state_change(q)
        return True
    # pending answer
    if not eng.alive(q, eng.now + 2):
        return False
    sid, v = eng.query_of(q)
    o = eng.oracles[sid]
    k = o.pending(q)
    if k in o.committed:
        eng.do_answer(q, choice=o.committed[k])
        return True
    W = o.queries.get(k, {})
    if variant == "cons":
        eng.do_answer(q, choice=v)
        return True
    if set(W) == set(o.sanctuary.consultants):
        eng.do_answer(q, choice=min(W.values()))
        return True
    return False


def _run_fair(eng: AsyncEngine, sched: FairExtension):
    queue = list(sched.queue or eng.procs)
    idle_turns = 0
    while True:
        if eng.n_events >= sched.budget:
            return "budget"
        if not queue or idle_turns >= len(queue):
            return "quiescent"
        q = queue.pop(0)
        if _fair_next(eng, q, sched.variant):
            idle_turns = 0
        else:
            idle_turns += 1
        queue.append(q)


def run_async(protocol: Protocol, F: FailurePattern, inputs, sched=None,
              strategies: dict | None = None, record: bool = True) -> Run:
    """Execute ``protocol``; returns a finite run with a status flag.

    status "quiescent": nothing useful is left to do; "deadlock": quiescent
    but an oracle still owes an answer; "budget": stopped at the event budget.
    """
    if not isinstance(inputs, InputVector):
        inputs = InputVector.of(inputs, protocol.processes)
    sched = sched or SeededRandom()
    eng = AsyncEngine(protocol, F, inputs, strategies, record)
    if isinstance(sched, FairExtension):
        for e in sched.prefix:
            eng.apply(e)
        status = _run_fair(eng, sched)
    elif isinstance(sched, Scripted):
        status = "stopped"
        for e in sched.events[:sched.budget]:
            eng.apply(e, forced_answers=True)
        if len(sched.events) > sched.budget:
            status = "budget"
        elif not _random_actions(eng):
            status = "quiescent"
    else:
        status = _run_random(eng, sched)
    run = eng.finish(status, scheduler=sched.describe())
    run.meta["n_events"] = eng.n_events
    run.meta["strategies"] = {sid: vars(o.strategy) for sid, o in eng.oracles.items()}
    return run


def default_strategies(protocol: Protocol, policy="random", seed=0, timing="eager") -> dict:
    return {sg.id: AnswerStrategy(policy, seed + i, timing=timing)
            for i, sg in enumerate(protocol.sanctuaries)}
