"""Independent validation of runs.

``check_run`` re-derives everything from the event list: per-process step
grouping, buffer contents, automaton states (by replay) and each sanctuary's
history.  Nothing the engine computed is trusted.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from ..events import A, BETA, Q, R, S
from ..oracle import oracle_violations
from .model import Run, sanctuary_patterns

PASS, FAIL, FLAGGED, NA = "pass", "fail", "flagged", "n/a"
RULES = ("order", "R1", "R2", "R3", "R4", "R5", "R6")
CONDITIONS = ("Termination", "Irrevocability", "Agreement", "Validity")


@dataclass
class Verdict:
    status: str
    index: int | None = None
    detail: str = ""

    def to_dict(self):
        return {"status": self.status, "index": self.index, "detail": self.detail}


@dataclass
class CheckReport:
    rules: dict
    locked: frozenset = frozenset()
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(v.status == PASS for v in self.rules.values())

    def failed(self) -> list:
        return [r for r, v in self.rules.items() if v.status == FAIL]

    def to_dict(self):
        return {"rules": {r: v.to_dict() for r, v in self.rules.items()},
                "locked": sorted(self.locked, key=repr), "notes": self.notes}


def _first(hits):
    hits = [h for h in hits if h is not None]
    return min(hits, key=lambda h: h[0]) if hits else None


def _verdict(hit, fallback=PASS):
    if hit is None:
        return Verdict(fallback)
    return Verdict(FAIL, hit[0], hit[1])


_SHAPES = {(S,), (R, S), (Q, A, S), (R, Q, A, S)}
_PARTIAL = {(R,), (Q,), (R, Q)}


def group_steps(indexed):
    """Split [(i, event)] of one process into steps.

    Returns (steps, trailing_partial, error) where error is (index, detail).
    """
    steps, cur = [], []
    for i, e in indexed:
        cur.append((i, e))
        if e.kind == S:
            kinds = tuple(x.kind for _, x in cur)
            if kinds not in _SHAPES:
                return steps, [], (i, f"malformed step {kinds}")
            locs = {x.loc for _, x in cur if x.kind in (Q, A)}
            if len(locs) > 1:
                return steps, [], (i, "query and answer at different sanctuaries")
            steps.append(cur)
            cur = []
        else:
            kinds = tuple(x.kind for _, x in cur)
            if not any(kinds == sh[:len(kinds)] for sh in _SHAPES):
                return steps, [], (i, f"malformed step prefix {kinds}")
    if cur:
        kinds = tuple(x.kind for _, x in cur)
        if kinds not in _PARTIAL:
            return steps, cur, (cur[-1][0], f"trailing events {kinds} are not a receive/query prefix")
    return steps, cur, None


@dataclass
class Replay:
    states: list
    final: object
    decisions: list  # (time, d) on change
    error: tuple | None
    partial: list


def replay_process(protocol, p, v, steps, partial) -> Replay:
    s = protocol.initial(p, v)
    states = [s]
    dec = protocol.decision(p, s)
    log = [(0, dec)] if dec is not None else []
    for step in steps:
        evs = {x.kind: (i, x) for i, x in step}
        q = protocol.query(p, s)
        if (q is None) != (Q not in evs):
            i = step[0][0]
            return Replay(states, s, log, (i, f"step of {p} at {i} is infeasible: query expected={q}"), partial)
        if q is not None and (evs[Q][1].loc, evs[Q][1].value) != tuple(q):
            i = evs[Q][0]
            return Replay(states, s, log, (i, f"{p} queries {evs[Q][1].value}@{evs[Q][1].loc}, state says {q}"), partial)
        payload = evs[R][1].value.payload if R in evs else None
        answer = evs[A][1].value if A in evs else None
        s2, out = protocol.step(p, s, payload, answer)
        i_s, e_s = evs[S]
        if out != e_s.value:
            return Replay(states, s, log, (i_s, f"{p} would send {out}, history says {e_s.value}"), partial)
        s = s2
        states.append(s)
        d = protocol.decision(p, s)
        if d != dec:
            log.append((e_s.time, d))
            dec = d
    if partial:
        evs = {x.kind: (i, x) for i, x in partial}
        if Q in evs:
            q = protocol.query(p, s)
            if q is None or (evs[Q][1].loc, evs[Q][1].value) != tuple(q):
                i = evs[Q][0]
                return Replay(states, s, log, (i, f"pending query of {p} does not match its state"), partial)
    return Replay(states, s, log, None, partial)


def replay_run(protocol, run: Run) -> dict:
    out = {}
    for p in protocol.processes:
        idx = [(i, e) for i, e in enumerate(run.events) if e.proc == p]
        steps, partial, err = group_steps(idx)
        rp = replay_process(protocol, p, run.inputs[p], steps, partial)
        rp.grouping_error = err
        out[p] = rp
    return out


def check_run(run: Run, protocol=None) -> CheckReport:
    protocol = protocol or run.protocol
    H = run.events
    F = run.F
    procs = tuple(protocol.processes)
    rules = {}
    notes = []

    # time order
    hit = None
    for i in range(1, len(H)):
        if H[i].time < H[i - 1].time:
            hit = (i, f"time {H[i].time} after {H[i - 1].time}")
            break
    rules["order"] = _verdict(hit)

    # R1: each sanctuary history is legal for its restricted pattern
    pats = sanctuary_patterns(protocol, F)
    known = {sg.id for sg in protocol.sanctuaries}
    hits = []
    for i, e in enumerate(H):
        if e.loc != BETA and e.loc not in known:
            hits.append((i, f"unknown sanctuary {e.loc}"))
            break
    for sg in protocol.sanctuaries:
        idx = [i for i, e in enumerate(H) if e.loc == sg.id]
        Hs = [H[i] for i in idx]
        for j, cond, detail in oracle_violations(Hs, sg, pats[sg.id], complete=run.complete):
            gi = idx[j] if j < len(idx) else len(H)
            hits.append((gi, f"{sg.id} {cond}: {detail}"))
    rules["R1"] = _verdict(_first(hits))

    # R2: per-process well-formedness and compatibility with F
    replays = {}
    hits = []
    for i, e in enumerate(H):
        if e.proc not in procs:
            hits.append((i, f"unknown process {e.proc!r}"))
            break
        if (e.kind in (R, S)) != (e.loc == BETA):
            hits.append((i, f"{e.kind} event at {e.loc}"))
            break
    for p in procs:
        idx = [(i, e) for i, e in enumerate(H) if e.proc == p]
        for (i0, e0), (i1, e1) in zip(idx, idx[1:]):
            if e1.time < e0.time:
                hits.append((i1, f"history of {p} goes back in time"))
                break
        c = F.crash_time(p)
        if c is not None:
            late = [i for i, e in idx if e.time >= c]
            if late:
                hits.append((late[0], f"{p} acts at or after its crash time {c}"))
        steps, partial, err = group_steps(idx)
        if err is not None:
            hits.append(err)
        replays[p] = (steps, partial, err)
    rules["R2"] = _verdict(_first(hits))

    # R3: receipts come out of the buffer
    beta = Counter()
    hit = None
    for i, e in enumerate(H):
        if e.loc != BETA:
            continue
        if e.kind == R:
            m = e.value
            if hit is None and (m is None or m.dest != e.proc or beta[m] <= 0):
                hit = (i, f"{e.proc} receives {m} which is not in the buffer for it")
            beta[m] -= 1
        elif e.value is not None:
            beta[e.value] += 1
    rules["R3"] = _verdict(hit)

    # R4: replay automata
    hits = []
    finals = {}
    for p in procs:
        steps, partial, err = replays[p]
        rp = replay_process(protocol, p, run.inputs[p], steps, partial)
        if err is not None:
            notes.append(f"R4 for {p} only covers the steps before index {err[0]}")
        if rp.error is not None:
            hits.append(rp.error)
        finals[p] = (rp, err)
    rules["R4"] = _verdict(_first(hits))

    # locked: correct processes with a pending query
    correct = F.correct()
    locked = set()
    for p in procs:
        rp, err = finals[p]
        if p in correct and any(x.kind == Q for _, x in rp.partial):
            locked.add(p)

    end = len(H)
    if not run.complete:
        rules["R5"] = Verdict(FLAGGED, None, f"run stopped early ({run.status})")
        rules["R6"] = Verdict(FLAGGED, None, f"run stopped early ({run.status})")
    else:
        hits = []
        for p in procs:
            if p not in correct or p in locked:
                continue
            rp, err = finals[p]
            if err is not None or rp.error is not None:
                continue
            if rp.partial:
                hits.append((end, f"{p} never completes its last step"))
            elif protocol.query(p, rp.final) is not None:
                hits.append((end, f"{p} still has to consult an oracle"))
            elif not protocol.halted(p, rp.final) and not protocol.idle(p, rp.final):
                hits.append((end, f"{p} still has steps to take"))
        rules["R5"] = _verdict(_first(hits))
        hit = None
        for m, k in beta.items():
            if k > 0 and m.dest in correct and m.dest not in locked:
                hit = (end, f"{m} to {m.dest} never delivered")
                break
        rules["R6"] = _verdict(hit)
    rep = CheckReport(rules, frozenset(locked), notes)
    rep.replays = finals
    return rep


def decision_log(run: Run, protocol=None) -> dict:
    """p -> [(time, decision)] on change; uses the engine's log when present."""
    if run.decisions or not run.events:
        out = {}
        for t, p, d in run.decisions:
            out.setdefault(p, []).append((t, d))
        return out
    protocol = protocol or run.protocol
    out = {}
    for p, rp in replay_run(protocol, run).items():
        if rp.decisions:
            out[p] = rp.decisions
    return out


def verify_decisions(log: dict, correct, task, F, inputs, complete=True) -> dict:
    allowed = task.problem.allowed(F, inputs)
    res = {}
    final = {p: entries[-1][1] for p, entries in log.items() if entries}
    undecided = sorted((p for p in correct if final.get(p) is None), key=repr)
    if not undecided:
        res["Termination"] = Verdict(PASS)
    elif not complete:
        res["Termination"] = Verdict(FLAGGED, None, f"undecided at budget: {undecided}")
    else:
        res["Termination"] = Verdict(FAIL, None, f"correct processes never decide: {undecided}")
    bad = None
    for p, entries in log.items():
        seen = None
        for t, d in entries:
            if seen is not None and d != seen:
                bad = (t, f"{p} changes decision {seen} -> {d}")
                break
            if d is not None:
                seen = d
        if bad:
            break
    res["Irrevocability"] = _verdict(bad)
    values = sorted({d for entries in log.values() for _, d in entries if d is not None})
    res["Agreement"] = Verdict(PASS) if len(values) <= 1 else Verdict(FAIL, None, f"decisions {values}")
    wrong = [d for d in values if d not in allowed]
    res["Validity"] = Verdict(PASS) if not wrong else Verdict(
        FAIL, None, f"decided {wrong}, allowed {sorted(allowed)}")
    return res


def verify_agreement_conditions(run: Run, task=None, protocol=None) -> dict:
    protocol = protocol or run.protocol
    task = task or protocol.task
    return verify_decisions(decision_log(run, protocol), run.F.correct(), task,
                            run.F, run.inputs, run.complete)


def verify_sync(trace, task) -> dict:
    log = {p: [(1, d)] for p, d in trace.decisions.items()}
    return verify_decisions(log, trace.F.correct(), task, trace.F, trace.inputs, True)


def all_pass(verdicts: dict) -> bool:
    return all(v.status == PASS for v in verdicts.values())
