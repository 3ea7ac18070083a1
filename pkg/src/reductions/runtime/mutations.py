"""Single-event mutations of valid runs, each aimed at one checker rule.

Every mutation picks a site where the damage stays local: the mutated run
should break its target rule and nothing else.  ``sites`` lists the usable
positions; ``apply`` mutates one of them.
"""
from __future__ import annotations

import random
from collections import Counter

from ..events import A, BETA, Q, R, S
from ..oracle import InvalidSanctuaryConfig
from ..task_model import ModelError
from .model import Run, sanctuary_patterns


def _with_events(run: Run, events, F=None) -> Run:
    return Run(F or run.F, run.inputs, tuple(events), run.protocol, run.status,
               run.obligations, (), dict(run.meta, mutated=True))


def _by_proc(H):
    out = {}
    for i, e in enumerate(H):
        out.setdefault(e.proc, []).append(i)
    return out


# -- drop an oracle answer ---------------------------------------------------

def drop_answer_sites(run: Run):
    """Last answer of a faulty process, if a state change follows it.

    For a correct process the consultation would then owe an answer, so
    the oracle rule would fail as well.
    """
    H = run.events
    out = []
    for p, idx in _by_proc(H).items():
        if p not in run.F.faulty():
            continue
        answers = [i for i in idx if H[i].kind == A]
        if not answers:
            continue
        i = answers[-1]
        later = [j for j in idx if j > i and H[j].loc == H[i].loc]
        if not later and i + 1 < len(H) and any(j > i and H[j].kind == S for j in idx):
            out.append(i)
    return out


def drop_answer(run: Run, i) -> Run:
    H = list(run.events)
    del H[i]
    return _with_events(run, H)


# -- swap the times of two neighbours ----------------------------------------

def reorder_sites(run: Run):
    H = run.events
    out = []
    for i in range(len(H) - 1):
        a, b = H[i], H[i + 1]
        if a.proc == b.proc or a.loc != BETA or b.loc != BETA or a.time >= b.time:
            continue
        c = run.F.crash_time(a.proc)
        if c is not None and b.time >= c:
            continue
        out.append(i)
    return out


def reorder_times(run: Run, i) -> Run:
    H = list(run.events)
    a, b = H[i], H[i + 1]
    H[i], H[i + 1] = a._replace(time=b.time), b._replace(time=a.time)
    return _with_events(run, H)


# -- move a crash so that an event comes too late ----------------------------

def post_crash_sites(run: Run):
    H = run.events
    out = []
    correct = run.F.correct()
    for p, idx in _by_proc(H).items():
        if p not in correct or len(correct) < 2 or H[idx[-1]].kind != S:
            continue
        F2 = run.F.with_crash(p, H[idx[-1]].time)
        try:
            sanctuary_patterns(run.protocol, F2)
        except (InvalidSanctuaryConfig, ModelError):
            continue
        out.append(idx[-1])
    return out


def post_crash_event(run: Run, i) -> Run:
    e = run.events[i]
    return _with_events(run, run.events, run.F.with_crash(e.proc, e.time))


# -- receive a message before it is sent ---------------------------------

def unsent_receive_sites(run: Run):
    """(receive index, send index) pairs for messages sent by someone else."""
    H = run.events
    beta = Counter()
    before = []  # buffer count of each message just before each index
    for e in H:
        before.append(None)
        if e.loc != BETA or e.value is None:
            continue
        if e.kind == S:
            before[-1] = beta[e.value]
            beta[e.value] += 1
        else:
            beta[e.value] -= 1
    out = []
    last_send = {}
    prev_of = {}
    last_idx = {}
    for j, e in enumerate(H):
        prev_of[j] = last_idx.get(e.proc)
        last_idx[e.proc] = j
        if e.loc == BETA and e.kind == S and e.value is not None:
            last_send.setdefault(e.value, []).append(j)
        if e.kind == R:
            sends = last_send.get(e.value, [])
            if not sends:
                continue
            i = sends[-1]
            prev = prev_of[j]
            if H[i].proc != e.proc and before[i] == 0 and (prev is None or prev < i):
                out.append((j, i))
    return out


def unsent_receive(run: Run, site) -> Run:
    j, i = site
    H = list(run.events)
    e = H.pop(j)
    H.insert(i, e._replace(time=H[i].time))
    return _with_events(run, H)


# -- query a value the state does not query ----------------------------------

def infeasible_step_sites(run: Run):
    H = run.events
    out = []
    pending = {}
    for i, e in enumerate(H):
        if e.kind == Q:
            pending[(e.loc, e.proc)] = i
        elif e.kind == A:
            qi = pending.pop((e.loc, e.proc), None)
            if qi is not None and H[qi].value != e.value:
                out.append(qi)
    return out


def infeasible_step(run: Run, i) -> Run:
    H = list(run.events)
    q = H[i]
    ans = next(e.value for e in H[i + 1:] if e.proc == q.proc and e.loc == q.loc and e.kind == A)
    H[i] = q._replace(value=ans)
    return _with_events(run, H)


# -- never deliver a message to a halted process -----------------------------

def undelivered_sites(run: Run):
    from .checker import replay_run
    proto = run.protocol
    H = run.events
    if not run.complete:
        return []
    reps = replay_run(proto, run)
    out = []
    correct = run.F.correct()
    for p, idx in _by_proc(H).items():
        if p not in correct:
            continue
        states = reps[p].states
        k = 0  # steps completed so far
        for n, i in enumerate(idx):
            e = H[i]
            if e.kind == R and proto.halted(p, states[k]):
                nxt = idx[n + 1] if n + 1 < len(idx) else None
                if nxt is not None and H[nxt].kind == S:
                    out.append(i)
            if e.kind == S:
                k += 1
    return out


def undelivered_message(run: Run, i) -> Run:
    H = list(run.events)
    del H[i]
    return _with_events(run, H)


CATALOG = {
    "drop_answer": ("R2", drop_answer_sites, drop_answer),
    "reorder_times": ("order", reorder_sites, reorder_times),
    "post_crash_event": ("R2", post_crash_sites, post_crash_event),
    "unsent_receive": ("R3", unsent_receive_sites, unsent_receive),
    "infeasible_step": ("R4", infeasible_step_sites, infeasible_step),
    "undelivered_message": ("R6", undelivered_sites, undelivered_message),
}


def mutation_sites(run: Run) -> dict:
    return {name: sites(run) for name, (_, sites, _) in CATALOG.items()}


def mutate(run: Run, name: str, seed: int = 0):
    """(target rule, mutated run), or None when the run has no site."""
    target, sites, apply = CATALOG[name]
    cands = sites(run)
    if not cands:
        return None
    site = random.Random(seed).choice(cands)
    return target, apply(run, site)
