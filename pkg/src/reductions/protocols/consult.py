"""Protocols that consult oracles in a fixed order and share the answers.

Each process queries, in index order, the sanctuaries it belongs to.  After
an answer it may tell everyone (tag "W": sanctuary index and value).  A
process decides as soon as it knows the answers it needs.
"""
from __future__ import annotations

import itertools
from math import comb
from typing import NamedTuple

from ..events import Message
from ..oracle import Sanctuary
from ..runtime.model import Protocol
from ..task_model import ModelError, ProcessSet, ac_task, cons_task


class CState(NamedTuple):
    x: int
    pos: int  # index into this process's own sanctuary list
    known: tuple  # answer per sanctuary index, None if unknown
    outq: tuple
    dec: object = None
    extra: object = None


def _sid(kind, members):
    return f"{kind}[{','.join(str(p) for p in members)}]"


class ConsultAndShare(Protocol):
    share = True

    def __init__(self, processes: ProcessSet, sanctuaries, task, params, needed=None):
        self.processes = processes
        self.sanctuaries = tuple(sanctuaries)
        self.task = task
        self.params = params
        self.needed = tuple(range(len(self.sanctuaries))) if needed is None else tuple(needed)
        self._mine = {p: tuple(i for i, sg in enumerate(self.sanctuaries) if p in sg.consultants)
                      for p in processes}
        self._all = tuple(processes)

    def combine(self, known):
        raise NotImplementedError

    def query_value(self, p, s):
        return s.x

    def initial(self, p, v):
        return CState(v, 0, (None,) * len(self.sanctuaries), ())

    def _next(self, p, s):
        mine = self._mine[p]
        return mine[s.pos] if s.pos < len(mine) else None

    def query(self, p, s):
        if s.outq:
            return None
        i = self._next(p, s)
        if i is None:
            return None
        return self.sanctuaries[i].id, self.query_value(p, s)

    def absorb(self, p, s, payload):
        if payload[0] == "W":
            i, w = payload[2], payload[3]
            if s.known[i] is None:
                s = s._replace(known=s.known[:i] + (w,) + s.known[i + 1:])
        return s

    def step(self, p, s, payload, answer):
        if payload is not None:
            s = self.absorb(p, s, payload)
        if answer is not None:
            i = self._next(p, s)
            s = s._replace(pos=s.pos + 1, known=s.known[:i] + (answer,) + s.known[i + 1:])
            if self.share:
                s = s._replace(outq=s.outq + tuple(Message(q, ("W", p, i, answer)) for q in self._all if q != p))
        if s.dec is None and all(s.known[i] is not None for i in self.needed):
            s = s._replace(dec=self.combine(s.known))
        if s.outq:
            return s._replace(outq=s.outq[1:]), s.outq[0]
        return s, None

    def decision(self, p, s):
        return s.dec

    def idle(self, p, s):
        if s.outq or self.query(p, s) is not None:
            return False
        return not (s.dec is None and all(s.known[i] is not None for i in self.needed))


def _check(n, f, lo_n=2):
    if not (isinstance(n, int) and isinstance(f, int)):
        raise ModelError("n and f must be integers")
    if n < lo_n or not (1 <= f <= n - 1):
        raise ModelError(f"parameters need 1 <= f <= n-1, got n={n}, f={f}")


class CStar(ConsultAndShare):
    """Consensus among n+f processes from AC oracles on every n-subset."""
    name = "CStar_Cons_from_AC"

    def __init__(self, n, f, order=None, unchecked=False):
        if unchecked:
            _check(n, min(f, n - 1))
        else:
            _check(n, f)
        procs = ProcessSet.of(n + f)
        subsets = list(itertools.combinations(procs, n))
        if order is not None:
            subsets = [subsets[i] for i in order]
        assert len(subsets) == comb(n + f, n)
        sans = [Sanctuary(_sid("AC", s), ProcessSet(s), ac_task(ProcessSet(s), f, lenient=unchecked))
                for s in subsets]
        params = {"n": n, "f": f}
        if order is not None:
            params["order"] = list(order)
        if unchecked:
            params["unchecked"] = True
        super().__init__(procs, sans, cons_task(procs, f, lenient=unchecked), params)
        self.m = len(sans)

    def combine(self, known):
        return max(known)


class ACPlusOne(ConsultAndShare):
    """AC among n+1 processes from AC oracles on {1..n} and {2..n+1}."""
    name = "AC_plus_one"

    def __init__(self, n, f):
        _check(n, f)
        procs = ProcessSet.of(n + 1)
        s1, s2 = ProcessSet.of(n), ProcessSet.of(n, start=2)
        sans = [Sanctuary(_sid("AC", s1), s1, ac_task(s1, f)),
                Sanctuary(_sid("AC", s2), s2, ac_task(s2, f))]
        super().__init__(procs, sans, ac_task(procs, f), {"n": n, "f": f})

    def combine(self, known):
        return min(known)


class ConsShrink(ConsultAndShare):
    """Consensus among n+1 processes from one Consensus oracle on {1..n}."""
    name = "Cons_shrink"

    def __init__(self, n, f, values=(0, 1)):
        _check(n, f)
        procs = ProcessSet.of(n + 1)
        kernel = ProcessSet.of(n)
        sans = [Sanctuary(_sid("Cons", kernel), kernel, cons_task(kernel, f, values))]
        super().__init__(procs, sans, cons_task(procs, f, values), {"n": n, "f": f})

    def combine(self, known):
        return known[0]


class ConsGrow(ConsultAndShare):
    """Consensus among n processes from a Consensus oracle on n+1 consultants."""
    name = "Cons_grow"
    share = False

    def __init__(self, n, f, values=(0, 1)):
        _check(n, f)
        procs = ProcessSet.of(n)
        wide = ProcessSet.of(n + 1)
        sans = [Sanctuary(_sid("Cons", wide), wide, cons_task(wide, f + 1, values))]
        super().__init__(procs, sans, cons_task(procs, f, values), {"n": n, "f": f})

    def combine(self, known):
        return known[0]


class ACRelay(ConsultAndShare):
    """Everyone asks one AC oracle over all processes and decides the answer."""
    name = "AC_relay"

    def __init__(self, n, f):
        _check(n, f)
        procs = ProcessSet.of(n)
        sans = [Sanctuary(_sid("AC", procs), procs, ac_task(procs, f))]
        super().__init__(procs, sans, ac_task(procs, f), {"n": n, "f": f})

    def combine(self, known):
        return known[0]


class SingleOracleAC(ConsultAndShare):
    """AC among n+1 processes that only uses the AC oracle on {1..n}.

    Process n+1 cannot query, so it sends its vote to the others.  A
    consultant first takes one step that may receive that vote, then queries
    its own vote if the outsider's vote is known to be 1, and 0 otherwise.
    """
    name = "AC_single_oracle"

    def __init__(self, n, f):
        _check(n, f)
        procs = ProcessSet.of(n + 1)
        inner = ProcessSet.of(n)
        self.outsider = n + 1
        sans = [Sanctuary(_sid("AC", inner), inner, ac_task(inner, f))]
        super().__init__(procs, sans, ac_task(procs, f), {"n": n, "f": f})

    def initial(self, p, v):
        if p == self.outsider:
            votes = tuple(Message(q, ("X", p, v)) for q in self._all if q != p)
            return CState(v, 0, (None,), votes, None, "vote")
        return CState(v, 0, (None,), (), None, "probe")

    def query(self, p, s):
        if s.extra == "probe":
            return None
        return super().query(p, s)

    def query_value(self, p, s):
        return s.x if s.extra == 1 else 0

    def absorb(self, p, s, payload):
        if payload[0] == "X":
            return s._replace(extra=payload[2] if s.extra == "probe" else s.extra)
        return super().absorb(p, s, payload)

    def step(self, p, s, payload, answer):
        if s.extra == "probe":
            s2 = self.absorb(p, s, payload) if payload is not None else s
            extra = s2.extra if s2.extra != "probe" else "none"
            return s2._replace(extra=extra), None
        return super().step(p, s, payload, answer)

    def idle(self, p, s):
        return s.extra != "probe" and super().idle(p, s)

    def combine(self, known):
        return known[0]
