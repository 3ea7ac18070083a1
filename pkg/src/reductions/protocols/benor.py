"""Consensus for one crash from an atomic commitment oracle (Ben-Or style).

Every process broadcasts its input and asks the AC oracle with 1.  An answer
of 1 means nobody had crashed before querying, so waiting for all inputs is
safe.  On 0 the processes run Ben-Or rounds where the coin is replaced by the
fixed value 0.  Waits for n-1 messages count the process's own message.
"""
from __future__ import annotations

from typing import NamedTuple

from ..events import Message
from ..oracle import Sanctuary
from ..runtime.model import Protocol
from ..task_model import ModelError, ProcessSet, ac_task, cons_task

NOPROP = "?"


class BOState(NamedTuple):
    phase: str  # query | all | R | P | end
    x: int
    r: int
    vals: tuple  # initial values by process index, None if not yet known
    box: tuple  # (tag, round, value) for rounds >= r, in receipt order
    outq: tuple
    dec: object = None


class DerandBenOr(Protocol):
    name = "DerandBenOr_Cons1_from_AC1"

    def __init__(self, n: int):
        if n <= 2:
            raise ModelError(f"needs n > 2 processes, got n={n}")
        self.n = n
        self.f = 1
        self.processes = ProcessSet.of(n)
        self.sanctuaries = (Sanctuary("AC", self.processes, ac_task(self.processes, 1)),)
        self.task = cons_task(self.processes, 1)
        self.params = {"n": n, "f": 1}
        self._all = tuple(self.processes)

    def _bcast(self, payload):
        return tuple(Message(q, payload) for q in self._all)

    def initial(self, p, v):
        return BOState("query", v, 1, (None,) * self.n, (), self._bcast(("V", p, v)))

    def query(self, p, s):
        if s.phase == "query" and not s.outq:
            return ("AC", 1)
        return None

    def step(self, p, s, payload, answer):
        phase, x, r, vals, box, outq, dec = s
        if payload is not None:
            tag = payload[0]
            if tag == "V":
                i = payload[1] - 1
                vals = vals[:i] + (payload[2],) + vals[i + 1:]
            elif tag != "DEC" and payload[3] >= r:
                box = box + ((tag, payload[3], payload[2]),)
        if answer is not None:
            if answer == 1:
                phase = "all"
            else:
                phase = "R"
                outq = outq + self._bcast(("R", p, x, r))
        s = BOState(phase, x, r, vals, box, outq, dec)
        if not outq:
            s = self._progress(p, s)
            outq = s.outq
        if outq:
            return BOState(s.phase, s.x, s.r, s.vals, s.box, outq[1:], s.dec), outq[0]
        return s, None

    def _progress(self, p, s):
        n = self.n
        if s.phase == "all":
            if None not in s.vals:
                x = min(s.vals)
                return s._replace(phase="end", x=x, dec=x)
            return s
        if s.phase not in ("R", "P"):
            return s
        got = [v for tag, r, v in s.box if tag == s.phase and r == s.r][:n - 1]
        if len(got) < n - 1:
            return s
        if s.phase == "R":
            prop = NOPROP
            for v in (0, 1):
                if 2 * got.count(v) > n:
                    prop = v
            return s._replace(phase="P", outq=self._bcast(("P", p, prop, s.r)))
        x, dec = s.x, s.dec
        ws = [w for w in got if w != NOPROP]
        twice = [w for w in (0, 1) if ws.count(w) >= 2]
        if twice:
            x = dec = twice[0]
        elif ws:
            x = ws[0]
        else:
            x = 0
        r = s.r + 1
        box = tuple(b for b in s.box if b[1] >= r)
        return s._replace(phase="R", x=x, r=r, box=box, dec=dec,
                          outq=self._bcast(("R", p, x, r)))

    def decision(self, p, s):
        return s.dec

    def idle(self, p, s):
        if s.outq or (s.phase == "query"):
            return False
        return self._progress(p, s) == s


def proposals_by_round(events) -> dict:
    """round -> set of non-'?' values proposed in P messages sent."""
    out: dict = {}
    for e in events:
        if e.kind == "S" and e.value is not None and e.value.payload[0] == "P":
            _, _, v, r = e.value.payload
            if v != NOPROP:
                out.setdefault(r, set()).add(v)
    return out


def proposal_exclusive(events) -> bool:
    return all(len(vs) <= 1 for vs in proposals_by_round(events).values())
