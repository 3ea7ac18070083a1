"""One-round local transform followed by a single oracle consultation.

Round 1: broadcast the input.  w = 1 iff n messages arrived and all carry 1.
Then query the oracle with w and decide its answer.
"""
from __future__ import annotations

from ..oracle import Sanctuary
from ..task_model import AC, CONS, ModelError, ProcessSet, ac_task, cons_task


class SyncK:
    name = "SyncK_AC_to_Cons"
    rounds = 1

    def __init__(self, n: int, f: int, oracle_kind: str = CONS, solves: str = AC):
        if not (isinstance(n, int) and isinstance(f, int)) or n < 1 or not (0 <= f <= n - 1):
            raise ModelError(f"parameters need 0 <= f <= n-1, got n={n}, f={f}")
        self.n, self.f = n, f
        self.processes = ProcessSet.of(n)
        make = cons_task if oracle_kind == CONS else ac_task
        sid = "Cons" if oracle_kind == CONS else "AC"
        self.sanctuary = Sanctuary(sid, self.processes, make(self.processes, f, lenient=True))
        self.sanctuaries = (self.sanctuary,)
        self.task = (ac_task if solves == AC else cons_task)(self.processes, f, lenient=True)
        self.params = {"n": n, "f": f}
        if oracle_kind != CONS or solves != AC:
            self.name = f"SyncK_{solves.upper()}_via_{oracle_kind.upper()}"

    def describe(self):
        return {"name": self.name, **self.params}

    def initial(self, p, v):
        return (v, None)

    def send(self, p, s, r):
        return s[0]

    def receive(self, p, s, r, msgs):
        w = 1 if len(msgs) == self.n and all(v == 1 for _, v in msgs) else 0
        return (s[0], w)

    def transformed(self, s):
        return s[1]

    def query(self, p, s):
        return self.sanctuary.id, s[1]

    def decide(self, p, s, answer):
        return answer


def build_sync_k_reduction(n: int, f: int) -> SyncK:
    return SyncK(n, f)
