"""Concrete replays of the counterexample constructions.

Each replay builds one protocol, drives it into the situation the
impossibility argument describes, and reports what happened.  A confirmed
replay shows the construction works on that protocol; it is not a proof of
the general statement.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..events import A, Q
from ..oracle import AnswerStrategy, candidates_for, restrict_failure_pattern
from ..task_model import AC, CONS, FailurePattern, InputVector, ModelError
from ..runtime.checker import FAIL, PASS, check_run, verify_agreement_conditions, verify_sync
from ..runtime.engine import SeededRandom, fair_extension_schedule, run_async
from ..runtime.model import Run
from ..runtime.sync import run_sync
from ..protocols.consult import ACPlusOne, SingleOracleAC
from ..protocols.sync_k import SyncK

CONFIRMED = "expected-counterexample: confirmed"
MISSING = "expected-counterexample: missing"
INAPPLICABLE = "inapplicable"
NO_COUNTEREXAMPLE = "no-counterexample"

DISCLAIMER = ("replays one explicit construction on one concrete protocol; "
              "it does not prove the impossibility for all protocols")


@dataclass
class ScenarioReport:
    name: str
    params: dict
    status: str
    summary: str = ""
    verdicts: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    runs: dict = field(default_factory=dict)  # label -> Run or SyncTrace

    @property
    def confirmed(self):
        return self.status == CONFIRMED

    def to_dict(self):
        return {"name": self.name, "params": self.params, "status": self.status,
                "summary": self.summary, "note": DISCLAIMER,
                "verdicts": {k: {c: v.to_dict() for c, v in vs.items()} for k, vs in self.verdicts.items()},
                "details": self.details}


def flip_initial_value(run: Run, p, new_initial) -> Run:
    """Same failure pattern and history, only p's input changed.

    p must crash at time 0, so it takes no step and nobody can tell.
    """
    if run.F.crash_time(p) != 0:
        raise ModelError(f"{p} does not crash at time 0")
    if any(e.proc == p for e in run.events):
        raise ModelError(f"{p} has events in the history")
    I = run.inputs.as_dict()
    if I.get(p) == new_initial:
        return run
    I[p] = new_initial
    decisions = tuple(d for d in run.decisions if d[1] != p)
    proto = run.protocol
    if proto is not None:
        d0 = proto.decision(p, proto.initial(p, new_initial))
        if d0 is not None:
            decisions = ((0, p, d0),) + decisions
    return Run(run.F, InputVector(tuple(I.items())), run.events, run.protocol, run.status,
               run.obligations, decisions, dict(run.meta, flipped=p))


# -- one-round transform followed by an AC consultation ----------------------

def replay_thm52_scenario(n: int, f: int) -> ScenarioReport:
    params = {"n": n, "f": f}
    name = "transform-then-AC-oracle for Consensus"
    if not (isinstance(n, int) and isinstance(f, int)) or not (1 <= f <= n - 1):
        return ScenarioReport(name, params, INAPPLICABLE,
                              f"needs 1 <= f <= n-1; with f={f} no process may crash")
    prog = SyncK(n, f, oracle_kind=AC, solves=CONS)
    ones = InputVector.of([1] * n, prog.processes)
    strat = AnswerStrategy("max")
    base = run_sync(prog, ones, {}, strat)
    # every process finishes the transform at the end of the last round
    finish = {p: prog.rounds for p in prog.processes}
    r_p = max(finish.values())
    p = max(q for q in prog.processes if finish[q] == r_p)
    crashed = run_sync(prog, ones, {p: (r_p + 1, ())}, strat)
    sg = prog.sanctuary
    Fs = restrict_failure_pattern(crashed.F, sg.consultants, prog.processes)
    W = {e.proc: e.value for e in crashed.oracle_events if e.kind == Q}
    cands = candidates_for(sg.problem, Fs, W)
    answers = sorted({e.value for e in crashed.oracle_events if e.kind == A})
    v_base = verify_sync(base, prog.task)
    v_crash = verify_sync(crashed, prog.task)
    hit = (v_crash["Validity"].status == FAIL and answers == [0]
           and set(crashed.decisions.values()) == {0})
    details = {"failure_free_w": {q: prog.transformed(s) for q, s in base.states.items()},
               "failure_free_decisions": base.decisions,
               "silent_process": p, "crash_round": r_p + 1,
               "queries": W, "answer_candidates": sorted(cands), "answers": answers,
               "decisions": crashed.decisions}
    summary = (f"process {p} completes round {r_p} and crashes before querying; "
               f"the AC oracle can only answer {sorted(cands)}, so all-1 inputs decide "
               f"{sorted(set(crashed.decisions.values()))}")
    return ScenarioReport(name, params, CONFIRMED if hit else MISSING, summary,
                          {"failure_free": v_base, "crash": v_crash}, details,
                          {"failure_free": base, "crash": crashed})


# -- AC on n+1 processes from one AC oracle on n of them --------------------

def _prefix_replay(proto, n, f, seed, budget):
    outsider = n + 1
    procs = proto.processes
    ones = InputVector.of([1] * len(procs), procs)
    F1 = FailurePattern(procs, ((outsider, 0),))
    first = run_async(proto, F1, ones, SeededRandom(seed, budget))
    t0 = first.last_decision_time()
    prefix = first.prefix(t0) if t0 is not None else ()
    return outsider, ones, first, t0, prefix


def replay_prop72_scenario(n: int, f: int, seed: int = 0, budget: int = 20_000,
                           protocol=None) -> ScenarioReport:
    """Outsider crashed at 0 versus the failure-free run with the same prefix.

    ``protocol`` defaults to the single-oracle AC protocol; passing the
    two-oracle one shows the construction breaks down there.
    """
    params = {"n": n, "f": f, "seed": seed}
    name = "single-oracle AC on n+1 processes"
    if not (isinstance(n, int) and isinstance(f, int)) or not (1 <= f <= n - 1):
        return ScenarioReport(name, params, INAPPLICABLE, f"needs 1 <= f <= n-1, got f={f}")
    proto = protocol if protocol is not None else SingleOracleAC(n, f)
    params["protocol"] = proto.name
    outsider, ones, first, t0, prefix = _prefix_replay(proto, n, f, seed, budget)
    v_first = verify_agreement_conditions(first)
    details = {"outsider": outsider, "t0": t0,
               "first_decisions": {q: d for q, d in first.decided().items()},
               "prefix_length": len(prefix)}
    runs = {"crashed_outsider": first}
    if t0 is None or set(first.decided().values()) != {0}:
        return ScenarioReport(name, params, MISSING,
                              "the run with the crashed outsider does not decide 0",
                              {"crashed_outsider": v_first}, details, runs)
    F0 = FailurePattern.failure_free(proto.processes)
    # the prefix must also be a legal prefix when nobody crashes
    as_prefix = Run(F0, ones, prefix, proto, "stopped")
    pre_check = check_run(as_prefix)
    bad = {r: v.detail for r, v in pre_check.rules.items() if v.status == FAIL}
    details["prefix_check_failure_free"] = {r: v.status for r, v in pre_check.rules.items()}
    if bad:
        details["prefix_violations"] = bad
        return ScenarioReport(name, params, NO_COUNTEREXAMPLE,
                              f"H[0,{t0}] is not a run prefix when nobody crashes ({', '.join(bad)})",
                              {"crashed_outsider": v_first}, details, runs)
    second = run_async(proto, F0, ones, fair_extension_schedule(prefix, (), "ac", budget))
    runs["failure_free"] = second
    rep2 = check_run(second)
    v_second = verify_agreement_conditions(second)
    shared = second.events[:len(prefix)] == tuple(prefix)
    details.update({"second_status": second.status, "second_rules": {r: v.status for r, v in rep2.rules.items()},
                    "second_decisions": second.decided(), "prefix_shared": shared})
    hit = (shared and rep2.ok and v_second["Validity"].status == FAIL
           and set(second.decided().values()) == {0})
    summary = (f"failure-free all-1 run extending H[0,{t0}] decides "
               f"{sorted(set(second.decided().values()))}")
    return ScenarioReport(name, params, CONFIRMED if hit else MISSING, summary,
                          {"crashed_outsider": v_first, "failure_free": v_second}, details, runs)


def replay_single_oracle_vs_two_oracles(n: int, f: int, seeds=range(20), budget: int = 20_000) -> ScenarioReport:
    """The same driver on the two-oracle protocol, over several first runs."""
    reports = [replay_prop72_scenario(n, f, s, budget, ACPlusOne(n, f)) for s in seeds]
    found = [r for r in reports if r.status == CONFIRMED]
    status = NO_COUNTEREXAMPLE if not found else "counterexample"
    return ScenarioReport("two-oracle AC on n+1 processes", {"n": n, "f": f, "seeds": len(reports)},
                          status, f"{len(found)} of {len(reports)} replays produced a violation",
                          {}, {"per_seed": [r.status for r in reports],
                               "reasons": sorted({r.summary for r in reports})})
