"""Bounded exploration: many runs of one protocol, verdicts aggregated.

Three modes.  ``explore_sync`` enumerates every input vector, crash map and
oracle strategy of a round program.  ``explore_async`` runs seeded random
schedules over a list of (failure pattern, inputs) settings.
``explore_schedules`` walks every schedule of one setting up to a depth.
"""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable

from ..events import Q
from ..oracle import AnswerStrategy, oracle_law_violations
from ..task_model import FailurePattern, InputVector, failure_patterns
from .checker import (CONDITIONS, FAIL, FLAGGED, RULES, check_run,
                      verify_agreement_conditions, verify_sync)
from .engine import (AsyncEngine, SeededRandom, _NONE, _QUERIED, default_strategies,
                     run_async)
from .sync import run_sync, sync_crash_patterns


@dataclass
class ExploreReport:
    label: str
    runs: int = 0
    conditions: dict = field(default_factory=lambda: {c: Counter() for c in CONDITIONS})
    rules: dict = field(default_factory=lambda: {r: Counter() for r in RULES})
    law_violations: list = field(default_factory=list)
    extra_failures: list = field(default_factory=list)
    flagged: int = 0
    bound_exceeded: bool = False
    counterexample: dict | None = None
    consultations: int = 0

    def failures(self) -> int:
        n = sum(c[FAIL] for c in self.conditions.values()) + sum(c[FAIL] for c in self.rules.values())
        return n + len(self.law_violations) + len(self.extra_failures)

    @property
    def ok(self) -> bool:
        return self.failures() == 0 and not self.bound_exceeded

    def _note(self, where, config, run, verdicts, why):
        if self.counterexample is None:
            self.counterexample = {"config": config, "reason": why, "run": run,
                                   "verdicts": {k: v.to_dict() for k, v in verdicts.items()},
                                   "where": where}

    def add(self, config, run, conds: dict, rules: dict | None = None, laws=(), extra=()):
        self.runs += 1
        for c, v in conds.items():
            self.conditions[c][v.status] += 1
        if rules:
            for r, v in rules.items():
                self.rules[r][v.status] += 1
        if any(v.status == FLAGGED for v in conds.values()) or \
                (rules and any(v.status == FLAGGED for v in rules.values())):
            self.flagged += 1
        bad = [c for c, v in conds.items() if v.status == FAIL]
        bad += [r for r, v in (rules or {}).items() if v.status == FAIL]
        for law in laws:
            self.law_violations.append({"config": config, "violation": law})
        for x in extra:
            self.extra_failures.append({"config": config, "problem": x})
        if bad:
            self._note("verdict", config, run, dict(conds, **(rules or {})), bad)
        elif laws:
            self._note("oracle-law", config, run, conds, list(laws))
        elif extra:
            self._note("extra", config, run, conds, list(extra))

    def summary(self) -> dict:
        return {"label": self.label, "runs": self.runs, "flagged": self.flagged,
                "failures": self.failures(), "bound_exceeded": self.bound_exceeded,
                "consultations": self.consultations,
                "conditions": {c: dict(v) for c, v in self.conditions.items()},
                "rules": {r: dict(v) for r, v in self.rules.items() if v},
                "law_violations": len(self.law_violations),
                "extra_failures": len(self.extra_failures),
                "counterexample": None if self.counterexample is None else
                {k: v for k, v in self.counterexample.items() if k != "run"}}


def _laws_for(events, sanctuaries):
    out = []
    n = 0
    for sg in sanctuaries:
        H = [e for e in events if e.loc == sg.id]
        if not H:
            continue
        ks = {}
        for e in H:
            if e.kind == Q:
                ks[e.proc] = ks.get(e.proc, 0) + 1
        n += max(ks.values(), default=0)
        out += [(sg.id,) + v for v in oracle_law_violations(H, sg)]
    return out, n


# -- synchronous ---------------------------------------------------------

def explore_sync(program, max_crashes: int | None = None, policies=("min", "max"),
                 inputs: Iterable | None = None, task=None, max_runs: int | None = None,
                 keep: Callable | None = None) -> ExploreReport:
    task = task or program.task
    max_crashes = program.f if max_crashes is None else max_crashes
    rep = ExploreReport(f"{program.name}(n={program.n}, f={program.f}) sync")
    vectors = list(inputs) if inputs is not None else list(task.problem.input_vectors())
    crash_maps = list(sync_crash_patterns(program, max_crashes))
    for V in vectors:
        for crashes in crash_maps:
            for pol in policies:
                if max_runs is not None and rep.runs >= max_runs:
                    rep.bound_exceeded = True
                    return rep
                tr = run_sync(program, V, crashes, AnswerStrategy(pol))
                conds = verify_sync(tr, task)
                laws, k = _laws_for(tr.oracle_events, (program.sanctuary,))
                rep.consultations += k
                config = {"inputs": V.values(), "crashes": {p: [r, list(s)] for p, (r, s) in crashes.items()},
                          "policy": pol}
                rep.add(config, tr, conds, None, laws)
                if keep is not None:
                    keep(tr)
    return rep


# -- asynchronous, seeded ------------------------------------------------

def random_setting(protocol, seed: int, max_crashes: int, horizon: int, inputs=None):
    """A seeded failure pattern (at most ``max_crashes`` crashes) and inputs."""
    rng = random.Random(seed)
    procs = list(protocol.processes)
    if inputs is None:
        values = protocol.task.problem.value_domain
        inputs = InputVector(tuple((p, rng.choice(values)) for p in procs))
    k = rng.randint(0, min(max_crashes, len(procs) - 1))
    who = rng.sample(procs, k)
    F = FailurePattern(protocol.processes, tuple((p, rng.randrange(horizon)) for p in who), horizon)
    return F, inputs


def explore_async(protocol, settings: Iterable, budget: int = 100_000, policy: str = "random",
                  extra: Callable | None = None, check_rules: bool = True, task=None,
                  label: str | None = None, keep: Callable | None = None) -> ExploreReport:
    """``settings`` yields (seed, F, inputs); each is one seeded run.

    ``extra(run)`` returns a list of additional problems; ``keep(run)`` is
    called on every run (for collecting traces).
    """
    task = task or protocol.task
    rep = ExploreReport(label or f"{protocol.name} {protocol.params}")
    for seed, F, V in settings:
        strategies = default_strategies(protocol, policy, seed)
        run = run_async(protocol, F, V, SeededRandom(seed, budget), strategies)
        conds = verify_agreement_conditions(run, task)
        rules = check_run(run).rules if check_rules else None
        laws, k = _laws_for(run.events, protocol.sanctuaries)
        rep.consultations += k
        problems = extra(run) if extra else ()
        config = {"seed": seed, "crashes": [list(c) for c in F.crashes], "inputs": V.values(),
                  "policy": policy, "budget": budget}
        rep.add(config, run, conds, rules, laws, problems)
        if keep is not None:
            keep(run)
    return rep


def seeded_settings(protocol, seeds: Iterable, max_crashes: int, horizon: int, inputs=None):
    for s in seeds:
        F, V = random_setting(protocol, s, max_crashes, horizon, inputs)
        yield s, F, V


# -- asynchronous, every schedule ------------------------------------------

def _enabled(eng: AsyncEngine):
    """Every action of the random scheduler, with all branching spelled out."""
    acts = []
    t2 = eng.now + 2
    for p in eng.procs:
        if not eng.alive(p, t2):
            continue
        st = eng.stage(p)
        if st == _QUERIED:
            sid = eng.query_of(p)[0]
            o = eng.oracles[sid]
            if o.can_answer(p):
                for v in sorted(o.answer_candidates(o.pending(p))):
                    acts.append(("A", p, v))
            continue
        if st != _NONE:
            continue
        for i in range(len(eng.inbox[p])):
            acts.append(("R", p, i))
        if eng.query_of(p) is not None:
            acts.append(("Q", p, None))
        elif not eng.is_idle(p):
            acts.append(("S", p, None))
    return acts


def _perform(eng: AsyncEngine, act):
    kind, p, x = act
    if kind == "A":
        eng.do_answer(p, choice=x)
        eng.do_state_change(p)
    elif kind == "R":
        eng.do_receive(p, x)
        if eng.query_of(p) is not None:
            eng.do_query(p)
        else:
            eng.do_state_change(p)
    elif kind == "Q":
        eng.do_query(p)
    else:
        eng.do_state_change(p)


def explore_schedules(protocol, F: FailurePattern, inputs, depth: int = 40,
                      max_leaves: int = 20_000, task=None, extra: Callable | None = None) -> ExploreReport:
    """Depth-first walk over all schedules (and oracle answer choices).

    Each node is rebuilt by replaying its action sequence, which keeps the
    engine free of copy logic; fine for the tiny instances this is for.
    """
    task = task or protocol.task
    if not isinstance(inputs, InputVector):
        inputs = InputVector.of(inputs, protocol.processes)
    rep = ExploreReport(f"{protocol.name} {protocol.params} all schedules")

    def build(path):
        eng = AsyncEngine(protocol, F, inputs)
        for a in path:
            _perform(eng, a)
        return eng

    stack = [()]
    while stack:
        path = stack.pop()
        eng = build(path)
        acts = _enabled(eng)
        if acts and len(path) < depth:
            stack.extend(path + (a,) for a in reversed(acts))
            continue
        if rep.runs >= max_leaves:
            rep.bound_exceeded = True
            break
        run = eng.finish("quiescent" if not acts else "budget", scheduler={"kind": "dfs", "path": list(path)})
        conds = verify_agreement_conditions(run, task)
        rules = check_run(run).rules
        laws, k = _laws_for(run.events, protocol.sanctuaries)
        rep.consultations += k
        config = {"path": [list(a) for a in path], "crashes": [list(c) for c in F.crashes],
                  "inputs": inputs.values()}
        rep.add(config, run, conds, rules, laws, extra(run) if extra else ())
    return rep


def explore(automata, bounds: dict | None = None) -> ExploreReport:
    """Dispatch on ``bounds["mode"]``: sync, async (seeded) or dfs."""
    b = dict(bounds or {})
    mode = b.get("mode", "sync" if hasattr(automata, "rounds") else "async")
    if mode == "sync":
        return explore_sync(automata, b.get("max_crashes"), tuple(b.get("policies", ("min", "max"))),
                            max_runs=b.get("max_runs"))
    f = automata.task.f if automata.task is not None else 1
    horizon = b.get("horizon", 20)
    if mode == "dfs":
        rep = ExploreReport(f"{automata.name} {automata.params} all schedules")
        vectors = list(automata.task.problem.input_vectors())
        for F in failure_patterns(automata.processes, horizon, b.get("max_crashes", f)):
            for V in vectors:
                sub = explore_schedules(automata, F, V, b.get("depth", 30), b.get("max_leaves", 2000))
                _merge(rep, sub)
        return rep
    seeds = range(b.get("seeds", 100))
    settings = seeded_settings(automata, seeds, b.get("max_crashes", f), horizon)
    return explore_async(automata, settings, b.get("budget", 100_000), b.get("policy", "random"))


def _merge(into: ExploreReport, sub: ExploreReport):
    into.runs += sub.runs
    into.flagged += sub.flagged
    into.consultations += sub.consultations
    into.bound_exceeded |= sub.bound_exceeded
    for c in CONDITIONS:
        into.conditions[c].update(sub.conditions[c])
    for r in RULES:
        into.rules[r].update(sub.rules[r])
    into.law_violations += sub.law_violations
    into.extra_failures += sub.extra_failures
    if into.counterexample is None:
        into.counterexample = sub.counterexample
