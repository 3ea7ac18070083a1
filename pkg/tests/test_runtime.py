import pytest

from reductions.events import A, BETA, Q, R, S, Event, Message
from reductions.protocols.consult import ACRelay, CStar, ConsShrink, SingleOracleAC
from reductions.protocols.sync_k import SyncK
from reductions.runtime.checker import (FAIL, FLAGGED, PASS, check_run, group_steps,
                                        verify_agreement_conditions)
from reductions.runtime.engine import FairExtension, Scripted, SeededRandom, run_async
from reductions.runtime.explore import (explore, explore_async, explore_schedules, explore_sync,
                                        seeded_settings)
from reductions.runtime.halting import DEC, halting_wrapper
from reductions.runtime.model import Protocol, buffer_states
from reductions.runtime.sync import run_sync, sync_crash_patterns
from reductions.cli_io import trace
from reductions.task_model import FailurePattern, InputVector, ProcessSet, ac_task

from oracles import ref_buffer_violation, ref_sync_crash_map_count

P3 = ProcessSet.of(3)
FF3 = FailurePattern.failure_free(P3)


def oracle_events(run):
    return [(e.proc, e.kind, e.value) for e in run.events if e.loc != BETA]


class OneShot(Protocol):
    """Single process that halts after one silent step."""
    name = "one_shot"

    def __init__(self):
        self.processes = ProcessSet.of(1)
        self.task = ac_task(self.processes, 0, lenient=True)

    def initial(self, p, v):
        return ("start", v)

    def step(self, p, s, payload, answer):
        return ("halt", s[1]), None

    def decision(self, p, s):
        return s[1] if s[0] == "halt" else None

    def halted(self, p, s):
        return s[0] == "halt"

    def idle(self, p, s):
        return s[0] == "halt"


# -- asynchronous engine -----------------------------------------------------

def test_cstar_seed_42_agrees():
    run = run_async(CStar(2, 1), FF3, (1, 0, 1), SeededRandom(42))
    assert run.status == "quiescent"
    assert len(set(run.decided().values())) == 1 and set(run.decided()) == {1, 2, 3}
    assert all(v.status == PASS for v in verify_agreement_conditions(run).values())
    assert check_run(run).ok


def test_process_crashed_at_zero_has_no_events():
    for seed in range(20):
        F = FailurePattern(P3, ((2, 0),))
        run = run_async(CStar(2, 1), F, (0, 1, 1), SeededRandom(seed))
        assert not run.history(proc=2)
        assert check_run(run).ok


def test_one_shot_protocol_single_event():
    run = run_async(OneShot(), FailurePattern.failure_free(ProcessSet.of(1)), (1,))
    assert [(e.kind, e.proc, e.time) for e in run.events] == [(S, 1, 1)]
    assert run.status == "quiescent" and run.decided() == {1: 1}


def test_one_event_per_tick_and_no_events_after_crash():
    for seed in range(30):
        F = FailurePattern(P3, ((1, 7),))
        run = run_async(halting_wrapper(CStar(2, 1)), F, (1, 1, 0), SeededRandom(seed))
        assert [e.time for e in run.events] == list(range(1, len(run.events) + 1))
        assert all(e.time < 7 for e in run.history(proc=1))


def test_budget_zero_is_flagged():
    run = run_async(CStar(2, 1), FF3, (1, 1, 1), SeededRandom(0, 0))
    assert run.status == "budget" and run.events == ()
    conds = verify_agreement_conditions(run)
    assert conds["Termination"].status == FLAGGED
    rules = check_run(run).rules
    assert rules["R5"].status == FLAGGED and rules["R6"].status == FLAGGED


def test_determinism_byte_identical():
    proto = halting_wrapper(CStar(2, 1))
    F = FailurePattern(P3, ((3, 9),))
    a = trace.dumps(run_async(proto, F, (0, 1, 1), SeededRandom(11)))
    b = trace.dumps(run_async(proto, F, (0, 1, 1), SeededRandom(11)))
    assert a == b
    c = trace.dumps(run_async(proto, F, (0, 1, 1), SeededRandom(12)))
    assert a != c


def test_scripted_replays_a_run():
    run = run_async(CStar(2, 1), FF3, (0, 1, 1), SeededRandom(3))
    again = run_async(CStar(2, 1), FF3, (0, 1, 1), Scripted(run.events))
    assert again.events == run.events


# -- buffer and step grouping --------------------------------------------------

def test_buffer_states_match_reference():
    for seed in range(10):
        run = run_async(CStar(2, 1), FF3, (0, 1, 1), SeededRandom(seed))
        states = buffer_states(run.events)
        assert not states[0]
        assert all(min(b.values(), default=0) >= 0 for b in states)
        assert ref_buffer_violation(run.events) is None


def test_group_steps_shapes():
    m = Message(2, ("x",))
    evs = [Event(BETA, 1, 1, R, m), Event("s", 1, 2, Q, 1), Event("s", 1, 3, A, 1), Event(BETA, 1, 4, S, None),
           Event(BETA, 1, 5, S, m), Event(BETA, 1, 6, R, m)]
    steps, partial, err = group_steps(list(enumerate(evs)))
    assert err is None and len(steps) == 2 and [e.kind for _, e in partial] == [R]
    bad = [Event(BETA, 1, 1, R, m), Event(BETA, 1, 2, R, m)]
    assert group_steps(list(enumerate(bad)))[2] is not None


# -- checker -----------------------------------------------------------------

def test_check_run_examples():
    run = run_async(halting_wrapper(CStar(2, 1)), FF3, (1, 0, 1), SeededRandom(5))
    assert check_run(run).ok
    # a receive whose message was never sent
    fake = Message(1, ("W", 3, 0, 0))
    i = next(i for i, e in enumerate(run.events) if e.kind == R)
    e = run.events[i]
    evs = list(run.events)
    evs[i] = Event(BETA, e.proc, e.time, R, Message(e.proc, fake.payload))
    bad = type(run)(run.F, run.inputs, tuple(evs), run.protocol, run.status)
    rules = check_run(bad).rules
    assert rules["R3"].status == FAIL and rules["R3"].index == i
    # an event of a process after its crash time
    last = run.history(proc=2)[-1]
    late = type(run)(FailurePattern(P3, ((2, last.time),)), run.inputs, run.events, run.protocol, run.status)
    assert check_run(late).rules["R2"].status == FAIL


def test_locked_processes():
    F = FailurePattern(P3, ((3, 0),))
    run = run_async(ACRelay(3, 1), F, (1, 0, 1), FairExtension(variant="ac"))
    rep = check_run(run)
    assert run.status == "deadlock"
    assert rep.locked == {1, 2}
    assert rep.rules["R1"].status == FAIL and "resilience" in rep.rules["R1"].detail
    assert rep.rules["R5"].status == PASS and rep.rules["R6"].status == PASS


def test_agreement_fail_detected():
    run = run_async(ACRelay(3, 1), FF3, (1, 1, 1), SeededRandom(0))
    decs = tuple((t, p, d) for t, p, d in run.decisions)
    split = tuple((t, p, (1 - d) if p == 1 and d is not None else d) for t, p, d in decs)
    run.decisions = split
    assert verify_agreement_conditions(run)["Agreement"].status == FAIL


# -- fair extension ------------------------------------------------------------

def test_fair_extension_ac_answers_min():
    run = run_async(ACRelay(3, 1), FF3, (1, 0, 1), FairExtension(variant="ac"))
    assert oracle_events(run) == [(1, Q, 1), (2, Q, 0), (3, Q, 1), (1, A, 0), (2, A, 0), (3, A, 0)]


def test_fair_extension_cons_answers_own_value():
    run = run_async(ConsShrink(2, 1), FF3, (1, 0, 0), FairExtension(variant="cons"))
    assert oracle_events(run) == [(1, Q, 1), (2, Q, 0), (1, A, 1), (2, A, 1)]
    assert run.decided() == {1: 1, 2: 1, 3: 1}


def test_fair_extension_skips_when_not_fully_queried():
    F = FailurePattern(P3, ((3, 0),))
    run = run_async(ACRelay(3, 1), F, (1, 0, 1), FairExtension(variant="ac"))
    assert oracle_events(run) == [(1, Q, 1), (2, Q, 0)]
    assert run.obligations


def test_fair_extension_continues_a_prefix():
    proto = ACRelay(3, 1)
    first = run_async(proto, FF3, (1, 1, 1), SeededRandom(4))
    prefix = first.events[:3]
    ext = run_async(proto, FF3, (1, 1, 1), FairExtension(variant="ac", prefix=prefix))
    assert ext.events[:3] == prefix
    assert check_run(ext).ok


# -- halting wrapper -----------------------------------------------------------

def test_halting_wrapper_broadcasts_and_halts():
    proto = halting_wrapper(CStar(2, 1))
    run = run_async(proto, FF3, (1, 1, 1), SeededRandom(8))
    rep = check_run(run)
    assert rep.ok
    for p in (1, 2, 3):
        assert proto.halted(p, rep.replays[p][0].final)
    sent = [e.value for e in run.events if e.kind == S and e.value is not None and e.value.payload[0] == DEC]
    assert {(m.payload[1], m.dest) for m in sent} == {(p, q) for p in (1, 2, 3) for q in (1, 2, 3) if p != q}


def test_halting_receiver_adopts_notified_value():
    proto = halting_wrapper(CStar(2, 1))
    s = proto.initial(3, 0)
    s2, out = proto.step(3, s, (DEC, 1, 1), None)
    assert proto.decision(3, s2) == 1 and out.payload == (DEC, 3, 1)
    halted = s2
    while not proto.halted(3, halted):
        halted, _ = proto.step(3, halted, None, None)
    assert proto.step(3, halted, None, None) == (halted, None)


def test_halting_wrapper_all_correct_halt_in_explored_runs():
    proto = halting_wrapper(CStar(2, 1))

    def not_halted(run):
        rep = check_run(run)
        return [p for p in run.F.correct() if not proto.halted(p, rep.replays[p][0].final)]

    rep = explore_async(proto, seeded_settings(proto, range(60), 1, 20), extra=not_halted)
    assert rep.ok and rep.runs == 60


# -- synchronous engine --------------------------------------------------------

def test_sync_failure_free_round():
    tr = run_sync(SyncK(3, 1), (1, 1, 1))
    assert all(len(m) == 3 for m in tr.received[0].values())
    assert tr.decisions == {1: 1, 2: 1, 3: 1}


def test_sync_crash_silent():
    tr = run_sync(SyncK(3, 1), (1, 1, 1), {1: (1, ())})
    assert {p: len(m) for p, m in tr.received[0].items()} == {2: 2, 3: 2}


def test_sync_crash_invisible_to_recipient():
    tr = run_sync(SyncK(2, 1), (1, 1), {1: (1, (2,))})
    assert len(tr.received[0][2]) == 2


def test_sync_round_determinism():
    a = run_sync(SyncK(3, 2), (1, 0, 1))
    b = run_sync(SyncK(3, 2), (1, 0, 1))
    assert a.received == b.received and a.oracle_events == b.oracle_events


@pytest.mark.parametrize("n,k", [(2, 1), (3, 1), (3, 2), (4, 1), (4, 3)])
def test_sync_crash_map_counts(n, k):
    assert len(list(sync_crash_patterns(SyncK(n, k), k))) == ref_sync_crash_map_count(n, k)


# -- exploration --------------------------------------------------------------

def test_explore_sync_all_pass():
    rep = explore(SyncK(3, 1), {"mode": "sync"})
    assert rep.ok and rep.runs == 2 ** 3 * ref_sync_crash_map_count(3, 1) * 2


def test_explore_finds_single_oracle_counterexample():
    proto = SingleOracleAC(2, 1)
    P = proto.processes
    V = InputVector.of((1, 1, 1), P)
    F = FailurePattern(P, ((3, 0),))
    rep = explore_schedules(proto, F, V, depth=40, max_leaves=5000)
    assert rep.conditions["Validity"][PASS] == rep.runs and rep.ok
    ff = FailurePattern.failure_free(P)
    run = run_async(proto, F, V, SeededRandom(0))
    assert run.decided() and set(run.decided().values()) == {0}
    ext = run_async(proto, ff, V, FairExtension(variant="ac", prefix=run.prefix(run.last_decision_time())))
    conds = verify_agreement_conditions(ext)
    assert conds["Validity"].status == FAIL


def test_explore_zero_budget_flags_everything():
    rep = explore(CStar(2, 1), {"mode": "async", "seeds": 5, "budget": 0})
    assert rep.runs == 5 and rep.flagged == 5 and rep.failures() == 0


def test_explore_dfs_tiny_instance():
    rep = explore(ACRelay(2, 1), {"mode": "dfs", "horizon": 2, "depth": 30})
    assert rep.ok and rep.runs > 0


def test_explore_sync_budget():
    rep = explore_sync(SyncK(3, 2), max_runs=10)
    assert rep.bound_exceeded and rep.runs == 10
