from collections import Counter

import pytest

from reductions.analysis.elimination import (TransformError, count_transitions, lift_run,
                                             remove_ac_oracle, transform_soundness_suite)
from reductions.analysis.replay import (CONFIRMED, INAPPLICABLE, NO_COUNTEREXAMPLE, flip_initial_value,
                                        replay_prop72_scenario, replay_single_oracle_vs_two_oracles,
                                        replay_thm52_scenario)
from reductions.events import A, BETA, Q
from reductions.protocols.consult import ACRelay, CStar, ConsShrink
from reductions.runtime.checker import FAIL, check_run
from reductions.runtime.engine import SeededRandom, run_async
from reductions.runtime.halting import halting_wrapper
from reductions.task_model import FailurePattern, ModelError, ProcessSet

P3 = ProcessSet.of(3)


# -- oracle elimination ---------------------------------------------------------

def test_removed_protocol_never_consults():
    R = halting_wrapper(ACRelay(3, 2))
    A_ = remove_ac_oracle(R, 3)
    assert A_.sanctuaries == () and A_.processes.names == (1, 2)
    s = A_.initial(1, 1)
    assert A_.query(1, s) is None and s == R.initial(1, 1)


def test_transition_rules():
    R = ACRelay(3, 2)
    A_ = remove_ac_oracle(R, 3)
    s = R.initial(1, 1)
    # a querying state: answer 0 becomes a step without an answer
    assert A_.step(1, s, None, None) == R.step(1, s, None, 0)
    # after the answer no consultation remains: transitions kept verbatim
    s2, _ = R.step(1, s, None, 0)
    assert R.query(1, s2) is None
    assert A_.step(1, s2, None, None) == R.step(1, s2, None, None)
    with pytest.raises(TransformError):
        A_.step(1, s, None, 1)


def test_elimination_errors():
    with pytest.raises(TransformError):
        remove_ac_oracle(CStar(2, 1), 1)
    with pytest.raises(TransformError):
        remove_ac_oracle(ConsShrink(2, 1), 1)
    with pytest.raises(TransformError):
        remove_ac_oracle(ACRelay(3, 2), 9)


def test_transition_bookkeeping_identity():
    R = halting_wrapper(ACRelay(3, 2))
    counts, edges = count_transitions(R)
    tally = Counter("kept" if d is None else "removed" if d == 1 else "rewritten" for _, _, _, d, _, _ in edges)
    assert counts.kept == tally["kept"] and counts.removed == tally["removed"]
    assert counts.rewritten == tally["rewritten"]
    assert counts.kept + counts.removed + counts.rewritten == counts.total == len(edges)
    assert (counts.kept, counts.removed, counts.rewritten) == (420, 42, 42)


def test_lift_run_rules():
    R = halting_wrapper(ACRelay(3, 2))
    A_ = remove_ac_oracle(R, 3)
    F = FailurePattern(A_.processes, ())
    run_A = run_async(A_, F, (1, 1), SeededRandom(2))
    lifted = lift_run(run_A, 3)
    assert [e for e in lifted.events if e.loc == BETA] == list(run_A.events)
    assert lifted.F.crash_time(3) == 0 and lifted.inputs[3] == 1
    assert {e.value for e in lifted.events if e.kind == A} == {0}
    assert check_run(lifted).ok
    for i, e in enumerate(lifted.events):
        if e.kind == A:
            assert lifted.events[i + 1].kind == "S" and lifted.events[i + 1].proc == e.proc
            assert lifted.events[i + 1].time == e.time
    run_A0 = run_async(A_, F, (0, 1), SeededRandom(2))
    assert lift_run(run_A0, 3).inputs[3] == 0


def test_lift_rejects_events_of_removed_process():
    R = ACRelay(3, 2)
    run_R = run_async(R, FailurePattern.failure_free(P3), (1, 1, 1), SeededRandom(0))
    A_ = remove_ac_oracle(R, 3)
    fake = type(run_R)(run_R.F, run_R.inputs, run_R.events, A_)
    with pytest.raises(TransformError):
        lift_run(fake, 3, R_proto=R)


@pytest.mark.parametrize("p", [1, 3])
def test_transform_soundness_small(p):
    rep = transform_soundness_suite(halting_wrapper(ACRelay(3, 2)), p, seeds=range(20))
    assert rep.ok and rep.passed == 20 and not rep.failures


# -- input flips -----------------------------------------------------------------

def test_flip_initially_crashed_process():
    F = FailurePattern(P3, ((3, 0),))
    run = run_async(CStar(2, 1), F, (1, 1, 1), SeededRandom(4))
    flipped = flip_initial_value(run, 3, 0)
    assert flipped.inputs[3] == 0 and flipped.events == run.events
    assert check_run(flipped).ok
    assert flip_initial_value(run, 3, 1) is run


def test_flip_live_process_rejected():
    run = run_async(CStar(2, 1), FailurePattern.failure_free(P3), (1, 1, 1), SeededRandom(4))
    with pytest.raises(ModelError):
        flip_initial_value(run, 1, 0)


def test_flip_preserves_verdicts_over_generated_runs():
    for seed in range(30):
        p = seed % 3 + 1
        F = FailurePattern(P3, ((p, 0),))
        run = run_async(halting_wrapper(CStar(2, 1)), F, (seed % 2, 1, 0), SeededRandom(seed))
        before = {r: v.status for r, v in check_run(run).rules.items()}
        after = {r: v.status for r, v in check_run(flip_initial_value(run, p, 1 - run.inputs[p])).rules.items()}
        assert before == after


# -- replays ---------------------------------------------------------------------

@pytest.mark.parametrize("n,f", [(3, 1), (2, 1), (4, 2)])
def test_transform_then_ac_replay(n, f):
    rep = replay_thm52_scenario(n, f)
    assert rep.status == CONFIRMED
    assert rep.verdicts["crash"]["Validity"].status == FAIL
    assert set(rep.details["decisions"].values()) == {0}
    assert rep.details["answer_candidates"] == [0]


def test_transform_then_ac_needs_a_crash():
    assert replay_thm52_scenario(3, 0).status == INAPPLICABLE


def test_single_oracle_replay():
    rep = replay_prop72_scenario(2, 1)
    assert rep.status == CONFIRMED
    first, second = rep.runs["crashed_outsider"], rep.runs["failure_free"]
    t0 = rep.details["t0"]
    assert first.prefix(t0) == second.events[:len(first.prefix(t0))]
    assert not second.F.faulty() and set(second.inputs.values()) == {1}
    assert set(second.decided().values()) == {0}
    assert rep.verdicts["failure_free"]["Validity"].status == FAIL
    assert "not" in rep.to_dict()["note"]


def test_two_oracle_protocol_resists_the_replay():
    rep = replay_single_oracle_vs_two_oracles(2, 1, seeds=range(5))
    assert rep.status == NO_COUNTEREXAMPLE
