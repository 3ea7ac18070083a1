import random

import pytest
from hypothesis import given, settings, strategies as st

from reductions.events import A, Event, Q
from reductions.oracle import (AnswerStrategy, IllegalQuery, InvalidSanctuaryConfig, NoValidAnswer,
                               OracleInstance, Sanctuary, candidates_for, is_compatible,
                               is_well_formed, kth_consultation, oracle_law_violations,
                               oracle_violations, restrict_failure_pattern)
from reductions.task_model import FailurePattern, ProcessSet, ac_task, cons_task

from oracles import ref_candidates, ref_kth, ref_obligations, ref_restrict

P3 = ProcessSet.of(3)
AC3 = Sanctuary("ac", P3, ac_task(P3, 1))
CONS3 = Sanctuary("cons", P3, cons_task(P3, 1))


def ev(p, kind, v, t=0, loc="s"):
    return Event(loc, p, t, kind, v)


def test_kth_consultation_examples():
    H = [ev(1, Q, 0), ev(2, Q, 1), ev(1, A, 0), ev(2, A, 0)]
    assert kth_consultation(H, 1) == H
    assert kth_consultation(H, 2) == []
    H2 = [ev(1, Q, 0), ev(2, Q, 1), ev(1, A, 0), ev(1, Q, 1)]
    assert kth_consultation(H2, 2) == [ev(1, Q, 1)]


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 3), max_size=14), st.integers(1, 4))
def test_kth_consultation_matches_reference(order, k):
    # build a well-formed history from a sequence of acting processes
    nxt, H = {}, []
    for p in order:
        kind = nxt.get(p, Q)
        H.append(ev(p, kind, 0))
        nxt[p] = A if kind == Q else Q
    got = kth_consultation(H, k)
    assert got == [H[i] for i in ref_kth([(e.proc, e.kind) for e in H], k)]


def test_well_formed_examples():
    assert is_well_formed([])
    assert is_well_formed([ev(1, Q, 1), ev(1, A, 1), ev(1, Q, 0)])
    assert not is_well_formed([ev(1, A, 1)])
    assert not is_well_formed([ev(1, Q, 1), ev(1, Q, 1)])


def test_compatible_examples():
    F = FailurePattern(P3, ((1, 3),))
    assert not is_compatible([ev(1, Q, 0, t=5)], F)
    assert is_compatible([ev(1, Q, 0, t=2)], F)
    assert is_compatible([], F)


def test_candidates_examples():
    ff = FailurePattern.failure_free(P3)
    assert candidates_for(CONS3.problem, ff, {1: 0, 2: 1}) == {0, 1}
    assert candidates_for(CONS3.problem, ff, {1: 1, 2: 1, 3: 1}) == {1}
    assert candidates_for(AC3.problem, ff, {1: 1, 2: 1}) == frozenset()
    assert candidates_for(AC3.problem, ff, {1: 1, 2: 1, 3: 1}) == {1}
    assert candidates_for(AC3.problem, ff, {1: 0}) == {0}


@pytest.mark.parametrize("kind", ["ac", "cons"])
def test_candidates_match_reference(kind):
    sg = AC3 if kind == "ac" else CONS3
    for faulty in (False, True):
        F = FailurePattern(P3, ((3, 4),)) if faulty else FailurePattern.failure_free(P3)
        for k in range(4):
            for who in __import__("itertools").combinations((1, 2, 3), k):
                for vals in __import__("itertools").product((0, 1), repeat=k):
                    W = dict(zip(who, vals))
                    expect = ref_candidates(kind, (1, 2, 3), (0, 1), W, faulty)
                    assert candidates_for(sg.problem, F, W) == expect


@settings(max_examples=60, deadline=None)
@given(st.permutations([1, 2, 3]), st.lists(st.integers(0, 1), min_size=3, max_size=3), st.booleans())
def test_candidates_grow_as_queries_arrive(order, vals, faulty):
    F = FailurePattern(P3, ((order[0], 9),)) if faulty else FailurePattern.failure_free(P3)
    for sg in (AC3, CONS3):
        W, prev = {}, None
        for p in order:
            W[p] = vals[p - 1]
            c = candidates_for(sg.problem, F, W)
            assert prev is None or prev <= c
            prev = c


def test_obligations_examples():
    o = OracleInstance(AC3, FailurePattern.failure_free(P3))
    o.record_query(1, 1, 1)
    assert o.obligations() == set()
    o.record_query(2, 2, 1)
    assert o.obligations() == {(1, 1), (1, 2)}
    assert o.obligations() == ref_obligations(3, 1, o.queries, {}, {1, 2, 3})
    o.record_query(3, 3, 0)
    for p in (1, 2, 3):
        o.record_answer(p, 4)
    assert o.obligations() == set()


def test_record_answer_examples():
    ff = FailurePattern.failure_free(P3)
    o = OracleInstance(AC3, ff, AnswerStrategy("max"))
    for p in (1, 2, 3):
        o.record_query(p, p, 1)
    assert o.record_answer(1, 4)[1] == 1
    o = OracleInstance(AC3, ff, AnswerStrategy("max"))
    for p, v in ((1, 1), (2, 0), (3, 1)):
        o.record_query(p, p, v)
    assert [o.record_answer(p, 4)[1] for p in (1, 2, 3)] == [0, 0, 0]
    o = OracleInstance(CONS3, ff, AnswerStrategy("min"))
    for p, v in ((1, 1), (2, 0), (3, 1)):
        o.record_query(p, p, v)
    assert [o.record_answer(p, 4)[1] for p in (3, 1, 2)] == [0, 0, 0]


def test_record_errors():
    ff = FailurePattern.failure_free(P3)
    o = OracleInstance(AC3, ff)
    o.record_query(1, 1, 1)
    with pytest.raises(IllegalQuery):
        o.record_query(1, 2, 1)
    with pytest.raises(NoValidAnswer):
        o.record_answer(1, 2)
    with pytest.raises(IllegalQuery):
        o.record_answer(2, 2)
    o2 = OracleInstance(AC3, FailurePattern(P3, ((2, 3),)))
    with pytest.raises(IllegalQuery):
        o2.record_query(2, 3, 1)
    with pytest.raises(IllegalQuery):
        OracleInstance(AC3, ff).record_query(4, 1, 1)


def test_restrict_examples():
    P12 = ProcessSet.of(2)
    gamma = ProcessSet((2, 3))
    F = FailurePattern(P12, ((1, 0),))
    R = restrict_failure_pattern(F, gamma, P12)
    assert dict(R.crashes) == ref_restrict({1: 0}, (2, 3), (1, 2)) == {3: 0}
    ff = FailurePattern.failure_free(P3)
    assert restrict_failure_pattern(ff, ProcessSet((1, 2)), P3).faulty() == frozenset()
    with pytest.raises(InvalidSanctuaryConfig):
        restrict_failure_pattern(FailurePattern.failure_free(ProcessSet.of(1)), gamma, ProcessSet.of(1))


def test_strategy_determinism():
    F = FailurePattern(P3, ((3, 500),))

    def answers(seed):
        o = OracleInstance(AC3, F, AnswerStrategy("random", seed))
        out = []
        for k in range(20):
            for p in (1, 2, 3):
                o.record_query(p, 3 * k + p, 1)
            out += [o.record_answer(p, 3 * k + 3)[1] for p in (1, 2, 3)]
        return out

    assert answers(5) == answers(5)
    assert set(answers(5)) == {0, 1}


def test_lazy_timing_waits_for_obligation():
    o = OracleInstance(CONS3, FailurePattern.failure_free(P3), AnswerStrategy("min", timing="lazy"))
    o.record_query(1, 1, 0)
    assert not o.can_answer(1)
    o.record_query(2, 2, 1)
    assert o.can_answer(1) and o.can_answer(2)


def test_oracle_violation_detection():
    ff = FailurePattern.failure_free(P3)
    good = [ev(1, Q, 1, 1, "ac"), ev(2, Q, 1, 2, "ac"), ev(3, Q, 1, 3, "ac"),
            ev(1, A, 1, 4, "ac"), ev(2, A, 1, 5, "ac"), ev(3, A, 1, 6, "ac")]
    assert oracle_violations(good, AC3, ff) == []
    split = good[:5] + [ev(3, A, 0, 6, "ac")]
    assert {c for _, c, _ in oracle_violations(split, AC3, ff)} == {"agreement", "validity"}
    early = [ev(1, Q, 1, 1, "ac"), ev(1, A, 1, 2, "ac"), ev(2, Q, 1, 3, "ac"), ev(3, Q, 1, 4, "ac")]
    conds = [c for _, c, _ in oracle_violations(early, AC3, ff, complete=False)]
    assert conds == ["validity"]
    starved = [ev(1, Q, 1, 1, "ac"), ev(2, Q, 0, 2, "ac")]
    assert [c for _, c, _ in oracle_violations(starved, AC3, ff)] == ["resilience"]
    assert oracle_violations(starved, AC3, ff, complete=False) == []


def test_oracle_laws():
    H = [ev(1, Q, 1), ev(2, Q, 1), ev(1, A, 1)]
    assert [v[1] for v in oracle_law_violations(H, AC3)] == ["O_AC"]
    H = [ev(1, Q, 1), ev(2, Q, 1), ev(1, A, 0)]
    assert [v[1] for v in oracle_law_violations(H, CONS3)] == ["O_Cons"]


def test_random_instances_stay_legal():
    rng = random.Random(3)
    for trial in range(200):
        crash = rng.choice([None, 1, 2, 3])
        F = FailurePattern(P3, ((crash, rng.randrange(1, 30)),) if crash else ())
        sg = rng.choice([AC3, CONS3])
        o = OracleInstance(sg, F, AnswerStrategy("random", trial))
        t = 0
        for _ in range(30):
            t += 1
            p = rng.choice((1, 2, 3))
            if F.crashed(p, t):
                continue
            if o.pending(p) is None:
                o.record_query(p, t, rng.randint(0, 1))
            elif o.can_answer(p):
                o.record_answer(p, t)
        assert oracle_violations(o.history, sg, F, complete=False) == []
        assert oracle_law_violations(o.history, sg) == []
