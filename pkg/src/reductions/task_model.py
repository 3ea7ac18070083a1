"""Process sets, failure patterns, input vectors and agreement tasks.

Everything here is immutable.  Failure patterns are stored as crash lists
(process, crash time) over a process set: a process with crash time ``c``
belongs to ``F(t)`` for every ``t >= c`` and never before.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping

CONS = "cons"
AC = "ac"


class ModelError(ValueError):
    pass


class EnumerationBudgetExceeded(ModelError):
    pass


def _order_key(x):
    return (type(x).__name__, x)


@dataclass(frozen=True)
class ProcessSet:
    names: tuple

    def __post_init__(self):
        names = tuple(sorted(self.names, key=_order_key))
        if not names:
            raise ModelError("process set must be non-empty")
        if len(set(names)) != len(names):
            raise ModelError(f"duplicate process names in {names}")
        object.__setattr__(self, "names", names)

    @classmethod
    def of(cls, n: int, start: int = 1) -> "ProcessSet":
        return cls(tuple(range(start, start + n)))

    def __iter__(self) -> Iterator:
        return iter(self.names)

    def __len__(self):
        return len(self.names)

    def __contains__(self, p):
        return p in self.names

    def subset(self, names: Iterable) -> "ProcessSet":
        names = tuple(names)
        missing = [p for p in names if p not in self.names]
        if missing:
            raise ModelError(f"{missing} not in {self.names}")
        return ProcessSet(names)


@dataclass(frozen=True)
class FailurePattern:
    processes: ProcessSet
    crashes: tuple = ()  # ((process, crash_time), ...)
    horizon: int | None = None
    # only relaxed for oracles of lenient tasks, where f may equal n
    need_survivor: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        crashes = tuple(sorted(((p, int(t)) for p, t in self.crashes),
                               key=lambda c: (c[1], _order_key(c[0]))))
        seen = set()
        for p, t in crashes:
            if p not in self.processes:
                raise ModelError(f"crashed process {p!r} not in {self.processes.names}")
            if p in seen:
                raise ModelError(f"process {p!r} crashes twice")
            if t < 0:
                raise ModelError(f"negative crash time for {p!r}")
            seen.add(p)
        if self.need_survivor and len(seen) >= len(self.processes):
            raise ModelError("a failure pattern needs at least one correct process")
        object.__setattr__(self, "crashes", crashes)

    @classmethod
    def failure_free(cls, processes: ProcessSet, horizon=None) -> "FailurePattern":
        return cls(processes, (), horizon)

    @classmethod
    def from_map(cls, processes: ProcessSet, crash_times: Mapping, horizon=None):
        return cls(processes, tuple(crash_times.items()), horizon)

    def crash_time(self, p):
        for q, t in self.crashes:
            if q == p:
                return t
        return None

    def at(self, t: int) -> frozenset:
        return frozenset(p for p, c in self.crashes if c <= t)

    def crashed(self, p, t: int) -> bool:
        c = self.crash_time(p)
        return c is not None and c <= t

    def faulty(self) -> frozenset:
        return frozenset(p for p, _ in self.crashes)

    def correct(self) -> frozenset:
        return frozenset(self.processes) - self.faulty()

    def with_crash(self, p, t: int) -> "FailurePattern":
        rest = tuple(c for c in self.crashes if c[0] != p)
        return FailurePattern(self.processes, rest + ((p, t),), self.horizon, self.need_survivor)


@dataclass(frozen=True)
class InputVector:
    """Total (or, with ``partial=True``, partial) map process -> value."""
    items: tuple
    partial: bool = False

    def __post_init__(self):
        items = tuple(sorted(dict(self.items).items(), key=lambda kv: _order_key(kv[0])))
        object.__setattr__(self, "items", items)

    @classmethod
    def of(cls, values: Mapping | Iterable, processes: ProcessSet | None = None):
        if isinstance(values, Mapping):
            return cls(tuple(values.items()))
        values = tuple(values)
        processes = processes or ProcessSet.of(len(values))
        if len(values) != len(processes):
            raise ModelError("input vector length differs from process set size")
        return cls(tuple(zip(processes, values)))

    def as_dict(self) -> dict:
        return dict(self.items)

    def processes(self) -> tuple:
        return tuple(p for p, _ in self.items)

    def values(self) -> tuple:
        return tuple(v for _, v in self.items)

    def __getitem__(self, p):
        for q, v in self.items:
            if q == p:
                return v
        raise KeyError(p)

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class AgreementProblem:
    kind: str
    processes: ProcessSet
    value_domain: tuple = (0, 1)

    def __post_init__(self):
        if self.kind not in (CONS, AC):
            raise ModelError(f"unknown problem kind {self.kind!r}")
        dom = tuple(sorted(set(self.value_domain)))
        if not dom:
            raise ModelError("empty value domain")
        if self.kind == AC and dom != (0, 1):
            raise ModelError("atomic commitment is binary")
        object.__setattr__(self, "value_domain", dom)

    def allowed(self, F: FailurePattern, V: InputVector) -> frozenset:
        self._check_vector(V)
        if self.kind == CONS:
            return allowed_values_cons(F, V)
        return allowed_values_ac(F, V)

    def _check_vector(self, V: InputVector):
        if set(V.processes()) != set(self.processes):
            raise ModelError("input vector is not defined on the problem's process set")
        bad = [v for v in V.values() if v not in self.value_domain]
        if bad:
            raise ModelError(f"values {bad} outside domain {self.value_domain}")

    def input_vectors(self) -> Iterator[InputVector]:
        for vals in itertools.product(self.value_domain, repeat=len(self.processes)):
            yield InputVector(tuple(zip(self.processes, vals)))


@dataclass(frozen=True)
class CustomProblem:
    """Problem given by an arbitrary rule (F, V) -> allowed set; for tests."""
    name: str
    processes: ProcessSet
    rule: Callable = field(compare=False)
    value_domain: tuple = (0, 1)

    def allowed(self, F, V) -> frozenset:
        return frozenset(self.rule(F, V))

    def input_vectors(self):
        return AgreementProblem.input_vectors(self)


@dataclass(frozen=True)
class AgreementTask:
    problem: AgreementProblem
    f: int
    # lenient tasks accept 0 <= f <= n: used for f = 0 oracles in the
    # synchronous transform and for deliberately out-of-range experiments
    lenient: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        n = len(self.problem.processes)
        lo, hi = (0, n) if self.lenient else (1, n - 1)
        if not (lo <= self.f <= hi):
            raise ModelError(f"resiliency f={self.f} outside [{lo}, {hi}] for n={n}")

    @property
    def n(self):
        return len(self.problem.processes)

    @property
    def processes(self):
        return self.problem.processes


def cons_task(n_or_procs, f, values=(0, 1), lenient=False) -> AgreementTask:
    procs = n_or_procs if isinstance(n_or_procs, ProcessSet) else ProcessSet.of(n_or_procs)
    return AgreementTask(AgreementProblem(CONS, procs, values), f, lenient)


def ac_task(n_or_procs, f, lenient=False) -> AgreementTask:
    procs = n_or_procs if isinstance(n_or_procs, ProcessSet) else ProcessSet.of(n_or_procs)
    return AgreementTask(AgreementProblem(AC, procs), f, lenient)


def allowed_values_cons(F: FailurePattern | None, V: InputVector) -> frozenset:
    return frozenset(V.values())


def allowed_values_ac(F: FailurePattern, V: InputVector) -> frozenset:
    vals = V.values()
    bad = [v for v in vals if v not in (0, 1)]
    if bad:
        raise ModelError(f"non-binary values {bad} in an atomic commitment input")
    if any(v == 0 for v in vals):
        return frozenset({0})
    if F.faulty():
        return frozenset({0, 1})
    return frozenset({1})


@dataclass(frozen=True)
class Renaming:
    mapping: tuple  # ((old, new), ...)

    def __post_init__(self):
        m = dict(self.mapping)
        if len(m) != len(self.mapping) or len(set(m.values())) != len(m):
            raise ModelError("renaming must be a bijection")
        object.__setattr__(self, "mapping", tuple(sorted(m.items(), key=lambda kv: _order_key(kv[0]))))

    @classmethod
    def of(cls, m: Mapping) -> "Renaming":
        return cls(tuple(m.items()))

    @classmethod
    def identity(cls, processes: ProcessSet) -> "Renaming":
        return cls(tuple((p, p) for p in processes))

    def __call__(self, p):
        return dict(self.mapping)[p]

    def domain(self) -> frozenset:
        return frozenset(a for a, _ in self.mapping)

    def image(self) -> frozenset:
        return frozenset(b for _, b in self.mapping)

    def inverse(self) -> "Renaming":
        return Renaming(tuple((b, a) for a, b in self.mapping))

    def then(self, other: "Renaming") -> "Renaming":
        """other o self"""
        if other.domain() != self.image():
            raise ModelError("renamings do not compose")
        return Renaming(tuple((a, other(b)) for a, b in self.mapping))


def apply_renaming(phi: Renaming, X: Any):
    dom = phi.domain()
    m = dict(phi.mapping)

    def need(procs):
        if frozenset(procs) != dom:
            raise ModelError(f"renaming domain {sorted(dom, key=_order_key)} does not match {list(procs)}")

    if isinstance(X, ProcessSet):
        need(X)
        return ProcessSet(tuple(m[p] for p in X))
    if isinstance(X, InputVector):
        if X.partial:
            if not set(X.processes()) <= dom:
                raise ModelError("partial vector outside renaming domain")
        else:
            need(X.processes())
        return InputVector(tuple((m[p], v) for p, v in X.items), X.partial)
    if isinstance(X, FailurePattern):
        need(X.processes)
        return FailurePattern(apply_renaming(phi, X.processes),
                              tuple((m[p], t) for p, t in X.crashes), X.horizon, X.need_survivor)
    if isinstance(X, AgreementProblem):
        need(X.processes)
        # Cons and AC are defined uniformly over any process set, so the
        # renamed problem is the same kind over the image
        return AgreementProblem(X.kind, apply_renaming(phi, X.processes), X.value_domain)
    if isinstance(X, CustomProblem):
        need(X.processes)
        inv = phi.inverse()
        rule = X.rule
        return CustomProblem(X.name + "'", apply_renaming(phi, X.processes),
                             lambda F, V: rule(apply_renaming(inv, F), apply_renaming(inv, V)),
                             X.value_domain)
    if isinstance(X, AgreementTask):
        return AgreementTask(apply_renaming(phi, X.problem), X.f, X.lenient)
    raise TypeError(f"cannot rename {type(X).__name__}")


def failure_patterns(processes: ProcessSet, horizon: int, max_crashes: int | None = None):
    """All patterns whose crash times lie in [0, horizon)."""
    procs = list(processes)
    limit = len(procs) - 1 if max_crashes is None else min(max_crashes, len(procs) - 1)
    for k in range(limit + 1):
        for crashed in itertools.combinations(procs, k):
            for times in itertools.product(range(horizon), repeat=k):
                yield FailurePattern(processes, tuple(zip(crashed, times)), horizon)


def is_symmetric(P, sample_bound: int = 24, horizon: int = 2) -> bool:
    procs = P.processes
    if math.factorial(len(procs)) > sample_bound:
        raise EnumerationBudgetExceeded(f"{len(procs)}! permutations exceed bound {sample_bound}")
    patterns = list(failure_patterns(procs, horizon))
    vectors = list(P.input_vectors())
    for perm in itertools.permutations(procs):
        sigma = Renaming(tuple(zip(procs, perm)))
        for F in patterns:
            sF = apply_renaming(sigma, F)
            for V in vectors:
                if P.allowed(sF, apply_renaming(sigma, V)) != P.allowed(F, V):
                    return False
    return True
