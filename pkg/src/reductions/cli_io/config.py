"""Run configuration: validation, overrides and execution."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from ..oracle import AnswerStrategy
from ..task_model import FailurePattern, InputVector, ModelError
from ..runtime.engine import FairExtension, SeededRandom, run_async
from ..runtime.sync import run_sync
from . import registry

SEED_ENV = "REDUCTIONS_SEED"
SCHEDULERS = ("random", "fair")
POLICIES = ("min", "max", "random")
TIMINGS = ("eager", "lazy")


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"${SEED_ENV}", f"not an integer: {raw!r}") from None


@dataclass
class SchedulerConfig:
    kind: str = "random"
    seed: int | None = None
    budget: int = 100_000
    queue: list = field(default_factory=list)
    variant: str = "ac"


@dataclass
class OracleConfig:
    policy: str = "random"
    timing: str = "eager"
    seed: int | None = None


@dataclass
class RunConfig:
    protocol: str
    n: int
    f: int
    inputs: list
    crashes: list = field(default_factory=list)  # async [[p, t]]; sync [[p, round, [recipients]]]
    halting: bool = True
    mode: str | None = None
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    options: dict = field(default_factory=dict)  # extra protocol parameters

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def build(self):
        return registry.build(self.protocol, self.n, self.f, halting=self.halting, **self.options)


def _need(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"{path}{key}", "required field missing")
    return d[key]


def _int(v, path, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be >= {lo}, got {v}")
    return v


def _choice(v, options, path):
    if v not in options:
        raise ConfigError(path, f"expected one of {list(options)}, got {v!r}")
    return v


def _known(d: dict, allowed, path: str):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{path}{extra[0]}", "unknown field")


def from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    _known(d, RunConfig.__dataclass_fields__, "")
    name = _need(d, "protocol", "")
    if name not in registry.PROTOCOLS:
        raise ConfigError("protocol", f"unknown protocol {name!r}; known: {sorted(registry.PROTOCOLS)}")
    n = _int(_need(d, "n", ""), "n", 1)
    f = _int(d.get("f", 1), "f", 0)
    mode = d.get("mode") or registry.mode_of(name)
    if mode != registry.mode_of(name):
        raise ConfigError("mode", f"{name} runs in {registry.mode_of(name)} mode, not {mode!r}")
    options = d.get("options", {}) or {}
    if not isinstance(options, dict):
        raise ConfigError("options", "expected an object")
    sd = d.get("scheduler", {}) or {}
    if not isinstance(sd, dict):
        raise ConfigError("scheduler", "expected an object")
    _known(sd, SchedulerConfig.__dataclass_fields__, "scheduler.")
    sched = SchedulerConfig(
        kind=_choice(sd.get("kind", "random"), SCHEDULERS, "scheduler.kind"),
        seed=_int(sd["seed"], "scheduler.seed", 0) if sd.get("seed") is not None else default_seed(),
        budget=_int(sd.get("budget", 100_000), "scheduler.budget", 0),
        queue=list(sd.get("queue", []) or []),
        variant=_choice(sd.get("variant", "ac"), ("ac", "cons"), "scheduler.variant"))
    od = d.get("oracle", {}) or {}
    if not isinstance(od, dict):
        raise ConfigError("oracle", "expected an object")
    _known(od, OracleConfig.__dataclass_fields__, "oracle.")
    orc = OracleConfig(policy=_choice(od.get("policy", "random"), POLICIES, "oracle.policy"),
                       timing=_choice(od.get("timing", "eager"), TIMINGS, "oracle.timing"),
                       seed=_int(od["seed"], "oracle.seed", 0) if od.get("seed") is not None else sched.seed)
    halting = d.get("halting", True)
    if not isinstance(halting, bool):
        raise ConfigError("halting", f"expected true or false, got {halting!r}")
    cfg = RunConfig(name, n, f, list(_need(d, "inputs", "")), list(d.get("crashes", []) or []),
                    halting, mode, sched, orc, dict(options))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    try:
        proto = cfg.build()
    except (ModelError, TypeError):
        raise ConfigError("f", f"{cfg.protocol} needs {registry.param_rule(cfg.protocol)}, "
                               f"got n={cfg.n}, f={cfg.f}") from None
    procs = list(proto.processes)
    if len(cfg.inputs) != len(procs):
        raise ConfigError("inputs", f"expected {len(procs)} values (one per process {procs}), got {len(cfg.inputs)}")
    domain = proto.task.problem.value_domain
    for i, v in enumerate(cfg.inputs):
        if v not in domain:
            raise ConfigError(f"inputs[{i}]", f"value {v!r} outside {list(domain)}")
    seen = set()
    for i, c in enumerate(cfg.crashes):
        path = f"crashes[{i}]"
        if not isinstance(c, list) or len(c) != (3 if cfg.mode == "sync" else 2):
            want = "[process, round, [recipients]]" if cfg.mode == "sync" else "[process, time]"
            raise ConfigError(path, f"expected {want}, got {c!r}")
        if c[0] not in procs:
            raise ConfigError(f"{path}[0]", f"unknown process {c[0]!r}")
        if c[0] in seen:
            raise ConfigError(f"{path}[0]", f"process {c[0]} crashes twice")
        seen.add(c[0])
        _int(c[1], f"{path}[1]", 0 if cfg.mode == "async" else 1)
        if cfg.mode == "sync":
            if c[1] > proto.rounds + 1:
                raise ConfigError(f"{path}[1]", f"crash round must be <= {proto.rounds + 1}")
            for j, q in enumerate(c[2]):
                if q not in procs or q == c[0]:
                    raise ConfigError(f"{path}[2][{j}]", f"bad recipient {q!r}")
    if len(seen) >= len(procs):
        raise ConfigError("crashes", "at least one process must be correct")
    for i, q in enumerate(cfg.scheduler.queue):
        if q not in procs:
            raise ConfigError(f"scheduler.queue[{i}]", f"unknown process {q!r}")
    return proto


def set_path(d: dict, dotted: str, value):
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        nxt = cur.get(k)
        if nxt is None:
            nxt = cur[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(dotted, f"{k} is not an object")
        cur = nxt
    cur[keys[-1]] = value


def apply_overrides(d: dict, overrides) -> dict:
    """``overrides``: "a.b=value" strings; values are JSON, else plain strings."""
    d = json.loads(json.dumps(d))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        set_path(d, key.strip(), value)
    return d


def load(path, overrides=()) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"bad JSON at line {exc.lineno}: {exc.msg}") from None
    return from_dict(apply_overrides(d, overrides))


def execute(cfg: RunConfig):
    """Run the configuration; (protocol, Run or SyncTrace)."""
    proto = cfg.build()
    V = InputVector.of(cfg.inputs, proto.processes)
    strat = AnswerStrategy(cfg.oracle.policy, cfg.oracle.seed or 0, timing=cfg.oracle.timing)
    if cfg.mode == "sync":
        crashes = {c[0]: (c[1], tuple(c[2])) for c in cfg.crashes}
        return proto, run_sync(proto, V, crashes, strat)
    F = FailurePattern(proto.processes, tuple((p, t) for p, t in cfg.crashes))
    strategies = {sg.id: AnswerStrategy(cfg.oracle.policy, (cfg.oracle.seed or 0) + i, timing=cfg.oracle.timing)
                  for i, sg in enumerate(proto.sanctuaries)}
    if cfg.scheduler.kind == "fair":
        sched = FairExtension(tuple(cfg.scheduler.queue), cfg.scheduler.variant, cfg.scheduler.budget)
    else:
        sched = SeededRandom(cfg.scheduler.seed, cfg.scheduler.budget)
    return proto, run_async(proto, F, V, sched, strategies)
