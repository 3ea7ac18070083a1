"""Line-oriented trace files.

    #trace v1
    #meta {...canonical JSON...}
    <loc> TAB <proc> TAB <time> TAB <kind> TAB <value JSON>
    ...
    #end <number of events>

Messages are written as {"dest": .., "payload": [..]}; a silent send is
null.  JSON is canonical (sorted keys, no spaces) so equal runs give equal
bytes.
"""
from __future__ import annotations

import hashlib
import json

from ..events import A, BETA, Q, R, S, Event, Message
from ..task_model import FailurePattern, InputVector, ProcessSet
from ..runtime.model import Run

VERSION = "v1"
HEADER = f"#trace {VERSION}"


class TraceParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def digest(obj) -> str:
    return hashlib.sha256(canonical(obj).encode()).hexdigest()


def tuplify(x):
    if isinstance(x, list):
        return tuple(tuplify(v) for v in x)
    return x


def _plain(x):
    if isinstance(x, tuple):
        return [_plain(v) for v in x]
    if isinstance(x, list):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    return x


def encode_value(e: Event) -> str:
    if e.kind in (Q, A):
        return canonical(e.value)
    if e.value is None:
        return "null"
    m = e.value
    return canonical({"dest": m.dest, "payload": _plain(m.payload)})


def encode_event(e: Event) -> str:
    return "\t".join((e.loc, canonical(e.proc), str(e.time), e.kind, encode_value(e)))


def run_meta(run: Run, config: dict | None = None) -> dict:
    proto = run.protocol
    meta = {
        "protocol": _plain(proto.describe()) if proto is not None else None,
        "processes": list(run.F.processes),
        "crashes": [list(c) for c in run.F.crashes],
        "horizon": run.F.horizon,
        "inputs": [list(kv) for kv in run.inputs.items],
        "status": run.status,
        "obligations": [list(o) for o in run.obligations],
        "decisions": [list(d) for d in run.decisions],
    }
    if config is not None:
        meta["config"] = _plain(config)
        meta["config_digest"] = digest(meta["config"])
    for key in ("scheduler", "strategies"):
        if key in run.meta:
            meta[key] = _plain(run.meta[key])
    return meta


def dumps(run: Run, config: dict | None = None, meta: dict | None = None) -> str:
    meta = dict(run_meta(run, config), **(meta or {}))
    lines = [HEADER, "#meta " + canonical(meta)]
    lines += [encode_event(e) for e in run.events]
    lines.append(f"#end {len(run.events)}")
    return "\n".join(lines) + "\n"


def write(path, run: Run, config: dict | None = None, meta: dict | None = None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(run, config, meta))


def _decode_value(kind, raw, n):
    try:
        v = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TraceParseError(n, f"bad value JSON {raw!r}: {exc.msg}") from None
    if kind in (Q, A):
        if isinstance(v, (dict, list)):
            raise TraceParseError(n, f"oracle value must be a scalar, got {raw}")
        return v
    if v is None:
        if kind == R:
            raise TraceParseError(n, "a receive event needs a message")
        return None
    if not isinstance(v, dict) or set(v) != {"dest", "payload"}:
        raise TraceParseError(n, f"message must have exactly dest and payload, got {raw}")
    return Message(tuplify(v["dest"]), tuplify(v["payload"]))


def parse_event(line: str, n: int) -> Event:
    parts = line.split("\t")
    if len(parts) != 5:
        raise TraceParseError(n, f"expected 5 tab-separated fields, got {len(parts)}")
    loc, proc, time, kind, raw = parts
    if kind not in (Q, A, R, S):
        raise TraceParseError(n, f"unknown event kind {kind!r}")
    if (kind in (R, S)) != (loc == BETA):
        raise TraceParseError(n, f"{kind} event at location {loc!r}")
    try:
        p = tuplify(json.loads(proc))
        t = int(time)
    except (json.JSONDecodeError, ValueError):
        raise TraceParseError(n, f"bad process or time field ({proc!r}, {time!r})") from None
    return Event(loc, p, t, kind, _decode_value(kind, raw, n))


def parse(text: str):
    """(meta, events); raises TraceParseError with the offending line number."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != HEADER:
        raise TraceParseError(1, f"missing header {HEADER!r}")
    if len(lines) < 2 or not lines[1].startswith("#meta "):
        raise TraceParseError(min(2, len(lines)), "missing #meta line")
    try:
        meta = json.loads(lines[1][len("#meta "):])
    except json.JSONDecodeError as exc:
        raise TraceParseError(2, f"bad meta JSON: {exc.msg}") from None
    events = []
    for n, line in enumerate(lines[2:], start=3):
        if line.startswith("#end"):
            try:
                count = int(line.split()[1])
            except (IndexError, ValueError):
                raise TraceParseError(n, "bad #end line") from None
            if count != len(events):
                raise TraceParseError(n, f"#end says {count} events, found {len(events)}")
            if n != len(lines):
                raise TraceParseError(n + 1, "content after #end")
            return meta, events
        if line.startswith("#"):
            raise TraceParseError(n, f"unexpected directive {line.split()[0]!r}")
        events.append(parse_event(line, n))
    raise TraceParseError(len(lines), "truncated trace: no #end line")


def run_from(meta: dict, events, protocol=None) -> Run:
    if protocol is None and meta.get("protocol"):
        from .registry import from_description
        protocol = from_description(meta["protocol"])
    procs = ProcessSet(tuple(tuplify(p) for p in meta["processes"]))
    F = FailurePattern(procs, tuple((tuplify(p), t) for p, t in meta["crashes"]), meta.get("horizon"))
    I = InputVector(tuple((tuplify(p), v) for p, v in meta["inputs"]))
    return Run(F, I, tuple(events), protocol, meta.get("status", "stopped"),
               tuple(tuple(tuplify(x) for x in o) for o in meta.get("obligations", ())),
               tuple(tuple(tuplify(x) for x in d) for d in meta.get("decisions", ())),
               {k: meta[k] for k in ("scheduler", "strategies", "config") if k in meta})


def loads(text: str, protocol=None) -> Run:
    meta, events = parse(text)
    return run_from(meta, events, protocol)


def read(path, protocol=None) -> Run:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), protocol)
