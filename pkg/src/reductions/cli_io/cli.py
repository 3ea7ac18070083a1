"""Command line: run, check, explore, report.

Exit codes: 0 everything passed, 1 a violation (or flagged verdict),
2 a configuration or parse error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

from ..events import A, Q
from ..oracle import oracle_violations, restrict_failure_pattern
from ..runtime.checker import (FAIL, FLAGGED, PASS, Verdict, check_run, verify_agreement_conditions,
                               verify_decisions)
from ..runtime.explore import explore_async, explore_sync, seeded_settings
from ..runtime.model import Run
from ..task_model import FailurePattern, InputVector, ModelError
from . import registry, trace
from .config import ConfigError, apply_overrides, execute, from_dict, load

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


def _word(status):
    return {PASS: "Pass", FAIL: "Fail", FLAGGED: "Flagged"}.get(status, status)


def _print_verdicts(title, verdicts: dict, out):
    print(f"[{title}]", file=out)
    for k, v in verdicts.items():
        extra = f" (event {v.index})" if v.index is not None else ""
        extra += f": {v.detail}" if v.detail else ""
        print(f"{k}: {_word(v.status)}{extra}", file=out)


def _all_pass(*groups) -> bool:
    return all(v.status == PASS for g in groups for v in g.values())


# -- synchronous traces ----------------------------------------------------

def sync_dumps(proto, tr, config: dict | None) -> str:
    fake = Run(tr.F, tr.inputs, tr.oracle_events, proto, "quiescent")
    meta = {"mode": "sync", "sync_crashes": [[p, r, list(s)] for p, (r, s) in sorted(tr.crashes.items())],
            "sync_decisions": [[p, d] for p, d in sorted(tr.decisions.items())],
            "received": [[[p, [list(m) for m in msgs]] for p, msgs in sorted(rd.items())] for rd in tr.received]}
    return trace.dumps(fake, config, meta)


def check_sync(meta, events, proto):
    procs = proto.processes
    F = FailurePattern(procs, tuple((p, r) for p, r, _ in meta["sync_crashes"]), meta.get("horizon"))
    V = InputVector(tuple((p, v) for p, v in meta["inputs"]))
    sg = proto.sanctuary
    Fs = restrict_failure_pattern(F, sg.consultants, procs)
    bad = oracle_violations(events, sg, Fs, complete=True)
    rules = {"R1": Verdict(FAIL, bad[0][0], f"{bad[0][1]}: {bad[0][2]}") if bad else Verdict(PASS)}
    log = {p: [(proto.rounds + 1, d)] for p, d in meta["sync_decisions"]}
    conds = verify_decisions(log, F.correct(), proto.task, F, V, True)
    return rules, conds


# -- commands --------------------------------------------------------------

def cmd_run(args, out) -> int:
    cfg = load(args.config, args.set + ([f"scheduler.seed={args.seed}"] if args.seed is not None else []))
    proto, res = execute(cfg)
    conf = cfg.to_dict()
    if cfg.mode == "sync":
        text = sync_dumps(proto, res, conf)
        meta, events = trace.parse(text)
        rules, conds = check_sync(meta, events, proto)
    else:
        text = trace.dumps(res, conf)
        rules = check_run(res, proto).rules
        conds = verify_agreement_conditions(res)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"trace: {args.out}", file=out)
    elif args.print_trace:
        out.write(text)
    _print_verdicts("conditions", conds, out)
    _print_verdicts("rules", rules, out)
    return EXIT_OK if _all_pass(conds, rules) else EXIT_VIOLATION


def check_trace_text(text: str, task_override=None) -> dict:
    meta, events = trace.parse(text)
    proto = registry.from_description(meta["protocol"])
    if meta.get("mode") == "sync":
        rules, conds = check_sync(meta, events, proto)
        return {"rules": rules, "conditions": conds, "locked": []}
    run = trace.run_from(meta, events, proto)
    rep = check_run(run, proto)
    conds = verify_agreement_conditions(run, task_override)
    return {"rules": rep.rules, "conditions": conds, "locked": sorted(rep.locked, key=repr),
            "notes": rep.notes}


def cmd_check(args, out) -> int:
    try:
        with open(args.trace, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(args.trace, f"cannot read: {exc.strerror}") from None
    res = check_trace_text(text)
    if args.json:
        doc = {"rules": {k: v.to_dict() for k, v in res["rules"].items()},
               "conditions": {k: v.to_dict() for k, v in res["conditions"].items()},
               "locked": res["locked"]}
        print(json.dumps(doc, sort_keys=True, indent=2), file=out)
    else:
        _print_verdicts("rules", res["rules"], out)
        _print_verdicts("conditions", res["conditions"], out)
    return EXIT_OK if _all_pass(res["rules"], res["conditions"]) else EXIT_VIOLATION


def _item_report(item: dict, outdir: str | None, idx: int):
    name = item["protocol"]
    n, f = item["n"], item.get("f", 1)
    proto = registry.build(name, n, f, halting=item.get("halting", True), **item.get("options", {}))
    if registry.mode_of(name) == "sync":
        rep = explore_sync(proto, item.get("max_crashes"))
    else:
        seeds = range(item.get("seed0", 0), item.get("seed0", 0) + item.get("seeds", 100))
        settings = seeded_settings(proto, seeds, item.get("max_crashes", f), item.get("horizon", 30))
        rep = explore_async(proto, settings, item.get("budget", 100_000), item.get("policy", "random"))
    s = rep.summary()
    s["protocol"], s["n"], s["f"] = name, n, f
    cx = rep.counterexample
    if cx is not None and outdir and isinstance(cx["run"], Run):
        path = os.path.join(outdir, f"counterexample_{idx}_{name}_{n}_{f}.trace")
        trace.write(path, cx["run"], cx["config"])
        s["counterexample_trace"] = path
    s["expected_failure"] = bool(item.get("expect_fail", False))
    s["unexpected"] = (rep.failures() > 0) != s["expected_failure"] or rep.bound_exceeded
    return s


def run_explore(spec: dict, outdir: str | None = None) -> dict:
    from ..analysis.elimination import transform_soundness_suite
    from ..analysis.replay import CONFIRMED, replay_prop72_scenario, replay_thm52_scenario
    REPLAYS = {"eliminate_then_ac": replay_thm52_scenario, "single_oracle_ac": replay_prop72_scenario,
               "thm52": replay_thm52_scenario, "prop72": replay_prop72_scenario}
    report = {"items": [], "replays": [], "transforms": []}
    for i, item in enumerate(spec.get("items", [])):
        report["items"].append(_item_report(item, outdir, i))
    for r in spec.get("replays", []):
        kind, n, f = r["kind"], r["n"], r["f"]
        fn = REPLAYS.get(kind)
        if fn is None:
            raise ConfigError(f"replays.{kind}", f"unknown replay (use one of {sorted(REPLAYS)})")
        res = fn(n, f).to_dict()
        res["kind"] = kind
        res["unexpected"] = res["status"] != CONFIRMED
        report["replays"].append(res)
    for t in spec.get("transforms", []):
        proto = registry.build(t["protocol"], t["n"], t["f"], halting=t.get("halting", True))
        rep = transform_soundness_suite(proto, t["p"], seeds=range(t.get("seeds", 100)))
        d = rep.to_dict()
        d["unexpected"] = not rep.ok
        report["transforms"].append(d)
    report["unexpected"] = sum(x["unexpected"] for k in ("items", "replays", "transforms") for x in report[k])
    return report


def cmd_explore(args, out) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise ConfigError(args.config, f"cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(args.config, f"bad JSON at line {exc.lineno}: {exc.msg}") from None
    spec = apply_overrides(spec, args.set)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    t = time.perf_counter()
    report = run_explore(spec, args.out)
    elapsed = time.perf_counter() - t
    text = json.dumps(report, sort_keys=True, indent=2, default=str)
    if args.out:
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    _print_report(report, out)
    print(f"elapsed: {elapsed:.1f}s", file=sys.stderr)
    return EXIT_OK if report["unexpected"] == 0 else EXIT_VIOLATION


def _print_report(report: dict, out):
    for s in report.get("items", []):
        tag = "UNEXPECTED" if s["unexpected"] else "ok"
        print(f"{s['protocol']} n={s['n']} f={s['f']}: runs={s['runs']} failures={s['failures']} "
              f"flagged={s['flagged']} [{tag}]", file=out)
    for r in report.get("replays", []):
        print(f"replay {r['kind']} n={r['params']['n']} f={r['params']['f']}: {r['status']}", file=out)
    for t in report.get("transforms", []):
        tr = t["transitions"]
        print(f"transform {t['source']} without {t['removed_process']}: {t['passed']}/{t['runs']} lifted runs pass; "
              f"kept={tr['kept']} removed={tr['removed']} rewritten={tr['rewritten']}", file=out)
    print(f"unexpected: {report.get('unexpected', 0)}", file=out)


def cmd_report(args, out) -> int:
    try:
        with open(args.report, encoding="utf-8") as fh:
            report = json.load(fh)
    except OSError as exc:
        raise ConfigError(args.report, f"cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(args.report, f"bad JSON at line {exc.lineno}: {exc.msg}") from None
    _print_report(report, out)
    return EXIT_OK if report.get("unexpected", 0) == 0 else EXIT_VIOLATION


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reductions", description="Simulate and check oracle reductions.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="execute one configured run")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="trace file to write")
    p.add_argument("--print-trace", action="store_true")
    p.set_defaults(fn=cmd_run)
    p = sub.add_parser("check", help="validate a trace file")
    p.add_argument("trace")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_check)
    p = sub.add_parser("explore", help="run a batch of explorations")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", help="directory for report.json and counterexample traces")
    p.set_defaults(fn=cmd_explore)
    p = sub.add_parser("report", help="summarize a report.json")
    p.add_argument("report")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = parser().parse_args(argv)
    try:
        return args.fn(args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except trace.TraceParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
