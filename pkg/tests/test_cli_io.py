import io
import json

import pytest

from reductions.cli_io import trace
from reductions.cli_io.cli import check_trace_text, main
from reductions.cli_io.config import ConfigError, SEED_ENV, apply_overrides, execute, from_dict
from reductions.events import A
from reductions.protocols.consult import CStar
from reductions.runtime.checker import FAIL, PASS
from reductions.runtime.engine import SeededRandom, run_async
from reductions.runtime.halting import halting_wrapper
from reductions.task_model import FailurePattern, ProcessSet

BENOR = {"protocol": "DerandBenOr_Cons1_from_AC1", "n": 3, "f": 1, "inputs": [1, 0, 1],
         "crashes": [[2, 5]], "scheduler": {"seed": 7}}
SYNC = {"protocol": "SyncK_AC_to_Cons", "n": 3, "f": 1, "inputs": [1, 1, 1], "crashes": [[3, 1, [1]]]}


def cli(args):
    out = io.StringIO()
    code = main(args, out)
    return code, out.getvalue()


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


# -- traces ----------------------------------------------------------------

def sample_run(seed=3, inputs=(1, 0, 1)):
    proto = halting_wrapper(CStar(2, 1))
    F = FailurePattern(ProcessSet.of(3), ((2, 12),))
    return run_async(proto, F, inputs, SeededRandom(seed))


def test_trace_round_trip():
    run = sample_run()
    text = trace.dumps(run, {"k": 1})
    back = trace.loads(text)
    assert back == run
    assert back.decisions == run.decisions
    assert trace.dumps(back, {"k": 1}) == text


def test_trace_header_has_digest():
    meta, events = trace.parse(trace.dumps(sample_run(), {"a": [1, 2]}))
    assert meta["config_digest"] == trace.digest({"a": [1, 2]}) and len(meta["config_digest"]) == 64
    assert events


def test_truncated_trace_reports_last_line():
    text = trace.dumps(sample_run())
    cut = "\n".join(text.split("\n")[:-3]) + "\n"
    with pytest.raises(trace.TraceParseError) as err:
        trace.parse(cut)
    assert err.value.line == len(cut.rstrip("\n").split("\n"))


@pytest.mark.parametrize("bad,line", [("", 1), ("#trace v1\n", 1), ("#trace v1\n#meta {}\nx\ty\n", 3),
                                      ("#trace v1\n#meta {}\nbeta\t1\t1\tQ\t1\n", 3),
                                      ("#trace v1\n#meta {}\n#end 2\n", 3)])
def test_parse_errors_carry_line_numbers(bad, line):
    with pytest.raises(trace.TraceParseError) as err:
        trace.parse(bad)
    assert err.value.line == line


def flip_second_answer(text):
    """Flip the second answer given by some sanctuary; (new text, event index)."""
    lines = text.split("\n")
    seen = set()
    for k, ln in enumerate(lines):
        parts = ln.split("\t")
        if parts[3:4] == [A]:
            if parts[0] in seen:
                parts[4] = str(1 - int(parts[4]))
                lines[k] = "\t".join(parts)
                return "\n".join(lines), k - 2
            seen.add(parts[0])
    raise AssertionError("no sanctuary answered twice")


def test_flipped_answer_fails_oracle_agreement():
    # inputs all 1 and a crash, so either answer alone would be allowed
    run = sample_run(inputs=(1, 1, 1))
    text, i = flip_second_answer(trace.dumps(run))
    r1 = check_trace_text(text)["rules"]["R1"]
    assert r1.status == FAIL and r1.index == i and "agreement" in r1.detail


# -- configuration -----------------------------------------------------------

def test_config_defaults_and_canonical():
    cfg = from_dict(BENOR)
    assert cfg.mode == "async" and cfg.scheduler.seed == 7 and cfg.oracle.seed == 7
    assert from_dict(json.loads(cfg.canonical())).canonical() == cfg.canonical()


@pytest.mark.parametrize("patch,path", [
    ({"f": 2}, "f"), ({"n": 3, "inputs": [1, 0]}, "inputs"), ({"inputs": [1, 2, 1]}, "inputs[1]"),
    ({"crashes": [[9, 1]]}, "crashes[0][0]"), ({"crashes": [[1, -1]]}, "crashes[0][1]"),
    ({"scheduler": {"kind": "magic"}}, "scheduler.kind"), ({"oracle": {"policy": "x"}}, "oracle.policy"),
    ({"bogus": 1}, "bogus"), ({"protocol": "nope"}, "protocol"),
    ({"crashes": [[1, 0], [2, 0], [3, 0]]}, "crashes")])
def test_config_errors_name_the_field(patch, path):
    with pytest.raises(ConfigError) as err:
        from_dict(dict(BENOR, **patch))
    assert err.value.path == path


def test_config_range_message():
    with pytest.raises(ConfigError) as err:
        from_dict(dict(BENOR, f=3))
    assert "n > 2 and f = 1" in str(err.value)


def test_env_seed(monkeypatch):
    d = {k: v for k, v in BENOR.items() if k != "scheduler"}
    monkeypatch.setenv(SEED_ENV, "41")
    assert from_dict(d).scheduler.seed == 41
    monkeypatch.setenv(SEED_ENV, "x")
    with pytest.raises(ConfigError):
        from_dict(d)
    monkeypatch.delenv(SEED_ENV)
    assert from_dict(d).scheduler.seed == 0


def test_overrides():
    d = apply_overrides(BENOR, ["scheduler.seed=9", "oracle.policy=min", "inputs=[0,0,0]"])
    assert d["scheduler"]["seed"] == 9 and d["oracle"]["policy"] == "min" and d["inputs"] == [0, 0, 0]
    assert BENOR["scheduler"]["seed"] == 7
    with pytest.raises(ConfigError):
        apply_overrides(BENOR, ["noequals"])


def test_execute_sync():
    proto, tr = execute(from_dict(SYNC))
    assert tr.decisions and 3 not in tr.decisions


# -- command line -------------------------------------------------------------

def test_cli_run_and_check(tmp_path):
    cfg = write_json(tmp_path / "bo.json", BENOR)
    out = tmp_path / "bo.trace"
    code, text = cli(["run", cfg, "--out", str(out)])
    assert code == 0 and "Agreement: Pass" in text
    code, text = cli(["check", str(out)])
    assert code == 0 and "R3: Pass" in text
    code, text = cli(["check", str(out), "--json"])
    doc = json.loads(text)
    assert doc["rules"]["R1"]["status"] == PASS and doc["conditions"]["Validity"]["status"] == PASS


def test_cli_sync_run_and_check(tmp_path):
    cfg = write_json(tmp_path / "sk.json", SYNC)
    out = tmp_path / "sk.trace"
    assert cli(["run", cfg, "--out", str(out)])[0] == 0
    assert cli(["check", str(out)])[0] == 0


def test_cli_budget_zero_flagged(tmp_path):
    cfg = write_json(tmp_path / "bo.json", BENOR)
    code, text = cli(["run", cfg, "--set", "scheduler.budget=0"])
    assert code == 1 and "Termination: Flagged" in text


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write_json(tmp_path / "bad.json", dict(BENOR, f=3))
    assert cli(["run", cfg])[0] == 2
    assert "config error: f:" in capsys.readouterr().err
    assert cli(["run", str(tmp_path / "missing.json")])[0] == 2


def test_cli_parse_error_exit_code(tmp_path, capsys):
    cfg = write_json(tmp_path / "bo.json", BENOR)
    out = tmp_path / "t.trace"
    cli(["run", cfg, "--out", str(out)])
    text = out.read_text().split("\n")
    out.write_text("\n".join(text[:-3]) + "\n")
    assert cli(["check", str(out)])[0] == 2
    assert "truncated" in capsys.readouterr().err


def test_cli_violation_exit_code(tmp_path):
    text, i = flip_second_answer(trace.dumps(sample_run(inputs=(1, 1, 1))))
    p = tmp_path / "m.trace"
    p.write_text(text)
    code, text = cli(["check", str(p)])
    assert code == 1 and f"R1: Fail (event {i})" in text


def test_cli_seed_flag_and_determinism(tmp_path):
    cfg = write_json(tmp_path / "bo.json", BENOR)
    a, b, c = (tmp_path / x for x in ("a.trace", "b.trace", "c.trace"))
    cli(["run", cfg, "--out", str(a)])
    cli(["run", cfg, "--out", str(b)])
    cli(["run", cfg, "--seed", "8", "--out", str(c)])
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


def test_cli_explore_and_report(tmp_path):
    spec = {"items": [{"protocol": "CStar_Cons_from_AC", "n": 2, "f": 1, "seeds": 10}],
            "replays": [{"kind": "eliminate_then_ac", "n": 3, "f": 1}, {"kind": "single_oracle_ac", "n": 2, "f": 1}],
            "transforms": [{"protocol": "AC_relay", "n": 3, "f": 2, "p": 3, "seeds": 5}]}
    cfg = write_json(tmp_path / "ex.json", spec)
    outdir = tmp_path / "out"
    code, text = cli(["explore", cfg, "--out", str(outdir)])
    assert code == 0 and "expected-counterexample: confirmed" in text
    report = json.loads((outdir / "report.json").read_text())
    assert report["unexpected"] == 0 and len(report["replays"]) == 2
    assert cli(["report", str(outdir / "report.json")])[0] == 0


def test_cli_explore_writes_counterexample(tmp_path):
    spec = {"items": [{"protocol": "CStar_Cons_from_AC", "n": 2, "f": 2, "seeds": 60,
                       "options": {"unchecked": True}, "expect_fail": True}]}
    cfg = write_json(tmp_path / "ex.json", spec)
    outdir = tmp_path / "out"
    code, _ = cli(["explore", cfg, "--out", str(outdir)])
    report = json.loads((outdir / "report.json").read_text())
    item = report["items"][0]
    assert item["failures"] > 0 and code == 0
    assert cli(["check", item["counterexample_trace"]])[0] == 1


def test_cli_empty_explore(tmp_path):
    cfg = write_json(tmp_path / "e.json", {})
    code, text = cli(["explore", cfg])
    assert code == 0 and "unexpected: 0" in text
