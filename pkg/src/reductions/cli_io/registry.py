"""Protocols addressable by name, for configs and trace headers."""
from __future__ import annotations

from ..protocols.benor import DerandBenOr
from ..protocols.consult import ACPlusOne, ACRelay, ConsGrow, ConsShrink, CStar, SingleOracleAC
from ..protocols.sync_k import SyncK
from ..runtime.halting import halting_wrapper
from ..task_model import ModelError

# name -> (builder, mode, rule text shown when parameters are out of range)
PROTOCOLS = {
    "SyncK_AC_to_Cons": (lambda n, f, **kw: SyncK(n, f), "sync", "0 <= f <= n-1"),
    "CStar_Cons_from_AC": (lambda n, f, **kw: CStar(n, f, kw.get("order"), kw.get("unchecked", False)),
                           "async", "1 <= f <= n-1 (n+f processes)"),
    "AC_plus_one": (lambda n, f, **kw: ACPlusOne(n, f), "async", "1 <= f <= n-1 (n+1 processes)"),
    "Cons_shrink": (lambda n, f, **kw: ConsShrink(n, f), "async", "1 <= f <= n-1 (n+1 processes)"),
    "Cons_grow": (lambda n, f, **kw: ConsGrow(n, f), "async", "1 <= f <= n-1"),
    "DerandBenOr_Cons1_from_AC1": (lambda n, f, **kw: _benor(n, f), "async", "n > 2 and f = 1"),
    "AC_relay": (lambda n, f, **kw: ACRelay(n, f), "async", "1 <= f <= n-1"),
    "AC_single_oracle": (lambda n, f, **kw: SingleOracleAC(n, f), "async", "1 <= f <= n-1 (n+1 processes)"),
}


def _benor(n, f):
    if f != 1:
        raise ModelError(f"parameters need n > 2 and f = 1, got n={n}, f={f}")
    return DerandBenOr(n)


def mode_of(name: str) -> str:
    return PROTOCOLS[name][1]


def param_rule(name: str) -> str:
    return PROTOCOLS[name][2]


def build(name: str, n: int, f: int, halting: bool = False, **kw):
    if name not in PROTOCOLS:
        raise KeyError(f"unknown protocol {name!r}; known: {', '.join(sorted(PROTOCOLS))}")
    builder, mode, _ = PROTOCOLS[name]
    proto = builder(n, f, **kw)
    if halting and mode == "async":
        proto = halting_wrapper(proto)
    return proto


def from_description(desc: dict):
    """Rebuild a protocol from ``Protocol.describe()`` output."""
    d = dict(desc)
    if "source" in d:
        from ..analysis.elimination import remove_ac_oracle
        return remove_ac_oracle(from_description(d["source"]), d["removed"])
    name = d.pop("name")
    halting = bool(d.pop("halting", False))
    n = d.pop("n")
    f = d.pop("f", 1)
    return build(name, n, f, halting=halting, **d)
