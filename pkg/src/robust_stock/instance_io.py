"""Plain-text instance and config files.

Grammar (one assignment per line, ``#`` starts a comment, blank lines ignored)::

    file   := { line }
    line   := [ key "=" value ] [ "#" comment ]
    key    := "T" | "rho" | "y1" | "stage[" INT "]." field
    field  := "c" | "b" | "h" | "alpha" | "beta" | "mu" | "sigma"
    value  := FLOAT | "inf" | "-inf"

Every stage 1..T needs c, b, h, mu and sigma; alpha defaults to 0 and beta
to inf.  Unknown keys, duplicate keys and stage indices outside 1..T are
errors reported with their line and column.

Config files use the same line syntax with keys ``grid_step``,
``truncation_k``, ``tol``, ``seed`` and ``format``.
"""
from __future__ import annotations

import math
import re

from .core_types import Instance, MomentSet, StageParams
from .errors import ParseError

STAGE_KEY = re.compile(r"^stage\[(\d+)\]\.(\w+)$")
STAGE_FIELDS = ("c", "b", "h", "alpha", "beta", "mu", "sigma")
REQUIRED_STAGE = ("c", "b", "h", "mu", "sigma")
CONFIG_KEYS = {"grid_step": float, "truncation_k": int, "tol": float, "seed": int, "format": str}


def _lines(text):
    """(line number, column of key, key, column of value, raw value)."""
    for n, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            col = len(body) - len(body.lstrip()) + 1
            raise ParseError(f"expected 'key = value', got {body.strip()!r}", n, col)
        k, v = body.split("=", 1)
        kcol = len(k) - len(k.lstrip()) + 1
        vcol = len(k) + 2 + (len(v) - len(v.lstrip()))
        key, val = k.strip(), v.strip()
        if not key:
            raise ParseError("missing key before '='", n, kcol)
        if not val:
            raise ParseError(f"missing value for {key!r}", n, vcol)
        yield n, kcol, key, vcol, val


def _number(val, n, col):
    low = val.lower()
    if low in ("inf", "+inf"):
        return math.inf
    if low == "-inf":
        return -math.inf
    try:
        x = float(val)
    except ValueError:
        raise ParseError(f"not a number: {val!r}", n, col) from None
    if math.isnan(x):
        raise ParseError("NaN is not allowed", n, col)
    return x


def parse_instance(text: str) -> Instance:
    top = {}
    stages = {}
    where = {}
    for n, kcol, key, vcol, val in _lines(text):
        if key in ("T", "rho", "y1"):
            if key in top:
                raise ParseError(f"duplicate key {key!r}", n, kcol)
            top[key] = _number(val, n, vcol)
            where[key] = (n, vcol)
            continue
        m = STAGE_KEY.match(key)
        if not m:
            raise ParseError(f"unknown key {key!r}", n, kcol)
        t, fld = int(m.group(1)), m.group(2)
        if fld not in STAGE_FIELDS:
            raise ParseError(f"unknown stage field {fld!r} (expected one of {', '.join(STAGE_FIELDS)})",
                             n, kcol + key.index(".") + 1)
        blk = stages.setdefault(t, {})
        if fld in blk:
            raise ParseError(f"duplicate key {key!r}", n, kcol)
        blk[fld] = _number(val, n, vcol)
        where[(t, fld)] = (n, kcol)
    for k in ("T", "rho", "y1"):
        if k not in top:
            raise ParseError(f"missing required key {k!r}")
    T = top["T"]
    if T != int(T) or T < 1:
        raise ParseError("T must be a positive integer", *where["T"])
    T = int(T)
    for t in sorted(stages):
        if not 1 <= t <= T:
            n, col = where[(t, next(iter(stages[t])))]
            raise ParseError(f"stage index {t} outside 1..{T}", n, col)
    out = []
    for t in range(1, T + 1):
        blk = stages.get(t, {})
        for f in REQUIRED_STAGE:
            if f not in blk:
                raise ParseError(f"stage {t} is missing field {f!r}")
        ms = MomentSet(blk.get("alpha", 0.0), blk.get("beta", math.inf), blk["mu"], blk["sigma"])
        out.append(StageParams(blk["c"], blk["b"], blk["h"], ms))
    return Instance(T, top["rho"], top["y1"], tuple(out))


def load_instance(path) -> Instance:
    with open(path) as fh:
        return parse_instance(fh.read())


def _fmt(x):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def dump_instance(inst: Instance) -> str:
    lines = [f"T = {inst.T}", f"rho = {_fmt(inst.rho)}", f"y1 = {_fmt(inst.y1)}"]
    for t, st in enumerate(inst.stages, 1):
        ms = st.demand
        for k, v in (("c", st.c), ("b", st.b), ("h", st.h), ("alpha", ms.alpha),
                     ("beta", ms.beta), ("mu", ms.mu), ("sigma", ms.sigma)):
            lines.append(f"stage[{t}].{k} = {_fmt(v)}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> dict:
    cfg = {}
    for n, kcol, key, vcol, val in _lines(text):
        if key not in CONFIG_KEYS:
            raise ParseError(f"unknown config key {key!r}", n, kcol)
        kind = CONFIG_KEYS[key]
        try:
            cfg[key] = kind(val) if kind is not float else _number(val, n, vcol)
        except ValueError:
            raise ParseError(f"bad value for {key!r}: {val!r}", n, vcol) from None
    return cfg
