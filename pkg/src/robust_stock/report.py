"""Report assembly for the command line.

A report is an ordered list of entries.  Numeric results carry a
provenance label (closed-form, oracle or heuristic) and a tolerance;
verifications carry pass / fail.  Two renderings:

text     aligned human-readable lines
machine  ``key = value`` lines (same syntax as instance files) with
         ``<key>.provenance`` / ``<key>.tol`` companions, and CSV blocks

             [distribution <name>]
             point,mass
             ...
             [end]

Both renderings are deterministic; wall-clock timings appear only when
requested.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

PROVENANCE = ("closed-form", "oracle", "heuristic", "input")


def fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return f"{x:.12g}"
    return str(x)


@dataclass
class Report:
    command: str
    config: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    notices: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def number(self, key, value, provenance, tol=None):
        if provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {provenance!r}")
        self.entries.append(("number", key, value, provenance, tol))

    def text(self, key, value):
        self.entries.append(("text", key, value, None, None))

    def distribution(self, name, dist):
        self.entries.append(("dist", name, dist, None, None))

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))

    def notice(self, msg):
        self.notices.append(msg)

    @property
    def ok(self):
        return all(ok for _, ok, _ in self.checks)

    # -- rendering
    def render(self, style="text", with_timings=False):
        return self._machine(with_timings) if style == "machine" else self._text(with_timings)

    def _text(self, with_timings):
        out = [f"command: {self.command}"]
        if self.config:
            out.append("config: " + ", ".join(f"{k}={fmt(v)}" for k, v in sorted(self.config.items())))
        for msg in self.notices:
            out.append(f"notice: {msg}")
        width = max([len(e[1]) for e in self.entries if e[0] != "dist"] + [8])
        for kind, key, value, prov, tol in self.entries:
            if kind == "number":
                extra = f"[{prov}" + (f", tol {fmt(tol)}" if tol is not None else "") + "]"
                out.append(f"  {key:<{width}}  {fmt(value):>20}  {extra}")
            elif kind == "text":
                out.append(f"  {key:<{width}}  {value}")
            else:
                atoms = ", ".join(f"{fmt(p)}: {fmt(m)}" for p, m in value)
                out.append(f"  {key:<{width}}  {{{atoms}}}")
        for name, ok, detail in self.checks:
            out.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        if with_timings:
            for k, v in self.timings.items():
                out.append(f"time {k}: {v:.3f} s")
        out.append(f"status: {'ok' if self.ok else 'failed'}")
        return "\n".join(out) + "\n"

    def _machine(self, with_timings):
        out = [f"command = {self.command}"]
        for k, v in sorted(self.config.items()):
            out.append(f"config.{k} = {fmt(v)}")
        for i, msg in enumerate(self.notices):
            out.append(f"notice.{i} = {msg}")
        for kind, key, value, prov, tol in self.entries:
            if kind == "number":
                out.append(f"{key} = {fmt(value)}")
                out.append(f"{key}.provenance = {prov}")
                if tol is not None:
                    out.append(f"{key}.tol = {fmt(tol)}")
            elif kind == "text":
                out.append(f"{key} = {value}")
            else:
                out.append(f"[distribution {key}]")
                out.append("point,mass")
                for p, m in value:
                    out.append(f"{fmt(float(p))},{fmt(float(m))}")
                out.append("[end]")
        for name, ok, detail in self.checks:
            out.append(f"check.{name} = {'pass' if ok else 'fail'}")
        if with_timings:
            for k, v in self.timings.items():
                out.append(f"time.{k} = {v:.3f}")
        out.append(f"status = {'ok' if self.ok else 'failed'}")
        return "\n".join(out) + "\n"
