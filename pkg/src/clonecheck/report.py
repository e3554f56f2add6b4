"""Report shapes shared by the CLI front ends."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .abstract import format_type
from .infer import MethodVerdict, ProgramReport
from .lang import Pos

SCHEMA_VERSION = 1


def _point(pos: Optional[Pos]) -> Optional[str]:
    return f"{pos[0]}:{pos[1]}" if pos else None


@dataclass
class Report:
    program_path: str
    program: ProgramReport

    include_point_types: bool = False

    def method_rows(self) -> list[dict]:
        rows = []
        for v in self.program.verdicts:
            row: dict = {
                "class": v.class_name,
                "method": v.method,
                "policy": v.policy,
                "accepted": v.accepted,
            }
            if v.reason is not None:
                row["reason"] = {"rule": v.reason[0], "point": _point(v.reason[1])}
            if v.final_type is not None:
                row["finalType"] = format_type(v.final_type)
            if self.include_point_types and v.trace is not None:
                row["pointTypes"] = {
                    _point(pos): format_type(t) for pos, t in sorted(v.trace.before.items())
                }
                row["loopInvariants"] = {
                    _point(pos): format_type(t)
                    for pos, t in sorted(v.trace.invariants.items())
                }
            rows.append(row)
        return rows

    def to_json_dict(self) -> dict:
        accepted = sum(1 for v in self.program.verdicts if v.accepted)
        return {
            "schemaVersion": SCHEMA_VERSION,
            "programPath": self.program_path,
            "methods": self.method_rows(),
            "overridingViolations": [
                {
                    "subClass": o.sub_class,
                    "superClass": o.super_class,
                    "method": o.method,
                    "missing": sorted(list(e) for e in o.missing),
                }
                for o in self.program.overriding
            ],
            "summary": {
                "methods": len(self.program.verdicts),
                "accepted": accepted,
                "rejected": len(self.program.verdicts) - accepted,
                "overridingViolations": len(self.program.overriding),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=False)

    def to_text(self) -> str:
        lines = [f"program: {self.program_path}"]
        for o in self.program.overriding:
            missing = ", ".join(f"({p}, {f})" for p, f in sorted(o.missing))
            lines.append(
                f"OVERRIDE VIOLATION {o.sub_class}.{o.method} drops {missing} "
                f"required by {o.super_class}"
            )
        for v in self.program.verdicts:
            mark = "accepted" if v.accepted else "REJECTED"
            line = f"{mark}  {v.class_name}.{v.method} [{v.policy}]"
            if v.reason is not None:
                rule, pos = v.reason
                line += f"  ({rule}" + (f" at {_point(pos)}" if pos else "") + ")"
            lines.append(line)
        summary = self.to_json_dict()["summary"]
        lines.append(
            f"summary: {summary['accepted']}/{summary['methods']} accepted, "
            f"{summary['overridingViolations']} overriding violations"
        )
        return "\n".join(lines)

    def to_tsv(self) -> str:
        """Tab-delimited verdict table, one method per row."""
        lines = ["class\tmethod\tpolicy\taccepted\trule\tpoint"]
        for v in self.program.verdicts:
            rule = v.reason[0] if v.reason else ""
            point = _point(v.reason[1]) if v.reason else ""
            lines.append(
                f"{v.class_name}\t{v.method}\t{v.policy}\t"
                f"{str(v.accepted).lower()}\t{rule}\t{point or ''}"
            )
        return "\n".join(lines) + "\n"


def dump_types_text(verdict: MethodVerdict) -> str:
    """Per-point canonical type dump for one method."""
    lines = [f"== {verdict.class_name}.{verdict.method} [{verdict.policy}] =="]
    trace = verdict.trace
    if trace is not None:
        for pos in sorted(trace.before):
            lines.append(f"  before {_point(pos)}: {format_type(trace.before[pos])}")
        for pos in sorted(trace.invariants):
            lines.append(f"  invariant {_point(pos)}: {format_type(trace.invariants[pos])}")
    if verdict.final_type is not None:
        lines.append(f"  final: {format_type(verdict.final_type)}")
    return "\n".join(lines)
