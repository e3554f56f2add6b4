"""Command-line front end: batch checking, seeded runs, soundness fuzzing.

Exit codes: `check` returns 0 when every method is accepted, 1 when any
is rejected or an overriding violation exists, 2 on parse or resolution
errors.  `run` returns 0 for a holding or vacuous verdict, 1 for a
policy violation, 3 when the call gets stuck inside a method body.
`fuzz` returns 0 for a clean sweep and 1 when it finds a violation.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import interp
from .abstract import interp_check
from .infer import TypeTrace, check_program
from .interp import Final, State, Stuck, format_heap_dump
from .lang import CloneCheckError, Program, ResolveError, resolve_program
from .parser import ParseError, SourceFile, parse_program
from .paths import PolicyVerdict, SecureCallResult, secure_call_check
from .report import Report, dump_types_text

DEFAULT_FUEL = 10_000
DEFAULT_HEAP = 8
DEFAULT_RUNS = 200


def load_program(path: str) -> Program:
    text = Path(path).read_text(encoding="utf-8")
    return resolve_program(parse_program(SourceFile(path, text)))


# ---------------------------------------------------------------------------
# Random caller states
# ---------------------------------------------------------------------------


def make_caller_state(p: Program, receiver_class: str, rng: random.Random,
                      heap_size: int, receiver: str = "y", result: str = "x",
                      distractors: int = 3) -> State:
    """Arbitrary caller heap whose receiver holds a compatible object.

    With `heap_size` zero the receiver is null, which makes the call
    stick immediately (a vacuous run).
    """
    s = State()
    compatible = sorted(c for c in p.classes if p.subclass_of(c, receiver_class))
    all_classes = sorted(p.classes)
    for l in range(heap_size):
        cls = compatible[0] if l == 0 else rng.choice(all_classes)
        if l == 0 and len(compatible) > 1:
            cls = rng.choice(compatible)
        s.heap[l] = interp.Obj(cls, {f: None for f in p.fields_of(cls)})
    locs = sorted(s.heap)
    for l in locs:
        for f in s.heap[l].fields:
            if rng.random() < 0.75:
                s.heap[l].fields[f] = rng.choice(locs)
    s.env[result] = None
    s.env[receiver] = 0 if heap_size > 0 else None
    for i in range(distractors):
        s.env[f"z{i}"] = rng.choice(locs) if locs and rng.random() < 0.8 else None
    return s


# ---------------------------------------------------------------------------
# Fuzzing
# ---------------------------------------------------------------------------


@dataclass
class FuzzViolation:
    class_name: str
    method: str
    policy: str
    seed: str
    state: State


@dataclass
class FuzzReport:
    runs_per_method: int
    methods_fuzzed: list[str] = field(default_factory=list)
    verdicts: dict[str, int] = field(default_factory=lambda: {"holds": 0, "violation": 0, "vacuous": 0})
    violations: list[FuzzViolation] = field(default_factory=list)
    sr_triples: int = 0
    sr_failures: list[tuple] = field(default_factory=list)
    skipped_reason: Optional[str] = None


def _shrink_state(p: Program, v: FuzzViolation, fuel: int) -> State:
    """Greedily drop heap objects while the violation still reproduces."""
    def still_fails(state: State) -> bool:
        rng = random.Random(v.seed)
        res = secure_call_check(p, state, "x", v.class_name, v.policy, v.method, "y",
                                rng, fuel=fuel)
        return res.verdict is PolicyVerdict.VIOLATION

    state = v.state
    changed = True
    while changed:
        changed = False
        for l in sorted(state.heap, reverse=True):
            if state.env.get("y") == l:
                continue
            trial = state.copy()
            del trial.heap[l]
            for o in trial.heap.values():
                for f, w in o.fields.items():
                    if w == l:
                        o.fields[f] = None
            for x, w in trial.env.items():
                if w == l:
                    trial.env[x] = None
            if still_fails(trial):
                state = trial
                changed = True
                break
    return state


def fuzz_program(p: Program, runs: int, seed: int, heap_size: int, fuel: int,
                 sr_sample_every: int = 10) -> FuzzReport:
    """Seeded secure-call runs for every accepted method, plus per-command
    interpretation checks sampled from the same executions."""
    rep = check_program(p, want_trace=True)
    out = FuzzReport(runs_per_method=runs)
    if not rep.ok:
        rejected = [f"{v.class_name}.{v.method}" for v in rep.verdicts if not v.accepted]
        out.skipped_reason = (
            "program not fully accepted; nothing to fuzz soundly: " + ", ".join(rejected)
            if rejected
            else "overriding violations present"
        )
        return out

    traces: dict[tuple[str, str], TypeTrace] = {
        (v.class_name, v.method): v.trace for v in rep.verdicts if v.trace is not None
    }

    def tracer(frame, pos, before, after):
        if frame is None or pos is None:
            return
        tr = traces.get(frame)
        if tr is None:
            return
        tb = tr.before.get(pos)
        ta = tr.after.get(pos)
        if tb is None or ta is None:
            return
        if interp_check(before, tb):
            out.sr_triples += 1
            if not interp_check(after, ta):
                out.sr_failures.append((frame, pos))

    for v in rep.verdicts:
        name = f"{v.class_name}.{v.method}"
        out.methods_fuzzed.append(name)
        for i in range(runs):
            run_seed = f"{seed}:{name}:{i}"
            rng = random.Random(run_seed)
            state = make_caller_state(p, v.class_name, rng, rng.randint(0, heap_size))
            rng2 = random.Random(run_seed)
            use_tracer = tracer if i % sr_sample_every == 0 else None
            if use_tracer is not None:
                call = interp.eval_command(
                    p,
                    _call_command(v),
                    state,
                    fuel,
                    rng2,
                    tracer=use_tracer,
                )
                res = _result_from_outcome(p, v, call)
            else:
                res = secure_call_check(
                    p, state, "x", v.class_name, v.policy, v.method, "y", rng2, fuel=fuel
                )
            out.verdicts[res.verdict.value] += 1
            if res.verdict is PolicyVerdict.VIOLATION:
                out.violations.append(
                    FuzzViolation(v.class_name, v.method, v.policy, run_seed, state)
                )
    return out


def _call_command(v):
    from .lang import CopyCall

    return CopyCall("x", v.class_name, v.method, v.policy, "y")


def _result_from_outcome(p: Program, v, outcome) -> SecureCallResult:
    from .paths import policy_holds

    if not isinstance(outcome, Final):
        return SecureCallResult(PolicyVerdict.VACUOUS, outcome)
    s = outcome.state
    ok = policy_holds(s.env, s.heap, "x", p.policy(v.policy), p.policy_map)
    return SecureCallResult(
        PolicyVerdict.HOLDS if ok else PolicyVerdict.VIOLATION, outcome
    )


def write_reproducer(p: Program, raw_source: str, v: FuzzViolation, out_dir: Path,
                     fuel: int) -> Path:
    minimized = _shrink_state(p, v, fuel)
    payload = {
        "class": v.class_name,
        "method": v.method,
        "policy": v.policy,
        "seed": v.seed,
        "fuel": fuel,
        "callerEnv": {
            x: (None if w is None else f"l{w}") for x, w in sorted(minimized.env.items())
        },
        "callerHeap": format_heap_dump(minimized).splitlines(),
        "programSource": raw_source.splitlines(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"violation_{v.class_name}.{v.method}.json"
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _seed_from(args) -> int:
    env = os.environ.get("CLONECHECK_SEED")
    if env is not None:
        return int(env)
    return args.seed


def cmd_check(args) -> int:
    try:
        program = load_program(args.path)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ParseError, ResolveError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    rep = check_program(program, want_trace=args.dump_types or args.report_dir is not None)
    report = Report(args.path, rep, include_point_types=args.dump_types)
    if args.json:
        print(report.to_json())
    else:
        print(report.to_text())
        if args.dump_types:
            for v in rep.verdicts:
                print(dump_types_text(v))
    if args.report_dir is not None:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
        from .viz import render_type

        for v in rep.verdicts:
            if v.final_type is not None:
                title = f"{v.class_name}.{v.method} [{v.policy}] final type"
                render_type(v.final_type, title, out / f"{v.class_name}.{v.method}.png")
    return 0 if rep.ok else 1


def cmd_run(args) -> int:
    try:
        program = load_program(args.path)
    except (ParseError, ResolveError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        cls, method = args.entry.split("::", 1)
        md = program.lookup(cls, method)
    except (ValueError, CloneCheckError):
        print(f"error: entry {args.entry!r} not found", file=sys.stderr)
        return 2
    seed = _seed_from(args)
    rng = random.Random(seed)
    state = make_caller_state(program, cls, rng, args.heap_size)
    res = secure_call_check(
        program, state, "x", cls, md.policy, method, "y",
        random.Random(seed), fuel=args.fuel,
    )
    lines = []
    if args.dump:
        lines.append("-- caller state --")
        lines.append(format_heap_dump(state))
        if res.final_state is not None:
            lines.append("-- final state --")
            lines.append(format_heap_dump(res.final_state))
    exit_code = 0
    detail = ""
    if res.verdict is PolicyVerdict.VIOLATION:
        exit_code = 1
    elif isinstance(res.outcome, Stuck):
        detail = f" ({res.outcome.reason}" + (
            f" at {res.outcome.point[0]}:{res.outcome.point[1]})" if res.outcome.point else ")"
        )
        if res.outcome.point is not None:
            exit_code = 3  # stuck inside a method body, not at the entry call
    lines.append(f"verdict: {res.verdict.value}{detail}")
    if args.json:
        print(json.dumps({
            "entry": args.entry,
            "seed": seed,
            "verdict": res.verdict.value,
            "dump": "\n".join(lines[:-1]) if args.dump else None,
            "exit": exit_code,
        }, indent=2))
    else:
        print("\n".join(lines))
    return exit_code


def cmd_fuzz(args) -> int:
    try:
        program = load_program(args.path)
    except (ParseError, ResolveError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    seed = _seed_from(args)
    rep = fuzz_program(program, args.runs, seed, args.heap_size, args.fuel)
    payload = {
        "program": args.path,
        "seed": seed,
        "runsPerMethod": rep.runs_per_method,
        "methods": rep.methods_fuzzed,
        "verdicts": rep.verdicts,
        "subjectReductionTriples": rep.sr_triples,
        "subjectReductionFailures": len(rep.sr_failures),
        "violations": len(rep.violations),
        "skipped": rep.skipped_reason,
    }
    repro_paths = []
    if rep.violations:
        raw = Path(args.path).read_text(encoding="utf-8")
        out_dir = Path(args.out_dir) if args.out_dir else Path(args.path).parent
        for v in rep.violations[:3]:
            repro_paths.append(str(write_reproducer(program, raw, v, out_dir, args.fuel)))
        payload["reproducers"] = repro_paths
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        if rep.skipped_reason:
            print(f"skipped: {rep.skipped_reason}")
        print(
            f"fuzzed {len(rep.methods_fuzzed)} methods x {rep.runs_per_method} runs: "
            f"{rep.verdicts['holds']} holds, {rep.verdicts['vacuous']} vacuous, "
            f"{rep.verdicts['violation']} violations; "
            f"subject-reduction {rep.sr_triples} triples, {len(rep.sr_failures)} failures"
        )
        for path in repro_paths:
            print(f"reproducer: {path}")
    return 1 if (rep.violations or rep.sr_failures) else 0


def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clonecheck",
                                 description="Static checker for secure object copying.")
    sub = ap.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("check", help="verify every copy method of a program")
    pc.add_argument("path")
    pc.add_argument("--json", action="store_true")
    pc.add_argument("--dump-types", action="store_true")
    pc.add_argument("--report-dir", default=None,
                    help="write report.tsv and one type-graph figure per method")
    pc.set_defaults(fn=cmd_check)

    pd = sub.add_parser("dump-types", help="alias for check --dump-types")
    pd.add_argument("path")
    pd.add_argument("--json", action="store_true")
    pd.add_argument("--report-dir", default=None)
    pd.set_defaults(fn=cmd_check, dump_types=True)

    pr = sub.add_parser("run", help="run one seeded copy call and test its policy")
    pr.add_argument("path")
    pr.add_argument("--entry", required=True, help="Class::method")
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    pr.add_argument("--heap-size", type=int, default=DEFAULT_HEAP)
    pr.add_argument("--dump", action="store_true")
    pr.add_argument("--json", action="store_true")
    pr.set_defaults(fn=cmd_run)

    pf = sub.add_parser("fuzz", help="seeded soundness fuzzing of accepted methods")
    pf.add_argument("path")
    pf.add_argument("--runs", type=int, default=DEFAULT_RUNS)
    pf.add_argument("--seed", type=int, default=0)
    pf.add_argument("--heap-size", type=int, default=DEFAULT_HEAP)
    pf.add_argument("--fuel", type=int, default=DEFAULT_FUEL)
    pf.add_argument("--out-dir", default=None, help="directory for counterexample files")
    pf.add_argument("--json", action="store_true")
    pf.set_defaults(fn=cmd_fuzz)

    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_arg_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
