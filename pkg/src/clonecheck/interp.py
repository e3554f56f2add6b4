"""Reference interpreter: the semantic ground truth for soundness testing.

Big-step evaluation over store-based states.  Nondeterminism (branch
choice, iteration counts, unknown-call effects) is resolved by a seeded
random source so that every run is reproducible; a fuel budget bounds
the number of executed atomic commands.
"""

from __future__ import annotations

import random
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

from .lang import (
    RESULT_VAR,
    Assign,
    AssignNull,
    Command,
    CopyCall,
    GetField,
    If,
    New,
    Pos,
    Program,
    PutField,
    Return,
    Seq,
    Skip,
    UnknownCall,
    While,
)

Value = Optional[int]  # heap location or None for null

NULL_DEREFERENCE = "NullDereference"
BAD_RECEIVER_CLASS = "BadReceiverClass"
METHOD_NOT_FOUND = "MethodNotFound"
MISSING_FIELD = "MissingField"


@dataclass
class Obj:
    cls: str
    fields: dict[str, Value]

    def copy(self) -> "Obj":
        return Obj(self.cls, dict(self.fields))


@dataclass
class State:
    """Environment, heap, and the locally-allocated location set."""

    env: dict[str, Value] = field(default_factory=dict)
    heap: dict[int, Obj] = field(default_factory=dict)
    alloc: set[int] = field(default_factory=set)

    def copy(self) -> "State":
        return State(dict(self.env), {l: o.copy() for l, o in self.heap.items()}, set(self.alloc))

    def validate(self, p: Optional[Program] = None) -> None:
        for l, o in self.heap.items():
            if p is not None:
                assert tuple(o.fields) == p.fields_of(o.cls), (l, o)
            for v in o.fields.values():
                assert v is None or v in self.heap
        for v in self.env.values():
            assert v is None or v in self.heap
        assert self.alloc <= set(self.heap)


class RunOutcome:
    pass


@dataclass
class Final(RunOutcome):
    state: State


@dataclass
class Stuck(RunOutcome):
    reason: str
    point: Optional[Pos]


@dataclass
class FuelExhausted(RunOutcome):
    pass


def reach(heap: dict[int, Obj], v: Value) -> set[int]:
    """Locations reachable from `v` through any field sequence (incl. empty)."""
    if v is None:
        return set()
    seen = {v}
    stack = [v]
    while stack:
        l = stack.pop()
        for w in heap[l].fields.values():
            if w is not None and w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def reach_plus(heap: dict[int, Obj], v: Value) -> set[int]:
    """Locations reachable through at least one field step."""
    if v is None:
        return set()
    out: set[int] = set()
    for w in heap[v].fields.values():
        out |= reach(heap, w)
    return out


class _StuckError(Exception):
    def __init__(self, reason: str, point: Optional[Pos]):
        self.reason = reason
        self.point = point


class _FuelOut(Exception):
    pass


# Called before/after every executed atomic command when tracing:
# tracer(frame, pos, state_before, state_after) with frame = (class, method)
# of the enclosing copy method, or None for driver commands.
Tracer = Callable[[Optional[tuple[str, str]], Optional[Pos], State, State], None]


class _Run:
    def __init__(self, p: Program, fuel: int, rng: random.Random,
                 tracer: Optional[Tracer], max_havoc_fresh: int,
                 max_call_depth: int = 150):
        self.p = p
        self.fuel = fuel
        self.rng = rng
        self.tracer = tracer
        self.max_havoc_fresh = max_havoc_fresh
        self.max_call_depth = max_call_depth
        self.call_depth = 0
        self.next_loc = 0
        self.allocated: list[int] = []  # instrumentation for tests

    def seed_locations(self, state: State) -> None:
        if state.heap:
            self.next_loc = max(state.heap) + 1

    def fresh_loc(self) -> int:
        l = self.next_loc
        self.next_loc += 1
        self.allocated.append(l)
        return l

    def spend(self) -> None:
        if self.fuel <= 0:
            raise _FuelOut()
        self.fuel -= 1

    def eval(self, c: Command, s: State, frame: Optional[tuple[str, str]]) -> State:
        if isinstance(c, Skip):
            return s
        if isinstance(c, Seq):
            return self.eval(c.second, self.eval(c.first, s, frame), frame)
        if isinstance(c, If):
            branch = c.then if self.rng.random() < 0.5 else c.orelse
            return self.eval(branch, s, frame)
        if isinstance(c, While):
            # Iteration count is geometric with p = 1/2, truncated by fuel.
            while self.rng.random() < 0.5:
                s = self.eval(c.body, s, frame)
            return s
        return self.atomic(c, s, frame)

    def atomic(self, c: Command, s: State, frame: Optional[tuple[str, str]]) -> State:
        self.spend()
        before = s.copy() if self.tracer else None
        if isinstance(c, Assign):
            s.env[c.x] = s.env[c.y]
        elif isinstance(c, AssignNull):
            s.env[c.x] = None
        elif isinstance(c, GetField):
            l = s.env[c.y]
            if l is None:
                raise _StuckError(NULL_DEREFERENCE, c.pos)
            obj = s.heap[l]
            if c.f not in obj.fields:
                raise _StuckError(MISSING_FIELD, c.pos)
            s.env[c.x] = obj.fields[c.f]
        elif isinstance(c, PutField):
            l = s.env[c.x]
            if l is None:
                raise _StuckError(NULL_DEREFERENCE, c.pos)
            obj = s.heap[l]
            if c.f not in obj.fields:
                raise _StuckError(MISSING_FIELD, c.pos)
            obj.fields[c.f] = s.env[c.y]
        elif isinstance(c, New):
            l = self.fresh_loc()
            s.heap[l] = Obj(c.cls, {f: None for f in self.p.fields_of(c.cls)})
            s.env[c.x] = l
            s.alloc.add(l)
        elif isinstance(c, Return):
            s.env[RESULT_VAR] = s.env[c.x]
        elif isinstance(c, CopyCall):
            s = self.copy_call(c, s)
        elif isinstance(c, UnknownCall):
            _havoc(self.p, c.x, c.y, s, self.rng, self.max_havoc_fresh, self)
        else:
            raise TypeError(f"cannot evaluate {type(c).__name__}")
        if self.tracer:
            assert before is not None
            self.tracer(frame, c.pos, before, s.copy())
        return s

    def copy_call(self, c: CopyCall, s: State) -> State:
        l = s.env[c.y]
        if l is None:
            raise _StuckError(NULL_DEREFERENCE, c.pos)
        receiver_cls = s.heap[l].cls
        if not self.p.subclass_of(receiver_cls, c.cls):
            raise _StuckError(BAD_RECEIVER_CLASS, c.pos)
        try:
            owner, md = self.p.lookup_owner(receiver_cls, c.method)
        except Exception:
            raise _StuckError(METHOD_NOT_FOUND, c.pos) from None
        from .lang import local_vars

        # Recursion depth is a resource like fuel; exceeding it is not a
        # property violation, just an abandoned (vacuous) run.
        if self.call_depth >= self.max_call_depth:
            raise _FuelOut()
        callee = State(
            {v: None for v in local_vars(md)},
            s.heap,  # the heap is shared with the caller frame
            set(),
        )
        callee.env[md.param] = l
        self.call_depth += 1
        try:
            callee = self.eval(md.body, callee, (owner.name, md.name))
        finally:
            self.call_depth -= 1
        s.env[c.x] = callee.env[RESULT_VAR]
        s.alloc |= callee.alloc
        return s


def _havoc(p: Program, x: str, y: str, s: State, rng: random.Random,
           max_fresh: int, run: Optional[_Run] = None) -> None:
    """Overwrite the y-reachable region with arbitrary (seeded) contents.

    Objects outside the region are untouched; region objects and fresh
    objects may point only at the region, fresh objects, or null; `x`
    receives null, a region location, or a fresh location.  The whole
    reached region loses its locally-allocated status: keeping the
    argument's own location in the set would let the call's result alias
    memory the checker still considers private.
    """
    region = sorted(reach(s.heap, s.env[y]))
    classes = sorted(p.classes)
    fresh: list[int] = []
    if classes:
        for _ in range(rng.randint(0, max_fresh)):
            l = run.fresh_loc() if run is not None else max(s.heap, default=-1) + 1
            cls = rng.choice(classes)
            s.heap[l] = Obj(cls, {f: None for f in p.fields_of(cls)})
            fresh.append(l)
    pool: list[Value] = [None] + region + fresh
    for l in region + fresh:
        for f in sorted(s.heap[l].fields):
            if l in fresh or rng.random() < 0.5:
                s.heap[l].fields[f] = rng.choice(pool)
    s.env[x] = rng.choice(pool)
    s.alloc -= set(region)


def havoc_call(p: Program, x: str, y: str, s: State, rng: random.Random,
               max_fresh: int = 3) -> State:
    """Apply the unknown-call effect to `s` in place and return it."""
    _havoc(p, x, y, s, rng, max_fresh)
    return s


def eval_command(p: Program, c: Command, s: State, fuel: int, rng: random.Random,
                 tracer: Optional[Tracer] = None, max_havoc_fresh: int = 3) -> RunOutcome:
    """Run `c` on a copy of `s`; `s` itself is never modified."""
    # The evaluator recurses through nested calls; give it room to reach
    # its own call-depth budget before the Python stack runs out.
    if sys.getrecursionlimit() < 20_000:
        sys.setrecursionlimit(20_000)
    run = _Run(p, fuel, rng, tracer, max_havoc_fresh)
    work = s.copy()
    run.seed_locations(work)
    try:
        final = run.eval(c, work, None)
    except _StuckError as e:
        return Stuck(e.reason, e.point)
    except _FuelOut:
        return FuelExhausted()
    return Final(final)


def format_heap_dump(s: State) -> str:
    """Stable text dump: locations in allocation (numeric) order."""
    lines = []
    for l in sorted(s.heap):
        o = s.heap[l]
        flds = ", ".join(
            f"{f} -> {'null' if v is None else f'l{v}'}" for f, v in o.fields.items()
        )
        lines.append(f"l{l} : {o.cls} {{ {flds} }}" if flds else f"l{l} : {o.cls} {{ }}")
    env = ", ".join(
        f"{x} -> {'null' if v is None else f'l{v}'}" for x, v in sorted(s.env.items())
    )
    lines.append(f"env: {env}")
    lines.append("alloc: " + " ".join(f"l{l}" for l in sorted(s.alloc)))
    return "\n".join(lines)
