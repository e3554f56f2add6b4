"""Access paths and the dynamic copy-policy oracle.

A copy result satisfies a policy when no location reached from it along
deep-field chains is reachable from any other caller variable.  This
module evaluates that statement directly on concrete states; it is the
executable ground truth the static checker is tested against.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Optional

from . import interp
from .interp import Final, FuelExhausted, Obj, State, Stuck, Value, reach
from .lang import CopyCall, Policy, Program

#: Distinguishes "evaluates to null" from "no value at all".
ABSENT = object()


@dataclass(frozen=True)
class AccessPath:
    root: str
    fields: tuple[str, ...] = ()

    def __str__(self) -> str:
        return ".".join((self.root,) + self.fields)

    @classmethod
    def parse(cls, text: str) -> "AccessPath":
        root, *fields = text.split(".")
        return cls(root, tuple(fields))


def eval_path(env: dict[str, Value], heap: dict[int, Obj], path: AccessPath):
    """Value of `path`, or ABSENT once an intermediate step is null/missing."""
    if path.root not in env:
        return ABSENT
    v = env[path.root]
    for f in path.fields:
        if v is None:
            return ABSENT
        obj = heap[v]
        if f not in obj.fields:
            return ABSENT
        v = obj.fields[f]
    return v


def path_in_policy(path: AccessPath, policy: Policy, policy_map: dict[str, Policy]) -> bool:
    """Does the field chain follow deep entries all the way down?

    The bare root always qualifies.  Each step must match a deep entry of
    the current policy, which then hands over to the entry's policy.
    """
    current = [policy]
    for f in path.fields:
        next_ids = {pid for pol in current for (pid, g) in pol.entries if g == f}
        if not next_ids:
            return False
        current = [policy_map[pid] for pid in sorted(next_ids)]
    return True


def deep_targets(env: dict[str, Value], heap: dict[int, Obj], x: str,
                 policy: Policy, policy_map: dict[str, Policy]) -> set[int]:
    """Locations of all deep paths rooted at `x` (including x's own target).

    Computed as a fixed point over (location, policy) pairs; walks in that
    product graph are exactly the deep path chains.
    """
    start = env.get(x)
    if start is None:
        return set()
    seen: set[tuple[int, Policy]] = set()
    stack: list[tuple[int, Policy]] = [(start, policy)]
    targets: set[int] = set()
    while stack:
        l, pol = stack.pop()
        if (l, pol) in seen:
            continue
        seen.add((l, pol))
        targets.add(l)
        for pid, f in pol.entries:
            v = heap[l].fields.get(f)
            if v is not None:
                stack.append((v, policy_map[pid]))
    return targets


def policy_holds(env: dict[str, Value], heap: dict[int, Obj], x: str,
                 policy: Policy, policy_map: dict[str, Policy]) -> bool:
    """True iff no deep-path target of `x` is reachable from another variable."""
    deep = deep_targets(env, heap, x, policy, policy_map)
    if not deep:
        return True
    for y, v in env.items():
        if y == x:
            continue
        if deep & reach(heap, v):
            return False
    return True


class PolicyVerdict(enum.Enum):
    HOLDS = "holds"
    VIOLATION = "violation"
    VACUOUS = "vacuous"


@dataclass
class SecureCallResult:
    verdict: PolicyVerdict
    outcome: interp.RunOutcome

    @property
    def final_state(self) -> Optional[State]:
        return self.outcome.state if isinstance(self.outcome, Final) else None


def secure_call_check(p: Program, caller: State, x: str, cls: str, policy_id: str,
                      method: str, y: str, rng: random.Random, fuel: int = 10_000,
                      max_havoc_fresh: int = 3) -> SecureCallResult:
    """Run one copy call and test the declared policy on the final state.

    Stuck or out-of-fuel runs are vacuous: the guarantee quantifies over
    completed calls only.
    """
    call = CopyCall(x, cls, method, policy_id, y)
    outcome = interp.eval_command(p, call, caller, fuel, rng, max_havoc_fresh=max_havoc_fresh)
    if isinstance(outcome, (Stuck, FuelExhausted)):
        return SecureCallResult(PolicyVerdict.VACUOUS, outcome)
    assert isinstance(outcome, Final)
    s = outcome.state
    ok = policy_holds(s.env, s.heap, x, p.policy(policy_id), p.policy_map)
    return SecureCallResult(PolicyVerdict.HOLDS if ok else PolicyVerdict.VIOLATION, outcome)
