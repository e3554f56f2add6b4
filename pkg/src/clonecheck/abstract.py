"""Graph-shaped abstract domain for tracking locally allocated memory.

A type is a triple: a variable environment, a deterministic labeled
graph over abstract nodes, and the subset of nodes that denote exactly
one concrete cell ("strong" nodes, eligible for destructive updates).
Besides nodes, a value can be abstracted as

* ``Bot``, definitely null,
* ``TopOut``, which cannot reach memory the current method allocated,
* ``Top``, no information at all.

``Top`` and ``TopOut`` absorb field steps: once a path leaves the
tracked region it never re-enters it.  The module provides the policy
translation into such graphs, abstract path evaluation, the sub-typing
decision procedure with its node-fusion witness, canonicalization, and
the semantic interpretation check used by the test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .interp import State, Value, reach
from .lang import Policy, Program, UnknownPolicy


class _Sink:
    """Singleton non-node base types."""

    __slots__ = ("label",)

    def __init__(self, label: str):
        self.label = label

    def __repr__(self) -> str:
        return self.label


BOT = _Sink("Bot")
TOP_OUT = _Sink("TopOut")
TOP = _Sink("Top")

BaseType = Union[int, _Sink]
FusionMap = dict[int, BaseType]  # node -> node or TOP


def is_node(t: BaseType) -> bool:
    return isinstance(t, int)


@dataclass
class TypeTriple:
    env: dict[str, BaseType]
    heap: dict[int, dict[str, BaseType]]
    strong: frozenset[int] = frozenset()

    def key(self):
        """Hashable structural key (meaningful on canonical triples)."""
        return (
            tuple(sorted((x, _bt_key(v)) for x, v in self.env.items())),
            tuple(
                sorted(
                    (n, tuple(sorted((f, _bt_key(w)) for f, w in edges.items())))
                    for n, edges in self.heap.items()
                )
            ),
            tuple(sorted(self.strong)),
        )

    def copy(self) -> "TypeTriple":
        return TypeTriple(dict(self.env), {n: dict(e) for n, e in self.heap.items()}, self.strong)

    def validate(self) -> None:
        assert self.strong <= set(self.heap), "strong nodes must be in the graph"
        for v in self.env.values():
            assert not is_node(v) or v in self.heap, f"dangling env node {v}"
        for edges in self.heap.values():
            for w in edges.values():
                assert not is_node(w) or w in self.heap, f"dangling edge target {w}"

    def fresh_node(self) -> int:
        return max(self.heap, default=0) + 1


def _bt_key(v: BaseType):
    return v if is_node(v) else v.label


# ---------------------------------------------------------------------------
# Policy translation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyGraph:
    """Unfolded policy shape: a strong entry node over the policy graph.

    The entry node is strong (a copy result is one fresh cell); every
    field of the governing class that carries no deep obligation gets an
    explicit edge to Top.
    """

    entry: int
    heap: dict[int, dict[str, BaseType]]

    def strong_set(self) -> frozenset[int]:
        return frozenset({self.entry})


def phi_translate(p: Program, policy: Union[str, Policy], class_name: str) -> PolicyGraph:
    """Translate a policy into its graph shape for results of `class_name`."""
    if isinstance(policy, str):
        if policy not in p.policy_map:
            raise UnknownPolicy(f"unknown policy {policy!r}")
        tau = p.policy_map[policy]
    else:
        tau = policy

    # Reachable policy ids, numbered in breadth-first discovery order.
    node_of: dict[str, int] = {}
    queue: list[str] = []
    for pid, _f in sorted(tau.entries):
        if pid not in node_of:
            node_of[pid] = len(node_of) + 2
            queue.append(pid)
    qi = 0
    while qi < len(queue):
        pid = queue[qi]
        qi += 1
        for pid2, _f in sorted(p.policy(pid).entries):
            if pid2 not in node_of:
                node_of[pid2] = len(node_of) + 2
                queue.append(pid2)

    def edges_for(pol: Policy, fields: Iterable[str]) -> dict[str, BaseType]:
        out: dict[str, BaseType] = {}
        deep = pol.deep_fields()
        for pid, f in sorted(pol.entries):
            out[f] = node_of[pid]
        for f in fields:
            if f not in deep:
                out[f] = TOP
        return out

    heap: dict[int, dict[str, BaseType]] = {1: edges_for(tau, p.fields_of(class_name))}
    for pid, n in node_of.items():
        heap[n] = edges_for(p.policy(pid), p.fields_of(p.policy_owner(pid)))
    return PolicyGraph(1, heap)


# ---------------------------------------------------------------------------
# Abstract path evaluation
# ---------------------------------------------------------------------------


def abstract_eval_path(t: TypeTriple, path) -> Optional[BaseType]:
    """Evaluate an access path in the graph; None when undefined."""
    from .paths import AccessPath

    if isinstance(path, str):
        path = AccessPath.parse(path)
    if path.root not in t.env:
        return None
    v: BaseType = t.env[path.root]
    for f in path.fields:
        if v is TOP or v is TOP_OUT:
            continue  # sinks absorb every further step
        if v is BOT:
            return None
        nxt = t.heap[v].get(f)
        if nxt is None:
            return None
        v = nxt
    return v


# ---------------------------------------------------------------------------
# Sub-typing
# ---------------------------------------------------------------------------


def subtype(t1: TypeTriple, t2: TypeTriple) -> Optional[FusionMap]:
    """Decide ``t1 <= t2`` and return the witnessing node fusion, else None.

    Both graphs are deterministic, so a lockstep walk from each variable
    forces the image of every constrained node; the walk fails on a
    conflicting forced image, on a path defined on the small side at a
    non-Bot value but undefined on the large side, and on value shapes
    with no ordering rule (a node may only map to a node or Top, TopOut
    only to itself or Top).  Unconstrained nodes map to Top.  Finally
    every strong node of `t2` needs exactly one preimage, itself strong.
    """
    sigma: FusionMap = {}
    seen: set[tuple[int, BaseType]] = set()
    work: list[tuple[int, BaseType]] = []

    def push(a: Optional[BaseType], b: Optional[BaseType]) -> bool:
        if a is None:
            return True  # no side-1 path here, no obligation
        if b is None:
            return a is BOT  # null never exercises the missing path
        if a is BOT:
            return True
        if a is TOP:
            return b is TOP
        if a is TOP_OUT:
            return b is TOP or b is TOP_OUT
        # side-1 node: image is forced
        if is_node(b) or b is TOP:
            prev = sigma.get(a)
            if prev is None:
                sigma[a] = b
            elif prev != b:
                return False
            if (a, b) not in seen:
                seen.add((a, b))
                work.append((a, b))
            return True
        return False

    for x, a in t1.env.items():
        if not push(a, t2.env.get(x)):
            return None
    while work:
        n, b = work.pop()
        edges1 = t1.heap[n]
        if b is TOP:
            for a2 in edges1.values():
                if not push(a2, TOP):
                    return None
            continue
        edges2 = t2.heap[b]
        for f in sorted(set(edges1) | set(edges2)):
            a2 = edges1.get(f)
            # A missing edge carries no information, so the image may only
            # say Top about that field.
            if a2 is None:
                if edges2[f] is not TOP:
                    return None
                continue
            if not push(a2, edges2.get(f)):
                return None
    for n in t1.heap:
        sigma.setdefault(n, TOP)
    for n2 in t2.strong:
        pre = [n for n in t1.heap if sigma[n] == n2]
        if len(pre) != 1 or pre[0] not in t1.strong:
            return None
    return sigma


def compose_fusion(s1: FusionMap, s2: FusionMap) -> FusionMap:
    return {n: (s2[v] if is_node(v) else TOP) for n, v in s1.items()}


# ---------------------------------------------------------------------------
# Canonicalization and equivalence
# ---------------------------------------------------------------------------


def gc_canonicalize(t: TypeTriple) -> TypeTriple:
    """Drop unreachable nodes and renumber by breadth-first traversal.

    Variables are visited in name order and fields in name order, so two
    triples describe the same shape exactly when their canonical forms
    are equal.
    """
    order: dict[int, int] = {}
    queue: list[int] = []

    def visit(v: BaseType) -> None:
        if is_node(v) and v not in order:
            order[v] = len(order) + 1
            queue.append(v)

    for x in sorted(t.env):
        visit(t.env[x])
    qi = 0
    while qi < len(queue):
        n = queue[qi]
        qi += 1
        edges = t.heap[n]
        for f in sorted(edges):
            visit(edges[f])

    def rename(v: BaseType) -> BaseType:
        return order[v] if is_node(v) else v

    env = {x: rename(t.env[x]) for x in t.env}
    heap = {order[n]: {f: rename(w) for f, w in t.heap[n].items()} for n in queue}
    strong = frozenset(order[n] for n in t.strong if n in order)
    return TypeTriple(env, heap, strong)


def type_equiv(t1: TypeTriple, t2: TypeTriple) -> bool:
    return gc_canonicalize(t1) == gc_canonicalize(t2)


def format_type(t: TypeTriple, canonical: bool = True) -> str:
    """Stable one-line dump, e.g.
    ``type { env { x -> n1; } heap { n1.f -> Top; } strong { n1 } }``."""
    if canonical:
        t = gc_canonicalize(t)

    def bt(v: BaseType) -> str:
        return f"n{v}" if is_node(v) else v.label

    env = " ".join(f"{x} -> {bt(t.env[x])};" for x in sorted(t.env))
    heap = " ".join(
        f"n{n}.{f} -> {bt(t.heap[n][f])};"
        for n in sorted(t.heap)
        for f in sorted(t.heap[n])
    )
    strong = " ".join(f"n{n}" for n in sorted(t.strong))

    def sect(name: str, body: str) -> str:
        return f"{name} {{ {body} }}" if body else f"{name} {{ }}"

    return f"type {{ {sect('env', env)} {sect('heap', heap)} {sect('strong', strong)} }}"


# ---------------------------------------------------------------------------
# Type interpretation (semantic oracle)
# ---------------------------------------------------------------------------

_OTHER = object()  # tag: concretely reachable, abstractly Top or undefined


def interp_check(s: State, t: TypeTriple) -> bool:
    """Does the concrete state satisfy the triple?

    Walks the finite product of concrete and abstract path evaluation.
    A location described by a node must be locally allocated and must be
    described by that node along *every* concrete path reaching it; a
    TopOut location must not reach the locally allocated set; Bot admits
    only null; strong nodes must describe at most one location.
    """
    heap, alloc = s.heap, s.alloc
    node_pairs: dict[int, set[int]] = {}
    other_locs: set[int] = set()
    seen: set[tuple[int, object]] = set()
    work: list[tuple[Value, object]] = []

    def tag_of(v: Optional[BaseType]) -> object:
        if v is None or v is TOP:
            return _OTHER
        return v

    for x, a in t.env.items():
        if x not in s.env:
            return False
        work.append((s.env[x], tag_of(a)))
    for z in s.env:
        if z not in t.env:
            work.append((s.env[z], _OTHER))

    while work:
        v, tag = work.pop()
        if v is None:
            continue
        if tag is BOT:
            return False
        if tag is TOP_OUT:
            if (v, "out") in seen:
                continue
            seen.add((v, "out"))
            if reach(heap, v) & alloc:
                return False
            continue  # deeper checks are subsumed by the reach test
        if tag is _OTHER:
            if (v, "other") in seen:
                continue
            seen.add((v, "other"))
            other_locs.add(v)
            for w in heap[v].fields.values():
                work.append((w, _OTHER))
            continue
        # node tag
        n = tag
        if (v, n) in seen:
            continue
        seen.add((v, n))
        if v not in alloc or n not in t.heap:
            return False
        node_pairs.setdefault(v, set()).add(n)
        edges = t.heap[n]
        for f, w in heap[v].fields.items():
            work.append((w, tag_of(edges.get(f))))

    for l, ns in node_pairs.items():
        if len(ns) > 1 or l in other_locs:
            return False
    for n in t.strong:
        if len([l for l, ns in node_pairs.items() if n in ns]) > 1:
            return False
    return True
