"""Flow-sensitive checker: transfer functions, join, widening, verdicts.

The checker runs each copy method body forward from "every local is
null, the parameter is foreign memory", maintaining a type triple per
program point.  Control-flow merges go through a least-upper-bound
`join`; loops iterate with a node-collapsing `widen` until the triple
stabilizes, which bounds graphs to depth one below the variables.  A
method is accepted when its final triple fits under the graph shape of
its declared policy with the result variable on the shape's entry node.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

from .abstract import (
    BOT,
    TOP,
    TOP_OUT,
    BaseType,
    FusionMap,
    PolicyGraph,
    TypeTriple,
    gc_canonicalize,
    is_node,
    phi_translate,
    subtype,
)
from .lang import (
    RESULT_VAR,
    Assign,
    AssignNull,
    ClassDecl,
    CloneCheckError,
    Command,
    CopyCall,
    GetField,
    If,
    MethodDecl,
    New,
    OverrideViolation,
    Pos,
    Program,
    PutField,
    Return,
    Seq,
    Skip,
    UnknownCall,
    While,
    check_overriding,
    local_vars,
)

# Rejection rule names (stable identifiers used in reports).
NON_LOCAL_WRITE = "NonLocalWrite"
CALL_ON_TOP = "CallOnTop"
DEFINITE_NULL_DEREF = "DefiniteNullDeref"
UNKNOWN_FIELD = "UnknownField"
SHAPE_MISMATCH = "PolicyShapeMismatch"


class CheckRejection(CloneCheckError):
    def __init__(self, rule: str, point: Optional[Pos]):
        where = f" at {point[0]}:{point[1]}" if point else ""
        super().__init__(f"{rule}{where}")
        self.rule = rule
        self.point = point


class InternalError(CloneCheckError):
    pass


# ---------------------------------------------------------------------------
# Nondeterministic graph used by join and widen
# ---------------------------------------------------------------------------

_BOTF, _OUTF, _TOPF = 1, 2, 4
_FLAG_OF = {id(BOT): _BOTF, id(TOP_OUT): _OUTF, id(TOP): _TOPF}


def cell_strength_join(nodes: list[tuple[int, int]], strong1: frozenset[int],
                       strong2: frozenset[int]) -> bool:
    """A fused cell stays strong only as one strong node from each side."""
    side1 = [n for s, n in nodes if s == 1]
    side2 = [n for s, n in nodes if s == 2]
    return (
        len(side1) == 1
        and len(side2) == 1
        and side1[0] in strong1
        and side2[0] in strong2
    )


class _NDG:
    """Union-find over node occurrences plus per-occurrence sink flags.

    Sink values are private flag tokens, never shared identities: two
    Bot edges do not alias, so fusing through them cannot happen.
    """

    def __init__(self) -> None:
        self.parent: list[int] = []
        self.members: list[list[int]] = []  # root -> member handles
        self.nodes: list[list[tuple[int, int]]] = []  # root -> (side, node) members
        self.flags: list[int] = []  # root -> flag bits
        self.succ_raw: dict[int, list[tuple[str, int]]] = {}
        self.hfields: dict[int, set[str]] = {}  # node handle -> its edge labels
        self.item_of: dict[tuple[int, int], int] = {}

    def new_handle(self, node: Optional[tuple[int, int]], flags: int) -> int:
        h = len(self.parent)
        self.parent.append(h)
        self.members.append([h])
        self.nodes.append([node] if node else [])
        self.flags.append(flags)
        return h

    def find(self, h: int) -> int:
        while self.parent[h] != h:
            self.parent[h] = self.parent[self.parent[h]]
            h = self.parent[h]
        return h

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if ra > rb:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.members[ra].extend(self.members[rb])
        self.nodes[ra].extend(self.nodes[rb])
        self.flags[ra] |= self.flags[rb]

    def fuse(self, handles) -> None:
        handles = list(handles)
        for h in handles[1:]:
            self.union(handles[0], h)

    def add_type(self, side: int, t: TypeTriple) -> None:
        for n in t.heap:
            self.item_of[(side, n)] = self.new_handle((side, n), 0)
        for n, edges in t.heap.items():
            src = self.item_of[(side, n)]
            out = []
            for f in sorted(edges):
                out.append((f, self.value_handle(side, edges[f])))
            self.succ_raw[src] = out
            self.hfields[src] = set(edges)

    def value_handle(self, side: int, v: BaseType) -> int:
        if is_node(v):
            return self.item_of[(side, v)]
        return self.new_handle(None, _FLAG_OF[id(v)])

    def roots(self) -> list[int]:
        return sorted({self.find(h) for h in range(len(self.parent))})

    def succs(self, root: int) -> dict[str, set[int]]:
        out: dict[str, set[int]] = {}
        for h in self.members[root]:
            for f, tgt in self.succ_raw.get(h, ()):
                out.setdefault(f, set()).add(self.find(tgt))
        return out

    def grounds_to_top(self, root: int) -> bool:
        f = self.flags[root]
        return bool(f & _TOPF) or bool(self.nodes[root] and f & _OUTF)

    def normalize(self) -> None:
        """Determinize successors and spread Top over everything under it.

        When fused nodes disagree on which fields they label, the member
        without the edge knows nothing about that field, so the combined
        edge must say Top.
        """
        changed = True
        while changed:
            changed = False
            for r in self.roots():
                if self.find(r) != r:
                    continue
                if self.grounds_to_top(r):
                    if not self.flags[r] & _TOPF:
                        self.flags[r] |= _TOPF
                        changed = True
                    for tgts in self.succs(r).values():
                        for tgt in tgts:
                            if not self.flags[tgt] & _TOPF:
                                self.flags[tgt] |= _TOPF
                                changed = True
                    continue
                node_handles = [h for h in self.members[r] if h in self.hfields]
                if len(node_handles) > 1:
                    union = set().union(*(self.hfields[h] for h in node_handles))
                    succs = self.succs(r)
                    for h in node_handles:
                        for f in sorted(union - self.hfields[h]):
                            # The member without the edge knows nothing about
                            # f.  If the others only say "definitely null",
                            # the merged edge can be dropped later; anything
                            # more informative must widen to Top.
                            if all(
                                not self.nodes[tgt] and self.flags[tgt] in (0, _BOTF)
                                for tgt in succs.get(f, ())
                            ):
                                continue
                            tok = self.new_handle(None, _TOPF)
                            self.succ_raw.setdefault(h, []).append((f, tok))
                            self.hfields[h].add(f)
                            changed = True
                for _f, tgts in sorted(self.succs(r).items()):
                    if len(tgts) > 1:
                        self.fuse(sorted(tgts))
                        changed = True
                        break

    def ground(
        self,
        var_roots: dict[str, int],
        strength,
    ) -> tuple[TypeTriple, dict[int, dict[int, BaseType]]]:
        """Convert back to a deterministic triple; also report node images."""
        ground_val: dict[int, BaseType] = {}
        order: list[int] = []

        def visit(root: int) -> None:
            root = self.find(root)
            if root in ground_val:
                return
            flags = self.flags[root]
            if self.grounds_to_top(root):
                ground_val[root] = TOP
                return
            if self.nodes[root]:
                ground_val[root] = len(order) + 1
                order.append(root)
                for _f, tgts in sorted(self.succs(root).items()):
                    for tgt in sorted(tgts):
                        visit(tgt)
            elif flags & _OUTF:
                ground_val[root] = TOP_OUT
            elif flags & _BOTF:
                ground_val[root] = BOT
            else:
                raise InternalError("empty cell in nondeterministic graph")

        # Deterministic discovery from the variables in name order; callers
        # canonicalize afterwards where numbering matters.
        pending = [self.find(var_roots[x]) for x in sorted(var_roots)]
        i = 0
        while i < len(pending):
            visit(pending[i])
            i += 1

        env = {x: ground_val[self.find(var_roots[x])] for x in var_roots}
        heap: dict[int, dict[str, BaseType]] = {}
        strong: set[int] = set()
        for root in order:
            n = ground_val[root]
            assert is_node(n)
            node_handles = [h for h in self.members[root] if h in self.hfields]
            edges: dict[str, BaseType] = {}
            for f, tgts in self.succs(root).items():
                (tgt,) = tgts
                v = ground_val[self.find(tgt)]
                # An edge some member never had stays absent when the others
                # are definitely null; null satisfies the missing-field case.
                if v is BOT and any(f not in self.hfields[h] for h in node_handles):
                    continue
                edges[f] = v
            heap[n] = edges
            if strength(self.nodes[root], self.flags[root]):
                strong.add(n)
        images: dict[int, dict[int, BaseType]] = {}
        for (side, n), h in self.item_of.items():
            images.setdefault(side, {})[n] = ground_val.get(self.find(h), TOP)
        return TypeTriple(env, heap, frozenset(strong)), images


def join(t1: TypeTriple, t2: TypeTriple) -> tuple[TypeTriple, FusionMap, FusionMap]:
    """Least upper bound plus the two node-fusion witnesses."""
    assert set(t1.env) == set(t2.env), "join requires a common variable set"
    g = _NDG()
    g.add_type(1, t1)
    g.add_type(2, t2)
    var_roots: dict[str, int] = {}
    for x in sorted(t1.env):
        h1 = g.value_handle(1, t1.env[x])
        h2 = g.value_handle(2, t2.env[x])
        g.fuse([h1, h2])
        var_roots[x] = h1
    g.normalize()

    def strength(nodes: list[tuple[int, int]], flags: int) -> bool:
        return cell_strength_join(nodes, t1.strong, t2.strong)

    joined, images = g.ground(var_roots, strength)
    return joined, images.get(1, {}), images.get(2, {})


def widen(t: TypeTriple) -> TypeTriple:
    """Collapse every node lying two or more field steps from the variables.

    Such a node is fused with all its predecessors until the graph has
    depth at most one, which bounds the node count and forces loop
    iteration to terminate.  A fused singleton keeps its strength.
    """
    g = _NDG()
    g.add_type(0, t)
    var_roots = {x: g.value_handle(0, t.env[x]) for x in t.env}
    while True:
        g.normalize()
        depth: dict[int, int] = {}
        frontier = sorted({g.find(h) for h in var_roots.values()})
        for r in frontier:
            depth[r] = 0
        level = 0
        while frontier:
            nxt: list[int] = []
            for r in frontier:
                if g.grounds_to_top(r):
                    continue
                for tgts in g.succs(r).values():
                    for tgt in tgts:
                        if tgt not in depth:
                            depth[tgt] = level + 1
                            nxt.append(tgt)
            frontier = sorted(set(nxt))
            level += 1
        deep = sorted(
            r
            for r, d in depth.items()
            if d >= 2 and g.nodes[g.find(r)] and not g.grounds_to_top(g.find(r))
        )
        if not deep:
            break
        target = deep[0]
        preds = {
            r
            for r in g.roots()
            if any(target in tgts for tgts in g.succs(r).values())
        }
        g.fuse([target] + sorted(preds))

    def strength(nodes: list[tuple[int, int]], flags: int) -> bool:
        return len(nodes) == 1 and nodes[0][1] in t.strong

    out, _images = g.ground(var_roots, strength)
    return out


# ---------------------------------------------------------------------------
# Transfer functions
# ---------------------------------------------------------------------------


def kill_succ(t: TypeTriple, n: int) -> TypeTriple:
    """Forget everything an escaping node could let a callee reach or leak.

    The node itself and all nodes reachable from it are dropped; every
    variable or surviving edge that referenced a dropped node degrades
    to Top.  Keeping the entry node would assert that no new path to its
    cell can appear, which a callee can defeat by storing its argument
    in the structure it returns.
    """
    assert n in t.heap
    killed = {n}
    stack = [n]
    while stack:
        m = stack.pop()
        for w in t.heap[m].values():
            if is_node(w) and w not in killed:
                killed.add(w)
                stack.append(w)

    def scrub(v: BaseType) -> BaseType:
        return TOP if is_node(v) and v in killed else v

    env = {x: scrub(v) for x, v in t.env.items()}
    heap = {
        m: {f: scrub(w) for f, w in edges.items()}
        for m, edges in t.heap.items()
        if m not in killed
    }
    return TypeTriple(env, heap, t.strong - killed)


@dataclass
class TypeTrace:
    """Per-point triples recorded on the converged pass over a body."""

    before: dict[Pos, TypeTriple] = dc_field(default_factory=dict)
    after: dict[Pos, TypeTriple] = dc_field(default_factory=dict)
    invariants: dict[Pos, TypeTriple] = dc_field(default_factory=dict)
    body_end: dict[Pos, TypeTriple] = dc_field(default_factory=dict)
    iterations: dict[Pos, int] = dc_field(default_factory=dict)


def _strong_update(t: TypeTriple, n: int, f: str, v: BaseType) -> TypeTriple:
    heap = dict(t.heap)
    heap[n] = {**heap[n], f: v}
    return TypeTriple(t.env, heap, t.strong)


def _add_policy_graph(t: TypeTriple, x: str, pg: PolicyGraph) -> TypeTriple:
    offset = max(t.heap, default=0)
    heap = dict(t.heap)
    for n, edges in pg.heap.items():
        heap[n + offset] = {
            f: (w + offset if is_node(w) else w) for f, w in edges.items()
        }
    env = {**t.env, x: pg.entry + offset}
    return TypeTriple(env, heap, t.strong | {pg.entry + offset})


def transfer(p: Program, c: Command, t: TypeTriple,
             trace: Optional[TypeTrace] = None) -> TypeTriple:
    """One step of the type system; raises CheckRejection on refused code."""
    # Seq shares its position with its first statement; never record it.
    record = trace is not None and c.pos is not None and not isinstance(c, (Seq, Skip))
    if record:
        trace.before[c.pos] = gc_canonicalize(t)
    out = _transfer(p, c, t, trace)
    if record:
        trace.after[c.pos] = gc_canonicalize(out)
    return out


def _transfer(p: Program, c: Command, t: TypeTriple,
              trace: Optional[TypeTrace]) -> TypeTriple:
    if isinstance(c, Skip):
        return t
    if isinstance(c, Seq):
        return transfer(p, c.second, transfer(p, c.first, t, trace), trace)
    if isinstance(c, If):
        a = transfer(p, c.then, t, trace)
        b = transfer(p, c.orelse, t, trace)
        joined, _, _ = join(a, b)
        return joined
    if isinstance(c, While):
        return loop_fixpoint(p, c.body, t, trace, c.pos)

    if isinstance(c, Assign):
        return TypeTriple({**t.env, c.x: t.env[c.y]}, t.heap, t.strong)
    if isinstance(c, AssignNull):
        return TypeTriple({**t.env, c.x: BOT}, t.heap, t.strong)
    if isinstance(c, Return):
        return TypeTriple({**t.env, RESULT_VAR: t.env[c.x]}, t.heap, t.strong)

    if isinstance(c, New):
        n = t.fresh_node()
        heap = dict(t.heap)
        heap[n] = {f: BOT for f in p.fields_of(c.cls)}
        return TypeTriple({**t.env, c.x: n}, heap, t.strong | {n})

    if isinstance(c, GetField):
        g = t.env[c.y]
        if g is BOT:
            raise CheckRejection(DEFINITE_NULL_DEREF, c.pos)
        if g is TOP or g is TOP_OUT:
            return TypeTriple({**t.env, c.x: g}, t.heap, t.strong)
        v = t.heap[g].get(c.f)
        if v is None:
            # The node was built without this field; the value is untracked.
            if c.f not in p.field_universe():
                raise CheckRejection(UNKNOWN_FIELD, c.pos)
            v = TOP
        return TypeTriple({**t.env, c.x: v}, t.heap, t.strong)

    if isinstance(c, PutField):
        g = t.env[c.x]
        if g is BOT:
            raise CheckRejection(DEFINITE_NULL_DEREF, c.pos)
        if g is TOP or g is TOP_OUT:
            raise CheckRejection(NON_LOCAL_WRITE, c.pos)
        if g in t.strong:
            return _strong_update(t, g, c.f, t.env[c.y])
        # Weak update: the cell may not be the one written, keep both.
        joined, _, _ = join(t, _strong_update(t, g, c.f, t.env[c.y]))
        return joined

    if isinstance(c, CopyCall):
        g = t.env[c.y]
        if g is TOP:
            raise CheckRejection(CALL_ON_TOP, c.pos)
        if is_node(g):
            t = kill_succ(t, g)
        pg = phi_translate(p, c.policy, c.cls)
        return _add_policy_graph(t, c.x, pg)

    if isinstance(c, UnknownCall):
        g = t.env[c.y]
        if g is TOP:
            raise CheckRejection(CALL_ON_TOP, c.pos)
        if is_node(g):
            t = kill_succ(t, g)
        return TypeTriple({**t.env, c.x: TOP_OUT}, t.heap, t.strong)

    raise TypeError(f"no transfer for {type(c).__name__}")


def loop_fixpoint(p: Program, body: Command, t0: TypeTriple,
                  trace: Optional[TypeTrace] = None,
                  pos: Optional[Pos] = None) -> TypeTriple:
    """Iterate join-then-widen until the loop head stabilizes."""
    cap = 2 * len(t0.env) + 8
    cur = gc_canonicalize(t0)
    iterations = 0
    while True:
        iterations += 1
        if iterations > cap:
            raise InternalError(f"loop fixpoint exceeded {cap} iterations")
        stepped = transfer(p, body, cur, None)
        joined, _, _ = join(cur, stepped)
        nxt = gc_canonicalize(widen(gc_canonicalize(joined)))
        if nxt == cur:
            break
        cur = nxt
    # One more pass over the body to record stable per-point triples and
    # to double-check the invariant really absorbs the body.
    end = transfer(p, body, cur, trace)
    if subtype(end, cur) is None:
        raise InternalError("loop invariant does not absorb its body")
    if trace is not None and pos is not None:
        trace.invariants[pos] = cur
        trace.body_end[pos] = gc_canonicalize(end)
        trace.iterations[pos] = iterations
    return cur


# ---------------------------------------------------------------------------
# Method and program verdicts
# ---------------------------------------------------------------------------


@dataclass
class MethodVerdict:
    class_name: str
    method: str
    policy: str
    accepted: bool
    reason: Optional[tuple[str, Optional[Pos]]] = None
    final_type: Optional[TypeTriple] = None
    trace: Optional[TypeTrace] = None


@dataclass
class ProgramReport:
    verdicts: list[MethodVerdict]
    overriding: list[OverrideViolation]

    @property
    def ok(self) -> bool:
        return not self.overriding and all(v.accepted for v in self.verdicts)


def _forced_result_map(t: TypeTriple, pg: PolicyGraph) -> Optional[FusionMap]:
    """Force the result subgraph of `t` onto the policy shape."""
    probe = TypeTriple({RESULT_VAR: t.env[RESULT_VAR]}, t.heap, frozenset())
    target = TypeTriple({RESULT_VAR: pg.entry}, pg.heap, frozenset())
    return subtype(probe, target)


def check_method(p: Program, cl: ClassDecl, md: MethodDecl,
                 want_trace: bool = False) -> MethodVerdict:
    """Type the body from scratch and match the result against the policy."""
    names = sorted(local_vars(md))
    env: dict[str, BaseType] = {v: BOT for v in names}
    env[md.param] = TOP_OUT
    t0 = TypeTriple(env, {}, frozenset())
    trace = TypeTrace() if want_trace else None
    try:
        t_final = transfer(p, md.body, t0, trace)
    except CheckRejection as r:
        return MethodVerdict(cl.name, md.name, md.policy, False, (r.rule, r.point), None, trace)

    pg = phi_translate(p, md.policy, cl.name)
    forced = _forced_result_map(t_final, pg)
    if forced is None:
        return MethodVerdict(
            cl.name, md.name, md.policy, False, (SHAPE_MISMATCH, None),
            gc_canonicalize(t_final), trace,
        )
    gamma2: dict[str, BaseType] = {}
    for z, v in t_final.env.items():
        if z == RESULT_VAR:
            gamma2[z] = pg.entry
        elif is_node(v) and v in forced:
            gamma2[z] = forced[v]
        elif v is BOT:
            gamma2[z] = BOT
        else:
            gamma2[z] = TOP
    shape = TypeTriple(gamma2, pg.heap, pg.strong_set())
    ok = subtype(t_final, shape) is not None
    return MethodVerdict(
        cl.name, md.name, md.policy, ok,
        None if ok else (SHAPE_MISMATCH, None),
        gc_canonicalize(t_final), trace,
    )


def check_program(p: Program, want_trace: bool = False) -> ProgramReport:
    overriding = check_overriding(p)
    verdicts = [check_method(p, cl, md, want_trace) for cl, md in p.method_items()]
    return ProgramReport(verdicts, overriding)
