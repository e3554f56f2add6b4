"""Shared generators and independent oracles for the test suite.

The oracles here deliberately re-derive results from first principles
(path enumeration, exhaustive fusion-map search) so they share no code
with the implementation paths they check.
"""

from __future__ import annotations

import itertools
import random
from pathlib import Path

from clonecheck.abstract import BOT, TOP, TOP_OUT, TypeTriple, gc_canonicalize, is_node
from clonecheck.interp import Obj, State
from clonecheck.lang import Policy, Program, resolve_program
from clonecheck.parser import parse_text
from clonecheck.paths import AccessPath, path_in_policy

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def load_corpus(name: str) -> Program:
    text = (CORPUS / f"{name}.cp").read_text(encoding="utf-8")
    return resolve_program(parse_text(text, str(CORPUS / f"{name}.cp")))


def program_from(text: str) -> Program:
    return resolve_program(parse_text(text))


# ---------------------------------------------------------------------------
# Declarative sub-typing oracle: try every fusion candidate, check the
# three conditions by walking the path product.
# ---------------------------------------------------------------------------


def _value_le(a, b, sigma) -> bool:
    if a is BOT:
        return True
    if is_node(a):
        return sigma[a] == b
    if a is TOP_OUT:
        return b is TOP_OUT or b is TOP
    return b is TOP  # a is TOP


def _st2_holds(t1: TypeTriple, t2: TypeTriple, sigma) -> bool:
    seen = set()
    work = [(t1.env[x], t2.env.get(x)) for x in t1.env]
    while work:
        a, b = work.pop()
        key = (a if is_node(a) else a.label, b if is_node(b) else getattr(b, "label", None))
        if key in seen:
            continue
        seen.add(key)
        if b is None:
            if a is BOT:
                continue
            return False
        if not _value_le(a, b, sigma):
            return False
        if is_node(a):
            if b is TOP:
                for a2 in t1.heap[a].values():
                    work.append((a2, TOP))
                continue
            edges1, edges2 = t1.heap[a], t2.heap[b]
            for f in set(edges1) | set(edges2):
                if f not in edges1:
                    # the small side says nothing about f, the big side
                    # must not claim more than Top there
                    if edges2[f] is not TOP:
                        return False
                    continue
                work.append((edges1[f], edges2.get(f)))
    return True


def _st3_holds(t1: TypeTriple, t2: TypeTriple, sigma) -> bool:
    for n2 in t2.strong:
        pre = [n for n in t1.heap if sigma[n] == n2]
        if len(pre) != 1 or pre[0] not in t1.strong:
            return False
    return True


def declarative_subtype(t1: TypeTriple, t2: TypeTriple) -> bool:
    """Exhaustive fusion search; exponential, for small graphs only."""
    nodes1 = sorted(t1.heap)
    options = sorted(t2.heap) + [TOP]
    for images in itertools.product(options, repeat=len(nodes1)):
        sigma = dict(zip(nodes1, images))
        if _st2_holds(t1, t2, sigma) and _st3_holds(t1, t2, sigma):
            return True
    return False


# ---------------------------------------------------------------------------
# Exhaustive enumeration of small canonical triples
# ---------------------------------------------------------------------------


def enumerate_canonical_types(var_names=("x", "y"), field_names=("f",), max_nodes=1):
    """Every canonical triple over the given small universe."""
    out = []
    seen = set()
    sinks = [BOT, TOP_OUT, TOP]
    for k in range(max_nodes + 1):
        nodes = list(range(1, k + 1))
        base = sinks + nodes
        slots = [(n, f) for n in nodes for f in field_names]
        for env_vals in itertools.product(base, repeat=len(var_names)):
            env = dict(zip(var_names, env_vals))
            for targets in itertools.product([None] + base, repeat=len(slots)):
                heap = {n: {} for n in nodes}
                for (n, f), tgt in zip(slots, targets):
                    if tgt is not None:
                        heap[n][f] = tgt
                for theta in itertools.product([False, True], repeat=k):
                    strong = frozenset(n for n, b in zip(nodes, theta) if b)
                    t = TypeTriple(dict(env), {n: dict(e) for n, e in heap.items()}, strong)
                    c = gc_canonicalize(t)
                    if c != t:
                        continue
                    key = c.key()
                    if key not in seen:
                        seen.add(key)
                        out.append(t)
    return out


def random_type(rng: random.Random, var_names=("x", "y", "z"), field_names=("f", "g"),
                max_nodes=4) -> TypeTriple:
    k = rng.randint(0, max_nodes)
    nodes = list(range(1, k + 1))
    base = [BOT, TOP_OUT, TOP] + nodes
    env = {x: rng.choice(base) for x in var_names}
    heap = {}
    for n in nodes:
        heap[n] = {}
        for f in field_names:
            if rng.random() < 0.7:
                heap[n][f] = rng.choice(base)
    strong = frozenset(n for n in nodes if rng.random() < 0.5)
    return TypeTriple(env, heap, strong)


# ---------------------------------------------------------------------------
# Concrete state generators and the brute-force policy oracle
# ---------------------------------------------------------------------------

TWO_CLASS_SOURCE = """
class P {
  fields: f, g;
  policy a { deep(a) f; }
  policy b { deep(a) f; deep(b) g; }
  policy none { }
}
class Q extends P {
  fields: h;
  policy c { deep(P.a) h; }
}
"""


def two_class_program() -> Program:
    return program_from(TWO_CLASS_SOURCE)


def random_state(p: Program, rng: random.Random, max_locs=6, var_names=("x", "y", "z"),
                 alloc_fraction=0.5) -> State:
    k = rng.randint(0, max_locs)
    s = State()
    classes = sorted(p.classes)
    for l in range(k):
        cls = rng.choice(classes)
        s.heap[l] = Obj(cls, {f: None for f in p.fields_of(cls)})
    locs = sorted(s.heap)
    for l in locs:
        for f in s.heap[l].fields:
            if rng.random() < 0.7:
                s.heap[l].fields[f] = rng.choice(locs)
    for x in var_names:
        s.env[x] = rng.choice(locs) if locs and rng.random() < 0.8 else None
    s.alloc = {l for l in locs if rng.random() < alloc_fraction}
    return s


def all_paths(heap, v, max_len):
    """Every (field tuple, value) pair along paths of up to max_len steps."""
    out = [((), v)]
    frontier = [((), v)]
    for _ in range(max_len):
        nxt = []
        for fs, val in frontier:
            if val is None:
                continue
            for f, w in heap[val].fields.items():
                nxt.append((fs + (f,), w))
        out.extend(nxt)
        frontier = nxt
    return out


def brute_policy_holds(env, heap, x, policy: Policy, policy_map, max_len=None) -> bool:
    """Enumerate every pair of paths instead of computing reachable sets."""
    if max_len is None:
        max_len = len(heap) + 1
    deep: set[int] = set()
    others: set[int] = set()
    for root, v in env.items():
        for fs, val in all_paths(heap, v, max_len):
            if val is None:
                continue
            if root == x:
                if path_in_policy(AccessPath(root, fs), policy, policy_map):
                    deep.add(val)
            else:
                others.add(val)
    return not (deep & others)


# ---------------------------------------------------------------------------
# Random single-method programs for soundness fuzzing
# ---------------------------------------------------------------------------


def random_method_program(rng: random.Random, n_stmts=6) -> str:
    """One random copy method next to an always-accepted helper."""
    vars_ = ["r", "s", "t", "u"]

    def var():
        return rng.choice(vars_)

    def rvar():
        return rng.choice(vars_ + ["x"])

    def stmt(depth: int) -> str:
        roll = rng.random()
        if depth > 0 and roll < 0.08:
            inner = " ".join(stmt(depth - 1) for _ in range(rng.randint(1, 2)))
            inner2 = " ".join(stmt(depth - 1) for _ in range(rng.randint(0, 2)))
            return f"if {{ {inner} }} else {{ {inner2} }}"
        if depth > 0 and roll < 0.16:
            inner = " ".join(stmt(depth - 1) for _ in range(rng.randint(1, 2)))
            return f"while {{ {inner} }}"
        kind = rng.randint(0, 7)
        if kind == 0:
            return f"{var()} := new A;"
        if kind == 1:
            return f"{var()} := {rvar()};"
        if kind == 2:
            return f"{var()} := null;"
        if kind == 3:
            return f"{var()} := {rvar()}.{rng.choice(['f', 'g'])};"
        if kind == 4:
            return f"{var()}.{rng.choice(['f', 'g'])} := {rvar()};"
        if kind == 5:
            return f"{var()} := call A::sh[none]({rvar()});"
        if kind == 6:
            return f"{var()} := call A::m[deepf]({rvar()});"
        return f"{var()} := unknown({rvar()});"

    body = " ".join(stmt(1) for _ in range(n_stmts))
    ret = rng.choice(vars_)
    return f"""
class A {{
  fields: f, g;
  policy deepf {{ deep(deepf) f; }}
  policy none {{ }}
  copy(none) sh(x) {{
    w := new A;
    return w;
  }}
  copy(deepf) m(x) {{
    {body}
    return {ret};
  }}
}}
"""
