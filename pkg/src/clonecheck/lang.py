"""Object language model: classes, fields, copy policies, commands.

A program is a sequence of classes.  Each class declares fields, named
copy policies (sets of deep-field obligations), and copy methods written
in a small command language.  Resolution turns a parsed tree into an
immutable :class:`Program` in which every policy reference is qualified
as ``Class.policy`` and the structural well-formedness rules hold.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

#: Reserved variable that receives the method result; not writable from source.
RESULT_VAR = "ret"

Pos = tuple[int, int]


class CloneCheckError(Exception):
    pass


class ResolveError(CloneCheckError):
    pass


class DuplicateClass(ResolveError):
    pass


class CyclicExtends(ResolveError):
    pass


class UnknownClass(ResolveError):
    pass


class UnknownField(ResolveError):
    pass


class UnknownPolicy(ResolveError):
    pass


class MethodNotFound(ResolveError):
    pass


class PolicyMismatch(ResolveError):
    pass


class DuplicateName(ResolveError):
    pass


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


class Command:
    """Base marker for statements; concrete forms are frozen dataclasses."""

    __slots__ = ()


@dataclass(frozen=True)
class Skip(Command):
    """Empty block; produced only by the parser for `{ }`."""

    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class Assign(Command):
    x: str
    y: str
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class AssignNull(Command):
    x: str
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class GetField(Command):
    x: str
    y: str
    f: str
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class PutField(Command):
    x: str
    f: str
    y: str
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class New(Command):
    x: str
    cls: str
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class CopyCall(Command):
    """``x := call cls::method[policy](y)``: virtual call to a copy method."""

    x: str
    cls: str
    method: str
    policy: str
    y: str
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class UnknownCall(Command):
    """``x := unknown(y)``: call to unanalyzed code; may scramble y's region."""

    x: str
    y: str
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class Return(Command):
    x: str
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class Seq(Command):
    first: Command
    second: Command
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class If(Command):
    """Nondeterministic choice; the language has no boolean conditions."""

    then: Command
    orelse: Command
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class While(Command):
    """Nondeterministic iteration (zero or more runs of the body)."""

    body: Command
    pos: Optional[Pos] = field(default=None, compare=False)


ATOMIC_COMMANDS = (
    Assign,
    AssignNull,
    GetField,
    PutField,
    New,
    CopyCall,
    UnknownCall,
    Return,
)


def iter_commands(c: Command) -> Iterator[Command]:
    """Yield every command node in the tree, preorder."""
    yield c
    if isinstance(c, Seq):
        yield from iter_commands(c.first)
        yield from iter_commands(c.second)
    elif isinstance(c, If):
        yield from iter_commands(c.then)
        yield from iter_commands(c.orelse)
    elif isinstance(c, While):
        yield from iter_commands(c.body)


def command_vars(c: Command) -> set[str]:
    out: set[str] = set()
    for node in iter_commands(c):
        for attr in ("x", "y"):
            v = getattr(node, attr, None)
            if v is not None:
                out.add(v)
    return out


# ---------------------------------------------------------------------------
# Declarations (parse tree and resolved program share these shapes)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyDecl:
    """Named policy: ordered (policy_ref, field) entries as written."""

    name: str
    entries: tuple[tuple[str, str], ...]
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class MethodDecl:
    policy: str
    name: str
    param: str
    body: Command
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class ClassDecl:
    name: str
    super_name: Optional[str]
    fields: tuple[str, ...]
    policies: tuple[PolicyDecl, ...]
    methods: tuple[MethodDecl, ...]
    pos: Optional[Pos] = field(default=None, compare=False)


@dataclass(frozen=True)
class RawProgram:
    """Parser output; policy references may still be unqualified."""

    classes: tuple[ClassDecl, ...]


@dataclass(frozen=True)
class Policy:
    """Resolved policy: set of (qualified policy id, field) pairs.

    Fields not listed are implicitly shallow.
    """

    entries: frozenset[tuple[str, str]]

    def deep_fields(self) -> set[str]:
        return {f for _, f in self.entries}


@dataclass(frozen=True)
class OverrideViolation:
    sub_class: str
    super_class: str
    method: str
    missing: frozenset[tuple[str, str]]


def local_vars(md: MethodDecl) -> frozenset[str]:
    """All variables of a method body, plus the parameter and result slot."""
    return frozenset(command_vars(md.body) | {md.param, RESULT_VAR})


class Program:
    """Resolved, immutable program model.

    `classes` preserves declaration order; every policy reference inside
    is qualified.  Safe for concurrent reads.
    """

    def __init__(self, classes: dict[str, ClassDecl], policy_map: dict[str, Policy]):
        self.classes = classes
        self.policy_map = policy_map
        self._mro: dict[str, tuple[str, ...]] = {}
        self._fields: dict[str, tuple[str, ...]] = {}
        for name in classes:
            chain = []
            cur: Optional[str] = name
            while cur is not None:
                chain.append(cur)
                cur = classes[cur].super_name
            self._mro[name] = tuple(chain)
        for name in classes:
            inherited: list[str] = []
            for anc in reversed(self._mro[name][1:]):
                inherited.extend(classes[anc].fields)
            self._fields[name] = tuple(inherited) + classes[name].fields
        self._field_universe = frozenset(f for flds in self._fields.values() for f in flds)

    # -- hierarchy ---------------------------------------------------------

    def mro(self, cn: str) -> tuple[str, ...]:
        try:
            return self._mro[cn]
        except KeyError:
            raise UnknownClass(f"unknown class {cn!r}") from None

    def fields_of(self, cn: str) -> tuple[str, ...]:
        """Declared plus inherited fields, superclass fields first."""
        try:
            return self._fields[cn]
        except KeyError:
            raise UnknownClass(f"unknown class {cn!r}") from None

    def subclass_of(self, a: str, b: str) -> bool:
        return b in self.mro(a)

    def field_universe(self) -> frozenset[str]:
        return self._field_universe

    def lookup_owner(self, cn: str, m: str) -> tuple[ClassDecl, MethodDecl]:
        """First implementation of `m` scanning the hierarchy upward from `cn`."""
        for anc in self.mro(cn):
            for md in self.classes[anc].methods:
                if md.name == m:
                    return self.classes[anc], md
        raise MethodNotFound(f"no method {m!r} on {cn!r} or its superclasses")

    def lookup(self, cn: str, m: str) -> MethodDecl:
        return self.lookup_owner(cn, m)[1]

    def policy(self, pid: str) -> Policy:
        try:
            return self.policy_map[pid]
        except KeyError:
            raise UnknownPolicy(f"unknown policy {pid!r}") from None

    def policy_owner(self, pid: str) -> str:
        return pid.split(".", 1)[0]

    def method_items(self) -> Iterator[tuple[ClassDecl, MethodDecl]]:
        for cl in self.classes.values():
            for md in cl.methods:
                yield cl, md


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------


def _resolve_policy_ref(
    ref: str, ctx_class: str, declared: dict[str, set[str]], mro: dict[str, tuple[str, ...]]
) -> str:
    """Qualify `ref` against `ctx_class`: local name first, then superclasses."""
    if "." in ref:
        cls, name = ref.split(".", 1)
        if cls not in declared:
            raise UnknownClass(f"policy reference {ref!r}: unknown class {cls!r}")
        if name not in declared[cls]:
            raise UnknownPolicy(f"policy reference {ref!r} does not resolve")
        return ref
    for anc in mro[ctx_class]:
        if ref in declared[anc]:
            return f"{anc}.{ref}"
    raise UnknownPolicy(f"policy {ref!r} not found from class {ctx_class!r}")


def resolve_program(raw: RawProgram) -> Program:
    """Resolve names, qualify policy ids, and check structural invariants."""
    classes: dict[str, ClassDecl] = {}
    for cl in raw.classes:
        if cl.name in classes:
            raise DuplicateClass(f"class {cl.name!r} declared twice")
        classes[cl.name] = cl

    for cl in raw.classes:
        if cl.super_name is not None and cl.super_name not in classes:
            raise UnknownClass(f"class {cl.name!r} extends unknown {cl.super_name!r}")

    mro: dict[str, tuple[str, ...]] = {}
    for cl in raw.classes:
        chain: list[str] = []
        cur: Optional[str] = cl.name
        while cur is not None:
            if cur in chain:
                raise CyclicExtends(f"extends cycle through {cur!r}")
            chain.append(cur)
            cur = classes[cur].super_name
        mro[cl.name] = tuple(chain)

    all_fields: dict[str, tuple[str, ...]] = {}
    for cl in raw.classes:
        inherited: list[str] = []
        for anc in reversed(mro[cl.name][1:]):
            inherited.extend(classes[anc].fields)
        if len(set(cl.fields)) != len(cl.fields):
            raise DuplicateName(f"class {cl.name!r} declares a field twice")
        clash = set(inherited) & set(cl.fields)
        if clash:
            raise DuplicateName(f"class {cl.name!r} redeclares inherited {sorted(clash)}")
        all_fields[cl.name] = tuple(inherited) + cl.fields

    global_fields = {f for flds in all_fields.values() for f in flds}

    declared_policies: dict[str, set[str]] = {cl.name: set() for cl in raw.classes}
    for cl in raw.classes:
        for pd in cl.policies:
            if pd.name in declared_policies[cl.name]:
                raise DuplicateName(f"policy {cl.name}.{pd.name} declared twice")
            declared_policies[cl.name].add(pd.name)

    policy_map: dict[str, Policy] = {}
    qualified_policies: dict[str, tuple[PolicyDecl, ...]] = {}
    for cl in raw.classes:
        out: list[PolicyDecl] = []
        for pd in cl.policies:
            entries: list[tuple[str, str]] = []
            seen_fields: set[str] = set()
            for ref, f in pd.entries:
                if f not in all_fields[cl.name]:
                    raise UnknownField(
                        f"policy {cl.name}.{pd.name}: {f!r} is not a field of {cl.name!r}"
                    )
                if f in seen_fields:
                    raise DuplicateName(f"policy {cl.name}.{pd.name}: field {f!r} listed twice")
                seen_fields.add(f)
                entries.append((_resolve_policy_ref(ref, cl.name, declared_policies, mro), f))
            qd = PolicyDecl(pd.name, tuple(entries), pd.pos)
            out.append(qd)
            policy_map[f"{cl.name}.{pd.name}"] = Policy(frozenset(entries))
        qualified_policies[cl.name] = tuple(out)

    declared_methods: dict[str, set[str]] = {cl.name: set() for cl in raw.classes}
    for cl in raw.classes:
        for md in cl.methods:
            if md.name in declared_methods[cl.name]:
                raise DuplicateName(f"method {cl.name}.{md.name} declared twice")
            declared_methods[cl.name].add(md.name)

    def method_policy_of(cn: str, m: str) -> str:
        for anc in mro[cn]:
            for md in classes[anc].methods:
                if md.name == m:
                    return _resolve_policy_ref(md.policy, anc, declared_policies, mro)
        raise MethodNotFound(f"call target {cn}::{m} does not resolve")

    def qualify_command(c: Command, ctx: str) -> Command:
        if isinstance(c, Seq):
            return replace(c, first=qualify_command(c.first, ctx), second=qualify_command(c.second, ctx))
        if isinstance(c, If):
            return replace(c, then=qualify_command(c.then, ctx), orelse=qualify_command(c.orelse, ctx))
        if isinstance(c, While):
            return replace(c, body=qualify_command(c.body, ctx))
        if isinstance(c, (GetField, PutField)):
            if c.f not in global_fields:
                raise UnknownField(f"field {c.f!r} is not declared by any class")
            return c
        if isinstance(c, CopyCall):
            if c.cls not in classes:
                raise UnknownClass(f"call names unknown class {c.cls!r}")
            # The policy annotation resolves in the named receiver class.
            pid = _resolve_policy_ref(c.policy, c.cls, declared_policies, mro)
            target_pid = method_policy_of(c.cls, c.method)
            if pid != target_pid:
                raise PolicyMismatch(
                    f"call {c.cls}::{c.method} is annotated {pid} but the method declares {target_pid}"
                )
            return replace(c, policy=pid)
        return c

    resolved: dict[str, ClassDecl] = {}
    for cl in raw.classes:
        methods: list[MethodDecl] = []
        for md in cl.methods:
            pid = _resolve_policy_ref(md.policy, cl.name, declared_policies, mro)
            body = qualify_command(md.body, cl.name)
            methods.append(MethodDecl(pid, md.name, md.param, body, md.pos))
        resolved[cl.name] = ClassDecl(
            cl.name, cl.super_name, cl.fields, qualified_policies[cl.name], tuple(methods), cl.pos
        )

    return Program(resolved, policy_map)


# ---------------------------------------------------------------------------
# Static checks over resolved programs
# ---------------------------------------------------------------------------


def check_overriding(p: Program) -> list[OverrideViolation]:
    """Override pairs must keep every deep obligation of the overridden policy."""
    violations: list[OverrideViolation] = []
    for cl in p.classes.values():
        for md in cl.methods:
            for anc_name in p.mro(cl.name)[1:]:
                anc = p.classes[anc_name]
                for sup_md in anc.methods:
                    if sup_md.name != md.name:
                        continue
                    sup_entries = p.policy(sup_md.policy).entries
                    sub_entries = p.policy(md.policy).entries
                    missing = sup_entries - sub_entries
                    if missing:
                        violations.append(
                            OverrideViolation(cl.name, anc_name, md.name, frozenset(missing))
                        )
    return violations


def lookup(p: Program, cn: str, m: str) -> MethodDecl:
    return p.lookup(cn, m)


def subclass_of(p: Program, a: str, b: str) -> bool:
    return p.subclass_of(a, b)
