"""Concrete syntax for annotated programs (`.cp` files).

Grammar::

    program := class* ;
    class   := "class" Id ("extends" Id)?
               "{" ("fields" ":" Id ("," Id)* ";")? policy* method* "}" ;
    policy  := "policy" Id "{" ("deep" "(" QId ")" Id ";")* "}" ;
    method  := "copy" "(" QId ")" Id "(" Id ")" "{" stmt* "}" ;
    stmt    := Id ":=" rhs ";"
             | Id "." Id ":=" Id ";"
             | "if" block "else" block
             | "while" block
             | "return" Id ";" ;
    rhs     := "null" | Id | Id "." Id | "new" Id
             | "call" QId "::" Id "[" QId "]" "(" Id ")"
             | "unknown" "(" Id ")" ;
    block   := "{" stmt* "}" ;
    QId     := Id ("." Id)? ;

Comments run from ``//`` to end of line.  The `fields` clause may be
omitted for field-less classes.  `ret` is reserved for method results
and rejected as a user identifier.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

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
    PolicyDecl,
    Pos,
    PutField,
    RawProgram,
    Return,
    Seq,
    Skip,
    UnknownCall,
    While,
)

KEYWORDS = {
    "class",
    "extends",
    "fields",
    "policy",
    "deep",
    "copy",
    "if",
    "else",
    "while",
    "return",
    "null",
    "new",
    "call",
    "unknown",
}


class ParseError(CloneCheckError):
    def __init__(self, path: str, line: int, col: int, msg: str):
        super().__init__(f"{path}:{line}:{col}: {msg}")
        self.path = path
        self.line = line
        self.col = col
        self.msg = msg


@dataclass(frozen=True)
class SourceFile:
    path: str
    content: str


@dataclass(frozen=True)
class Token:
    kind: str  # "id", "sym", or "eof"
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|:=|::|[{}()\[\];,.:]")


def _tokenize(src: SourceFile) -> list[Token]:
    tokens: list[Token] = []
    for lineno, line in enumerate(src.content.splitlines(), start=1):
        code = line.split("//", 1)[0]
        pos = 0
        for m in _TOKEN_RE.finditer(code):
            gap = code[pos : m.start()]
            if gap.strip():
                bad = pos + len(gap) - len(gap.lstrip()) + 1
                raise ParseError(src.path, lineno, bad, f"unexpected character {gap.strip()[0]!r}")
            pos = m.end()
            text = m.group()
            kind = "id" if text[0].isalpha() or text[0] == "_" else "sym"
            tokens.append(Token(kind, text, lineno, m.start() + 1))
        if code[pos:].strip():
            bad = pos + len(code[pos:]) - len(code[pos:].lstrip()) + 1
            raise ParseError(src.path, lineno, bad, f"unexpected character {code[pos:].strip()[0]!r}")
    last_line = src.content.count("\n") + 1
    tokens.append(Token("eof", "", last_line, 1))
    return tokens


class _Parser:
    def __init__(self, src: SourceFile):
        self.path = src.path
        self.toks = _tokenize(src)
        self.i = 0

    # -- plumbing -----------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def fail(self, tok: Token, msg: str) -> ParseError:
        return ParseError(self.path, tok.line, tok.col, msg)

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            got = t.text or "end of file"
            raise self.fail(t, f"expected {text!r}, found {got!r}")
        return t

    def ident(self, what: str = "identifier") -> Token:
        t = self.next()
        if t.kind != "id" or t.text in KEYWORDS:
            got = t.text or "end of file"
            raise self.fail(t, f"expected {what}, found {got!r}")
        if t.text == RESULT_VAR:
            raise self.fail(t, f"{RESULT_VAR!r} is reserved for method results")
        return t

    def qid(self) -> str:
        first = self.ident("policy or class name").text
        if self.peek().text == "." and self.peek(1).kind == "id":
            self.next()
            return f"{first}.{self.ident('policy name').text}"
        return first

    # -- grammar ------------------------------------------------------------

    def program(self) -> RawProgram:
        classes = []
        while self.peek().kind != "eof":
            classes.append(self.class_decl())
        return RawProgram(tuple(classes))

    def class_decl(self) -> ClassDecl:
        kw = self.expect("class")
        name = self.ident("class name").text
        super_name = None
        if self.peek().text == "extends":
            self.next()
            super_name = self.ident("class name").text
        self.expect("{")
        fields: tuple[str, ...] = ()
        if self.peek().text == "fields":
            self.next()
            self.expect(":")
            names = [self.ident("field name").text]
            while self.peek().text == ",":
                self.next()
                names.append(self.ident("field name").text)
            self.expect(";")
            fields = tuple(names)
        policies = []
        while self.peek().text == "policy":
            policies.append(self.policy_decl())
        methods = []
        while self.peek().text == "copy":
            methods.append(self.method_decl())
        self.expect("}")
        return ClassDecl(name, super_name, fields, tuple(policies), tuple(methods), (kw.line, kw.col))

    def policy_decl(self) -> PolicyDecl:
        kw = self.expect("policy")
        name = self.ident("policy name").text
        self.expect("{")
        entries = []
        while self.peek().text == "deep":
            self.next()
            self.expect("(")
            ref = self.qid()
            self.expect(")")
            f = self.ident("field name").text
            self.expect(";")
            entries.append((ref, f))
        self.expect("}")
        return PolicyDecl(name, tuple(entries), (kw.line, kw.col))

    def method_decl(self) -> MethodDecl:
        kw = self.expect("copy")
        self.expect("(")
        policy = self.qid()
        self.expect(")")
        name = self.ident("method name").text
        self.expect("(")
        param = self.ident("parameter name").text
        self.expect(")")
        body = self.block()
        return MethodDecl(policy, name, param, body, (kw.line, kw.col))

    def block(self) -> Command:
        open_ = self.expect("{")
        stmts = []
        while self.peek().text != "}":
            if self.peek().kind == "eof":
                raise self.fail(self.peek(), "unterminated block")
            stmts.append(self.stmt())
        self.expect("}")
        if not stmts:
            return Skip((open_.line, open_.col))
        out = stmts[-1]
        for s in reversed(stmts[:-1]):
            out = Seq(s, out, s.pos)
        return out

    def stmt(self) -> Command:
        t = self.peek()
        if t.text == "if":
            self.next()
            then = self.block()
            self.expect("else")
            orelse = self.block()
            return If(then, orelse, (t.line, t.col))
        if t.text == "while":
            self.next()
            return While(self.block(), (t.line, t.col))
        if t.text == "return":
            self.next()
            x = self.ident("variable").text
            self.expect(";")
            return Return(x, (t.line, t.col))
        x = self.ident("variable").text
        pos: Pos = (t.line, t.col)
        if self.peek().text == ".":
            self.next()
            f = self.ident("field name").text
            self.expect(":=")
            y = self.ident("variable").text
            self.expect(";")
            return PutField(x, f, y, pos)
        self.expect(":=")
        cmd = self.rhs(x, pos)
        self.expect(";")
        return cmd

    def rhs(self, x: str, pos: Pos) -> Command:
        t = self.peek()
        if t.text == "null":
            self.next()
            return AssignNull(x, pos)
        if t.text == "new":
            self.next()
            return New(x, self.ident("class name").text, pos)
        if t.text == "call":
            self.next()
            cls = self.qid()
            self.expect("::")
            method = self.ident("method name").text
            self.expect("[")
            policy = self.qid()
            self.expect("]")
            self.expect("(")
            y = self.ident("variable").text
            self.expect(")")
            return CopyCall(x, cls, method, policy, y, pos)
        if t.text == "unknown":
            self.next()
            self.expect("(")
            y = self.ident("variable").text
            self.expect(")")
            return UnknownCall(x, y, pos)
        y = self.ident("variable").text
        if self.peek().text == ".":
            self.next()
            f = self.ident("field name").text
            return GetField(x, y, f, pos)
        return Assign(x, y, pos)


def parse_program(src: SourceFile) -> RawProgram:
    return _Parser(src).program()


def parse_text(text: str, path: str = "<string>") -> RawProgram:
    return parse_program(SourceFile(path, text))


# ---------------------------------------------------------------------------
# Pretty printing (canonical layout; parse . pretty_print == identity)
# ---------------------------------------------------------------------------


def _seq_list(c: Command) -> list[Command]:
    if isinstance(c, Skip):
        return []
    if isinstance(c, Seq):
        return _seq_list(c.first) + _seq_list(c.second)
    return [c]


def _fmt_stmt(c: Command, indent: str, out: list[str]) -> None:
    if isinstance(c, Assign):
        out.append(f"{indent}{c.x} := {c.y};")
    elif isinstance(c, AssignNull):
        out.append(f"{indent}{c.x} := null;")
    elif isinstance(c, GetField):
        out.append(f"{indent}{c.x} := {c.y}.{c.f};")
    elif isinstance(c, PutField):
        out.append(f"{indent}{c.x}.{c.f} := {c.y};")
    elif isinstance(c, New):
        out.append(f"{indent}{c.x} := new {c.cls};")
    elif isinstance(c, CopyCall):
        out.append(f"{indent}{c.x} := call {c.cls}::{c.method}[{c.policy}]({c.y});")
    elif isinstance(c, UnknownCall):
        out.append(f"{indent}{c.x} := unknown({c.y});")
    elif isinstance(c, Return):
        out.append(f"{indent}return {c.x};")
    elif isinstance(c, If):
        out.append(f"{indent}if {{")
        _fmt_block(c.then, indent + "  ", out)
        out.append(f"{indent}}} else {{")
        _fmt_block(c.orelse, indent + "  ", out)
        out.append(f"{indent}}}")
    elif isinstance(c, While):
        out.append(f"{indent}while {{")
        _fmt_block(c.body, indent + "  ", out)
        out.append(f"{indent}}}")
    else:
        raise TypeError(f"cannot print {type(c).__name__}")


def _fmt_block(c: Command, indent: str, out: list[str]) -> None:
    for s in _seq_list(c):
        _fmt_stmt(s, indent, out)


def pretty_print(raw: RawProgram) -> str:
    out: list[str] = []
    for cl in raw.classes:
        head = f"class {cl.name}"
        if cl.super_name is not None:
            head += f" extends {cl.super_name}"
        out.append(head + " {")
        if cl.fields:
            out.append("  fields: " + ", ".join(cl.fields) + ";")
        for pd in cl.policies:
            out.append(f"  policy {pd.name} {{")
            for ref, f in pd.entries:
                out.append(f"    deep({ref}) {f};")
            out.append("  }")
        for md in cl.methods:
            out.append(f"  copy({md.policy}) {md.name}({md.param}) {{")
            _fmt_block(md.body, "    ", out)
            out.append("  }")
        out.append("}")
        out.append("")
    return "\n".join(out)
