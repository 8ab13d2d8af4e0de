"""Lexer and recursive-descent parser for `.clf` and `.mclf` sources.

Identifiers are resolved while parsing: bound variables become `Var`, declared
constants become `Const`. After each entry an eta-expansion pass rewrites
heads of function type into canonical long form.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .hsubst import BASE, Arrow, erase
from .syntax import (
    FRESH, LIN, PER, Arg, Atom, ClfArg, Const, CtxArg, CtxVar, Decl, KPi, KType, Lam,
    Let, MAtom, MetaSignature, MKType, MLam, MNabla, Monad, MPi, MPiCtx, MPiHat,
    MRoot, MTrace, MTraceType, NameArg, Pi, Root, RuleSet, Signature, Trace, TraceTm,
    Var, VarStep, fresh, fv, is_kind,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        self.msg, self.line, self.col = msg, line, col
        super().__init__(f"line {line}, col {col}: {msg}" if line else msg)


# ---------------------------------------------------------------- lexer

_IDENT = r"[A-Za-z_](?:[A-Za-z0-9_/'#]|-(?!>|o(?![A-Za-z0-9_/'#])))*"
_TOKEN = re.compile(
    rf"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>%[^\n]*)"
    rf"|(?P<ident>{_IDENT})"
    r"|(?P<punct>=>\*|=>1|->|-o|<-|@trace|[(){}\[\]:.,;=\\^!#])"
)


@dataclass(frozen=True)
class Tok:
    kind: str  # "id", a punctuation string, or "eof"
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks: list[Tok] = []
    pos, line, start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            start = m.end()
        elif kind == "ident":
            toks.append(Tok("id", m.group(), line, pos - start + 1))
        elif kind == "punct":
            toks.append(Tok(m.group(), m.group(), line, pos - start + 1))
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - start + 1))
    return toks


KEYWORDS = {"type", "Pi", "let", "ctx", "Pihat", "nabla", "sig"}


# ---------------------------------------------------------------- raw expressions
# Argument expressions are parsed before we know what they denote (CLF term,
# meta term, context, name), then elaborated against the expected binder.


@dataclass(frozen=True)
class RId:
    name: str
    tok: Tok


@dataclass(frozen=True)
class RApp:
    head: "Raw"
    args: tuple


@dataclass(frozen=True)
class RLam:
    name: str
    lin: bool
    body: "Raw"
    tok: Tok


@dataclass(frozen=True)
class RLin:
    inner: "Raw"
    tok: Tok


@dataclass(frozen=True)
class RHash:
    tok: Tok


@dataclass(frozen=True)
class RCtx:
    items: tuple


@dataclass(frozen=True)
class RTrace:
    steps: tuple  # ("let", outs, const_tok, args) or ("var", tok, args)
    tok: Tok


Raw = object


# ---------------------------------------------------------------- programs


@dataclass(frozen=True)
class TraceQuery:
    """An `@trace [pre] {trace} [post].` directive."""

    pre: tuple
    trace: Trace
    post: Optional[tuple]
    line: int


@dataclass(frozen=True)
class Program:
    signature: Signature
    queries: tuple[TraceQuery, ...] = ()
    lines: tuple[tuple[str, int], ...] = ()


# ---------------------------------------------------------------- scope


@dataclass(frozen=True)
class Scope:
    """Identifiers visible at a point of the source.

    `clf` maps CLF variables to their simple shape (or None when unknown);
    `meta` maps meta-level variables to their meta type; `ctxvars` and
    `names` hold context variables and nabla-bound names.
    """

    clf: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    ctxvars: frozenset = frozenset()
    names: frozenset = frozenset()
    free_ok: bool = False

    def with_clf(self, name: str, shape) -> "Scope":
        d = dict(self.clf)
        d[name] = shape
        return Scope(d, self.meta, self.ctxvars, self.names, self.free_ok)

    def with_meta(self, name: str, ty) -> "Scope":
        d = dict(self.meta)
        d[name] = ty
        return Scope(self.clf, d, self.ctxvars, self.names, self.free_ok)

    def with_ctxvar(self, name: str) -> "Scope":
        return Scope(self.clf, self.meta, self.ctxvars | {name}, self.names, self.free_ok)

    def with_name(self, name: str) -> "Scope":
        d = dict(self.clf)
        d[name] = BASE
        return Scope(d, self.meta, self.ctxvars, self.names | {name}, self.free_ok)


def _shape(t):
    try:
        return erase(t)
    except Exception:
        return None


def _sig_shape(sig: Signature, name: str):
    e = sig.get(name)
    if e is None or is_kind(e):
        return None
    return _shape(e)


# ---------------------------------------------------------------- parser


class Parser:
    def __init__(self, text: str, sig: Signature | None = None,
                 msig: MetaSignature | None = None):
        self.toks = tokenize(text)
        self.i = 0
        self.sig = sig or Signature()
        self.msig = msig or MetaSignature()
        self.mdecls = dict(self.msig.decls())
        self.rulesets = self.msig.rulesets()

    # ---- token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_kw(self, word: str) -> bool:
        return self.tok.kind == "id" and self.tok.text == word

    def advance(self) -> Tok:
        t = self.tok
        self.i += 1
        return t

    def expect(self, kind: str, what: str | None = None) -> Tok:
        if self.tok.kind != kind:
            self.fail(f"expected {what or repr(kind)}, found {self.describe(self.tok)}")
        return self.advance()

    def expect_kw(self, word: str) -> Tok:
        if not self.at_kw(word):
            self.fail(f"expected {word!r}, found {self.describe(self.tok)}")
        return self.advance()

    def ident(self, what: str = "identifier") -> Tok:
        t = self.expect("id", what)
        if t.text in KEYWORDS:
            self.fail(f"keyword {t.text!r} cannot be used as {what}", t)
        return t

    @staticmethod
    def describe(t: Tok) -> str:
        return "end of input" if t.kind == "eof" else repr(t.text)

    def fail(self, msg: str, tok: Tok | None = None):
        t = tok or self.tok
        raise ParseError(msg, t.line, t.col)

    # ---- CLF signatures
    def program(self) -> Program:
        queries = []
        lines = []
        while not self.at("eof"):
            if self.at("@trace"):
                queries.append(self.trace_query())
                continue
            name = self.ident("constant name")
            if name.text in self.sig:
                self.fail(f"duplicate constant {name.text}", name)
            self.expect(":")
            entry = self.classifier(Scope())
            self.expect(".", "'.' ending the declaration")
            entry = eta_entry(entry, self.sig)
            self.sig = self.sig.extend(name.text, entry)
            lines.append((name.text, name.line))
        return Program(self.sig, tuple(queries), tuple(lines))

    def trace_query(self) -> TraceQuery:
        start = self.advance()
        pre, scope = self.clf_context(Scope())
        tr = self.trace_block(scope)
        post = None
        if self.at("["):
            known = {n: None for n in scope.clf}
            for st in tr.steps:
                known.update((d.name, None) for d in st.outputs)
            post, _ = self.clf_context(Scope(known))
        self.expect(".", "'.' ending the directive")
        env = {n: s for n, s in scope.clf.items()}
        return TraceQuery(pre, eta_trace(tr, env, self.sig), post and tuple(post), start.line)

    def clf_context(self, scope: Scope):
        """A bracketed context of declarations, as used by states and directives."""
        self.expect("[")
        items = []
        while not self.at("]"):
            mod = PER if self.at("!") else LIN
            if self.at("!") or self.at("^"):
                self.advance()
            name = self.ident("declared name")
            self.expect(":")
            ty = self.type_(scope)
            items.append(Decl(mod, name.text, eta_type(ty, dict(scope.clf), self.sig)))
            scope = scope.with_clf(name.text, _shape(ty))
            if not self.at(","):
                break
            self.advance()
        self.expect("]")
        return tuple(items), scope

    def classifier(self, scope: Scope):
        """Parse a kind or a type; which one is decided by the final codomain."""
        if self.at_kw("type"):
            self.advance()
            return KType()
        if self.at_kw("Pi"):
            self.advance()
            lin = self.at("^")
            if lin:
                self.advance()
            x = self.ident("binder")
            self.expect(":")
            arg = self.type_(scope)
            self.expect(".")
            body = self.classifier(scope.with_clf(x.text, _shape(arg)))
            if is_kind(body):
                if lin:
                    self.fail("kind products must be persistent", x)
                return KPi(x.text, arg, body)
            return Pi(LIN if lin else PER, x.text, arg, body)
        left = self.app_type(scope)
        if self.at("->") or self.at("-o"):
            op = self.advance()
            body = self.classifier(scope)
            name = fresh("_", fv(body))
            if is_kind(body):
                if op.kind == "-o":
                    self.fail("kind products must be persistent", op)
                return KPi(name, left, body)
            return Pi(LIN if op.kind == "-o" else PER, name, left, body)
        return left

    def type_(self, scope: Scope):
        t = self.classifier(scope)
        if is_kind(t):
            self.fail("expected a type, found a kind")
        return t

    def app_type(self, scope: Scope):
        if self.at("("):
            self.advance()
            t = self.type_(scope)
            self.expect(")")
            return t
        if self.at("{"):
            return self.monad(scope)
        head = self.ident("type family")
        if head.text not in self.sig:
            self.fail(f"unknown constant {head.text}", head)
        if not self.sig.is_family(head.text):
            self.fail(f"{head.text} is not a type family", head)
        args = []
        while self.starts_atom():
            args.append(self.raw_atom(scope))
        spine = tuple(Arg(PER, self.to_clf(r, scope)) for r in args)
        return Atom(head.text, spine)

    def monad(self, scope: Scope):
        self.expect("{")
        decls = []
        while not self.at("}"):
            mod = LIN
            if self.at("!"):
                mod = PER
                self.advance()
            elif self.at("^"):
                self.advance()
            name = self.ident("declared name")
            self.expect(":")
            ty = self.type_(scope)
            decls.append(Decl(mod, name.text, ty))
            scope = scope.with_clf(name.text, _shape(ty))
            if not self.at(","):
                break
            self.advance()
        self.expect("}")
        return Monad(tuple(decls))

    # ---- raw expressions
    def starts_atom(self) -> bool:
        t = self.tok
        if t.kind == "id":
            return t.text not in KEYWORDS
        return t.kind in ("(", "^", "#", "[", "{", "\\")

    def raw_expr(self, scope: Scope):
        if self.at("\\"):
            return self.raw_lam(scope)
        head = self.raw_atom(scope)
        args = []
        while self.starts_atom():
            if self.at("\\"):
                args.append(self.raw_lam(scope))
                break
            args.append(self.raw_atom(scope))
        return RApp(head, tuple(args)) if args else head

    def raw_lam(self, scope: Scope):
        t = self.expect("\\")
        lin = self.at("^")
        if lin:
            self.advance()
        x = self.ident("binder")
        self.expect(".")
        return RLam(x.text, lin, self.raw_expr(scope), t)

    def raw_atom(self, scope: Scope):
        t = self.tok
        if t.kind == "id":
            if t.text in KEYWORDS:
                self.fail(f"unexpected keyword {t.text!r}")
            self.advance()
            return RId(t.text, t)
        if t.kind == "(":
            self.advance()
            e = self.raw_expr(scope)
            self.expect(")")
            return e
        if t.kind == "^":
            self.advance()
            return RLin(self.raw_atom(scope), t)
        if t.kind == "#":
            self.advance()
            return RHash(t)
        if t.kind == "\\":
            return self.raw_lam(scope)
        if t.kind == "[":
            items = self.meta_context(scope)
            return RCtx(items)
        if t.kind == "{":
            return self.raw_trace(scope)
        self.fail(f"expected an argument, found {self.describe(t)}")

    def raw_trace(self, scope: Scope):
        start = self.expect("{")
        steps = []
        while not self.at("}"):
            if self.at_kw("let"):
                self.advance()
                self.expect("{")
                outs = []
                while not self.at("}"):
                    mod = LIN
                    if self.at("!"):
                        mod = PER
                        self.advance()
                    elif self.at("^"):
                        self.advance()
                    name = self.ident("output name")
                    ty = None
                    if self.at(":"):
                        self.advance()
                        ty = self.type_(scope)
                    outs.append((mod, name, ty))
                    scope = scope.with_clf(name.text, _shape(ty) if ty is not None else None)
                    if not self.at(","):
                        break
                    self.advance()
                self.expect("}")
                self.expect("=")
                c = self.ident("rule constant")
                args = []
                while self.starts_atom():
                    if self.at("\\"):
                        args.append(self.raw_lam(scope))
                        break
                    args.append(self.raw_atom(scope))
                steps.append(("let", tuple(outs), c, tuple(args), scope))
            else:
                v = self.ident("trace variable")
                args = []
                while self.starts_atom():
                    args.append(self.raw_atom(scope))
                steps.append(("var", v, tuple(args), scope))
            if not self.at(";"):
                break
            self.advance()
        self.expect("}")
        return RTrace(tuple(steps), start)

    # ---- raw to CLF
    def resolve(self, tok: Tok, scope: Scope):
        name = tok.text
        if name in scope.clf:
            return Var(name)
        if name in self.sig:
            if self.sig.is_family(name):
                self.fail(f"type family {name} used as a term", tok)
            return Const(name)
        if scope.free_ok or name in scope.meta or name in scope.ctxvars:
            return Var(name)
        self.fail(f"unknown constant {name}", tok)

    def to_clf(self, r, scope: Scope):
        if isinstance(r, RId):
            return Root(self.resolve(r.tok, scope), ())
        if isinstance(r, RApp):
            head = self.to_clf(r.head, scope)
            if not isinstance(head, Root):
                self.fail("the head of an application must be a variable or constant", _tok_of(r.head))
            spine = []
            for a in r.args:
                if isinstance(a, RLin):
                    spine.append(Arg(LIN, self.to_clf(a.inner, scope)))
                else:
                    spine.append(Arg(PER, self.to_clf(a, scope)))
            return Root(head.head, head.spine + tuple(spine))
        if isinstance(r, RLam):
            return Lam(LIN if r.lin else PER, r.name, self.to_clf(r.body, scope.with_clf(r.name, None)))
        if isinstance(r, RTrace):
            return TraceTm(self.to_clf_trace(r))
        if isinstance(r, RLin):
            self.fail("linear mark '^' is only allowed on arguments", r.tok)
        if isinstance(r, RHash):
            self.fail("'#' is only allowed as a name argument", r.tok)
        if isinstance(r, RCtx):
            self.fail("a context is not a term")
        raise AssertionError(r)

    def to_clf_trace(self, r: RTrace) -> Trace:
        steps = []
        for st in r.steps:
            if st[0] != "let":
                self.fail(f"trace variable {st[1].text} outside a meta-level trace", st[1])
            _, outs, c, args, scope_after = st
            steps.append(self.let_step(outs, c, args, scope_after, outs))
        return Trace(tuple(steps))

    def let_step(self, outs, c: Tok, args, scope_after: Scope, _outs) -> Let:
        if c.text not in self.sig:
            self.fail(f"unknown constant {c.text}", c)
        if self.sig.is_family(c.text):
            self.fail(f"{c.text} is a type family, not a rule", c)
        # arguments are in the scope before this step's outputs
        before = scope_after
        for _, name, _ in outs:
            if name.text in before.clf:
                d = dict(before.clf)
                del d[name.text]
                before = Scope(d, before.meta, before.ctxvars, before.names, before.free_ok)
        spine = []
        for a in args:
            if isinstance(a, RLin):
                spine.append(Arg(LIN, self.to_clf(a.inner, before)))
            else:
                spine.append(Arg(PER, self.to_clf(a, before)))
        decls = tuple(Decl(m, n.text, t) for m, n, t in outs)
        return Let(decls, c.text, tuple(spine))

    def trace_block(self, scope: Scope) -> Trace:
        r = self.raw_trace(scope)
        return self.to_clf_trace(r)

    # ---- meta signatures
    def meta_program(self) -> MetaSignature:
        entries = list(self.msig.entries)
        while not self.at("eof"):
            if self.at_kw("sig"):
                self.advance()
                name = self.ident("rule-set name")
                self.expect("=")
                consts = []
                while self.at("id"):
                    c = self.advance()
                    if c.text not in self.sig:
                        self.fail(f"unknown constant {c.text}", c)
                    consts.append(c.text)
                self.expect(".")
                rs = RuleSet(name.text, tuple(consts))
                if name.text in self.rulesets or name.text in self.mdecls:
                    self.fail(f"duplicate declaration {name.text}", name)
                self.rulesets[name.text] = rs
                entries.append(rs)
                continue
            name = self.ident("constant name")
            if name.text in self.mdecls or name.text in self.rulesets or name.text in self.sig:
                self.fail(f"duplicate constant {name.text}", name)
            self.expect(":")
            mt = self.mtype(Scope())
            self.expect(".", "'.' ending the declaration")
            self.mdecls[name.text] = mt
            entries.append((name.text, mt))
            self.msig = MetaSignature(tuple(entries))
        return MetaSignature(tuple(entries))

    def mtype(self, scope: Scope):
        if self.at_kw("Pi"):
            self.advance()
            x = self.ident("binder")
            self.expect(":")
            if self.at_kw("ctx") and self.peek().kind == ".":
                self.advance()
                self.expect(".")
                return MPiCtx(x.text, self.mtype(scope.with_ctxvar(x.text)))
            arg = self.mtype(scope)
            self.expect(".")
            return MPi(x.text, arg, self.mtype(scope.with_meta(x.text, arg)))
        if self.at_kw("Pihat"):
            self.advance()
            x = self.ident("binder")
            self.expect(":")
            arg = eta_type(self.type_(scope), dict(scope.clf), self.sig)
            self.expect(".")
            return MPiHat(x.text, arg, self.mtype(scope.with_clf(x.text, _shape(arg))))
        if self.at_kw("nabla"):
            self.advance()
            names = [self.ident("name")]
            while self.at("id") and not self.at_kw("type"):
                names.append(self.ident("name"))
            self.expect(".")
            for n in names:
                scope = scope.with_name(n.text)
            body = self.mtype(scope)
            for n in reversed(names):
                body = MNabla(n.text, body)
            return body
        if self.at_kw("ctx"):
            self.advance()
            self.expect("->", "'->' after ctx")
            body = self.mtype(scope)
            return MPiCtx(fresh("_", fv(body)), body)
        left = self.mapp(scope)
        if self.at("->"):
            self.advance()
            body = self.mtype(scope)
            return MPi(fresh("_", fv(body)), left, body)
        while self.at("<-"):
            self.advance()
            prem = self.mapp(scope)
            left = MPi(fresh("_", fv(left)), prem, left)
        return left

    def mapp(self, scope: Scope):
        if self.at_kw("type"):
            self.advance()
            return MKType()
        if self.at("("):
            self.advance()
            t = self.mtype(scope)
            self.expect(")")
            return t
        if self.at("["):
            pre = self.meta_context(scope)
            if not (self.at("=>*") or self.at("=>1")):
                self.fail("expected '=>*' or '=>1' in a trace type")
            mode = self.advance().kind[-1]
            s = self.ident("rule-set name")
            if s.text not in self.rulesets:
                self.fail(f"unknown rule set {s.text}", s)
            post = self.meta_context(scope)
            return MTraceType(pre, s.text, mode, post)
        head = self.ident("type family")
        if head.text not in self.mdecls:
            self.fail(f"unknown constant {head.text}", head)
        args = []
        while self.starts_atom():
            args.append(self.raw_atom(scope))
        return MAtom(head.text, self.classify(self.mdecls[head.text], args, scope, head))

    def meta_context(self, scope: Scope) -> tuple:
        self.expect("[")
        items = []
        while not self.at("]"):
            if self.at("id") and self.peek().kind in (",", "]") and not self.at_kw("type"):
                items.append(CtxVar(self.advance().text))
            else:
                mod = LIN
                if self.at("!"):
                    mod = PER
                    self.advance()
                elif self.at("^"):
                    self.advance()
                name = self.ident("declared name")
                self.expect(":")
                ty = eta_type(self.type_(scope), dict(scope.clf), self.sig)
                items.append(Decl(mod, name.text, ty))
                scope = scope.with_clf(name.text, _shape(ty))
            if not self.at(","):
                break
            self.advance()
        self.expect("]")
        return tuple(items)

    # ---- elaboration of meta arguments against binder kinds
    def head_type(self, name: str, scope: Scope, tok: Tok):
        if name in scope.meta:
            return scope.meta[name]
        if name in self.mdecls:
            return self.mdecls[name]
        self.fail(f"unknown meta-level constant {name}", tok)

    def classify(self, ty, args, scope: Scope, tok: Tok) -> tuple:
        out = []
        for a in args:
            if isinstance(ty, MPi):
                out.append(self.to_mterm(a, scope))
                ty = ty.body
            elif isinstance(ty, MPiCtx):
                if isinstance(a, RCtx):
                    out.append(CtxArg(a.items))
                elif isinstance(a, RId) and a.name in scope.ctxvars:
                    out.append(CtxArg((CtxVar(a.name),)))
                else:
                    self.fail("expected a context argument", _tok_of(a) or tok)
                ty = ty.body
            elif isinstance(ty, MNabla):
                if isinstance(a, RHash):
                    out.append(NameArg(FRESH))
                elif isinstance(a, RId):
                    out.append(NameArg(a.name))
                else:
                    self.fail("expected a name argument", _tok_of(a) or tok)
                ty = ty.body
            elif isinstance(ty, MPiHat):
                term = self.to_clf(a, scope)
                out.append(ClfArg(eta_term(term, _shape(ty.arg), dict(scope.clf), self.sig)))
                ty = ty.body
            else:
                self.fail(f"too many arguments for {tok.text}", _tok_of(a) or tok)
        return tuple(out)

    def to_mterm(self, r, scope: Scope):
        if isinstance(r, RLam):
            return MLam(r.name, self.to_mterm(r.body, scope.with_meta(r.name, None)))
        if isinstance(r, RTrace):
            return MTrace(self.meta_trace(r))
        if isinstance(r, RId):
            return MRoot(r.name, ())
        if isinstance(r, RApp) and isinstance(r.head, RId):
            ty = self.head_type(r.head.name, scope, r.head.tok)
            if ty is None:
                self.fail(f"cannot apply {r.head.name}: its type is unknown", r.head.tok)
            return MRoot(r.head.name, self.classify(ty, r.args, scope, r.head.tok))
        self.fail("expected a meta-level term", _tok_of(r))

    def meta_trace(self, r: RTrace) -> Trace:
        steps = []
        for st in r.steps:
            if st[0] == "let":
                _, outs, c, args, scope_after = st
                sc = Scope(scope_after.clf, scope_after.meta, scope_after.ctxvars,
                           scope_after.names, True)
                let = self.let_step(outs, c, args, sc, outs)
                env = dict(sc.clf)
                spine = eta_spine(let.spine, _sig_shape(self.sig, c.text), env, self.sig)
                outs2 = tuple(Decl(d.mod, d.name, None if d.type is None else eta_type(d.type, env, self.sig))
                              for d in let.outputs)
                steps.append(Let(outs2, let.const, spine))
            else:
                _, v, args, scope = st
                ty = self.head_type(v.text, scope, v)
                if ty is None:
                    self.fail(f"cannot apply {v.text}: its type is unknown", v)
                steps.append(VarStep(v.text, self.classify(ty, args, scope, v)))
        return Trace(tuple(steps))


def _tok_of(r) -> Tok | None:
    if isinstance(r, (RId, RLam, RLin, RHash, RTrace)):
        return r.tok
    if isinstance(r, RApp):
        return _tok_of(r.head)
    return None


# ---------------------------------------------------------------- eta expansion


def _expected(shape, i: int):
    return shape.dom if isinstance(shape, Arrow) else None


def eta_term(n, expected, env: dict, sig: Signature):
    """Eta-expand `n` to canonical long form at simple shape `expected`."""
    if isinstance(n, Lam):
        if expected is not None and not isinstance(expected, Arrow):
            raise ParseError(f"a lambda cannot have base type (binder {n.name})")
        dom = expected.dom if isinstance(expected, Arrow) else None
        cod = expected.cod if isinstance(expected, Arrow) else None
        env2 = dict(env)
        env2[n.name] = dom
        return Lam(n.mod, n.name, eta_term(n.body, cod, env2, sig))
    if isinstance(n, Root):
        hs = env.get(n.head.name) if isinstance(n.head, Var) else _sig_shape(sig, n.head.name)
        spine = []
        for a in n.spine:
            dom = hs.dom if isinstance(hs, Arrow) else None
            spine.append(Arg(a.mod, eta_term(a.term, dom, env, sig)))
            hs = hs.cod if isinstance(hs, Arrow) else None
        out = Root(n.head, tuple(spine))
        if isinstance(expected, Arrow) and isinstance(hs, Arrow):
            avoid = set(env) | fv(out)
            z = fresh("x", avoid)
            env2 = dict(env)
            env2[z] = hs.dom
            arg = eta_term(Root(Var(z), ()), hs.dom, env2, sig)
            body = eta_term(Root(n.head, out.spine + (Arg(hs.mod, arg),)), expected.cod, env2, sig)
            return Lam(hs.mod, z, body)
        return out
    if isinstance(n, TraceTm):
        return TraceTm(eta_trace(n.trace, env, sig))
    raise TypeError(f"eta: unexpected node {n!r}")


def eta_spine(spine, hs, env: dict, sig: Signature) -> tuple:
    out = []
    for a in spine:
        dom = hs.dom if isinstance(hs, Arrow) else None
        out.append(Arg(a.mod, eta_term(a.term, dom, env, sig)))
        hs = hs.cod if isinstance(hs, Arrow) else None
    return tuple(out)


def eta_trace(tr: Trace, env: dict, sig: Signature) -> Trace:
    env = dict(env)
    steps = []
    for st in tr.steps:
        if isinstance(st, Let):
            spine = eta_spine(st.spine, _sig_shape(sig, st.const), env, sig)
            outs = []
            for d in st.outputs:
                ty = None if d.type is None else eta_type(d.type, env, sig)
                outs.append(Decl(d.mod, d.name, ty))
                env[d.name] = _shape(ty) if ty is not None else BASE
            steps.append(Let(tuple(outs), st.const, spine))
        else:
            steps.append(st)
    return Trace(tuple(steps))


def eta_type(t, env: dict, sig: Signature):
    if isinstance(t, Pi):
        arg = eta_type(t.arg, env, sig)
        env2 = dict(env)
        env2[t.name] = _shape(arg)
        return Pi(t.mod, t.name, arg, eta_type(t.body, env2, sig))
    if isinstance(t, KPi):
        arg = eta_type(t.arg, env, sig)
        env2 = dict(env)
        env2[t.name] = _shape(arg)
        return KPi(t.name, arg, eta_type(t.body, env2, sig))
    if isinstance(t, Atom):
        k = sig.get(t.head)
        spine = []
        for a in t.spine:
            dom = _shape(k.arg) if isinstance(k, KPi) else None
            spine.append(Arg(a.mod, eta_term(a.term, dom, env, sig)))
            k = k.body if isinstance(k, KPi) else None
        return Atom(t.head, tuple(spine))
    if isinstance(t, Monad):
        env = dict(env)
        decls = []
        for d in t.ctx:
            ty = eta_type(d.type, env, sig)
            decls.append(Decl(d.mod, d.name, ty))
            env[d.name] = _shape(ty)
        return Monad(tuple(decls))
    if isinstance(t, KType):
        return t
    raise TypeError(f"eta: unexpected node {t!r}")


def eta_entry(e, sig: Signature):
    return eta_type(e, {}, sig)


# ---------------------------------------------------------------- entry points


def parse_program(text: str, base: Signature | None = None) -> Program:
    """Parse a `.clf` source: declarations plus `@trace` directives."""
    return Parser(text, base).program()


def parse_signature(text: str, base: Signature | None = None) -> Signature:
    """Parse declarations, extending `base`. Returns the whole signature."""
    prog = parse_program(text, base)
    if prog.queries:
        q = prog.queries[0]
        raise ParseError("@trace directives are not allowed here", q.line, 1)
    return prog.signature


def _finish(p: Parser, what: str):
    if not p.at("eof"):
        p.fail(f"unexpected {p.describe(p.tok)} after {what}")


def parse_term(text: str, sig: Signature | None = None, env: dict | None = None, expected=None):
    """Parse a term. Unknown identifiers are taken as free variables.

    `env` maps variable names to types (or shapes) for eta expansion.
    """
    p = Parser(text, sig)
    shapes = _shapes(env)
    scope = Scope(dict(shapes), free_ok=True)
    r = p.raw_expr(scope)
    _finish(p, "the term")
    term = p.to_clf(r, scope)
    return eta_term(term, expected, shapes, p.sig)


def parse_type(text: str, sig: Signature | None = None, env: dict | None = None):
    p = Parser(text, sig)
    shapes = _shapes(env)
    t = p.type_(Scope(dict(shapes), free_ok=True))
    _finish(p, "the type")
    return eta_type(t, shapes, p.sig)


def parse_trace(text: str, sig: Signature | None = None, env: dict | None = None) -> Trace:
    """Parse a braced trace `{ let {...} = c args ; ... }`."""
    p = Parser(text, sig)
    shapes = _shapes(env)
    tr = p.trace_block(Scope(dict(shapes), free_ok=True))
    _finish(p, "the trace")
    return eta_trace(tr, shapes, p.sig)


def parse_context(text: str, sig: Signature | None = None) -> tuple:
    """Parse a bracketed context `[!d : dest, x : eval e d]`."""
    p = Parser(text, sig)
    ctx, _ = p.clf_context(Scope())
    _finish(p, "the context")
    return ctx


def parse_meta_signature(text: str, sig: Signature, base: MetaSignature | None = None) -> MetaSignature:
    return Parser(text, sig, base).meta_program()


def parse_meta_type(text: str, sig: Signature, msig: MetaSignature | None = None):
    p = Parser(text, sig, msig)
    t = p.mtype(Scope())
    _finish(p, "the meta type")
    return t


def _shapes(env: dict | None) -> dict:
    out = {}
    for k, v in (env or {}).items():
        if isinstance(v, (Pi, Atom, Monad)):
            out[k] = _shape(v)
        else:
            out[k] = v
    return out
