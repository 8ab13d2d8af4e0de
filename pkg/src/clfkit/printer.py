"""Concrete-syntax printer; the parser reads back everything printed here."""
from __future__ import annotations

from .syntax import (
    Arg, Atom, ClfArg, Const, CtxArg, CtxVar, Decl, KPi, KType, Lam, Let, MAtom,
    MetaSignature, MKType, MLam, MNabla, Monad, MPi, MPiCtx, MPiHat, MRoot, MTrace,
    MTraceType, Mod, NameArg, Pi, Root, RuleSet, Signature, Trace, TraceTm, Var, fv,
)


class _Printer:
    def __init__(self, canonical: bool = False, avoid=()):
        self.canonical = canonical
        self.avoid = set(avoid)
        self.count = 0

    # binder management; env maps source names to printed names
    def bind(self, name: str, env: dict) -> tuple[str, dict]:
        if not self.canonical:
            if name in env and env[name] != name:
                env = {k: v for k, v in env.items() if k != name}
            return name, env
        self.count += 1
        new = f"v{self.count}"
        while new in self.avoid:
            self.count += 1
            new = f"v{self.count}"
        env = dict(env)
        env[name] = new
        return new, env

    def ref(self, name: str, env: dict) -> str:
        return env.get(name, name)

    # ---- kinds and types
    def kind(self, k, env) -> str:
        if isinstance(k, KType):
            return "type"
        if k.name not in fv(k.body):
            return f"{self.typ(k.arg, env, 1)} -> {self.kind(k.body, env)}"
        arg = self.typ(k.arg, env, 0)
        name, env2 = self.bind(k.name, env)
        return f"Pi {name}:{arg}. {self.kind(k.body, env2)}"

    def typ(self, t, env, prec: int = 0) -> str:
        if isinstance(t, Pi):
            if t.name not in fv(t.body):
                arrow = "-o" if t.mod is Mod.LIN else "->"
                s = f"{self.typ(t.arg, env, 1)} {arrow} {self.typ(t.body, env, 0)}"
            else:
                arg = self.typ(t.arg, env, 0)
                name, env2 = self.bind(t.name, env)
                hat = "^" if t.mod is Mod.LIN else ""
                s = f"Pi {hat}{name}:{arg}. {self.typ(t.body, env2, 0)}"
            return f"({s})" if prec > 0 else s
        if isinstance(t, Atom):
            if not t.spine:
                return t.head
            s = " ".join([t.head] + [self.arg(a, env) for a in t.spine])
            return f"({s})" if prec > 1 else s
        if isinstance(t, Monad):
            return self.monad(t.ctx, env)
        raise TypeError(f"not a type: {t!r}")

    def monad(self, ctx, env) -> str:
        parts = []
        for d in ctx:
            ty = self.typ(d.type, env, 0)
            name, env = self.bind(d.name, env)
            bang = "!" if d.mod is Mod.PER else ""
            parts.append(f"{bang}{name} : {ty}")
        return "{" + ", ".join(parts) + "}" if parts else "{ }"

    # ---- terms
    def term(self, n, env, prec: int = 0) -> str:
        if isinstance(n, Lam):
            name, env2 = self.bind(n.name, env)
            hat = "^" if n.mod is Mod.LIN else ""
            s = f"\\{hat}{name}. {self.term(n.body, env2, 0)}"
            return f"({s})" if prec > 0 else s
        if isinstance(n, Root):
            h = self.ref(n.head.name, env) if isinstance(n.head, Var) else n.head.name
            if not n.spine:
                return h
            s = " ".join([h] + [self.arg(a, env) for a in n.spine])
            return f"({s})" if prec > 1 else s
        if isinstance(n, TraceTm):
            return self.trace(n.trace, env)
        raise TypeError(f"not a term: {n!r}")

    def arg(self, a: Arg, env) -> str:
        s = self.term(a.term, env, 2)
        return "^" + s if a.mod is Mod.LIN else s

    # ---- contexts and traces
    def outputs(self, outs, env, ref: bool):
        parts = []
        for d in outs:
            ty = None if d.type is None else self.typ(d.type, env, 0)
            if ref:
                name = self.ref(d.name, env)
            else:
                name, env = self.bind(d.name, env)
            mark = "!" if d.mod is Mod.PER else "^"
            parts.append(f"{mark}{name}" + ("" if ty is None else f" : {ty}"))
        return "{" + ", ".join(parts) + "}", env

    def trace(self, tr: Trace, env, ref: bool = False) -> str:
        if not tr.steps:
            return "{ }"
        parts = []
        for st in tr.steps:
            if isinstance(st, Let):
                spine = "".join(" " + self.arg(a, env) for a in st.spine)
                outs, env = self.outputs(st.outputs, env, ref)
                parts.append(f"let {outs} = {st.const}{spine}")
            else:
                spine = "".join(" " + self.marg(a, env) for a in st.spine)
                parts.append(f"{self.ref(st.var, env)}{spine}")
        return "{ " + " ; ".join(parts) + " }"

    def ctx(self, items, env) -> str:
        """Meta-level context; declared names are references."""
        parts = []
        for d in items:
            if isinstance(d, CtxVar):
                parts.append(self.ref(d.name, env))
            else:
                bang = "!" if d.mod is Mod.PER else ""
                parts.append(f"{bang}{self.ref(d.name, env)} : {self.typ(d.type, env, 0)}")
        return "[" + ", ".join(parts) + "]"

    # ---- meta layer
    def mtype(self, t, env, prec: int = 0) -> str:
        if isinstance(t, MKType):
            return "type"
        if isinstance(t, MAtom):
            if not t.spine:
                return t.head
            s = " ".join([t.head] + [self.marg(a, env) for a in t.spine])
            return f"({s})" if prec > 1 else s
        if isinstance(t, MTraceType):
            s = f"{self.ctx(t.pre, env)} =>{t.mode} {t.sig} {self.ctx(t.post, env)}"
            return f"({s})" if prec > 0 else s
        if isinstance(t, MPi):
            if t.name not in fv(t.body):
                s = f"{self.mtype(t.arg, env, 1)} -> {self.mtype(t.body, env, 0)}"
            else:
                arg = self.mtype(t.arg, env, 0)
                name, env2 = self.bind(t.name, env)
                s = f"Pi {name}:{arg}. {self.mtype(t.body, env2, 0)}"
        elif isinstance(t, MPiCtx):
            if t.name not in fv(t.body):
                s = f"ctx -> {self.mtype(t.body, env, 0)}"
            else:
                name, env2 = self.bind(t.name, env)
                s = f"Pi {name}:ctx. {self.mtype(t.body, env2, 0)}"
        elif isinstance(t, MPiHat):
            arg = self.typ(t.arg, env, 0)
            name, env2 = self.bind(t.name, env)
            s = f"Pihat {name}:{arg}. {self.mtype(t.body, env2, 0)}"
        elif isinstance(t, MNabla):
            names = []
            while isinstance(t, MNabla):
                name, env = self.bind(t.name, env)
                names.append(name)
                t = t.body
            s = f"nabla {' '.join(names)}. {self.mtype(t, env, 0)}"
        else:
            raise TypeError(f"not a meta type: {t!r}")
        return f"({s})" if prec > 0 else s

    def mterm(self, n, env, prec: int = 0) -> str:
        if isinstance(n, MLam):
            name, env2 = self.bind(n.name, env)
            s = f"\\{name}. {self.mterm(n.body, env2, 0)}"
            return f"({s})" if prec > 0 else s
        if isinstance(n, MRoot):
            h = self.ref(n.head, env)
            if not n.spine:
                return h
            s = " ".join([h] + [self.marg(a, env) for a in n.spine])
            return f"({s})" if prec > 1 else s
        if isinstance(n, MTrace):
            return self.trace(n.trace, env, ref=True)
        raise TypeError(f"not a meta term: {n!r}")

    def marg(self, a, env) -> str:
        if isinstance(a, CtxArg):
            return self.ctx(a.ctx, env)
        if isinstance(a, NameArg):
            return a.name if a.name == "#" else self.ref(a.name, env)
        if isinstance(a, ClfArg):
            return self.term(a.term, env, 2)
        return self.mterm(a, env, 2)


def show(node, canonical: bool = False) -> str:
    """Render any syntax node. With `canonical`, bound names become v1, v2, ..."""
    p = _Printer(canonical, fv(node) if canonical and not isinstance(node, (Signature, MetaSignature)) else ())
    env: dict = {}
    if isinstance(node, Signature):
        return "".join(f"{n} : {show_entry(e, p)}.\n" for n, e in node.entries)
    if isinstance(node, MetaSignature):
        lines = []
        for e in node.entries:
            if isinstance(e, RuleSet):
                lines.append(f"sig {e.name} = {' '.join(e.consts)}.\n")
            else:
                lines.append(f"{e[0]} : {p.mtype(e[1], env)}.\n")
        return "".join(lines)
    if isinstance(node, (KType, KPi)):
        return p.kind(node, env)
    if isinstance(node, (Pi, Atom, Monad)):
        return p.typ(node, env)
    if isinstance(node, (Lam, Root, TraceTm)):
        return p.term(node, env)
    if isinstance(node, Trace):
        return p.trace(node, env)
    if isinstance(node, Let):
        return p.trace(Trace((node,)), env)[2:-2]
    if isinstance(node, Arg):
        return p.arg(node, env)
    if isinstance(node, tuple):
        return p.ctx(node, env)
    if isinstance(node, Decl):
        return p.ctx((node,), env)[1:-1]
    if isinstance(node, (MKType, MAtom, MPi, MPiCtx, MPiHat, MNabla, MTraceType)):
        return p.mtype(node, env)
    if isinstance(node, (MLam, MRoot, MTrace)):
        return p.mterm(node, env)
    if isinstance(node, (CtxArg, NameArg, ClfArg)):
        return p.marg(node, env)
    if isinstance(node, (Var, Const)):
        return node.name
    raise TypeError(f"show: unexpected node {node!r}")


def show_in(node, env: dict) -> str:
    """Canonical rendering of a term, type or argument with free names mapped through `env`."""
    p = _Printer(True, fv(node))
    if isinstance(node, Arg):
        return p.arg(node, dict(env))
    if isinstance(node, (Pi, Atom, Monad)):
        return p.typ(node, dict(env))
    return p.term(node, dict(env))


def show_entry(e, p: _Printer | None = None) -> str:
    p = p or _Printer()
    return p.kind(e, {}) if isinstance(e, (KType, KPi)) else p.typ(e, {})
