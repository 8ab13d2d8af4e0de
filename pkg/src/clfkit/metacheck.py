"""Type checking for the meta layer: trace types, context and name
quantification, products over CLF types, and traces with variable steps.

Contexts are threaded through a trace from left to right. A trace variable
step `X S` is framed: its pre-context is carved out of the current context
(persistent entries are shared, not consumed) and its post-context is
appended to what remains. Persistent declarations of a trace type's
pre-context are implicitly part of its post-context.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .checker import Checker, CheckError, CheckReport, Env, env_of
from .engine import System, enumerate_matches, make_state
from .hsubst import HSubstError, erase, hsubst, subst
from .printer import show
from .syntax import (
    FRESH, LIN, PER, ClfArg, CtxArg, CtxVar, Decl, Let, MAtom, MetaSignature, MKType,
    MLam, MNabla, Monad, MPi, MPiCtx, MPiHat, MRoot, MTrace, MTraceType, NameArg, Root,
    RuleSet, Signature, Trace, Var, VarStep, alpha_eq, fresh, fv, is_kind, telescope,
)
from .traces import trace_equal


class MetaCheckError(Exception):
    pass


# ---------------------------------------------------------------- contexts


@dataclass(frozen=True)
class MetaContext:
    """Gamma holds (name, kind, classifier) with kind "meta", "ctx" or "clf";
    xi holds the declared names."""

    gamma: tuple = ()
    xi: tuple = ()

    def lookup(self, name: str):
        for n, kind, ty in reversed(self.gamma):
            if n == name:
                return kind, ty
        return None

    def names(self) -> set:
        return {n for n, _, _ in self.gamma} | set(self.xi)

    def _add(self, name: str, kind: str, ty) -> "MetaContext":
        if name in self.names():
            raise MetaCheckError(f"{name} is already declared")
        return MetaContext(self.gamma + ((name, kind, ty),), self.xi)

    def with_meta(self, name: str, ty) -> "MetaContext":
        return self._add(name, "meta", ty)

    def with_ctx(self, name: str) -> "MetaContext":
        return self._add(name, "ctx", None)

    def with_clf(self, name: str, ty) -> "MetaContext":
        return self._add(name, "clf", ty)

    def with_name(self, name: str) -> "MetaContext":
        if name in self.names():
            raise MetaCheckError(f"{name} is already declared")
        return MetaContext(self.gamma, self.xi + (name,))


def filter_context(gamma) -> tuple:
    """Keep the CLF declarations of gamma, as persistent hypotheses."""
    if isinstance(gamma, MetaContext):
        gamma = gamma.gamma
    return tuple(Decl(PER, n, ty) for n, kind, ty in gamma if kind == "clf")


# ---------------------------------------------------------------- substitution


class _MS:
    """Simultaneous substitution for context variables, meta variables and
    CLF variables (the latter also covers renaming of names)."""

    def __init__(self, ctxs=None, metas=None, clf=None):
        self.ctxs = dict(ctxs or {})
        self.metas = dict(metas or {})
        self.clf = dict(clf or {})
        avoid: set = set()
        for items in self.ctxs.values():
            avoid |= fv(CtxArg(tuple(items)))
        for v in self.metas.values():
            avoid |= fv(v)
        for v, _ in self.clf.values():
            avoid |= fv(v)
        self.avoid = avoid

    def keys(self) -> set:
        return set(self.ctxs) | set(self.metas) | set(self.clf)

    def binder(self, name: str, body) -> tuple[str, "_MS"]:
        ctxs = {k: v for k, v in self.ctxs.items() if k != name}
        metas = {k: v for k, v in self.metas.items() if k != name}
        clf = {k: v for k, v in self.clf.items() if k != name}
        if name in self.avoid and (ctxs or metas or clf):
            new = fresh(name, self.avoid | self.keys() | fv(body))
            ctxs[name] = (CtxVar(new),)
            metas[name] = MRoot(new, ())
            clf[name] = (Root(Var(new), ()), None)
            return new, _MS(ctxs, metas, clf)
        return name, _MS(ctxs, metas, clf)

    def name(self, n: str) -> str:
        hit = self.clf.get(n)
        if hit is None:
            return n
        v = hit[0]
        if isinstance(v, Root) and isinstance(v.head, Var) and not v.spine:
            return v.head.name
        raise MetaCheckError(f"cannot substitute a term for the name {n}")

    def term(self, t):
        return subst(t, self.clf) if self.clf else t


def msubst(node, ctxs=None, metas=None, clf=None):
    """Substitute contexts for context variables, meta terms for meta
    variables, and (term, shape) pairs for CLF variables."""
    s = _MS(ctxs, metas, clf)
    if not s.keys():
        return node
    return _ms(node, s)


def rename_meta(node, mapping: dict):
    """Rename variables of any kind."""
    ctxs = {k: (CtxVar(v),) for k, v in mapping.items()}
    metas = {k: MRoot(v, ()) for k, v in mapping.items()}
    clf = {k: (Root(Var(v), ()), None) for k, v in mapping.items()}
    return msubst(node, ctxs, metas, clf)


def _ms_ctx(items, s: _MS) -> tuple:
    out = []
    for it in items:
        if isinstance(it, CtxVar):
            if it.name in s.ctxs:
                out.extend(s.ctxs[it.name])
            else:
                out.append(it)
        else:
            ty = None if it.type is None else s.term(it.type)
            out.append(Decl(it.mod, s.name(it.name), ty))
    return tuple(out)


def _ms_trace(tr: Trace, s: _MS) -> Trace:
    steps = []
    for st in tr.steps:
        if isinstance(st, Let):
            spine = tuple(type(a)(a.mod, s.term(a.term)) for a in st.spine)
            steps.append(Let(_ms_ctx(st.outputs, s), st.const, spine))
            continue
        spine = tuple(_ms(a, s) for a in st.spine)
        if st.var in s.metas:
            v = mapply(s.metas[st.var], spine)
            if isinstance(v, MTrace):
                steps.extend(v.trace.steps)
            elif isinstance(v, MRoot):
                steps.append(VarStep(v.head, v.spine))
            else:
                raise MetaCheckError(f"cannot splice {show(v)} into a trace")
        else:
            steps.append(VarStep(st.var, spine))
    return Trace(tuple(steps))


def _ms(n, s: _MS):
    if isinstance(n, MKType):
        return n
    if isinstance(n, MAtom):
        return MAtom(n.head, tuple(_ms(a, s) for a in n.spine))
    if isinstance(n, MRoot):
        spine = tuple(_ms(a, s) for a in n.spine)
        if n.head in s.metas:
            return mapply(s.metas[n.head], spine)
        return MRoot(n.head, spine)
    if isinstance(n, MPi):
        arg = _ms(n.arg, s)
        x, s2 = s.binder(n.name, n.body)
        return MPi(x, arg, _ms(n.body, s2))
    if isinstance(n, MPiHat):
        arg = s.term(n.arg)
        x, s2 = s.binder(n.name, n.body)
        return MPiHat(x, arg, _ms(n.body, s2))
    if isinstance(n, (MPiCtx, MNabla, MLam)):
        x, s2 = s.binder(n.name, n.body)
        return type(n)(x, _ms(n.body, s2))
    if isinstance(n, MTraceType):
        return MTraceType(_ms_ctx(n.pre, s), n.sig, n.mode, _ms_ctx(n.post, s))
    if isinstance(n, MTrace):
        return MTrace(_ms_trace(n.trace, s))
    if isinstance(n, CtxArg):
        return CtxArg(_ms_ctx(n.ctx, s))
    if isinstance(n, NameArg):
        return n if n.name == FRESH else NameArg(s.name(n.name))
    if isinstance(n, ClfArg):
        return ClfArg(s.term(n.term))
    if isinstance(n, Trace):
        return _ms_trace(n, s)
    raise TypeError(f"msubst: unexpected node {n!r}")


def mapply(value, spine):
    """Apply a meta term to a spine, substituting through lambdas."""
    spine = tuple(spine)
    for i, a in enumerate(spine):
        if isinstance(value, MLam):
            x = value.name
            if isinstance(a, CtxArg):
                value = msubst(value.body, ctxs={x: a.ctx})
            elif isinstance(a, NameArg):
                value = rename_meta(value.body, {x: a.name})
            elif isinstance(a, ClfArg):
                value = msubst(value.body, clf={x: (a.term, None)})
            else:
                value = msubst(value.body, metas={x: a})
        elif isinstance(value, MRoot):
            return MRoot(value.head, value.spine + spine[i:])
        else:
            raise MetaCheckError(f"cannot apply {type(value).__name__} to a spine")
    return value


# ---------------------------------------------------------------- equality


def ctx_equal(c1, c2) -> bool:
    """Context equality: context variables as a multiset, declarations up to
    reordering."""
    v1 = sorted(d.name for d in c1 if isinstance(d, CtxVar))
    v2 = sorted(d.name for d in c2 if isinstance(d, CtxVar))
    if v1 != v2:
        return False
    d1 = [d for d in c1 if isinstance(d, Decl)]
    d2 = [d for d in c2 if isinstance(d, Decl)]
    if len(d1) != len(d2):
        return False
    by_name = {d.name: d for d in d2}
    if len(by_name) != len(d2):
        return False
    for a in d1:
        b = by_name.get(a.name)
        if b is None or a.mod is not b.mod:
            return False
        if (a.type is None) != (b.type is None):
            return False
        if a.type is not None and not alpha_eq(a.type, b.type):
            return False
    return True


def _segments(tr: Trace) -> list:
    out: list = []
    cur: list = []
    for st in tr.steps:
        if isinstance(st, VarStep):
            out.append(Trace(tuple(cur)))
            out.append(st)
            cur = []
        else:
            cur.append(st)
    out.append(Trace(tuple(cur)))
    return out


def _same_steps(t1: Trace, t2: Trace) -> bool:
    rest = list(t2.steps)
    for st in t1.steps:
        for i, other in enumerate(rest):
            if alpha_eq(Trace((st,)), Trace((other,))):
                del rest[i]
                break
        else:
            return False
    return not rest


def trace_meq(t1: Trace, t2: Trace) -> bool:
    """Trace equality at the meta level. Names are global here, so steps must
    agree exactly; independent steps may be permuted, but not across a
    variable step."""
    if alpha_eq(t1, t2):
        return True
    s1, s2 = _segments(t1), _segments(t2)
    if len(s1) != len(s2):
        return False
    for a, b in zip(s1, s2):
        if isinstance(a, VarStep) or isinstance(b, VarStep):
            if not (isinstance(a, VarStep) and isinstance(b, VarStep)):
                return False
            if a.var != b.var or len(a.spine) != len(b.spine):
                return False
            if not all(meq(x, y) for x, y in zip(a.spine, b.spine)):
                return False
        elif not (_same_steps(a, b) and trace_equal(a, b)):
            return False
    return True


def meq(a, b) -> bool:
    """Definitional equality of meta types, terms and spine elements."""
    if type(a) is not type(b):
        return False
    if isinstance(a, MKType):
        return True
    if isinstance(a, (MAtom, MRoot)):
        return (a.head == b.head and len(a.spine) == len(b.spine)
                and all(meq(x, y) for x, y in zip(a.spine, b.spine)))
    if isinstance(a, CtxArg):
        return ctx_equal(a.ctx, b.ctx)
    if isinstance(a, NameArg):
        return a.name == b.name
    if isinstance(a, ClfArg):
        return alpha_eq(a.term, b.term)
    if isinstance(a, MTrace):
        return trace_meq(a.trace, b.trace)
    if isinstance(a, MTraceType):
        return (a.sig == b.sig and a.mode == b.mode
                and ctx_equal(a.pre, b.pre) and ctx_equal(a.post, b.post))
    if isinstance(a, (MPi, MPiHat, MPiCtx, MNabla, MLam)):
        if isinstance(a, MPi) and not meq(a.arg, b.arg):
            return False
        if isinstance(a, MPiHat) and not alpha_eq(a.arg, b.arg):
            return False
        body_b = b.body
        if a.name != b.name:
            x = fresh(a.name, fv(a.body) | fv(b.body))
            body_a = rename_meta(a.body, {a.name: x}) if x != a.name else a.body
            body_b = rename_meta(b.body, {b.name: x})
            return meq(body_a, body_b)
        return meq(a.body, body_b)
    raise TypeError(f"meq: unexpected node {a!r}")


# ---------------------------------------------------------------- checker


def _codomain(t):
    while isinstance(t, (MPi, MPiCtx, MPiHat, MNabla)):
        t = t.body
    return t


def is_meta_kind(t) -> bool:
    return isinstance(_codomain(t), MKType)


@dataclass
class _Result:
    context: tuple
    assumptions: list = field(default_factory=list)


class MetaChecker:
    def __init__(self, sig: Signature, msig: Optional[MetaSignature] = None):
        self.sig = sig
        self.clf = Checker(sig)
        self.consts: dict = {}
        self.rulesets: dict = {}
        self.assumptions: list = []
        self.fresh_names: list = []
        self._counter = itertools.count()
        if msig is not None:
            for e in msig.entries:
                if isinstance(e, RuleSet):
                    self.rulesets[e.name] = e
                else:
                    self.consts[e[0]] = e[1]

    # ------------------------------------------------------------ rule sets

    def ruleset(self, name: str) -> RuleSet:
        rs = self.rulesets.get(name)
        if rs is None:
            raise MetaCheckError(f"unknown rule set {name}")
        return rs

    def check_ruleset(self, rs: RuleSet) -> None:
        for c in rs.consts:
            e = self.sig.get(c)
            if e is None:
                raise MetaCheckError(f"rule set {rs.name}: unknown constant {c}")
            if is_kind(e) or not isinstance(telescope(e)[1], Monad):
                raise MetaCheckError(f"rule set {rs.name}: {c} is not a monadic rule")

    # ------------------------------------------------------------ CLF bridge

    def _env(self, ctx: MetaContext, extra=()) -> Env:
        return env_of(filter_context(ctx) + tuple(extra))

    def clf_type(self, ctx: MetaContext, t, extra=()) -> None:
        try:
            self.clf.type(self._env(ctx, extra), t)
        except (CheckError, HSubstError) as e:
            raise MetaCheckError(f"CLF type {show(t)}: {e}") from None

    def clf_term(self, ctx: MetaContext, m, t) -> None:
        try:
            left = self.clf.check(self._env(ctx), frozenset(), m, t)
        except (CheckError, HSubstError) as e:
            raise MetaCheckError(f"CLF term {show(m)}: {e}") from None
        if left:
            raise MetaCheckError(f"CLF term {show(m)} leaves linear variables unused")

    def xi(self, ctx: MetaContext) -> set:
        return set(ctx.xi) | set(self.fresh_names)

    # ------------------------------------------------------------ binders

    def _open(self, ctx: MetaContext, name: str, body):
        """Pick a binder name not yet in scope, renaming `body` if needed."""
        taken = ctx.names() | set(self.fresh_names) | set(self.consts)
        if name not in taken:
            return name, body
        new = fresh(name, taken | fv(body))
        return new, rename_meta(body, {name: new})

    # ------------------------------------------------------------ kinds and types

    def kind(self, ctx: MetaContext, k) -> None:
        if isinstance(k, MKType):
            return
        if isinstance(k, MPi):
            self.type(ctx, k.arg)
            x, body = self._open(ctx, k.name, k.body)
            self.kind(ctx.with_meta(x, k.arg), body)
        elif isinstance(k, MPiCtx):
            x, body = self._open(ctx, k.name, k.body)
            self.kind(ctx.with_ctx(x), body)
        elif isinstance(k, MPiHat):
            self.clf_type(ctx, k.arg)
            x, body = self._open(ctx, k.name, k.body)
            self.kind(ctx.with_clf(x, k.arg), body)
        elif isinstance(k, MNabla):
            x, body = self._open(ctx, k.name, k.body)
            self.kind(ctx.with_name(x), body)
        else:
            raise MetaCheckError(f"not a kind: {show(k)}")

    def type(self, ctx: MetaContext, a) -> None:
        """Check that `a` is a meta type of kind `type`."""
        if isinstance(a, MAtom):
            k = self.consts.get(a.head)
            if k is None:
                raise MetaCheckError(f"unknown type family {a.head}")
            if not is_meta_kind(k):
                raise MetaCheckError(f"{a.head} is not a type family")
            res = self.spine(ctx, a.spine, k, a.head)
            if not isinstance(res, MKType):
                raise MetaCheckError(f"type family {a.head} is not fully applied")
        elif isinstance(a, MPi):
            self.type(ctx, a.arg)
            x, body = self._open(ctx, a.name, a.body)
            self.type(ctx.with_meta(x, a.arg), body)
        elif isinstance(a, MPiCtx):
            x, body = self._open(ctx, a.name, a.body)
            self.type(ctx.with_ctx(x), body)
        elif isinstance(a, MPiHat):
            self.clf_type(ctx, a.arg)
            x, body = self._open(ctx, a.name, a.body)
            self.type(ctx.with_clf(x, a.arg), body)
        elif isinstance(a, MNabla):
            x, body = self._open(ctx, a.name, a.body)
            self.type(ctx.with_name(x), body)
        elif isinstance(a, MTraceType):
            self.check_ruleset(self.ruleset(a.sig))
            if a.mode not in ("*", "1"):
                raise MetaCheckError(f"unknown trace type mode {a.mode}")
            self.context(ctx, a.pre)
            self.context(ctx, a.post)
        elif isinstance(a, MKType):
            raise MetaCheckError("type used where a type of kind type is expected")
        else:
            raise MetaCheckError(f"not a meta type: {a!r}")

    def context(self, ctx: MetaContext, items) -> None:
        """Context formation: declared names come from xi, each at most once;
        context variables must be declared in gamma."""
        xi = self.xi(ctx)
        seen: list = []
        for it in items:
            if isinstance(it, CtxVar):
                hit = ctx.lookup(it.name)
                if hit is None or hit[0] != "ctx":
                    raise MetaCheckError(f"{it.name} is not a declared context variable")
                continue
            if it.name not in xi:
                raise MetaCheckError(f"name {it.name} is not introduced by nabla")
            if it.name in {d.name for d in seen}:
                raise MetaCheckError(f"name {it.name} is declared twice in a context")
            if it.type is None:
                raise MetaCheckError(f"declaration {it.name} has no type")
            self.clf_type(ctx, it.type, tuple(Decl(PER, d.name, d.type) for d in seen))
            seen.append(it)

    # ------------------------------------------------------------ terms

    def term(self, ctx: MetaContext, m, a) -> None:
        if isinstance(m, MLam):
            if isinstance(a, MPi):
                x, body, ty = self._lam(ctx, m, a)
                self.term(ctx.with_meta(x, a.arg), body, ty)
            elif isinstance(a, MPiCtx):
                x, body, ty = self._lam(ctx, m, a)
                self.term(ctx.with_ctx(x), body, ty)
            elif isinstance(a, MPiHat):
                x, body, ty = self._lam(ctx, m, a)
                self.term(ctx.with_clf(x, a.arg), body, ty)
            elif isinstance(a, MNabla):
                x, body, ty = self._lam(ctx, m, a)
                self.term(ctx.with_name(x), body, ty)
            else:
                raise MetaCheckError(f"lambda checked against {show(a)}")
        elif isinstance(m, MTrace):
            if not isinstance(a, MTraceType):
                raise MetaCheckError(f"trace checked against non-trace type {show(a)}")
            self.trace(ctx, m.trace, a)
        elif isinstance(m, MRoot):
            got = self.infer(ctx, m)
            if not meq(got, a):
                raise MetaCheckError(f"type mismatch: {show(m)} has type {show(got)}, "
                                     f"expected {show(a)}")
        else:
            raise MetaCheckError(f"not a meta term: {m!r}")

    def _lam(self, ctx: MetaContext, m: MLam, a):
        x, body = self._open(ctx, m.name, m.body)
        ty = a.body if a.name == x else rename_meta(a.body, {a.name: x})
        return x, body, ty

    def infer(self, ctx: MetaContext, m: MRoot):
        hit = ctx.lookup(m.head)
        if hit is not None:
            kind, ty = hit
            if kind != "meta":
                raise MetaCheckError(f"{m.head} is not a meta variable")
        else:
            ty = self.consts.get(m.head)
            if ty is None:
                raise MetaCheckError(f"unknown meta constant {m.head}")
            if is_meta_kind(ty):
                raise MetaCheckError(f"type family {m.head} used as a term")
        return self.spine(ctx, m.spine, ty, m.head)

    def spine(self, ctx: MetaContext, spine, ty, head: str = "?"):
        """Check a spine against `ty`; return the residual type."""
        for i, arg in enumerate(spine):
            where = f"argument {i + 1} of {head}"
            try:
                ty = self._spine_arg(ctx, arg, ty)
            except MetaCheckError as e:
                raise MetaCheckError(f"{where}: {e}") from None
        return ty

    def _spine_arg(self, ctx: MetaContext, arg, ty):
        if isinstance(ty, MPiCtx):
            if not isinstance(arg, CtxArg):
                raise MetaCheckError("expected a context")
            self.context(ctx, arg.ctx)
            return msubst(ty.body, ctxs={ty.name: arg.ctx})
        if isinstance(ty, MNabla):
            if not isinstance(arg, NameArg):
                raise MetaCheckError("expected a name")
            name = arg.name
            if name == FRESH:
                name = self.fresh_name(ctx, ty)
            elif name not in self.xi(ctx):
                raise MetaCheckError(f"{name} is not a declared name")
            return rename_meta(ty.body, {ty.name: name})
        if isinstance(ty, MPiHat):
            if not isinstance(arg, ClfArg):
                raise MetaCheckError("expected a CLF term")
            self.clf_term(ctx, arg.term, ty.arg)
            try:
                return hsubst(ty.body, ty.name, arg.term, erase(ty.arg))
            except HSubstError as e:
                raise MetaCheckError(str(e)) from None
        if isinstance(ty, MPi):
            if not isinstance(arg, (MLam, MRoot, MTrace)):
                raise MetaCheckError("expected a meta term")
            self.term(ctx, arg, ty.arg)
            return msubst(ty.body, metas={ty.name: arg})
        raise MetaCheckError(f"too many arguments: {show(ty)} is not a product")

    def fresh_name(self, ctx: MetaContext, ty) -> str:
        avoid = ctx.names() | set(self.fresh_names) | fv(ty)
        while True:
            n = f"a#{next(self._counter)}"
            if n not in avoid:
                self.fresh_names.append(n)
                return n

    # ------------------------------------------------------------ traces

    def trace(self, ctx: MetaContext, tr: Trace, tt: MTraceType) -> tuple:
        """Check a trace against a trace type; return the computed post-context."""
        rs = self.ruleset(tt.sig)
        if tt.mode == "1":
            if len(tr.steps) != 1:
                raise MetaCheckError(f"a one-step trace type needs exactly one step, "
                                     f"found {len(tr.steps)}")
            if isinstance(tr.steps[0], VarStep):
                raise MetaCheckError("trace variable at a one-step trace type")
        cur = tuple(tt.pre)
        for i, st in enumerate(tr.steps):
            try:
                if isinstance(st, Let):
                    cur = self.let_step(ctx, cur, st, rs)
                else:
                    cur = self.var_step(ctx, cur, st, tt)
            except MetaCheckError as e:
                label = st.const if isinstance(st, Let) else st.var
                raise MetaCheckError(f"step {i + 1} ({label}): {e}") from None
        implicit = {d.name for d in tt.pre if isinstance(d, Decl) and d.mod is PER}
        implicit -= {d.name for d in tt.post if isinstance(d, Decl)}
        final = tuple(d for d in cur if not (isinstance(d, Decl) and d.name in implicit))
        if not ctx_equal(final, tt.post):
            raise MetaCheckError(f"trace produces {_show_ctx(final)}, expected {_show_ctx(tt.post)}")
        if tt.mode == "*":
            self._maximal(ctx, tt)
        return final

    def let_step(self, ctx: MetaContext, cur: tuple, st: Let, rs: RuleSet) -> tuple:
        if st.const not in rs.consts:
            raise MetaCheckError(f"{st.const} is not a rule of {rs.name}")
        decls = [d for d in cur if isinstance(d, Decl)]
        env = self._env(ctx, decls)
        avail = frozenset(d.name for d in decls if d.mod is LIN)
        try:
            _, left, outs = self.clf.let_step(env, avail, st)
        except (CheckError, HSubstError) as e:
            raise MetaCheckError(str(e)) from None
        xi = self.xi(ctx)
        for d in outs:
            if d.name not in xi:
                raise MetaCheckError(f"output {d.name} is not introduced by nabla")
        gone = avail - left
        kept = tuple(d for d in cur if not (isinstance(d, Decl) and d.name in gone))
        return kept + tuple(outs)

    def var_step(self, ctx: MetaContext, cur: tuple, st: VarStep, tt: MTraceType) -> tuple:
        hit = ctx.lookup(st.var)
        if hit is None or hit[0] != "meta":
            raise MetaCheckError(f"{st.var} is not a trace variable")
        vt = self.spine(ctx, st.spine, hit[1], st.var)
        if not isinstance(vt, MTraceType):
            raise MetaCheckError(f"{st.var} does not have a trace type after its arguments")
        if vt.mode != "*":
            raise MetaCheckError(f"trace variable {st.var} has a one-step trace type")
        if vt.sig != tt.sig:
            raise MetaCheckError(f"trace variable {st.var} is over {vt.sig}, expected {tt.sig}")
        rest = list(cur)
        for it in vt.pre:
            if isinstance(it, CtxVar):
                for j, c in enumerate(rest):
                    if isinstance(c, CtxVar) and c.name == it.name:
                        del rest[j]
                        break
                else:
                    raise MetaCheckError(f"context variable {it.name} is not available")
                continue
            for j, c in enumerate(rest):
                if isinstance(c, Decl) and c.name == it.name:
                    if c.mod is not it.mod or not alpha_eq(c.type, it.type):
                        raise MetaCheckError(f"{it.name} has type {show(c.type)}, "
                                             f"{st.var} expects {show(it.type)}")
                    if it.mod is LIN:
                        del rest[j]
                    break
            else:
                raise MetaCheckError(f"{it.name} is not available for {st.var}")
        for it in vt.post:
            if isinstance(it, Decl):
                prev = next((c for c in rest if isinstance(c, Decl) and c.name == it.name), None)
                if prev is not None:
                    if prev.mod is PER and it.mod is PER and alpha_eq(prev.type, it.type):
                        continue
                    raise MetaCheckError(f"{st.var} produces {it.name}, which is already present")
            rest.append(it)
        return tuple(rest)

    def _maximal(self, ctx: MetaContext, tt: MTraceType) -> None:
        post = tt.post
        declared = {d.name for d in post if isinstance(d, Decl)}
        closed = all(isinstance(d, Decl) for d in post) and all(
            fv(d.type) <= declared for d in post)
        if not closed:
            self.assumptions.append(
                f"maximality of {_show_ctx(post)} under {tt.sig} is assumed")
            return
        rs = self.ruleset(tt.sig)
        system = System(self.sig, list(rs.consts))
        system.rules = [r for r in system.rules if r.linear_premises]
        if enumerate_matches(make_state(post), system):
            raise MetaCheckError(f"{_show_ctx(post)} is not maximal under {tt.sig}")

    # ------------------------------------------------------------ declarations

    def declaration(self, name: str, ty) -> None:
        ctx = MetaContext()
        if is_meta_kind(ty):
            self.kind(ctx, ty)
        else:
            self.type(ctx, ty)


def _show_ctx(items) -> str:
    parts = []
    for it in items:
        if isinstance(it, CtxVar):
            parts.append(it.name)
        else:
            mark = "!" if it.mod is PER else ""
            parts.append(f"{mark}{it.name} : {show(it.type)}" if it.type is not None
                         else f"{mark}{it.name}")
    return "[" + ", ".join(parts) + "]"


# ---------------------------------------------------------------- entry points


def _report(fn) -> CheckReport:
    try:
        fn()
    except (MetaCheckError, CheckError, HSubstError) as e:
        return CheckReport.failure("meta", str(e))
    return CheckReport()


def _checker(sig: Signature, msig) -> MetaChecker:
    return msig if isinstance(msig, MetaChecker) else MetaChecker(sig, msig)


def check_meta_kind(sig: Signature, ctx: MetaContext, k, msig=None) -> CheckReport:
    mc = _checker(sig, msig)
    return _report(lambda: mc.kind(ctx, k))


def check_meta_type(sig: Signature, ctx: MetaContext, a, k=MKType(), msig=None) -> CheckReport:
    mc = _checker(sig, msig)

    def go():
        if not isinstance(k, MKType):
            raise MetaCheckError("only types of kind type are classified here")
        mc.type(ctx, a)

    r = _report(go)
    r.assumptions = list(mc.assumptions)
    return r


def check_meta_term(sig: Signature, ctx: MetaContext, m, a, msig=None) -> CheckReport:
    mc = _checker(sig, msig)
    r = _report(lambda: mc.term(ctx, m, a))
    r.assumptions = list(mc.assumptions)
    return r


def check_meta_trace(sig: Signature, ctx: MetaContext, tr: Trace, tt: MTraceType,
                     msig=None) -> CheckReport:
    mc = _checker(sig, msig)
    out: list = []
    r = _report(lambda: out.append(mc.trace(ctx, tr, tt)))
    if out:
        r.context = out[0]
    r.assumptions = list(mc.assumptions)
    return r


def check_meta_signature(msig: MetaSignature, sig: Signature) -> CheckReport:
    """Check each declaration in order under the ones before it."""
    report = CheckReport()
    mc = MetaChecker(sig)
    for e in msig.entries:
        if isinstance(e, RuleSet):
            try:
                mc.check_ruleset(e)
            except MetaCheckError as err:
                report.reject(e.name, str(err))
            mc.rulesets[e.name] = e
            continue
        name, ty = e
        before = len(mc.assumptions)
        try:
            mc.declaration(name, ty)
        except (MetaCheckError, CheckError, HSubstError) as err:
            report.reject(name, str(err))
        for a in mc.assumptions[before:]:
            report.assumptions.append(f"{name}: {a}")
        mc.consts[name] = ty
    return report
