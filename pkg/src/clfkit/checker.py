"""Bidirectional type checking for CLF kinds, types, terms, spines and traces.

Context splitting is done lazily: checking threads the set of still
available linear variables from left to right, and persistent positions are
checked with every outer linear variable hidden.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .hsubst import HSubstError, erase, hsubst, rename
from .printer import show
from .syntax import (
    LIN, PER, Atom, CtxVar, Decl, KPi, KType, Lam, Let, Monad, Pi, Root, Signature,
    Trace, TraceTm, Var, VarStep, alpha_eq, bound_names, fresh, fv, is_kind,
)


class CheckError(Exception):
    pass


@dataclass(frozen=True)
class Diagnostic:
    location: str
    message: str

    def to_json(self) -> dict:
        return {"location": self.location, "message": self.message}


@dataclass
class CheckReport:
    verdict: str = "accept"
    diagnostics: list = field(default_factory=list)
    context: Optional[tuple] = None
    assumptions: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict == "accept"

    def reject(self, location: str, message: str) -> None:
        self.verdict = "reject"
        self.diagnostics.append(Diagnostic(location, message))

    @classmethod
    def failure(cls, location: str, message: str) -> "CheckReport":
        r = cls()
        r.reject(location, message)
        return r


@dataclass(frozen=True)
class LinearityState:
    context: tuple = ()
    consumed: frozenset = frozenset()


@dataclass(frozen=True)
class Env:
    vars: dict  # name -> (Mod, Type or None)
    hidden: frozenset = frozenset()

    def add(self, mod, name: str, ty) -> "Env":
        d = dict(self.vars)
        d[name] = (mod, ty)
        return Env(d, self.hidden)

    def hide(self, names) -> "Env":
        return Env(self.vars, self.hidden | frozenset(names))


def _linear(ctx) -> frozenset:
    return frozenset(d.name for d in ctx if isinstance(d, Decl) and d.mod is LIN)


def env_of(ctx) -> Env:
    vars = {}
    for d in ctx:
        if isinstance(d, Decl):
            vars[d.name] = (d.mod, d.type)
    return Env(vars)


class Checker:
    def __init__(self, sig: Signature):
        self.sig = sig

    # ------------------------------------------------------------ kinds and types

    def kind(self, env: Env, k) -> None:
        while isinstance(k, KPi):
            self.type(env, k.arg)
            name, body = self._fresh_binder(env, k.name, k.body)
            env = env.add(PER, name, k.arg)
            k = body
        if not isinstance(k, KType):
            raise CheckError(f"not a kind: {show(k)}")

    def _fresh_binder(self, env: Env, name: str, body):
        if name not in env.vars:
            return name, body
        new = fresh(name, set(env.vars) | fv(body))
        return new, rename(body, {name: new})

    def type(self, env: Env, t) -> None:
        """Check that `t` is a well-formed type; only persistent variables may occur."""
        env = env.hide(n for n, (m, _) in env.vars.items() if m is LIN)
        self._type(env, t)

    def _type(self, env: Env, t) -> None:
        if isinstance(t, Pi):
            self._type(env, t.arg)
            if t.mod is LIN and t.name in fv(t.body):
                raise CheckError(f"linear product binder {t.name} occurs in its body")
            name, body = self._fresh_binder(env, t.name, t.body)
            self._type(env.add(PER, name, t.arg), body)
        elif isinstance(t, Atom):
            k = self.sig.get(t.head)
            if k is None:
                raise CheckError(f"unknown constant {t.head}")
            if not is_kind(k):
                raise CheckError(f"{t.head} is not a type family")
            for a in t.spine:
                if not isinstance(k, KPi):
                    raise CheckError(f"type family {t.head} applied to too many arguments")
                if a.mod is not PER:
                    raise CheckError(f"linear argument in the type family {t.head}")
                self._check_persistent(env, frozenset(), a.term, k.arg)
                k = hsubst(k.body, k.name, a.term, erase(k.arg))
            if not isinstance(k, KType):
                raise CheckError(f"type family {t.head} applied to too few arguments")
        elif isinstance(t, Monad):
            self.context(env, t.ctx)
        else:
            raise CheckError(f"not a type: {t!r}")

    def context(self, env: Env, ctx) -> Env:
        """Context formation: each declaration's type checks under the earlier ones."""
        seen = set()
        for d in ctx:
            if isinstance(d, CtxVar):
                raise CheckError(f"context variable {d.name} in a CLF context")
            if d.name in seen:
                raise CheckError(f"duplicate declaration {d.name}")
            seen.add(d.name)
            if d.type is None:
                raise CheckError(f"declaration {d.name} has no type")
            self.type(env, d.type)
            env = env.add(d.mod, d.name, d.type)
        return env

    # ------------------------------------------------------------ terms

    def check(self, env: Env, avail: frozenset, n, t) -> frozenset:
        """Check `n` against `t`; return the linear variables still available."""
        if isinstance(n, Lam):
            if not isinstance(t, Pi):
                raise CheckError(f"lambda {show(n)} checked against non-product type {show(t)}")
            if n.mod is not t.mod:
                raise CheckError(f"modality mismatch: lambda binder {n.name} against {show(t)}")
            name, body = n.name, n.body
            if name in env.vars:
                name = fresh(name, set(env.vars) | fv(body) | fv(t))
                body = rename(body, {n.name: name})
            cod = rename(t.body, {t.name: name}) if t.name != name else t.body
            env2 = env.add(n.mod, name, t.arg)
            if n.mod is LIN:
                out = self.check(env2, avail | {name}, body, cod)
                if name in out:
                    raise CheckError(f"unconsumed linear variable {name}")
                return out
            return self.check(env2, avail, body, cod)
        if isinstance(n, Root):
            ht, avail = self.head(env, avail, n.head)
            res, avail = self.spine(env, avail, n.spine, ht)
            if isinstance(res, Pi):
                raise CheckError(f"term {show(n)} is not eta-long: {show(res)} expects more arguments")
            if not alpha_eq(res, t):
                raise CheckError(f"type mismatch: {show(n)} has type {show(res)}, expected {show(t)}")
            return avail
        if isinstance(n, TraceTm):
            if not isinstance(t, Monad):
                raise CheckError(f"trace checked against non-monadic type {show(t)}")
            env2, avail2, produced = self.trace(env, avail, n.trace)
            surviving = [d for d in produced if d.mod is PER or d.name in avail2]
            if not _match_ctx(surviving, t.ctx):
                got = show(Monad(tuple(surviving)))
                raise CheckError(f"trace interface mismatch: produces {got}, expected {show(t)}")
            return avail2 - {d.name for d in produced}
        raise CheckError(f"not a term: {n!r}")

    def head(self, env: Env, avail: frozenset, h):
        if isinstance(h, Var):
            hit = env.vars.get(h.name)
            if hit is None:
                raise CheckError(f"unbound variable {h.name}")
            mod, ty = hit
            if ty is None:
                raise CheckError(f"{h.name} is a name without a type")
            if mod is LIN:
                if h.name in avail:
                    return ty, avail - {h.name}
                if h.name in env.hidden:
                    raise CheckError(f"linear variable {h.name} used in a persistent position")
                raise CheckError(f"double consumption of linear variable {h.name}")
            return ty, avail
        e = self.sig.get(h.name)
        if e is None:
            raise CheckError(f"unknown constant {h.name}")
        if is_kind(e):
            raise CheckError(f"type family {h.name} used as a term")
        return e, avail

    def _check_persistent(self, env: Env, avail: frozenset, n, t) -> None:
        inner = env.hide(avail | {x for x, (m, _) in env.vars.items() if m is LIN})
        left = self.check(inner, frozenset(), n, t)
        if left:
            raise CheckError(f"unconsumed linear variable {sorted(left)[0]}")

    def spine(self, env: Env, avail: frozenset, spine, t):
        """Check a spine against head type `t`; return (residual type, available)."""
        for a in spine:
            if not isinstance(t, Pi):
                raise CheckError(f"spine too long: {show(t)} is not a product")
            if a.mod is not t.mod:
                want = "linear" if t.mod is LIN else "persistent"
                raise CheckError(f"modality mismatch: expected a {want} argument for {show(t)}")
            if a.mod is PER:
                self._check_persistent(env, avail, a.term, t.arg)
                try:
                    t = hsubst(t.body, t.name, a.term, erase(t.arg))
                except HSubstError as e:
                    raise CheckError(str(e)) from e
            else:
                avail = self.check(env, avail, a.term, t.arg)
                t = t.body
        return t, avail

    # ------------------------------------------------------------ traces

    def let_step(self, env: Env, avail: frozenset, st: Let):
        """Check one step; return (env, available, output declarations)."""
        rule = self.sig.get(st.const)
        if rule is None:
            raise CheckError(f"unknown rule constant {st.const}")
        if is_kind(rule):
            raise CheckError(f"{st.const} is a type family, not a rule")
        res, avail = self.spine(env, avail, st.spine, rule)
        if not isinstance(res, Monad):
            raise CheckError(f"rule {st.const} does not have a monadic codomain after its spine "
                             f"(residual {show(res)})")
        outs = match_outputs(st.outputs, res.ctx)
        if outs is None:
            raise CheckError(f"outputs of {st.const} do not match its codomain {show(res)}")
        seen = set()
        for d in outs:
            if d.name in env.vars or d.name in seen:
                raise CheckError(f"output name {d.name} is not fresh")
            seen.add(d.name)
        for d in outs:
            env = env.add(d.mod, d.name, d.type)
            if d.mod is LIN:
                avail = avail | {d.name}
        return env, avail, outs

    def trace(self, env: Env, avail: frozenset, tr: Trace):
        produced = []
        for i, st in enumerate(tr.steps):
            if isinstance(st, VarStep):
                raise CheckError(f"trace variable {st.var} in a CLF trace")
            try:
                env, avail, outs = self.let_step(env, avail, st)
            except CheckError as e:
                raise CheckError(f"step {i + 1} ({st.const}): {e}") from None
            produced.extend(outs)
        return env, avail, produced


def match_outputs(outs, cod) -> Optional[list]:
    """Match a step's written outputs to the rule's codomain declarations.

    Outputs with a written type may appear in any order; untyped outputs are
    matched by position. The result lists the codomain declarations renamed
    to the written output names, in codomain order.
    """
    outs = list(outs)
    cod = list(cod)
    if len(outs) != len(cod):
        return None

    def go(i: int, used: frozenset, ren: dict):
        if i == len(cod):
            return []
        cd = cod[i]
        ty = rename(cd.type, ren) if ren else cd.type
        order = [i] + [j for j in range(len(outs)) if j != i]
        for j in order:
            if j in used:
                continue
            o = outs[j]
            if o.mod is not cd.mod:
                continue
            if o.type is None:
                if j != i:
                    continue
            elif not alpha_eq(o.type, ty):
                continue
            ren2 = dict(ren)
            if cd.name != o.name:
                ren2[cd.name] = o.name
            rest = go(i + 1, used | {j}, ren2)
            if rest is not None:
                return [Decl(cd.mod, o.name, ty)] + rest
        return None

    return go(0, frozenset(), {})


def _match_ctx(decls, cod) -> bool:
    """Do `decls` (named) and the monad context `cod` agree up to renaming and reordering?"""
    return match_outputs(decls, cod) is not None


def ctx_equiv(c1, c2) -> bool:
    """Equality of contexts up to dependency-respecting reordering."""
    v1 = sorted(d.name for d in c1 if isinstance(d, CtxVar))
    v2 = sorted(d.name for d in c2 if isinstance(d, CtxVar))
    if v1 != v2:
        return False
    d1 = {d.name: d for d in c1 if isinstance(d, Decl)}
    d2 = {d.name: d for d in c2 if isinstance(d, Decl)}
    if d1.keys() != d2.keys():
        return False
    for k, a in d1.items():
        b = d2[k]
        if a.mod is not b.mod or not alpha_eq(a.type, b.type):
            return False
    return True


# ---------------------------------------------------------------- entry points


def check_signature(sig: Signature) -> CheckReport:
    """Check every entry under the entries before it; keep going after failures."""
    report = CheckReport()
    prefix = Signature()
    for name, entry in sig.entries:
        c = Checker(prefix)
        try:
            if is_kind(entry):
                c.kind(Env({}), entry)
            else:
                c.type(Env({}), entry)
        except (CheckError, HSubstError) as e:
            report.reject(name, str(e))
        prefix = prefix.extend(name, entry)
    return report


def _state(state) -> LinearityState:
    return state if isinstance(state, LinearityState) else LinearityState(tuple(state))


def _start(sig: Signature, state: LinearityState):
    c = Checker(sig)
    c.context(Env({}), state.context)
    env = env_of(state.context)
    avail = _linear(state.context) - state.consumed
    return c, env, avail


def check_term(sig: Signature, state: LinearityState, term, ty) -> CheckReport:
    """Check `term` against `ty`; every available linear variable must be used exactly once."""
    state = _state(state)
    try:
        c, env, avail = _start(sig, state)
        left = c.check(env, avail, term, ty)
        if left:
            raise CheckError(f"unconsumed linear variable {sorted(left)[0]}")
    except (CheckError, HSubstError) as e:
        return CheckReport.failure("term", str(e))
    return CheckReport()


def check_spine(sig: Signature, state: LinearityState, spine, head_type):
    """Returns (residual type or None, report, consumed-after)."""
    state = _state(state)
    try:
        c, env, avail = _start(sig, state)
        res, left = c.spine(env, avail, spine, head_type)
    except (CheckError, HSubstError) as e:
        return None, CheckReport.failure("spine", str(e)), state.consumed
    consumed = state.consumed | (_linear(state.context) - left)
    return res, CheckReport(), consumed


def check_trace(sig: Signature, state: LinearityState, trace: Trace):
    """Check `state |- trace :: ctx'`; returns (ctx' or None, report)."""
    state = _state(state)
    try:
        c, env, avail = _start(sig, state)
        env, left, produced = c.trace(env, avail, trace)
    except (CheckError, HSubstError) as e:
        return None, CheckReport.failure("trace", str(e))
    out = [d for d in state.context if d.mod is PER or d.name in left]
    out += [d for d in produced if d.mod is PER or d.name in left]
    report = CheckReport(context=tuple(out))
    return tuple(out), report


class FrameError(Exception):
    pass


def frame_check(sig: Signature, extra, trace: Trace, pre, post) -> bool:
    """Does `extra, pre |- trace :: extra, post` hold?"""
    taken = {d.name for d in pre} | set(bound_names(trace))
    for d in extra:
        if d.name in taken:
            raise FrameError(f"name clash: {d.name}")
    ctx, report = check_trace(sig, LinearityState(tuple(pre) + tuple(extra)), trace)
    if not report.ok:
        return False
    return ctx_equiv(ctx, tuple(post) + tuple(extra))
