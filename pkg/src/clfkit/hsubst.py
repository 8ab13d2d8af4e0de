"""Hereditary substitution on spine-form syntax.

Substituting a canonical term for a variable re-normalizes on the fly: when
the variable occurs in head position the substituted value is applied to the
spine, which in turn substitutes into the value's body at a strictly smaller
simple shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .syntax import (
    Arg, Atom, ClfArg, Const, CtxArg, CtxVar, Decl, KPi, KType, Lam, Let, MAtom,
    MKType, MLam, MNabla, Monad, MPi, MPiCtx, MPiHat, MRoot, MTrace, MTraceType,
    Mod, NameArg, Pi, Root, Trace, TraceTm, Var, VarStep, fresh, fv,
    fv_cached, FV_CACHED_TYPES,
)


class HSubstError(Exception):
    """Raised on ill-typed input, such as a spine longer than the shape allows."""


# ---------------------------------------------------------------- shapes


@dataclass(frozen=True)
class Base:
    def __str__(self) -> str:
        return "o"


@dataclass(frozen=True)
class MonadShape:
    def __str__(self) -> str:
        return "{}"


@dataclass(frozen=True)
class Arrow:
    mod: Mod
    dom: "Shape"
    cod: "Shape"

    def __str__(self) -> str:
        arrow = "-o" if self.mod is Mod.LIN else "->"
        return f"({self.dom} {arrow} {self.cod})"


BASE = Base()
MONAD = MonadShape()
Shape = Union[Base, MonadShape, Arrow]


def erase(t) -> Shape:
    if isinstance(t, Pi):
        return Arrow(t.mod, erase(t.arg), erase(t.body))
    if isinstance(t, Atom):
        return BASE
    if isinstance(t, Monad):
        return MONAD
    raise HSubstError(f"cannot erase {t!r}")


def height(s: Shape) -> int:
    if isinstance(s, Arrow):
        return 1 + max(height(s.dom), height(s.cod))
    return 1


def arity(s: Optional[Shape]) -> int:
    n = 0
    while isinstance(s, Arrow):
        n += 1
        s = s.cod
    return n


@dataclass
class SubstStats:
    """Instrumentation for the termination argument."""

    applications: int = 0
    max_depth: int = 0


# ---------------------------------------------------------------- substitution


@dataclass
class _Sub:
    sigma: dict
    fvs: frozenset
    stats: Optional[SubstStats] = None
    depth: int = 0

    @classmethod
    def make(cls, sigma: dict, stats=None, depth=0) -> "_Sub":
        fvs: set[str] = set()
        for value, _ in sigma.values():
            fvs |= fv(value)
        return cls(sigma, frozenset(fvs), stats, depth)

    def binder(self, name: str, scope) -> tuple[str, "_Sub"]:
        """Pass under a binder for `name`, renaming it if it would capture."""
        sigma = self.sigma
        if name in sigma:
            sigma = {k: v for k, v in sigma.items() if k != name}
        if name in self.fvs and sigma:
            avoid = set(self.fvs) | set(sigma)
            for node in scope:
                avoid |= fv(node)
            new = fresh(name, avoid)
            sigma = dict(sigma)
            sigma[name] = (Root(Var(new), ()), None)
            return new, _Sub(sigma, self.fvs | {new}, self.stats, self.depth)
        if sigma is self.sigma:
            return name, self
        return name, _Sub(sigma, self.fvs, self.stats, self.depth)

    def rename_of(self, name: str) -> Optional[str]:
        hit = self.sigma.get(name)
        if hit is None:
            return None
        value = hit[0]
        if isinstance(value, Root) and isinstance(value.head, Var) and not value.spine:
            return value.head.name
        raise HSubstError(f"cannot substitute a term for the name {name}")


def subst(node, sigma: dict, stats: Optional[SubstStats] = None):
    """Simultaneous hereditary substitution; `sigma` maps names to (value, shape)."""
    if not sigma:
        return node
    return _sub(node, _Sub.make(sigma, stats))


def hsubst(node, x: str, value, shape: Optional[Shape], stats: Optional[SubstStats] = None):
    return subst(node, {x: (value, shape)}, stats)


def rename(node, mapping: dict[str, str]):
    return subst(node, {k: (Root(Var(v), ()), None) for k, v in mapping.items() if k != v})


def apply_spine(value, spine, shape: Optional[Shape], stats: Optional[SubstStats] = None):
    return _apply(value, tuple(spine), shape, stats, 0)


def _apply(value, spine: tuple, shape, stats, depth: int):
    if not spine:
        return value
    if stats is not None:
        stats.applications += 1
        stats.max_depth = max(stats.max_depth, depth + 1)
    if isinstance(value, Lam):
        if not isinstance(shape, Arrow):
            raise HSubstError(f"spine of length {len(spine)} applied at non-function shape {shape}")
        a = spine[0]
        if a.mod is not value.mod or a.mod is not shape.mod:
            raise HSubstError("modality mismatch in hereditary application")
        inner = _Sub.make({value.name: (a.term, shape.dom)}, stats, depth + 1)
        body = _sub(value.body, inner)
        return _apply(body, spine[1:], shape.cod, stats, depth + 1)
    if isinstance(value, Root):
        if shape is not None and len(spine) > arity(shape):
            raise HSubstError(f"spine of length {len(spine)} exceeds shape {shape}")
        return Root(value.head, value.spine + spine)
    raise HSubstError(f"cannot apply {type(value).__name__} to a spine")


def _spine(spine: tuple, s: _Sub) -> tuple:
    return tuple(Arg(a.mod, _sub(a.term, s)) for a in spine)


def _ctx(items: tuple, s: _Sub, ref: bool = False, rest=()):
    out = []
    for i, it in enumerate(items):
        if isinstance(it, Decl):
            ty = _sub(it.type, s) if it.type is not None else None
            if ref:
                new = s.rename_of(it.name)
                out.append(Decl(it.mod, new or it.name, ty))
            else:
                name, s = s.binder(it.name, (items[i + 1:], *rest))
                out.append(Decl(it.mod, name, ty))
        elif isinstance(it, CtxVar):
            out.append(it)
        else:
            raise TypeError(f"not a context item: {it!r}")
    return tuple(out), s


def _trace(tr: Trace, s: _Sub, ref: bool = False):
    steps = []
    for j, st in enumerate(tr.steps):
        if isinstance(st, Let):
            spine = _spine(st.spine, s)
            outs, s = _ctx(st.outputs, s, ref, (Trace(tr.steps[j + 1:]),))
            steps.append(Let(outs, st.const, spine))
        else:
            v = s.rename_of(st.var) if st.var in s.sigma else None
            steps.append(VarStep(v or st.var, tuple(_sub(a, s) for a in st.spine)))
    return Trace(tuple(steps)), s


def _sub(n, s: _Sub):
    if isinstance(n, FV_CACHED_TYPES) and s.sigma.keys().isdisjoint(fv_cached(n)):
        return n
    if isinstance(n, Root):
        h = n.head
        if isinstance(h, Var) and h.name in s.sigma:
            value, shape = s.sigma[h.name]
            return _apply(value, _spine(n.spine, s), shape, s.stats, s.depth)
        if not n.spine:
            return n
        return Root(h, _spine(n.spine, s))
    if isinstance(n, Lam):
        name, s2 = s.binder(n.name, (n.body,))
        return Lam(n.mod, name, _sub(n.body, s2))
    if isinstance(n, Arg):
        return Arg(n.mod, _sub(n.term, s))
    if isinstance(n, Atom):
        return Atom(n.head, _spine(n.spine, s)) if n.spine else n
    if isinstance(n, Pi):
        arg = _sub(n.arg, s)
        name, s2 = s.binder(n.name, (n.body,))
        return Pi(n.mod, name, arg, _sub(n.body, s2))
    if isinstance(n, KPi):
        arg = _sub(n.arg, s)
        name, s2 = s.binder(n.name, (n.body,))
        return KPi(name, arg, _sub(n.body, s2))
    if isinstance(n, Monad):
        return Monad(_ctx(n.ctx, s)[0])
    if isinstance(n, TraceTm):
        return TraceTm(_trace(n.trace, s)[0])
    if isinstance(n, Trace):
        return _trace(n, s)[0]
    if isinstance(n, (KType, MKType)):
        return n
    if isinstance(n, tuple):
        return _ctx(n, s)[0]
    if isinstance(n, Decl):
        return Decl(n.mod, n.name, _sub(n.type, s) if n.type is not None else None)
    if isinstance(n, CtxVar):
        return n
    # meta layer: contexts and trace outputs there refer to names bound elsewhere
    if isinstance(n, MAtom):
        return MAtom(n.head, tuple(_sub(a, s) for a in n.spine))
    if isinstance(n, MRoot):
        head = s.rename_of(n.head) if n.head in s.sigma else None
        return MRoot(head or n.head, tuple(_sub(a, s) for a in n.spine))
    if isinstance(n, MPi):
        arg = _sub(n.arg, s)
        name, s2 = s.binder(n.name, (n.body,))
        return MPi(name, arg, _sub(n.body, s2))
    if isinstance(n, MPiHat):
        arg = _sub(n.arg, s)
        name, s2 = s.binder(n.name, (n.body,))
        return MPiHat(name, arg, _sub(n.body, s2))
    if isinstance(n, (MPiCtx, MNabla, MLam)):
        name, s2 = s.binder(n.name, (n.body,))
        return type(n)(name, _sub(n.body, s2))
    if isinstance(n, MTraceType):
        return MTraceType(_ctx(n.pre, s, True)[0], n.sig, n.mode, _ctx(n.post, s, True)[0])
    if isinstance(n, MTrace):
        return MTrace(_trace(n.trace, s, True)[0])
    if isinstance(n, CtxArg):
        return CtxArg(_ctx(n.ctx, s, True)[0])
    if isinstance(n, NameArg):
        new = s.rename_of(n.name) if n.name in s.sigma else None
        return NameArg(new or n.name)
    if isinstance(n, ClfArg):
        return ClfArg(_sub(n.term, s))
    if isinstance(n, (Var, Const)):
        return n
    raise TypeError(f"hsubst: unexpected node {n!r}")


def instantiate(t, spine, stats: Optional[SubstStats] = None):
    """Instantiate the Pi telescope of `t` with the terms of `spine`.

    Shapes do not depend on terms, so one simultaneous substitution into the
    final body does the work of substituting binder by binder.
    """
    sigma: dict = {}
    for a in spine:
        if not isinstance(t, (Pi, KPi)):
            raise HSubstError("spine longer than the type's telescope")
        if not (isinstance(t, Pi) and t.mod is Mod.LIN):
            sigma[t.name] = (a.term, erase(t.arg))
        t = t.body
    return subst(t, sigma, stats)
