"""Abstract syntax for CLF and its meta layer.

Every node is an immutable dataclass. Binders carry display names; alpha
equivalence is decided by `alpha_eq`, which compares binder positions rather
than spellings.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Union


class Mod(enum.Enum):
    LIN = "lin"
    PER = "per"

    def __repr__(self) -> str:
        return f"Mod.{self.name}"


LIN = Mod.LIN
PER = Mod.PER


# ---------------------------------------------------------------- kinds


@dataclass(frozen=True)
class KType:
    pass


@dataclass(frozen=True)
class KPi:
    name: str
    arg: "Type"
    body: "Kind"


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class Pi:
    mod: Mod
    name: str
    arg: "Type"
    body: "Type"


@dataclass(frozen=True)
class Atom:
    head: str
    spine: tuple["Arg", ...] = ()


@dataclass(frozen=True)
class Monad:
    ctx: tuple["Decl", ...] = ()


# ---------------------------------------------------------------- terms


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Lam:
    mod: Mod
    name: str
    body: "Term"


@dataclass(frozen=True)
class Root:
    head: Union[Var, Const]
    spine: tuple["Arg", ...] = ()


@dataclass(frozen=True)
class TraceTm:
    trace: "Trace"


@dataclass(frozen=True)
class Arg:
    mod: Mod
    term: "Term"


# ---------------------------------------------------------------- contexts


@dataclass(frozen=True)
class Decl:
    """A context entry `mod name : type`. Trace outputs may omit the type."""

    mod: Mod
    name: str
    type: "Type | None" = None


@dataclass(frozen=True)
class CtxVar:
    name: str


# ---------------------------------------------------------------- traces


@dataclass(frozen=True)
class Let:
    outputs: tuple[Decl, ...]
    const: str
    spine: tuple[Arg, ...] = ()


@dataclass(frozen=True)
class VarStep:
    var: str
    spine: tuple["MArg", ...] = ()


@dataclass(frozen=True)
class Trace:
    """A flat step sequence, so associativity and the unit laws hold by construction."""

    steps: tuple[Union[Let, VarStep], ...] = ()

    def then(self, other: "Trace") -> "Trace":
        return Trace(self.steps + other.steps)

    def __len__(self) -> int:
        return len(self.steps)


EMPTY = Trace(())

Kind = Union[KType, KPi]
Type = Union[Pi, Atom, Monad]
Term = Union[Lam, Root, TraceTm]
CtxItem = Union[Decl, CtxVar]
Step = Union[Let, VarStep]


# ---------------------------------------------------------------- meta layer


@dataclass(frozen=True)
class MKType:
    pass


@dataclass(frozen=True)
class MAtom:
    head: str
    spine: tuple["MArg", ...] = ()


@dataclass(frozen=True)
class MPi:
    """Dependent product over a meta type; also used for meta kinds."""

    name: str
    arg: "MType"
    body: "MType"


@dataclass(frozen=True)
class MPiCtx:
    name: str
    body: "MType"


@dataclass(frozen=True)
class MPiHat:
    name: str
    arg: Type
    body: "MType"


@dataclass(frozen=True)
class MNabla:
    name: str
    body: "MType"


@dataclass(frozen=True)
class MTraceType:
    pre: tuple[CtxItem, ...]
    sig: str
    mode: str  # "*" or "1"
    post: tuple[CtxItem, ...]


@dataclass(frozen=True)
class MLam:
    name: str
    body: "MTerm"


@dataclass(frozen=True)
class MRoot:
    head: str
    spine: tuple["MArg", ...] = ()


@dataclass(frozen=True)
class MTrace:
    trace: Trace


@dataclass(frozen=True)
class CtxArg:
    ctx: tuple[CtxItem, ...]


@dataclass(frozen=True)
class NameArg:
    """A name argument; the name `#` asks the checker for a fresh one."""

    name: str


@dataclass(frozen=True)
class ClfArg:
    term: Term


MType = Union[MKType, MAtom, MPi, MPiCtx, MPiHat, MNabla, MTraceType]
MTerm = Union[MLam, MRoot, MTrace]
MArg = Union[MLam, MRoot, MTrace, CtxArg, NameArg, ClfArg]

FRESH = "#"


# ---------------------------------------------------------------- signatures


@dataclass(frozen=True)
class Signature:
    entries: tuple[tuple[str, Union[Kind, Type]], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", dict(self.entries))

    def __contains__(self, name: str) -> bool:
        return name in self._index  # type: ignore[attr-defined]

    def __getitem__(self, name: str):
        return self._index[name]  # type: ignore[attr-defined]

    def get(self, name: str, default=None):
        return self._index.get(name, default)  # type: ignore[attr-defined]

    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def extend(self, name: str, entry) -> "Signature":
        if name in self:
            raise ValueError(f"duplicate constant {name}")
        return Signature(self.entries + ((name, entry),))

    def merge(self, other: "Signature") -> "Signature":
        out = self
        for n, e in other.entries:
            out = out.extend(n, e)
        return out

    def families(self) -> list[str]:
        return [n for n, e in self.entries if isinstance(e, (KType, KPi))]

    def is_family(self, name: str) -> bool:
        return isinstance(self.get(name), (KType, KPi))


# ---------------------------------------------------------------- utilities


def is_kind(x) -> bool:
    return isinstance(x, (KType, KPi))


def telescope(t):
    """Split a Pi/KPi chain into (binders, codomain)."""
    binders = []
    while isinstance(t, (Pi, KPi)):
        mod = t.mod if isinstance(t, Pi) else PER
        binders.append((mod, t.name, t.arg))
        t = t.body
    return binders, t


def var(name: str) -> Root:
    return Root(Var(name), ())


def const(name: str, *args: Arg) -> Root:
    return Root(Const(name), tuple(args))


def per(term) -> Arg:
    return Arg(PER, term)


def lin(term) -> Arg:
    return Arg(LIN, term)


_SUFFIX = re.compile(r"^(.*?)(\d+)$")


def fresh(base: str, avoid) -> str:
    """A variant of `base` that is not in `avoid`."""
    if base not in avoid:
        return base
    m = _SUFFIX.match(base)
    stem, k = (m.group(1), int(m.group(2)) + 1) if m and m.group(1) else (base, 1)
    while f"{stem}{k}" in avoid:
        k += 1
    return f"{stem}{k}"


# ---------------------------------------------------------------- free variables

FV_CACHED_TYPES = (Root, Lam, Atom, Pi, TraceTm, Monad)


def fv(node) -> set[str]:
    if isinstance(node, FV_CACHED_TYPES):
        return set(fv_cached(node))
    out: set[str] = set()
    _fv(node, frozenset(), out)
    return out


def fv_cached(n) -> frozenset:
    """Free names of a term or type, memoized on the (immutable) node."""
    hit = n.__dict__.get("_fv")
    if hit is not None:
        return hit
    if isinstance(n, Root):
        out = set()
        if isinstance(n.head, Var):
            out.add(n.head.name)
        for a in n.spine:
            out |= fv_cached(a.term)
        res = frozenset(out)
    elif isinstance(n, Lam):
        res = fv_cached(n.body) - {n.name}
    elif isinstance(n, Atom):
        out = set()
        for a in n.spine:
            out |= fv_cached(a.term)
        res = frozenset(out)
    elif isinstance(n, Pi):
        res = fv_cached(n.arg) | (fv_cached(n.body) - {n.name})
    else:
        acc: set[str] = set()
        _fv(n, frozenset(), acc)
        res = frozenset(acc)
    object.__setattr__(n, "_fv", res)
    return res


def _fv_ctx(items: Iterable, bound: frozenset, out: set, ref: bool = False) -> frozenset:
    # with ref=True the declared names are references to names bound elsewhere
    for it in items:
        if isinstance(it, Decl):
            if it.type is not None:
                _fv(it.type, bound, out)
            if ref:
                if it.name not in bound:
                    out.add(it.name)
            else:
                bound = bound | {it.name}
        elif isinstance(it, CtxVar):
            if it.name not in bound:
                out.add(it.name)
        else:
            raise TypeError(f"not a context item: {it!r}")
    return bound


def _fv_trace(tr: Trace, bound: frozenset, out: set, ref: bool = False) -> frozenset:
    for st in tr.steps:
        if isinstance(st, Let):
            for a in st.spine:
                _fv(a.term, bound, out)
            bound = _fv_ctx(st.outputs, bound, out, ref)
        else:
            if st.var not in bound:
                out.add(st.var)
            for a in st.spine:
                _fv(a, bound, out)
    return bound


def _fv(n, bound: frozenset, out: set) -> None:
    if isinstance(n, Root):
        if isinstance(n.head, Var) and n.head.name not in bound:
            out.add(n.head.name)
        for a in n.spine:
            _fv(a.term, bound, out)
    elif isinstance(n, Lam):
        _fv(n.body, bound | {n.name}, out)
    elif isinstance(n, Arg):
        _fv(n.term, bound, out)
    elif isinstance(n, TraceTm):
        _fv_trace(n.trace, bound, out)
    elif isinstance(n, Trace):
        _fv_trace(n, bound, out)
    elif isinstance(n, (Pi, KPi)):
        _fv(n.arg, bound, out)
        _fv(n.body, bound | {n.name}, out)
    elif isinstance(n, Atom):
        for a in n.spine:
            _fv(a.term, bound, out)
    elif isinstance(n, Monad):
        _fv_ctx(n.ctx, bound, out)
    elif isinstance(n, (KType, MKType)):
        pass
    elif isinstance(n, Decl):
        if n.type is not None:
            _fv(n.type, bound, out)
    elif isinstance(n, CtxVar):
        if n.name not in bound:
            out.add(n.name)
    elif isinstance(n, tuple):
        _fv_ctx(n, bound, out)
    # meta layer
    elif isinstance(n, (MAtom, MRoot)):
        if isinstance(n, MRoot) and n.head not in bound:
            out.add(n.head)
        for a in n.spine:
            _fv(a, bound, out)
    elif isinstance(n, MPi):
        _fv(n.arg, bound, out)
        _fv(n.body, bound | {n.name}, out)
    elif isinstance(n, MPiHat):
        _fv(n.arg, bound, out)
        _fv(n.body, bound | {n.name}, out)
    elif isinstance(n, (MPiCtx, MNabla, MLam)):
        _fv(n.body, bound | {n.name}, out)
    elif isinstance(n, MTraceType):
        _fv_ctx(n.pre, bound, out, True)
        _fv_ctx(n.post, bound, out, True)
    elif isinstance(n, MTrace):
        _fv_trace(n.trace, bound, out, True)
    elif isinstance(n, CtxArg):
        _fv_ctx(n.ctx, bound, out, True)
    elif isinstance(n, NameArg):
        if n.name != FRESH and n.name not in bound:
            out.add(n.name)
    elif isinstance(n, ClfArg):
        _fv(n.term, bound, out)
    else:
        raise TypeError(f"fv: unexpected node {n!r}")


def ctx_names(ctx) -> list[str]:
    return [d.name for d in ctx if isinstance(d, Decl)]


def bound_names(tr: Trace) -> list[str]:
    return [d.name for st in tr.steps if isinstance(st, Let) for d in st.outputs]


# ---------------------------------------------------------------- alpha equality


class _Env:
    """Parallel binder environments for alpha comparison."""

    __slots__ = ("left", "right", "depth")

    def __init__(self, left=None, right=None, depth=0):
        self.left = left or {}
        self.right = right or {}
        self.depth = depth

    def bind(self, a: str, b: str) -> "_Env":
        left = dict(self.left)
        right = dict(self.right)
        left[a] = self.depth
        right[b] = self.depth
        return _Env(left, right, self.depth + 1)

    def same(self, a: str, b: str) -> bool:
        la = self.left.get(a)
        rb = self.right.get(b)
        if la is None and rb is None:
            return a == b
        return la == rb


def alpha_eq(a, b) -> bool:
    """Structural equality up to renaming of bound variables."""
    return _aeq(a, b, _Env())


def _aeq_ctx(xs, ys, env: _Env, ref: bool = False):
    if len(xs) != len(ys):
        return None
    for x, y in zip(xs, ys):
        if type(x) is not type(y):
            return None
        if isinstance(x, CtxVar):
            if not env.same(x.name, y.name):
                return None
            continue
        if x.mod != y.mod:
            return None
        if (x.type is None) != (y.type is None):
            return None
        if x.type is not None and not _aeq(x.type, y.type, env):
            return None
        if ref:
            if not env.same(x.name, y.name):
                return None
        else:
            env = env.bind(x.name, y.name)
    return env


def _aeq_trace(t1: Trace, t2: Trace, env: _Env, ref: bool = False):
    if len(t1.steps) != len(t2.steps):
        return None
    for s1, s2 in zip(t1.steps, t2.steps):
        if type(s1) is not type(s2):
            return None
        if isinstance(s1, Let):
            if s1.const != s2.const or not _aeq_spine(s1.spine, s2.spine, env):
                return None
            env = _aeq_ctx(s1.outputs, s2.outputs, env, ref)
            if env is None:
                return None
        else:
            if not env.same(s1.var, s2.var) or len(s1.spine) != len(s2.spine):
                return None
            if not all(_aeq(x, y, env) for x, y in zip(s1.spine, s2.spine)):
                return None
    return env


def _aeq_spine(s1, s2, env: _Env) -> bool:
    if len(s1) != len(s2):
        return False
    return all(x.mod == y.mod and _aeq(x.term, y.term, env) for x, y in zip(s1, s2))


def _aeq(a, b, env: _Env) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, Root):
        if type(a.head) is not type(b.head):
            return False
        if isinstance(a.head, Var):
            if not env.same(a.head.name, b.head.name):
                return False
        elif a.head.name != b.head.name:
            return False
        return _aeq_spine(a.spine, b.spine, env)
    if isinstance(a, Lam):
        return a.mod == b.mod and _aeq(a.body, b.body, env.bind(a.name, b.name))
    if isinstance(a, Arg):
        return a.mod == b.mod and _aeq(a.term, b.term, env)
    if isinstance(a, Atom):
        return a.head == b.head and _aeq_spine(a.spine, b.spine, env)
    if isinstance(a, Pi):
        return (a.mod == b.mod and _aeq(a.arg, b.arg, env)
                and _aeq(a.body, b.body, env.bind(a.name, b.name)))
    if isinstance(a, KPi):
        return _aeq(a.arg, b.arg, env) and _aeq(a.body, b.body, env.bind(a.name, b.name))
    if isinstance(a, Monad):
        return _aeq_ctx(a.ctx, b.ctx, env) is not None
    if isinstance(a, TraceTm):
        return _aeq_trace(a.trace, b.trace, env) is not None
    if isinstance(a, Trace):
        return _aeq_trace(a, b, env) is not None
    if isinstance(a, (KType, MKType)):
        return True
    if isinstance(a, Decl):
        return _aeq_ctx((a,), (b,), env) is not None and env.same(a.name, b.name)
    if isinstance(a, CtxVar):
        return env.same(a.name, b.name)
    if isinstance(a, tuple):
        return _aeq_ctx(a, b, env) is not None
    if isinstance(a, (MAtom, MRoot)):
        if isinstance(a, MRoot):
            if not env.same(a.head, b.head):
                return False
        elif a.head != b.head:
            return False
        return len(a.spine) == len(b.spine) and all(
            _aeq(x, y, env) for x, y in zip(a.spine, b.spine))
    if isinstance(a, MPi):
        return _aeq(a.arg, b.arg, env) and _aeq(a.body, b.body, env.bind(a.name, b.name))
    if isinstance(a, MPiHat):
        return _aeq(a.arg, b.arg, env) and _aeq(a.body, b.body, env.bind(a.name, b.name))
    if isinstance(a, (MPiCtx, MNabla, MLam)):
        return _aeq(a.body, b.body, env.bind(a.name, b.name))
    if isinstance(a, MTraceType):
        return (a.sig == b.sig and a.mode == b.mode
                and _aeq_ctx(a.pre, b.pre, env, True) is not None
                and _aeq_ctx(a.post, b.post, env, True) is not None)
    if isinstance(a, MTrace):
        return _aeq_trace(a.trace, b.trace, env, True) is not None
    if isinstance(a, CtxArg):
        return _aeq_ctx(a.ctx, b.ctx, env, True) is not None
    if isinstance(a, NameArg):
        return env.same(a.name, b.name)
    if isinstance(a, ClfArg):
        return _aeq(a.term, b.term, env)
    raise TypeError(f"alpha_eq: unexpected node {a!r}")


# ---------------------------------------------------------------- measures


def size(node) -> int:
    """Number of heads and binders, a rough term size."""
    if isinstance(node, Root):
        return 1 + sum(size(a.term) for a in node.spine)
    if isinstance(node, Lam):
        return 1 + size(node.body)
    if isinstance(node, Atom):
        return 1 + sum(size(a.term) for a in node.spine)
    if isinstance(node, (Pi, KPi)):
        return 1 + size(node.arg) + size(node.body)
    if isinstance(node, Monad):
        return 1 + sum(size(d.type) for d in node.ctx if isinstance(d, Decl) and d.type)
    if isinstance(node, TraceTm):
        return 1 + sum(size(a.term) for st in node.trace.steps
                       if isinstance(st, Let) for a in st.spine)
    return 1


def has_redex(node) -> bool:
    """True if some Root in `node` has a head that is not a variable or constant."""
    if isinstance(node, Root):
        if not isinstance(node.head, (Var, Const)):
            return True
        return any(has_redex(a.term) for a in node.spine)
    if isinstance(node, Lam):
        return has_redex(node.body)
    if isinstance(node, TraceTm):
        return any(has_redex(a.term) for st in node.trace.steps
                   if isinstance(st, Let) for a in st.spine)
    return False


# ---------------------------------------------------------------- meta signatures


@dataclass(frozen=True)
class RuleSet:
    """A named set of rewriting rules usable in trace types."""

    name: str
    consts: tuple[str, ...]


@dataclass(frozen=True)
class MetaSignature:
    entries: tuple = ()  # RuleSet or (name, MType)

    def decls(self) -> list[tuple[str, object]]:
        return [e for e in self.entries if not isinstance(e, RuleSet)]

    def rulesets(self) -> dict[str, RuleSet]:
        return {e.name: e for e in self.entries if isinstance(e, RuleSet)}
