"""The simply-typed lambda calculus on the Python side.

Terms here are independent of the CLF machinery so they can act as a
reference: a call-by-value big-step interpreter, an inhabitation test for
types built from the single base type `o`, and a random synthesizer of
well-typed closed terms. `encode`/`decode` translate to and from the CLF
object language of the corpus (`exp`, `lam`, `app`, `tp`, `o`, `arr`).
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

from .syntax import PER, Arg, Atom, Const, Lam, Root, Var


@dataclass(frozen=True)
class V:
    name: str


@dataclass(frozen=True)
class Fn:
    name: str
    body: "Term"


@dataclass(frozen=True)
class Ap:
    fun: "Term"
    arg: "Term"


Term = Union[V, Fn, Ap]


@dataclass(frozen=True)
class Base:
    def __str__(self):
        return "o"


@dataclass(frozen=True)
class Arr:
    dom: "Type"
    cod: "Type"

    def __str__(self):
        d = f"({self.dom})" if isinstance(self.dom, Arr) else str(self.dom)
        return f"{d} -> {self.cod}"


Type = Union[Base, Arr]
O = Base()


def free_vars(t: Term) -> set[str]:
    if isinstance(t, V):
        return {t.name}
    if isinstance(t, Fn):
        return free_vars(t.body) - {t.name}
    return free_vars(t.fun) | free_vars(t.arg)


def term_size(t: Term) -> int:
    if isinstance(t, V):
        return 1
    if isinstance(t, Fn):
        return 1 + term_size(t.body)
    return 1 + term_size(t.fun) + term_size(t.arg)


def type_size(t: Type) -> int:
    return 1 if isinstance(t, Base) else 1 + type_size(t.dom) + type_size(t.cod)


def _fresh(x: str, avoid: set) -> str:
    k = 1
    while f"{x}{k}" in avoid:
        k += 1
    return f"{x}{k}"


def substitute(t: Term, x: str, s: Term) -> Term:
    """Capture-avoiding t[s/x]."""
    if isinstance(t, V):
        return s if t.name == x else t
    if isinstance(t, Ap):
        return Ap(substitute(t.fun, x, s), substitute(t.arg, x, s))
    if t.name == x:
        return t
    fs = free_vars(s)
    if t.name in fs:
        y = _fresh(t.name, fs | free_vars(t.body))
        return Fn(y, substitute(substitute(t.body, t.name, V(y)), x, s))
    return Fn(t.name, substitute(t.body, x, s))


def alpha_equal(a: Term, b: Term, env_a=None, env_b=None, depth: int = 0) -> bool:
    env_a = env_a or {}
    env_b = env_b or {}
    if isinstance(a, V) and isinstance(b, V):
        ia, ib = env_a.get(a.name), env_b.get(b.name)
        return ia == ib and (ia is not None or a.name == b.name)
    if isinstance(a, Fn) and isinstance(b, Fn):
        return alpha_equal(a.body, b.body, {**env_a, a.name: depth}, {**env_b, b.name: depth}, depth + 1)
    if isinstance(a, Ap) and isinstance(b, Ap):
        return (alpha_equal(a.fun, b.fun, env_a, env_b, depth)
                and alpha_equal(a.arg, b.arg, env_a, env_b, depth))
    return False


def is_value(t: Term) -> bool:
    return isinstance(t, Fn)


def evaluate(t: Term) -> Term:
    """Call-by-value big-step evaluation of a closed term."""
    if isinstance(t, Fn):
        return t
    if isinstance(t, V):
        raise ValueError(f"free variable {t.name}")
    f = evaluate(t.fun)
    a = evaluate(t.arg)
    if not isinstance(f, Fn):
        raise ValueError("application of a non-function")
    return evaluate(substitute(f.body, f.name, a))


@dataclass(frozen=True)
class TVar:
    id: int


def _walk(t, sub: dict):
    while isinstance(t, TVar) and t in sub:
        t = sub[t]
    return t


def _unify_types(a, b, sub: dict) -> bool:
    a, b = _walk(a, sub), _walk(b, sub)
    if a == b:
        return True
    if isinstance(a, TVar) or isinstance(b, TVar):
        v, t = (a, b) if isinstance(a, TVar) else (b, a)
        if _occurs(v, t, sub):
            return False
        sub[v] = t
        return True
    if isinstance(a, Arr) and isinstance(b, Arr):
        return _unify_types(a.dom, b.dom, sub) and _unify_types(a.cod, b.cod, sub)
    return False


def _occurs(v, t, sub) -> bool:
    t = _walk(t, sub)
    if t == v:
        return True
    return isinstance(t, Arr) and (_occurs(v, t.dom, sub) or _occurs(v, t.cod, sub))


def has_type(t: Term, ty: Type, env: Optional[dict] = None) -> bool:
    """Whether `t` can be given type `ty`, by first-order type inference."""
    sub: dict = {}
    counter = iter(range(10**9))

    def infer(t, env):
        if isinstance(t, V):
            if t.name not in env:
                raise TypeError(t.name)
            return env[t.name]
        if isinstance(t, Fn):
            a = TVar(next(counter))
            return Arr(a, infer(t.body, {**env, t.name: a}))
        f = infer(t.fun, env)
        x = infer(t.arg, env)
        r = TVar(next(counter))
        if not _unify_types(f, Arr(x, r), sub):
            raise TypeError("mismatch")
        return r

    try:
        return _unify_types(infer(t, dict(env or {})), ty, sub)
    except TypeError:
        return False


# ---------------------------------------------------------------- inhabitation


def _target(t: Type) -> tuple[list, Type]:
    args = []
    while isinstance(t, Arr):
        args.append(t.dom)
        t = t.cod
    return args, t


def _reaches(t: Type, ty: Type) -> bool:
    while t != ty:
        if not isinstance(t, Arr):
            return False
        t = t.cod
    return True


@lru_cache(maxsize=None)
def _inhabited(hyps: frozenset, goal: Type, seen: frozenset) -> bool:
    if isinstance(goal, Arr):
        return _inhabited(hyps | {goal.dom}, goal.cod, seen)
    key = (hyps, goal)
    if key in seen:
        return False
    seen = seen | {key}
    for h in hyps:
        args, tgt = _target(h)
        if tgt == goal and all(_inhabited(hyps, a, seen) for a in args):
            return True
    return False


def inhabited(ty: Type, hyps=()) -> bool:
    """Whether some term has type `ty` given variables of the types in `hyps`."""
    return _inhabited(frozenset(hyps), ty, frozenset())


def random_type(rng: random.Random, size: int = 5) -> Type:
    if size <= 1 or rng.random() < 0.3:
        return O
    k = rng.randint(1, size - 2) if size > 2 else 1
    return Arr(random_type(rng, k), random_type(rng, max(1, size - 1 - k)))


def random_inhabited_type(rng: random.Random, size: int = 5, hyps=()) -> Type:
    for _ in range(200):
        t = random_type(rng, size)
        if inhabited(t, hyps):
            return t
    return Arr(O, O)


# ---------------------------------------------------------------- synthesis


class _Synth:
    def __init__(self, rng: random.Random, budget: int):
        self.rng = rng
        self.budget = budget
        self.count = 0

    def name(self) -> str:
        self.count += 1
        return f"x{self.count}"

    def term(self, env: list, ty: Type, size: int, value: bool = False) -> Term:
        hyps = frozenset(t for _, t in env)
        opts = []
        if isinstance(ty, Arr):
            opts.append("lam")
        if not value:
            if any(_reaches(t, ty) for _, t in env):
                opts.append("var")
            if size >= 4:
                opts += ["app", "app"]
        if not opts:
            if value:
                raise ValueError(f"no value of type {ty}")
            return self.small(env, ty)
        choice = self.rng.choice(opts)
        if choice == "lam":
            x = self.name()
            return Fn(x, self.term(env + [(x, ty.dom)], ty.cod, size - 1))
        if choice == "var":
            x, t = self._head(env, ty, hyps)
            if x is not None:
                return self._apply(env, V(x), t, ty, size - 1)
        if choice == "app":
            a = random_inhabited_type(self.rng, self.rng.randint(1, 4), hyps)
            k = self.rng.randint(1, size - 2)
            f = self.term(env, Arr(a, ty), k)
            return Ap(f, self.term(env, a, max(1, size - 1 - k)))
        return self.small(env, ty)

    def _head(self, env, ty, hyps):
        heads = [(x, t) for x, t in env if _reaches(t, ty) and self._spine_ok(t, ty, hyps)]
        if not heads:
            return None, None
        return self.rng.choice(heads)

    def _spine_ok(self, t, ty, hyps) -> bool:
        while t != ty:
            if not isinstance(t, Arr) or not inhabited(t.dom, hyps):
                return False
            t = t.cod
        return True

    def _apply(self, env, head: Term, t: Type, ty: Type, size: int) -> Term:
        while t != ty:
            head = Ap(head, self.term(env, t.dom, max(1, size // 2)))
            t = t.cod
        return head

    def small(self, env: list, ty: Type) -> Term:
        """A shortest-depth inhabitant, found by iterative deepening."""
        if not inhabited(ty, frozenset(t for _, t in env)):
            raise ValueError(f"type {ty} is not inhabited")
        depth = 1
        while True:
            t = self._small(env, ty, depth)
            if t is not None:
                return t
            depth += 1

    def _small(self, env: list, ty: Type, depth: int) -> Optional[Term]:
        if depth == 0:
            return None
        if isinstance(ty, Arr):
            x = self.name()
            body = self._small(env + [(x, ty.dom)], ty.cod, depth)
            return None if body is None else Fn(x, body)
        for x, t in reversed(env):
            if t == ty:
                return V(x)
        for x, t in reversed(env):
            args, tgt = _target(t)
            if tgt != ty or not args:
                continue
            head: Term = V(x)
            for a in args:
                arg = self._small(env, a, depth - 1)
                if arg is None:
                    break
                head = Ap(head, arg)
            else:
                return head
        return None


def synthesize(rng: random.Random, ty: Type, max_size: int = 25, value: bool = False,
               tries: int = 50) -> Term:
    """A random closed term of type `ty` with at most `max_size` nodes."""
    if not inhabited(ty):
        raise ValueError(f"type {ty} has no closed inhabitant")
    best = None
    for _ in range(tries):
        s = _Synth(rng, max_size)
        try:
            t = s.term([], ty, rng.randint(1, max_size), value)
        except (ValueError, RecursionError):
            continue
        if term_size(t) <= max_size:
            return t
        if best is None or term_size(t) < term_size(best):
            best = t
    t = _Synth(rng, max_size).small([], ty)
    if term_size(t) > max_size:
        raise ValueError(f"no inhabitant of {ty} within size {max_size}")
    return t


def random_program(rng: random.Random, max_size: int = 25) -> tuple[Term, Type]:
    """A random well-typed closed term together with its type."""
    ty = random_inhabited_type(rng, rng.randint(2, 6))
    if max_size >= 4 and rng.random() < 0.6:
        # a redex at the top, so that evaluation has work to do
        a = random_inhabited_type(rng, rng.randint(1, 4))
        k = rng.randint(1, max_size - 2)
        try:
            f = synthesize(rng, Arr(a, ty), k)
            x = synthesize(rng, a, max_size - 1 - term_size(f))
            return Ap(f, x), ty
        except ValueError:
            pass
    return synthesize(rng, ty, max_size), ty


# ---------------------------------------------------------------- CLF encoding


def encode(t: Term) -> Root:
    if isinstance(t, V):
        return Root(Var(t.name), ())
    if isinstance(t, Fn):
        return Root(Const("lam"), (Arg(PER, Lam(PER, t.name, encode(t.body))),))
    return Root(Const("app"), (Arg(PER, encode(t.fun)), Arg(PER, encode(t.arg))))


def decode(n) -> Term:
    if isinstance(n, Root) and isinstance(n.head, Var) and not n.spine:
        return V(n.head.name)
    if isinstance(n, Root) and isinstance(n.head, Const):
        if n.head.name == "lam" and len(n.spine) == 1 and isinstance(n.spine[0].term, Lam):
            f = n.spine[0].term
            return Fn(f.name, decode(f.body))
        if n.head.name == "app" and len(n.spine) == 2:
            return Ap(decode(n.spine[0].term), decode(n.spine[1].term))
    raise ValueError(f"not an encoded expression: {n!r}")


def encode_type(t: Type) -> Root:
    if isinstance(t, Base):
        return Root(Const("o"), ())
    return Root(Const("arr"), (Arg(PER, encode_type(t.dom)), Arg(PER, encode_type(t.cod))))


def decode_type(n) -> Type:
    if isinstance(n, Root) and isinstance(n.head, Const):
        if n.head.name == "o" and not n.spine:
            return O
        if n.head.name == "arr" and len(n.spine) == 2:
            return Arr(decode_type(n.spine[0].term), decode_type(n.spine[1].term))
    raise ValueError(f"not an encoded type: {n!r}")


# ---------------------------------------------------------------- sampling rule variables


class Sampler:
    """Chooses values for rule variables the linear premises leave open.

    Handles the λ→ corpus: a `tp` variable gets a random inhabited type, an
    `exp` variable gets a random term of the type demanded by an `of e t`
    premise (a lambda when a `value e` premise is present too).
    """

    def __init__(self, max_size: int = 8, max_type: int = 4):
        self.max_size = max_size
        self.max_type = max_type

    def __call__(self, req) -> Optional[object]:
        if not isinstance(req.type, Atom):
            return None
        x = Root(Var(req.evar), ())
        rng = req.rng
        if req.type.head == "tp":
            return encode_type(random_inhabited_type(rng, rng.randint(1, self.max_type)))
        if req.type.head != "exp":
            return None
        want = None
        value = False
        for p in req.premises:
            if not isinstance(p, Atom) or not p.spine or p.spine[0].term != x:
                continue
            if p.head == "of":
                try:
                    want = decode_type(req.unifier.resolve(p.spine[1].term))
                except ValueError:
                    return None
            elif p.head == "value":
                value = True
        if want is None:
            return None
        try:
            return encode(synthesize(rng, want, self.max_size, value=value))
        except ValueError:
            return None

