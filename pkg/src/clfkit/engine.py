"""Multiset rewriting with CLF rules.

A rule is a constant whose type is a telescope ending in a monadic type.
Dependent persistent binders become unification variables, linear premises
are matched against distinct linear facts of the state, and the remaining
persistent premises are proved by bounded backward chaining.
"""
from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from .hsubst import HSubstError, apply_spine, erase, instantiate, rename, subst
from .syntax import (
    LIN, PER, Arg, Atom, Const, Decl, Lam, Let, Monad, Pi, Root, Signature, Trace,
    TraceTm, Var, alpha_eq, fresh, fv, is_kind, size, telescope,
)


class EngineError(Exception):
    pass


class StaleMatch(EngineError):
    pass


class BudgetExhausted(EngineError):
    pass


def is_evar(name: str) -> bool:
    return name.startswith("?")


# ---------------------------------------------------------------- unifier


class Unifier:
    """Instantiation of unification variables, copied on write for backtracking."""

    __slots__ = ("inst", "shapes", "types", "counter")

    def __init__(self, inst=None, shapes=None, types=None, counter=None):
        self.inst: dict = inst if inst is not None else {}
        self.shapes: dict = shapes if shapes is not None else {}
        self.types: dict = types if types is not None else {}
        self.counter = counter if counter is not None else itertools.count()

    def new_evar(self, ty, hint: str = "") -> Root:
        name = f"?{hint}{next(self.counter)}"
        self.shapes[name] = erase(ty)
        self.types[name] = ty
        return Root(Var(name), ())

    def fresh_param(self, base: str = "p") -> str:
        return f"{base}#{next(self.counter)}"

    def bind(self, name: str, value) -> "Unifier":
        inst = dict(self.inst)
        inst[name] = value
        return Unifier(inst, self.shapes, self.types, self.counter)

    def resolve(self, node):
        while True:
            hits = {x for x in fv(node) if x in self.inst}
            if not hits:
                return node
            node = subst(node, {x: (self.inst[x], self.shapes.get(x)) for x in hits})

    def open_evars(self, node) -> set:
        return {x for x in fv(self.resolve(node)) if is_evar(x)}

    def whnf(self, t):
        while isinstance(t, Root) and isinstance(t.head, Var) and t.head.name in self.inst:
            t = apply_spine(self.inst[t.head.name], t.spine, self.shapes.get(t.head.name))
        return t


def _flex(u: Unifier, t) -> bool:
    return (isinstance(t, Root) and isinstance(t.head, Var)
            and is_evar(t.head.name) and t.head.name not in u.inst)


def unify(a, b, u: Unifier, bound: frozenset = frozenset()) -> Optional[Unifier]:
    """Higher-order pattern unification on canonical terms and types."""
    a = u.whnf(a)
    b = u.whnf(b)
    if _flex(u, a):
        return _solve_flex(a, b, u, bound)
    if _flex(u, b):
        return _solve_flex(b, a, u, bound)
    if isinstance(a, Root) and isinstance(b, Root):
        if type(a.head) is not type(b.head) or a.head.name != b.head.name:
            return None
        return _unify_spine(a.spine, b.spine, u, bound)
    if isinstance(a, Atom) and isinstance(b, Atom):
        if a.head != b.head:
            return None
        return _unify_spine(a.spine, b.spine, u, bound)
    if isinstance(a, Lam) and isinstance(b, Lam):
        if a.mod is not b.mod:
            return None
        z, ba, bb = _common(a.name, a.body, b.name, b.body, bound)
        return unify(ba, bb, u, bound | {z})
    if isinstance(a, Pi) and isinstance(b, Pi):
        if a.mod is not b.mod:
            return None
        u = unify(a.arg, b.arg, u, bound)
        if u is None:
            return None
        z, ba, bb = _common(a.name, a.body, b.name, b.body, bound)
        return unify(ba, bb, u, bound | {z})
    if isinstance(a, Monad) and isinstance(b, Monad):
        if len(a.ctx) != len(b.ctx):
            return None
        xs, ys = list(a.ctx), list(b.ctx)
        for i in range(len(xs)):
            x, y = xs[i], ys[i]
            if x.mod is not y.mod:
                return None
            u = unify(x.type, y.type, u, bound)
            if u is None:
                return None
            if x.name != y.name:
                rest = Monad(tuple(ys[i + 1:]))
                ys[i + 1:] = rename(rest, {y.name: x.name}).ctx
            bound = bound | {x.name}
        return u
    if isinstance(a, TraceTm) and isinstance(b, TraceTm):
        return u if alpha_eq(u.resolve(a), u.resolve(b)) else None
    return None


def _common(x: str, bx, y: str, by, bound):
    z = x
    if z in bound or (z != y and z in fv(by)):
        z = fresh(x, set(bound) | fv(bx) | fv(by))
    if z != x:
        bx = rename(bx, {x: z})
    if z != y:
        by = rename(by, {y: z})
    return z, bx, by


def _unify_spine(s1, s2, u: Unifier, bound) -> Optional[Unifier]:
    if len(s1) != len(s2):
        return None
    for a1, a2 in zip(s1, s2):
        if a1.mod is not a2.mod:
            return None
        u = unify(a1.term, a2.term, u, bound)
        if u is None:
            return None
    return u


def _solve_flex(flex: Root, other, u: Unifier, bound) -> Optional[Unifier]:
    name = flex.head.name
    other = u.resolve(other)
    if isinstance(other, Root) and isinstance(other.head, Var) and other.head.name == name:
        return u if alpha_eq(Root(flex.head, flex.spine), other) else None
    if name in fv(other):
        return None
    params = []
    for a in flex.spine:
        t = a.term
        if not (isinstance(t, Root) and isinstance(t.head, Var) and not t.spine
                and t.head.name in bound and t.head.name not in params):
            return None  # outside the pattern fragment
        params.append(t.head.name)
    if (fv(other) & bound) - set(params):
        return None
    value = other
    for a, p in reversed(list(zip(flex.spine, params))):
        value = Lam(a.mod, p, value)
    return u.bind(name, value)


# ---------------------------------------------------------------- rules and states


@dataclass(frozen=True)
class Binder:
    role: str  # "meta", "lin" or "prem"
    name: str
    type: object


@dataclass(frozen=True)
class Rule:
    name: str
    binders: tuple[Binder, ...]
    codomain: Monad

    @property
    def linear_premises(self) -> list[Binder]:
        return [b for b in self.binders if b.role == "lin"]


def analyze_rule(name: str, ty) -> Optional[Rule]:
    binders, cod = telescope(ty)
    if not isinstance(cod, Monad):
        return None
    out = []
    t = ty
    for mod, x, arg in binders:
        body = t.body
        if mod is LIN:
            role = "lin"
        elif x in fv(body):
            role = "meta"
        else:
            role = "prem"
        out.append(Binder(role, x, arg))
        t = body
    return Rule(name, tuple(out), cod)


@dataclass(frozen=True)
class State:
    facts: tuple[Decl, ...] = ()
    counter: int = 0

    def names(self) -> set[str]:
        return {d.name for d in self.facts}

    def get(self, name: str) -> Optional[Decl]:
        for d in self.facts:
            if d.name == name:
                return d
        return None

    def linear(self) -> list[Decl]:
        return [d for d in self.facts if d.mod is LIN]

    def persistent(self) -> list[Decl]:
        return [d for d in self.facts if d.mod is PER]


_SUFFIX = re.compile(r"#(\d+)$")


def make_state(ctx) -> State:
    """A state from a context; the name counter starts past every `#k` suffix."""
    k = 0
    for d in ctx:
        m = _SUFFIX.search(d.name)
        if m:
            k = max(k, int(m.group(1)) + 1)
    return State(tuple(ctx), k)


@dataclass(frozen=True)
class Match:
    rule: str
    consumed: tuple[str, ...]
    persistent: tuple  # (premise type, proof term)
    instantiation: tuple  # (binder name, term)
    spine: tuple[Arg, ...]


@dataclass(frozen=True)
class Scheduler:
    seed: int = 0
    policy: str = "random"  # or "first-match"

    def __post_init__(self):
        if self.policy not in ("random", "first-match"):
            raise ValueError(f"unknown scheduling policy {self.policy}")


@dataclass
class SampleRequest:
    """Asks a sampler for a value of an undetermined rule variable."""

    rule: str
    binder: str
    evar: str
    type: object
    premises: list
    rng: random.Random
    unifier: Unifier


Sampler = Callable[[SampleRequest], Optional[object]]


class System:
    """A signature together with the rules that may fire."""

    def __init__(self, sig: Signature, rules: Optional[list[str]] = None):
        self.sig = sig
        names = rules if rules is not None else [
            n for n, e in sig.entries if not is_kind(e) and isinstance(telescope(e)[1], Monad)]
        self.rules: list[Rule] = []
        for n in names:
            e = sig.get(n)
            if e is None or is_kind(e):
                raise EngineError(f"unknown rule {n}")
            r = analyze_rule(n, e)
            if r is None:
                raise EngineError(f"{n} does not have a monadic codomain")
            self.rules.append(r)
        self._solve_cache: dict = {}
        self._templates: dict = {}

    def template(self, rule: Rule):
        """Premise types of `rule` with its dependent variables replaced by evars."""
        hit = self._templates.get(rule.name)
        if hit is not None:
            return hit
        u = Unifier(counter=itertools.count())
        sub: dict = {}
        slots = []
        for b in rule.binders:
            ty = subst(b.type, sub) if sub else b.type
            if b.role == "meta":
                ev = u.new_evar(ty, "m")
                sub[b.name] = (ev, None)
                slots.append((b, ev, ty))
            else:
                slots.append((b, None, ty))
        lin = [i for i, (b, _, _) in enumerate(slots) if b.role == "lin"]
        hit = (slots, lin, u.shapes, u.types)
        self._templates[rule.name] = hit
        return hit

    def rule(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise EngineError(f"unknown rule {name}")


# ---------------------------------------------------------------- persistent proof search


@dataclass
class _Search:
    sig: Signature
    exhausted: bool = False
    # caller evars that must stay open; they may be fixed later by other goals
    keep: frozenset = frozenset()

    def candidates(self, head: str, hyps: list):
        for name, ty in reversed(hyps):
            _, cod = telescope(ty)
            if isinstance(cod, Atom) and cod.head == head:
                yield Var(name), ty
        for name, e in self.sig.entries:
            if is_kind(e):
                continue
            binders, cod = telescope(e)
            if isinstance(cod, Atom) and cod.head == head and all(m is PER for m, _, _ in binders):
                yield Const(name), e

    def solve(self, goal, hyps: list, depth: int, u: Unifier) -> Iterator[tuple[object, Unifier]]:
        goal = u.resolve(goal)
        if isinstance(goal, Pi):
            p = u.fresh_param("p")
            body = rename(goal.body, {goal.name: p})
            for proof, u2 in self.solve(body, hyps + [(p, goal.arg)], depth, u):
                yield Lam(goal.mod, p, proof), u2
            return
        if not isinstance(goal, Atom):
            return
        if depth <= 0:
            self.exhausted = True
            return
        for head, ty in list(self.candidates(goal.head, hyps)):
            yield from self._apply(head, ty, goal, hyps, depth, u)

    def _apply(self, head, ty, goal, hyps, depth, u: Unifier):
        binders, _ = telescope(ty)
        t = ty
        evs = []
        for mod, x, _ in binders:
            arg = t.arg
            ev = u.new_evar(arg, "s")
            evs.append((mod, x, arg, ev, x in fv(t.body)))
            t = subst(t.body, {x: (ev, None)})
        u2 = unify(t, goal, u)
        if u2 is None:
            return
        yield from self._premises(head, evs, 0, hyps, depth, u2)

    def _premises(self, head, evs, i, hyps, depth, u: Unifier):
        if i == len(evs):
            # ground leftover dependent variables, such as an unconstrained type
            held = set()
            for k in self.keep:
                held |= u.open_evars(Root(Var(k), ()))
            for mod, x, arg, ev, dep in evs:
                name = ev.head.name
                if dep and name not in u.inst and name not in held:
                    for proof, u2 in self.solve(u.resolve(arg), hyps, depth - 1, u):
                        yield from self._premises(head, evs, i, hyps, depth, u2.bind(name, proof))
                        return
                    return
            spine = tuple(Arg(mod, ev) for mod, _, _, ev, _ in evs)
            yield u.resolve(Root(head, spine)), u
            return
        mod, x, arg, ev, dep = evs[i]
        if dep:
            yield from self._premises(head, evs, i + 1, hyps, depth, u)
            return
        for proof, u2 in self.solve(u.resolve(arg), hyps, depth - 1, u):
            yield from self._premises(head, evs, i + 1, hyps, depth, u2.bind(ev.head.name, proof))


def default_budget(goal) -> int:
    return 4 * size(goal)


def solve_persistent(goal, sig: Signature, state: Optional[State] = None,
                     depth: Optional[int] = None, unifier: Optional[Unifier] = None):
    """Prove a persistent goal by backward chaining.

    Returns a proof term, or None when no proof exists within the budget
    without ever hitting it; raises BudgetExhausted when the budget cut the
    search short.
    """
    res = _solve_goal(goal, sig, state, depth, unifier or Unifier())
    if res is None:
        return None
    if res == "exhausted":
        raise BudgetExhausted("depth budget exhausted proving goal")
    return res[0]


def _solve_goal(goal, sig, state, depth, u: Unifier):
    search = _Search(sig)
    hyps = [(d.name, d.type) for d in state.persistent()] if state else []
    budget = default_budget(goal) if depth is None else depth
    for proof, u2 in search.solve(goal, hyps, budget, u):
        return proof, u2
    return "exhausted" if search.exhausted else None


# ---------------------------------------------------------------- matching


def _facts_by_family(state: State):
    idx: dict[str, list[Decl]] = {}
    for d in state.facts:
        if d.mod is LIN and isinstance(d.type, Atom):
            idx.setdefault(d.type.head, []).append(d)
    return idx


def rule_matches(rule: Rule, state: State, system: System, sampler: Optional[Sampler] = None,
                 rng: Optional[random.Random] = None, focus: Optional[set] = None,
                 index=None) -> list[Match]:
    """All matches of one rule. With `focus`, only matches consuming some fact in it."""
    slots, lin, shapes, types = system.template(rule)
    u = Unifier({}, dict(shapes), dict(types))
    index = index if index is not None else _facts_by_family(state)
    out: list[Match] = []

    def go(k: int, used: tuple, u: Unifier):
        if k == len(lin):
            if focus is not None and not (set(used) & focus):
                return
            m = _finish(rule, slots, dict(zip(lin, used)), state, system, sampler, rng, u)
            if m is not None:
                out.append(m)
            return
        b, _, ty = slots[lin[k]]
        if not isinstance(ty, Atom):
            return
        last = focus is not None and k == len(lin) - 1 and not (set(used) & focus)
        for d in index.get(ty.head, ()):
            if d.name in used or (last and d.name not in focus):
                continue
            u2 = unify(ty, d.type, u)
            if u2 is not None:
                go(k + 1, used + (d.name,), u2)

    go(0, (), u)
    return out


def _finish(rule: Rule, slots, assignment: dict, state: State, system: System,
            sampler, rng, u: Unifier) -> Optional[Match]:
    # choose values for variables the linear premises left open
    for i, (b, ev, ty) in enumerate(slots):
        if b.role != "meta" or ev.head.name in u.inst:
            continue
        if sampler is None:
            return None
        req = SampleRequest(rule.name, b.name, ev.head.name, u.resolve(ty),
                            [u.resolve(t) for (bb, _, t) in slots if bb.role != "meta"],
                            rng or random.Random(0), u)
        value = sampler(req)
        if value is None:
            return None
        u = u.bind(ev.head.name, value)
    spine = []
    proofs = []
    for i, (b, ev, ty) in enumerate(slots):
        if b.role == "meta":
            spine.append(Arg(PER, ev))
        elif b.role == "lin":
            spine.append(Arg(LIN, Root(Var(assignment[i]), ())))
        else:
            goal = u.resolve(ty)
            key = goal if not u.open_evars(goal) else None
            cached = system._solve_cache.get(key) if key is not None else None
            if cached is None:
                res = _solve_goal(goal, system.sig, state, None, u)
                if res is None or res == "exhausted":
                    return None
                proof, u = res
                if key is not None:
                    system._solve_cache[key] = proof
            else:
                proof = cached
            spine.append(Arg(PER, proof))
            proofs.append((goal, proof))
    spine = [Arg(a.mod, u.resolve(a.term)) for a in spine]
    if any(is_evar(x) for a in spine for x in fv(a.term)):
        return None
    inst = tuple((b.name, u.resolve(ev)) for b, ev, _ in slots if b.role == "meta")
    consumed = tuple(assignment[i] for i in sorted(assignment))
    return Match(rule.name, consumed, tuple((u.resolve(g), u.resolve(p)) for g, p in proofs),
                 inst, tuple(spine))


def enumerate_matches(state: State, system, sampler: Optional[Sampler] = None,
                      rng: Optional[random.Random] = None, focus: Optional[set] = None) -> list[Match]:
    """Every way to fire some rule in `state`, in rule order then fact order."""
    if isinstance(system, Signature):
        system = System(system)
    index = _facts_by_family(state)
    out = []
    for r in system.rules:
        if focus is not None and not r.linear_premises:
            continue
        out.extend(rule_matches(r, state, system, sampler, rng, focus, index))
    return out


def apply_step(state: State, match: Match, system) -> tuple[State, Let]:
    if isinstance(system, Signature):
        system = System(system)
    present = {d.name: d for d in state.facts}
    for x in match.consumed:
        d = present.get(x)
        if d is None or d.mod is not LIN:
            raise StaleMatch(f"stale match: fact {x} is not in the state")
    if len(set(match.consumed)) != len(match.consumed):
        raise StaleMatch("match consumes a fact twice")
    ty = system.sig[match.rule]
    try:
        cod = instantiate(ty, match.spine)
    except HSubstError as e:
        raise EngineError(str(e)) from e
    if not isinstance(cod, Monad):
        raise EngineError(f"{match.rule} did not produce a monadic type")
    taken = set(present)
    counter = state.counter
    ren: dict[str, str] = {}
    outs = []
    for d in cod.ctx:
        base = "d" if d.mod is PER else "x"
        while f"{base}#{counter}" in taken:
            counter += 1
        new = f"{base}#{counter}"
        counter += 1
        taken.add(new)
        outs.append(Decl(d.mod, new, rename(d.type, ren) if ren else d.type))
        ren[d.name] = new
    consumed = set(match.consumed)
    facts = tuple(d for d in state.facts if d.name not in consumed) + tuple(outs)
    return State(facts, counter), Let(tuple(outs), match.rule, match.spine)


@dataclass
class RunResult:
    state: State
    trace: Trace
    reason: str  # "maximal", "budget" or "stopped"
    steps: int = 0


def run(state: State, system, sched: Scheduler = Scheduler(), max_steps: int = 1000,
        sampler: Optional[Sampler] = None, allow: Optional[Callable[[Match, int], bool]] = None,
        done: Optional[Callable[[State], bool]] = None,
        observe: Optional[Callable[[Let], None]] = None) -> RunResult:
    """Fire rules until none applies (or `done` holds) or the budget runs out.

    `allow(match, step)` can veto matches, for instance to ration rules that
    have no linear premise; `observe` sees every step as it is taken.
    """
    if isinstance(system, Signature):
        system = System(system)
    if max_steps < 0:
        raise ValueError("max_steps must be non-negative")
    rng = random.Random(sched.seed)
    steps: list[Let] = []
    pool = enumerate_matches(state, system, sampler, rng)
    zero = [r for r in system.rules if not r.linear_premises]
    while True:
        if done is not None and done(state):
            return RunResult(state, Trace(tuple(steps)), "maximal", len(steps))
        live = pool if allow is None else [m for m in pool if allow(m, len(steps))]
        if not live:
            reason = "maximal" if done is None else "stopped"
            return RunResult(state, Trace(tuple(steps)), reason, len(steps))
        if len(steps) >= max_steps:
            return RunResult(state, Trace(tuple(steps)), "budget", len(steps))
        m = live[0] if sched.policy == "first-match" else live[rng.randrange(len(live))]
        state, let = apply_step(state, m, system)
        steps.append(let)
        if observe is not None:
            observe(let)
        gone = set(m.consumed)
        new = {d.name for d in let.outputs}
        pool = [p for p in pool if not (set(p.consumed) & gone) and p is not m]
        if zero:
            # rules without linear premises do not depend on the consumed facts
            pool = [p for p in pool if p.consumed or p.rule not in {r.name for r in zero}]
            for r in zero:
                pool.extend(rule_matches(r, state, system, sampler, rng))
        pool.extend(enumerate_matches(state, system, sampler, rng, focus=new))
