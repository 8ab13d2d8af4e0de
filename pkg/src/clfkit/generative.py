"""Generative grammars: classification, random generation, and validation.

A grammar is a set of rules, each consuming at most one linear fact. Families
that some rule consumes are nonterminals; everything else a rule produces is
a terminal. A state is generated from a seed context when rewriting the seed
with the grammar reaches it and no nonterminal is left.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterator, Optional

from .engine import (
    BudgetExhausted, Match, Scheduler, State, System, Unifier, _Search, enumerate_matches,
    is_evar, make_state, run, solve_persistent, unify,
)
from .hsubst import subst
from .stlc import Sampler
from .syntax import LIN, PER, Arg, Atom, Decl, Let, Monad, Root, Trace, Var, fresh, fv, size


class ClassificationError(Exception):
    pass


class GrammarError(Exception):
    pass


@dataclass(frozen=True)
class GrammarInfo:
    nonterminals: frozenset
    terminals: frozenset
    generative: bool = True
    reason: str = ""

    def to_json(self) -> dict:
        return {"nonterminals": sorted(self.nonterminals), "terminals": sorted(self.terminals),
                "generative": self.generative, "reason": self.reason}


def _as_system(g) -> System:
    return g if isinstance(g, System) else System(g)


def classify_symbols(grammar) -> GrammarInfo:
    system = _as_system(grammar)
    consumed: set[str] = set()
    produced_lin: set[str] = set()
    produced_per: set[str] = set()
    wide = []
    for r in system.rules:
        lin = r.linear_premises
        if len(lin) > 1:
            wide.append(r.name)
        for b in lin:
            if isinstance(b.type, Atom):
                consumed.add(b.type.head)
        for d in r.codomain.ctx:
            if isinstance(d.type, Atom):
                (produced_lin if d.mod is LIN else produced_per).add(d.type.head)
    clash = consumed & produced_per
    if clash:
        raise ClassificationError(
            f"family {sorted(clash)[0]} is produced persistently and consumed linearly")
    terminals = (produced_lin | produced_per) - consumed
    reason = ""
    if wide:
        reason = f"rule {wide[0]} consumes more than one linear fact"
    else:
        mixed = consumed & produced_lin
        stuck = [r.name for r in system.rules if not r.linear_premises
                 and any(d.mod is LIN for d in r.codomain.ctx)]
        if stuck:
            reason = f"rule {stuck[0]} produces linear facts from nothing"
        elif mixed and not any(r.linear_premises for r in system.rules):
            reason = "no rule consumes anything"
    return GrammarInfo(frozenset(consumed), frozenset(terminals), not reason, reason)


# ---------------------------------------------------------------- generation


@dataclass
class GenResult:
    state: State
    trace: Trace
    reason: str  # "maximal", "budget" or "stopped"
    seed: tuple

    @property
    def maximal(self) -> bool:
        return self.reason == "maximal"


def seed_fact(ctx) -> Decl:
    lin = [d for d in ctx if d.mod is LIN]
    if len(lin) != 1:
        raise GrammarError("a seed context needs exactly one linear fact")
    return lin[0]


def generate_state(grammar, seed, sched: Scheduler = Scheduler(), max_steps: int = 200,
                   sampler=None, grow: Optional[int] = None, spare: Optional[int] = None) -> GenResult:
    """Rewrite `seed` with the grammar until no nonterminal is left.

    Rules that produce nonterminals fire at most `grow` times, and rules
    without linear premises at most `spare` times; by default both are drawn
    from the scheduler's generator.
    """
    system = _as_system(grammar)
    info = classify_symbols(system)
    seed = tuple(seed)
    if seed_fact(seed).type.head not in info.nonterminals:
        raise GrammarError(f"seed family {seed_fact(seed).type.head} is not a nonterminal")
    rng = random.Random(sched.seed ^ 0x5EED)
    grow = rng.randint(0, 6) if grow is None else grow
    spare = rng.randint(0, 2) if spare is None else spare
    growing = {r.name for r in system.rules
               if any(isinstance(d.type, Atom) and d.type.head in info.nonterminals
                      for d in r.codomain.ctx)}
    zero = {r.name for r in system.rules if not r.linear_premises}
    fired = {"grow": 0, "spare": 0}

    def allow(m: Match, step: int) -> bool:
        if m.rule in zero:
            return fired["spare"] < spare
        if m.rule in growing:
            return fired["grow"] < grow
        return True

    def observe(let: Let) -> None:
        if let.const in zero:
            fired["spare"] += 1
        elif let.const in growing:
            fired["grow"] += 1

    def done(st: State) -> bool:
        return not any(d.mod is LIN and isinstance(d.type, Atom) and d.type.head in info.nonterminals
                       for d in st.facts)

    res = run(make_state(seed), system, sched, max_steps,
              sampler if sampler is not None else Sampler(), allow, done, observe)
    reason = "maximal" if done(res.state) else res.reason
    return GenResult(res.state, res.trace, reason, seed)


# ---------------------------------------------------------------- validation


class _Budget(Exception):
    pass


@dataclass
class ValidationResult:
    ok: bool
    trace: Optional[Trace] = None
    reason: str = ""  # "ok", "failure" or "budget"
    message: str = ""
    nodes: int = 0

    def to_json(self) -> dict:
        from .printer import show
        out = {"verdict": "accept" if self.ok else ("budget" if self.reason == "budget" else "reject"),
               "message": self.message, "stats": {"nodes": self.nodes}}
        if self.trace is not None:
            out["trace"] = show(self.trace)
        return out


@dataclass
class _App:
    rule: str
    spine: list  # Args, possibly with evars
    outputs: list  # (mod, name, type)


class _Validator:
    def __init__(self, system: System, state: State, seed: tuple, budget: int):
        self.system = system
        self.info = classify_symbols(system)
        self.seed = seed
        self.seed_names = {d.name for d in seed}
        self.facts = {d.name: d for d in state.facts}
        self.per = {d.name for d in state.facts if d.mod is PER}
        self.by_family: dict[str, list[Decl]] = {}
        for d in state.facts:
            if d.mod is LIN and isinstance(d.type, Atom):
                self.by_family.setdefault(d.type.head, []).append(d)
        self.taken = set(self.facts) | self.seed_names
        self.budget = budget
        self.nodes = 0
        self.search = _Search(system.sig)

    def fresh(self, base: str) -> str:
        name = fresh(base, self.taken)
        self.taken.add(name)
        return name

    def tick(self):
        self.nodes += 1
        if self.nodes > self.budget:
            raise _Budget()

    def instantiate(self, rule, u: Unifier):
        """Fresh evars for the rule's dependent variables and outputs."""
        ty = self.system.sig[rule.name]
        slots = []
        t = ty
        for b in rule.binders:
            arg = t.arg
            if b.role == "meta":
                ev = u.new_evar(arg, "v")
                slots.append((b, ev, arg))
                t = subst(t.body, {b.name: (ev, None)})
            else:
                slots.append((b, None, arg))
                t = t.body
        outs = []
        ctx = list(t.ctx)
        for i in range(len(ctx)):
            d = ctx[i]
            ev = u.new_evar(d.type, "o")
            outs.append((d.mod, ev, d.type))
            ctx[i + 1:] = subst(Monad(tuple(ctx[i + 1:])), {d.name: (ev, None)}).ctx
        return slots, outs

    def derive(self, goal: str, gty, u: Unifier, pool: frozenset, apps: list) -> Iterator:
        """Ways to rewrite the nonterminal `goal : gty` into facts drawn from `pool`."""
        self.tick()
        head = gty.head if isinstance(gty, Atom) else None
        for rule in self.system.rules:
            lin = rule.linear_premises
            if len(lin) != 1 or not isinstance(lin[0].type, Atom) or lin[0].type.head != head:
                continue
            slots, outs = self.instantiate(rule, u)
            prem = next(ty for b, _, ty in slots if b.role == "lin")
            u1 = unify(prem, gty, u)
            if u1 is None:
                continue
            yield from self._outputs(rule, goal, slots, outs, 0, u1, pool, apps, [])

    def _outputs(self, rule, goal, slots, outs, i, u, pool, apps, subgoals):
        if i < len(outs):
            mod, ev, ty = outs[i]
            ty_r = u.resolve(ty)
            if mod is PER:
                yield from self._outputs(rule, goal, slots, outs, i + 1, u, pool, apps, subgoals)
                return
            if isinstance(ty_r, Atom) and ty_r.head in self.info.nonterminals:
                name = self.fresh("g")
                u2 = u.bind(ev.head.name, Root(Var(name), ()))
                yield from self._outputs(rule, goal, slots, outs, i + 1, u2, pool, apps,
                                         subgoals + [(name, ty)])
                return
            fam = ty_r.head if isinstance(ty_r, Atom) else None
            for d in self.by_family.get(fam, ()):
                if d.name not in pool:
                    continue
                self.tick()
                u2 = unify(ty_r, d.type, u)
                if u2 is None:
                    continue
                u2 = u2.bind(ev.head.name, Root(Var(d.name), ()))
                yield from self._outputs(rule, goal, slots, outs, i + 1, u2, pool - {d.name},
                                         apps, subgoals)
            return
        # every linear output is placed; persistent outputs must be new names
        claimed = set()
        for mod, ev, _ in outs:
            if mod is not PER:
                continue
            v = u.resolve(ev)
            if isinstance(v, Root) and isinstance(v.head, Var) and not is_evar(v.head.name):
                n = v.head.name
                if n not in self.per or n in self.seed_names or n in claimed or self._claimed(n, apps, u):
                    return
                claimed.add(n)
        yield from self._premises(rule, goal, slots, outs, 0, u, pool, apps, subgoals)

    def _claimed(self, name, apps, u) -> bool:
        for a in apps:
            for mod, ev, _ in a.outputs:
                if mod is PER:
                    v = u.resolve(ev)
                    if isinstance(v, Root) and isinstance(v.head, Var) and v.head.name == name:
                        return True
        return False

    def _premises(self, rule, goal, slots, outs, k, u, pool, apps, subgoals):
        prems = [j for j, (b, _, _) in enumerate(slots) if b.role == "prem"]
        if k < len(prems):
            j = prems[k]
            b, _, ty = slots[j]
            goal_ty = u.resolve(ty)
            search = _Search(self.system.sig, keep=frozenset(u.open_evars(goal_ty)))
            for proof, u2 in search.solve(goal_ty, [], 4 * max(8, size(goal_ty)), u):
                self.tick()
                slots2 = list(slots)
                slots2[j] = (b, proof, ty)
                yield from self._premises(rule, goal, slots2, outs, k + 1, u2, pool, apps, subgoals)
            return
        spine = []
        for b, val, _ in slots:
            if b.role == "lin":
                spine.append(Arg(LIN, Root(Var(goal), ())))
            else:
                spine.append(Arg(PER, val))
        app = _App(rule.name, spine, outs)
        yield from self._subgoals(subgoals, u, pool, apps + [app])

    def _subgoals(self, subgoals, u, pool, apps):
        if not subgoals:
            yield u, pool, apps
            return
        (name, ty), rest = subgoals[0], subgoals[1:]
        for u2, pool2, apps2 in self.derive(name, u.resolve(ty), u, pool, apps):
            yield from self._subgoals(rest, u2, pool2, apps2)


def validate_state(state, grammar, seed, budget: int = 20000) -> ValidationResult:
    """Find a generation trace from `seed` to `state`, or report why there is none."""
    system = _as_system(grammar)
    info = classify_symbols(system)
    if not info.generative:
        raise GrammarError(f"grammar is not generative: {info.reason}")
    if not isinstance(state, State):
        state = make_state(tuple(state))
    seed = tuple(seed)
    top = seed_fact(seed)
    facts = {d.name: d for d in state.facts}
    for d in seed:
        if d.mod is PER:
            if d.name not in facts or facts[d.name].mod is not PER:
                return ValidationResult(False, reason="failure",
                                        message=f"seed fact {d.name} is missing from the state")
    v = _Validator(system, state, seed, budget)
    pool = frozenset(d.name for d in state.facts if d.mod is LIN)
    try:
        for u, left, apps in v.derive(top.name, top.type, Unifier(), pool, []):
            if left:
                continue
            res = _finish(v, u, apps, state, seed)
            if res is not None:
                res.nodes = v.nodes
                return res
    except _Budget:
        return ValidationResult(False, reason="budget", nodes=v.nodes,
                                message=f"search budget of {budget} nodes exhausted")
    return ValidationResult(False, reason="failure", nodes=v.nodes,
                            message="no generation trace produces this state")


def _finish(v: _Validator, u: Unifier, apps: list, state: State, seed) -> Optional[ValidationResult]:
    # persistent facts not created by any step are absorbed by premise-free rules
    claimed = set()
    for a in apps:
        for mod, ev, _ in a.outputs:
            if mod is PER:
                r = u.resolve(ev)
                if not (isinstance(r, Root) and isinstance(r.head, Var)) or is_evar(r.head.name):
                    return None
                claimed.add(r.head.name)
    extra = [d for d in state.facts if d.mod is PER and d.name not in claimed and d.name not in v.seed_names]
    tail = []
    for d in extra:
        for rule in v.system.rules:
            if rule.linear_premises or rule.binders or len(rule.codomain.ctx) != 1:
                continue
            out = rule.codomain.ctx[0]
            if out.mod is PER and unify(out.type, d.type, Unifier()) is not None:
                tail.append(Let((Decl(PER, d.name, d.type),), rule.name, ()))
                break
        else:
            return None
    # ground whatever the state leaves undetermined, such as unused types
    u = _default(v, u, apps)
    if u is None:
        return None
    steps = []
    for a in apps:
        spine = tuple(Arg(x.mod, u.resolve(x.term)) for x in a.spine)
        outs = []
        for mod, ev, ty in a.outputs:
            name = u.resolve(ev).head.name
            outs.append(Decl(mod, name, u.resolve(ty)))
        steps.append(Let(tuple(outs), a.rule, spine))
    trace = Trace(tuple(steps) + tuple(tail))
    if any(is_evar(x) for x in fv(trace)):
        return None
    return ValidationResult(True, trace, "ok")


def _default(v: _Validator, u: Unifier, apps) -> Optional[Unifier]:
    for a in apps:
        for x in a.spine:
            for name in sorted(u.open_evars(x.term)):
                if name in u.inst:
                    continue
                ty = u.resolve(u.types[name])
                for proof, u2 in v.search.solve(ty, [], 8, u):
                    u = u2.bind(name, proof)
                    break
                else:
                    return None
    return u


# ---------------------------------------------------------------- the safety properties


def check_progress(state: State, step_system: System, result_family: str = "ret",
                   value_family: str = "value") -> tuple[bool, str]:
    """Either a final state (one result fact whose value is provable) or some step applies."""
    lin = state.linear()
    if len(lin) == 1 and isinstance(lin[0].type, Atom) and lin[0].type.head == result_family:
        v = lin[0].type.spine[0].term
        try:
            proof = solve_persistent(Atom(value_family, (Arg(PER, v),)), step_system.sig, state)
        except BudgetExhausted:
            proof = None
        if proof is not None:
            return True, "final"
    if enumerate_matches(state, step_system):
        return True, "step"
    return False, "stuck"
