"""Randomized safety campaigns over the destination-passing λ→ corpus.

Each run draws an inhabited type, generates a well-typed machine state with
the grammar, and checks progress (the state is final or can step) and
preservation (every successor state is generated by the grammar again).
Each run also evaluates a random program under the step rules and compares
the result with a big-step interpreter. Failing states are minimized before
being reported.
"""
from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .engine import State, System, Scheduler, apply_step, enumerate_matches, make_state, run
from .generative import check_progress, generate_state, validate_state
from .parser import parse_signature
from .printer import show
from .stlc import (
    Ap, Fn, Sampler, Term, TVar, alpha_equal, decode, encode, encode_type, evaluate, free_vars,
    has_type, random_inhabited_type, random_program, term_size,
)
from .syntax import LIN, PER, Arg, Atom, Decl, Monad, Root, Signature, Var, is_kind, telescope
from .traces import canonical_form

CORPUS = ("stlc.clf", "step.clf", "gen.clf")


def corpus_path(name: str) -> Path:
    return Path(str(resources.files("clfkit") / "corpus" / name))


def load_layers(paths, base: Signature | None = None) -> tuple[Signature, list[list[str]]]:
    """Parse files cumulatively; also return each file's monadic rules."""
    sig = base if base is not None else Signature()
    layers = []
    for p in paths:
        before = len(sig)
        sig = parse_signature(Path(p).read_text(), sig)
        layers.append([n for n, e in sig.entries[before:]
                       if not is_kind(e) and isinstance(telescope(e)[1], Monad)])
    return sig, layers


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class CampaignConfig:
    seed_base: int = 0
    runs: int = 1000
    max_expr_size: int = 8
    max_steps: int = 200
    grammar_path: Optional[str] = None
    step_sig_path: Optional[str] = None
    base_path: Optional[str] = None
    adequacy_seeds: int = 2
    program_size: int = 25

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        for f in ("max_expr_size", "max_steps", "adequacy_seeds", "program_size"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be at least 1")

    def paths(self) -> list:
        return [self.base_path or corpus_path("stlc.clf"),
                self.step_sig_path or corpus_path("step.clf"),
                self.grammar_path or corpus_path("gen.clf")]

    def to_json(self) -> dict:
        return {"seedBase": self.seed_base, "runs": self.runs,
                "maxExprSize": self.max_expr_size, "maxSteps": self.max_steps,
                "adequacySeeds": self.adequacy_seeds, "programSize": self.program_size}


@dataclass
class Failure:
    seed: int
    state: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"seed": self.seed, "state": self.state, "detail": self.detail}


@dataclass
class CampaignReport:
    total: int = 0
    generated: int = 0
    incomplete: int = 0
    preservation_failures: list = field(default_factory=list)
    progress_failures: list = field(default_factory=list)
    adequacy_failures: list = field(default_factory=list)
    final_states: int = 0
    stepped_states: int = 0
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return not (self.preservation_failures or self.progress_failures or self.adequacy_failures)

    def merge(self, other: "CampaignReport") -> "CampaignReport":
        return CampaignReport(
            self.total + other.total, self.generated + other.generated,
            self.incomplete + other.incomplete,
            self.preservation_failures + other.preservation_failures,
            self.progress_failures + other.progress_failures,
            self.adequacy_failures + other.adequacy_failures,
            self.final_states + other.final_states,
            self.stepped_states + other.stepped_states,
            self.wall_time + other.wall_time)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "total": self.total,
            "generated": self.generated,
            "incomplete": self.incomplete,
            "finalStates": self.final_states,
            "steppedStates": self.stepped_states,
            "preservationFailures": [f.to_json() for f in self.preservation_failures],
            "progressFailures": [f.to_json() for f in self.progress_failures],
            "adequacyFailures": [f.to_json() for f in self.adequacy_failures],
            "wallTime": round(self.wall_time, 3),
        }


# ---------------------------------------------------------------- the properties


class Safety:
    """Grammar and step systems over one signature."""

    def __init__(self, sig: Signature, step_rules: list, gen_rules: list):
        self.sig = sig
        self.step = System(sig, step_rules)
        self.gen = System(sig, gen_rules)

    @classmethod
    def from_config(cls, cfg: CampaignConfig) -> "Safety":
        sig, layers = load_layers(cfg.paths())
        return cls(sig, layers[1], layers[2])

    def seed_context(self, ty) -> tuple:
        return (Decl(PER, "d", Atom("dest")),
                Decl(LIN, "g", Atom("gen", (Arg(PER, encode_type(ty)), Arg(PER, _v("d"))))))

    def valid(self, state: State, seed: tuple) -> bool:
        return validate_state(state, self.gen, seed).ok

    def progress_fails(self, state: State, seed: tuple) -> bool:
        return not check_progress(state, self.step)[0]

    def preservation_fails(self, state: State, seed: tuple) -> bool:
        return self.bad_successor(state, seed) is not None

    def bad_successor(self, state: State, seed: tuple) -> Optional[State]:
        for m in enumerate_matches(state, self.step):
            nxt, _ = apply_step(state, m, self.step)
            if not self.valid(nxt, seed):
                return nxt
        return None


def _v(name: str) -> Root:
    return Root(Var(name), ())


def eval_context(e: Term) -> tuple:
    return (Decl(PER, "d", Atom("dest")),
            Decl(LIN, "x", Atom("eval", (Arg(PER, encode(e)), Arg(PER, _v("d"))))))


def run_program(e: Term, step: System, seed: int, max_steps: int = 10000):
    """Evaluate `e` under the step rules; return (result term or None, run result)."""
    res = run(make_state(eval_context(e)), step, Scheduler(seed), max_steps)
    lin = res.state.linear()
    if res.reason != "maximal" or len(lin) != 1 or lin[0].type.head != "ret":
        return None, res
    try:
        return decode(lin[0].type.spine[0].term), res
    except ValueError:
        return None, res


def adequacy_failure(e: Term, step: System, seeds) -> Optional[str]:
    """None when every scheduler seed yields the interpreter's value along
    pairwise equal traces; otherwise a description of the first problem."""
    want = evaluate(e)
    first = None
    for s in seeds:
        got, res = run_program(e, step, s)
        if got is None:
            return f"seed {s}: no single ret fact ({res.reason})"
        if not alpha_equal(got, want):
            return f"seed {s}: result {got}, expected {want}"
        form = canonical_form(res.trace)
        if first is None:
            first = form
        elif form != first:
            return f"seed {s}: trace differs from seed {seeds[0]}"
    return None


# ---------------------------------------------------------------- shrinking


def _subterms(t: Term):
    yield t
    if isinstance(t, Fn):
        yield from _subterms(t.body)
    elif isinstance(t, Ap):
        yield from _subterms(t.fun)
        yield from _subterms(t.arg)


def _smaller_exprs(e: Term):
    seen = set()
    for s in _subterms(e):
        if s is e or free_vars(s) or term_size(s) >= term_size(e):
            continue
        key = repr(s)
        if key not in seen:
            seen.add(key)
            yield s


def _leaf_merges(state: State):
    """States where an application frame and its two leaves collapse into one leaf."""
    facts = list(state.facts)
    leaves = {}
    for d in facts:
        if d.mod is LIN and d.type.head in ("eval", "ret"):
            leaves[d.type.spine[1].term] = d
    for f in facts:
        if f.mod is not LIN or f.type.head != "fapp":
            continue
        d1, d2, d = (a.term for a in f.type.spine)
        a, b = leaves.get(d1), leaves.get(d2)
        if a is None or b is None:
            continue
        try:
            e1 = decode(a.type.spine[0].term)
            e2 = decode(b.type.spine[0].term)
        except ValueError:
            continue
        leaf = Decl(LIN, f.name, Atom("eval", (Arg(PER, encode(Ap(e1, e2))), Arg(PER, d))))
        gone = {a.name, b.name, f.name}
        dead = {d1, d2}
        rest = [x for x in facts if x.name not in gone
                and not (x.mod is PER and _v(x.name) in dead)]
        yield State(tuple(rest) + (leaf,), state.counter)


def _expr_shrinks(state: State):
    facts = list(state.facts)
    for i, x in enumerate(facts):
        if x.mod is not LIN or x.type.head not in ("eval", "ret"):
            continue
        try:
            e = decode(x.type.spine[0].term)
        except ValueError:
            continue
        for s in _smaller_exprs(e):
            ty = Atom(x.type.head, (Arg(PER, encode(s)),) + x.type.spine[1:])
            yield State(tuple(facts[:i] + [Decl(LIN, x.name, ty)] + facts[i + 1:]), state.counter)


def _unused_dests(state: State):
    used = set()
    for d in state.facts:
        if d.mod is LIN:
            used |= {a.term for a in d.type.spine}
    for i, x in enumerate(state.facts):
        if x.mod is PER and x.type.head == "dest" and _v(x.name) not in used and x.name != "d":
            yield State(state.facts[:i] + state.facts[i + 1:], state.counter)


def shrink_state(state: State, fails: Callable[[State], bool], valid: Callable[[State], bool],
                 limit: int = 200) -> State:
    """Greedy minimization: collapse application frames into leaves, drop
    spare destinations, then shrink expressions; every candidate must stay
    grammatical and keep failing."""
    for _ in range(limit):
        for gen in (_leaf_merges, _unused_dests, _expr_shrinks):
            cand = next((c for c in gen(state) if valid(c) and fails(c)), None)
            if cand is not None:
                state = cand
                break
        else:
            return state
    return state


def shrink_term(e: Term, fails: Callable[[Term], bool], limit: int = 100) -> Term:
    for _ in range(limit):
        cand = next((s for s in _smaller_exprs(e) if fails(s)), None)
        if cand is None:
            return e
        e = cand
    return e


# ---------------------------------------------------------------- campaign


def run_one(safety: Safety, cfg: CampaignConfig, seed: int, report: CampaignReport) -> None:
    rng = random.Random(seed)
    ty = random_inhabited_type(rng, rng.randint(1, 4))
    ctx = safety.seed_context(ty)
    report.total += 1
    gen = generate_state(safety.gen, ctx, Scheduler(seed), cfg.max_steps,
                         sampler=Sampler(max_size=cfg.max_expr_size))
    if gen.maximal:
        report.generated += 1
        state = gen.state
        valid = lambda s: safety.valid(s, ctx)  # noqa: E731
        if not valid(state):
            report.preservation_failures.append(
                Failure(seed, show(state.facts), "generated state does not validate"))
        else:
            ok, kind = check_progress(state, safety.step)
            if not ok:
                small = shrink_state(state, lambda s: safety.progress_fails(s, ctx), valid)
                report.progress_failures.append(Failure(seed, show(small.facts), "stuck"))
            elif kind == "final":
                report.final_states += 1
            else:
                report.stepped_states += 1
            bad = safety.bad_successor(state, ctx)
            if bad is not None:
                small = shrink_state(state, lambda s: safety.preservation_fails(s, ctx), valid)
                report.preservation_failures.append(
                    Failure(seed, show(small.facts), f"successor {show(bad.facts)} does not validate"))
    else:
        report.incomplete += 1
    e, _ = random_program(rng, cfg.program_size)
    seeds = [seed * 7919 + k for k in range(cfg.adequacy_seeds)]
    why = adequacy_failure(e, safety.step, seeds)
    if why is not None:
        small = shrink_term(e, lambda t: has_type(t, TVar(-1)) and
                            adequacy_failure(t, safety.step, seeds) is not None)
        report.adequacy_failures.append(Failure(seed, str(small), why))


def cmd_safety_fuzz(cfg: CampaignConfig, safety: Optional[Safety] = None) -> CampaignReport:
    safety = safety or Safety.from_config(cfg)
    report = CampaignReport()
    start = time.perf_counter()
    for i in range(cfg.runs):
        run_one(safety, cfg, cfg.seed_base + i, report)
    report.wall_time = time.perf_counter() - start
    return report
