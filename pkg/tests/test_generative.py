import random

import pytest
from hypothesis import given, settings, strategies as st

from clfkit.checker import LinearityState, check_trace, ctx_equiv
from clfkit.engine import Scheduler, System, make_state
from clfkit.generative import (
    ClassificationError, GrammarError, check_progress, classify_symbols, generate_state,
    validate_state,
)
from clfkit.parser import parse_context, parse_signature
from clfkit.printer import show
from clfkit.stlc import encode_type, random_inhabited_type


def seed(sig, ty):
    return parse_context(f"[!d : dest, g : gen ({ty}) d]", sig)


class TestClassification:
    def test_generation_grammar(self, gen_system):
        info = classify_symbols(gen_system)
        assert info.generative
        assert info.nonterminals == {"gen"}
        assert info.terminals == {"eval", "ret", "fapp", "dest"}

    def test_step_rules_are_not_generative(self, step_system):
        info = classify_symbols(step_system)
        assert not info.generative and "step/beta" in info.reason

    def test_empty_grammar(self, sig):
        info = classify_symbols(System(sig, []))
        assert info.generative and not info.nonterminals and not info.terminals

    def test_persistent_and_linear_clash(self):
        s = parse_signature("a : type. r1 : {!x : a}. r2 : a -o {}.")
        with pytest.raises(ClassificationError):
            classify_symbols(s)

    def test_json(self, gen_system):
        assert classify_symbols(gen_system).to_json()["nonterminals"] == ["gen"]


class TestGeneration:
    def test_uninhabited_type_never_finishes(self, sig, gen_system):
        for k in range(5):
            r = generate_state(gen_system, seed(sig, "o"), Scheduler(k))
            assert not r.maximal
            assert any(d.type.head == "gen" for d in r.state.linear())

    def test_function_type_finishes(self, sig, gen_system):
        for k in range(5):
            r = generate_state(gen_system, seed(sig, "arr o o"), Scheduler(k))
            assert r.maximal
            assert not any(d.type.head == "gen" for d in r.state.linear())

    def test_zero_budget(self, sig, gen_system):
        s = seed(sig, "arr o o")
        r = generate_state(gen_system, s, Scheduler(0), 0)
        assert r.reason == "budget" and r.trace.steps == () and r.state.facts == s

    def test_seed_needs_one_linear_fact(self, sig, gen_system):
        with pytest.raises(GrammarError):
            generate_state(gen_system, parse_context("[!d : dest]", sig))

    def test_seed_must_be_a_nonterminal(self, sig, gen_system):
        with pytest.raises(GrammarError):
            generate_state(gen_system, parse_context("[!d : dest, x : eval (lam (\\x. x)) d]", sig))

    def test_generated_states_make_progress(self, sig, gen_system, step_system):
        for k in range(10):
            r = generate_state(gen_system, seed(sig, "arr o o"), Scheduler(k))
            assert check_progress(r.state, step_system)[0]


class TestValidation:
    def test_fapp_without_children(self, sig, gen_system):
        st_ = parse_context("[!d : dest, !d1 : dest, !d2 : dest, f : fapp d1 d2 d]", sig)
        r = validate_state(st_, gen_system, seed(sig, "arr o o"))
        assert not r.ok and r.reason == "failure"

    def test_two_evaluations_for_one_destination(self, sig, gen_system):
        st_ = parse_context("[!d : dest, a : eval (lam (\\x. x)) d, b : eval (lam (\\y. y)) d]", sig)
        assert not validate_state(st_, gen_system, seed(sig, "arr o o")).ok

    def test_ill_typed_evaluation(self, sig, gen_system):
        st_ = parse_context("[!d : dest, a : eval (lam (\\x. lam (\\y. x))) d]", sig)
        assert not validate_state(st_, gen_system, seed(sig, "arr o o")).ok

    def test_single_evaluation(self, sig, gen_system):
        st_ = parse_context("[!d : dest, a : eval (lam (\\x. x)) d]", sig)
        r = validate_state(st_, gen_system, seed(sig, "arr o o"))
        assert r.ok and [s.const for s in r.trace.steps] == ["gen/eval"]

    def test_missing_seed_destination(self, sig, gen_system):
        st_ = parse_context("[!e : dest, a : eval (lam (\\x. x)) e]", sig)
        r = validate_state(st_, gen_system, seed(sig, "arr o o"))
        assert not r.ok and "d" in r.message

    def test_budget(self, sig, gen_system):
        r = generate_state(gen_system, seed(sig, "arr (arr o o) (arr o o)"), Scheduler(4))
        res = validate_state(r.state, gen_system, r.seed, budget=1)
        assert not res.ok and res.reason == "budget"

    def test_non_generative_grammar(self, sig, step_system):
        with pytest.raises(GrammarError):
            validate_state(make_state(()), step_system, seed(sig, "o"))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_states_validate_along_checked_traces(sig, gen_system, k):
    rng = random.Random(k)
    ty = encode_type(random_inhabited_type(rng, rng.randint(1, 4)))
    s = seed(sig, show(ty))
    r = generate_state(gen_system, s, Scheduler(k))
    if not r.maximal:
        return
    # the generation trace itself checks
    ctx, rep = check_trace(sig, LinearityState(s), r.trace)
    assert rep.ok and ctx_equiv(ctx, r.state.facts)
    # and validation finds a (possibly different) trace to the same state
    res = validate_state(r.state, gen_system, s)
    assert res.ok, res.message
    ctx, rep = check_trace(sig, LinearityState(s), res.trace)
    assert rep.ok and ctx_equiv(ctx, r.state.facts)
