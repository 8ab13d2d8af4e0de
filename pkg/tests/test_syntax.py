import random

import pytest
from hypothesis import given, settings, strategies as st

from clfkit.parser import ParseError, parse_context, parse_signature, parse_term, parse_trace, parse_type
from clfkit.fuzz import corpus_path
from clfkit.printer import show
from clfkit.stlc import encode, random_program
from clfkit.syntax import (
    EMPTY, LIN, PER, Arg, Atom, Const, KType, Lam, Let, Mod, Pi, Root, Signature, Var,
    alpha_eq, has_redex,
)


def test_modalities_are_exactly_linear_and_persistent():
    assert set(Mod) == {LIN, PER}


def test_two_entry_signature():
    s = parse_signature("exp : type. lam : (exp -> exp) -> exp.")
    assert [n for n, _ in s.entries] == ["exp", "lam"]
    assert isinstance(s.entries[0][1], KType)
    lam = s.entries[1][1]
    assert isinstance(lam, Pi) and isinstance(lam.arg, Pi) and lam.body == Atom("exp")


def test_empty_signature():
    assert parse_signature("").entries == ()


def test_unknown_constant_reports_position():
    with pytest.raises(ParseError, match="unknown constant a") as info:
        parse_signature("c : a -o {x : a}.")
    assert (info.value.line, info.value.col) == (1, 5)


def test_duplicate_constant():
    with pytest.raises(ParseError, match="duplicate constant a"):
        parse_signature("a : type. a : type.")


def test_kind_products_must_be_persistent():
    with pytest.raises(ParseError, match="persistent"):
        parse_signature("a : type. k : a -o type.")


def test_comments_and_layout():
    s = parse_signature("% nothing here\nexp : type. % trailing\n\n  app : exp -> exp -> exp.\n")
    assert len(s) == 2


def test_term_with_object_lambda(sig):
    t = parse_term("lam \\x. x", sig)
    assert t == Root(Const("lam"), (Arg(PER, Lam(PER, "x", Root(Var("x")))),))


def test_one_step_trace(sig):
    tr = parse_trace("{ let {^x : ret E D} = step/eval E D ^y H }", sig)
    assert len(tr.steps) == 1
    st_ = tr.steps[0]
    assert isinstance(st_, Let) and st_.const == "step/eval"
    assert [a.mod for a in st_.spine] == [PER, PER, LIN, PER]
    assert st_.outputs[0].mod is LIN


def test_empty_trace_parses_and_prints():
    assert parse_trace("{ }", Signature()) == EMPTY
    assert show(EMPTY) == "{ }"


def test_eta_expansion_of_heads(sig):
    # value/lam takes a function; a bare variable is expanded to \x. e x
    t = parse_term("value/lam e", sig, env={"e": parse_type("exp -> exp", sig)})
    arg = t.spine[0].term
    assert isinstance(arg, Lam)


def test_stlc_signature_round_trips():
    stlc = parse_signature(corpus_path("stlc.clf").read_text())
    again = parse_signature(show(stlc))
    assert len(again) == len(stlc) == 11
    for (n1, e1), (n2, e2) in zip(stlc.entries, again.entries):
        assert n1 == n2 and alpha_eq(e1, e2)


def test_whole_corpus_round_trips(sig):
    again = parse_signature(show(sig))
    assert [n for n, _ in again.entries] == [n for n, _ in sig.entries]
    assert all(alpha_eq(a, b) for (_, a), (_, b) in zip(sig.entries, again.entries))


def test_alpha_variants_print_identically_in_canonical_mode(sig):
    a = parse_term("lam (\\a. app a (lam (\\b. b)))", sig)
    b = parse_term("lam (\\u. app u (lam (\\w. w)))", sig)
    assert show(a) != show(b)
    assert show(a, canonical=True) == show(b, canonical=True)


def test_context_round_trip(sig):
    ctx = parse_context("[!d : dest, x : eval (app (lam (\\x. x)) (lam (\\y. y))) d]", sig)
    assert parse_context(show(ctx), sig) == ctx
    assert [d.mod for d in ctx] == [PER, LIN]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_printed_terms_reparse_to_alpha_equal_terms(sig, seed):
    e, _ = random_program(random.Random(seed), 20)
    t = encode(e)
    back = parse_term(show(t), sig)
    assert alpha_eq(back, t)
    assert not has_redex(back)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_printed_traces_reparse(sig, step_system, seed):
    from clfkit.engine import Scheduler, make_state, run
    from clfkit.fuzz import eval_context
    e, _ = random_program(random.Random(seed), 12)
    res = run(make_state(eval_context(e)), step_system, Scheduler(seed), 200)
    text = show(res.trace)
    assert alpha_eq(parse_trace(text, sig), res.trace)


def test_parse_error_has_line_and_column():
    with pytest.raises(ParseError) as info:
        parse_signature("exp : type.\nlam : (exp -> exp -> exp.")
    assert info.value.line == 2


def test_single_step_prints_like_its_trace(sig):
    tr = parse_trace("{ let {^x : ret E D} = step/eval E D ^y H }", sig)
    assert "{ " + show(tr.steps[0]) + " }" == show(tr)
