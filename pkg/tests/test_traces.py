import random

import pytest
from hypothesis import given, settings, strategies as st

from clfkit.parser import parse_signature, parse_trace
from clfkit.syntax import EMPTY, LIN, PER, Trace
from clfkit.traces import (
    Interface, ScopeError, canonical_form, dag_sexp, independent, input_interface,
    output_interface, to_dag, trace_equal,
)

from gens import random_trace, rename_outputs, shuffle_steps, topological_shuffle
from oracles import closure_equal

SMALL = parse_signature("""
a : type.
c1 : a -o {y : a}.
c2 : a -o {z : a}.
c3 : a -o {w : a}.
""")


def tr(text):
    return parse_trace(text, SMALL)


DEP = tr("{ let {^y : a} = c1 ^x ; let {^z : a} = c2 ^y }")
DEP_SWAPPED = Trace((DEP.steps[1], DEP.steps[0]))
INDEP = tr("{ let {^y : a} = c1 ^x1 ; let {^z : a} = c2 ^x2 }")
INDEP_SWAPPED = Trace((INDEP.steps[1], INDEP.steps[0]))


def seq(*ts):
    return Trace(tuple(s for t in ts for s in t.steps))


class TestInterfaces:
    def test_empty(self):
        assert input_interface(EMPTY) == Interface()
        assert output_interface(EMPTY) == Interface()

    def test_single_step_reads_its_spine(self):
        t = tr("{ let {^r : a} = c1 ^x }")
        assert input_interface(t) == Interface(frozenset({"x"}))
        assert output_interface(t) == Interface(frozenset({"r"}))

    def test_composition_hides_the_middle(self):
        assert input_interface(DEP) == Interface(frozenset({"x"}))
        assert output_interface(DEP) == Interface(frozenset({"z"}))

    def test_persistent_outputs(self, sig):
        t = parse_trace("{ let {!d : dest, ^x : eval E d} = gen/eval E d T ^g H }", sig)
        out = output_interface(t)
        assert out.linear == {"x"} and out.persistent == {"d"}

    def test_persistent_outputs_survive_later_reads(self, sig):
        t = parse_trace("{ let {!d : dest} = gen/dest ; let {^x : eval E d} = gen/eval E d T ^g H }", sig)
        assert output_interface(t).persistent == {"d"}
        assert "d" not in input_interface(t).names

    def test_ambient_scope_check(self):
        with pytest.raises(ScopeError):
            input_interface(DEP, ambient={})
        assert input_interface(DEP, ambient={"x": LIN}) == Interface(frozenset({"x"}))
        assert input_interface(DEP, ambient={"x": PER}) == Interface(persistent=frozenset({"x"}))


class TestIndependence:
    def test_disjoint_steps(self):
        assert independent(Trace(INDEP.steps[:1]), Trace(INDEP.steps[1:]))

    def test_empty_is_independent_of_everything(self):
        assert independent(EMPTY, DEP) and independent(DEP, EMPTY)

    def test_producer_and_consumer(self):
        assert not independent(Trace(DEP.steps[:1]), Trace(DEP.steps[1:]))


class TestDag:
    def test_empty(self):
        d = to_dag(EMPTY)
        assert d.nodes == () and d.edges == ()

    def test_independent_pair(self):
        d = to_dag(INDEP)
        assert len(d.nodes) == 2 and d.edges == ()

    def test_dependent_pair(self):
        d = to_dag(DEP)
        assert len(d.nodes) == 2 and len(d.edges) == 1

    def test_sexp_is_order_insensitive_for_independent_steps(self):
        assert dag_sexp(INDEP) == dag_sexp(INDEP_SWAPPED)
        assert dag_sexp(DEP) != dag_sexp(DEP_SWAPPED)


class TestEquality:
    def test_unit(self):
        assert trace_equal(seq(DEP, EMPTY), DEP)
        assert trace_equal(seq(EMPTY, DEP), DEP)

    def test_independent_swap(self):
        assert trace_equal(INDEP, INDEP_SWAPPED)

    def test_dependent_swap(self):
        assert not trace_equal(DEP, DEP_SWAPPED)
        assert not closure_equal(DEP, DEP_SWAPPED)

    def test_output_renaming(self):
        other = tr("{ let {^q : a} = c1 ^x ; let {^z : a} = c2 ^q }")
        assert trace_equal(DEP, other)

    def test_free_names_matter(self):
        other = tr("{ let {^y : a} = c1 ^u ; let {^z : a} = c2 ^y }")
        assert not trace_equal(DEP, other)

    def test_rule_labels_matter(self):
        other = tr("{ let {^y : a} = c1 ^x ; let {^z : a} = c3 ^y }")
        assert not trace_equal(DEP, other)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 8))
def test_monoid_laws(seed, n):
    rng = random.Random(seed)
    t = random_trace(rng, n)
    i, j = sorted(rng.randint(0, n) for _ in range(2))
    a, b, c = Trace(t.steps[:i]), Trace(t.steps[i:j]), Trace(t.steps[j:])
    assert trace_equal(seq(t, EMPTY), t)
    assert trace_equal(seq(EMPTY, t), t)
    assert trace_equal(seq(seq(a, b), c), seq(a, seq(b, c)))


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 8))
def test_independent_segments_commute(seed, n):
    rng = random.Random(seed)
    t = random_trace(rng, n)
    i, j = sorted(rng.sample(range(n + 1), 2))
    a, b = Trace(t.steps[i:j]), Trace(t.steps[j:])
    if independent(a, b):
        assert trace_equal(seq(a, b), seq(b, a))


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 8))
def test_dependency_respecting_shuffles_are_equal(seed, n):
    rng = random.Random(seed)
    t = random_trace(rng, n)
    u = rename_outputs(topological_shuffle(t, rng), rng)
    assert trace_equal(t, u)
    assert canonical_form(t) == canonical_form(u)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 6))
def test_agrees_with_rule_closure(seed, n):
    rng = random.Random(seed)
    t = random_trace(rng, n)
    u = shuffle_steps(t, rng) if rng.random() < 0.7 else random_trace(rng, n)
    if rng.random() < 0.5:
        u = rename_outputs(u, rng)
    assert trace_equal(t, u) == closure_equal(t, u)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 8))
def test_equal_traces_have_equal_interfaces(seed, n):
    rng = random.Random(seed)
    t = random_trace(rng, n)
    u = shuffle_steps(t, rng)
    if trace_equal(t, u):
        assert input_interface(t) == input_interface(u)
        assert output_interface(t) == output_interface(u)


def test_trace_equality_respects_checking(sig, step_system):
    """A reordered run still checks at the same interface."""
    from clfkit.checker import LinearityState, check_trace, ctx_equiv
    from clfkit.engine import Scheduler, make_state, run
    from clfkit.fuzz import eval_context
    from clfkit.stlc import random_program
    rng = random.Random(7)
    for seed in range(15):
        e, _ = random_program(rng, 15)
        pre = eval_context(e)
        res = run(make_state(pre), step_system, Scheduler(seed))
        u = topological_shuffle(res.trace, rng)
        assert trace_equal(res.trace, u)
        c1, r1 = check_trace(sig, LinearityState(pre), res.trace)
        c2, r2 = check_trace(sig, LinearityState(pre), u)
        assert r1.ok and r2.ok and ctx_equiv(c1, c2)
