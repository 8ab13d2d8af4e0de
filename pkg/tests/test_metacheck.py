import random

import pytest

from clfkit.metacheck import (
    MetaChecker, MetaContext, check_meta_kind, check_meta_signature, check_meta_term,
    check_meta_trace, ctx_equal, filter_context, msubst, trace_meq,
)
from clfkit.parser import ParseError, parse_context, parse_meta_signature, parse_meta_type, parse_trace
from clfkit.syntax import (
    EMPTY, LIN, PER, Atom, CtxVar, Decl, MAtom, MetaSignature, MLam, MNabla, MPi, MPiCtx,
    MRoot, MTraceType, NameArg, Trace,
)

from mutants import meta_mutants
from oracles import subst_ctxvar

TPRES_KIND = """Pihat t:tp. nabla d g. Pi psi1:ctx. Pi psi2:ctx.
  ([!d:dest, g:gen t d] =>* gen [psi1]) ->
  ([psi1] =>1 step [psi2]) ->
  ([!d:dest, g:gen t d] =>* gen [psi2]) -> type"""


def mutate(text, old, new):
    assert text.count(old) == 1, old
    return text.replace(old, new)


def verdict(sig, text):
    return check_meta_signature(parse_meta_signature(text, sig), sig)


def test_filter_context():
    gamma = (("psi", "ctx", None), ("X", "meta", MAtom("k")), ("e", "clf", Atom("exp")))
    assert filter_context(gamma) == (Decl(PER, "e", Atom("exp")),)
    assert filter_context(MetaContext()) == ()


def test_context_names_must_be_distinct():
    ctx = MetaContext().with_ctx("psi")
    with pytest.raises(Exception):
        ctx.with_name("psi")


def test_empty_meta_signature(sig):
    assert check_meta_signature(MetaSignature(), sig).ok


def test_safety_development_is_accepted(sig, msig):
    r = check_meta_signature(msig, sig)
    assert r.ok, r.diagnostics
    assert len(msig.decls()) == 14 and set(msig.rulesets()) == {"gen", "step"}


class TestKinds:
    def test_preservation_kind(self, sig, msig):
        k = parse_meta_type(TPRES_KIND, sig, msig)
        assert check_meta_kind(sig, MetaContext(), k, msig).ok

    def test_undeclared_name_in_kind(self, sig, msig):
        k = parse_meta_type(TPRES_KIND.replace("nabla d g.", "nabla g."), sig, msig)
        assert not check_meta_kind(sig, MetaContext(), k, msig).ok

    def test_result_kind(self, sig, msig):
        assert check_meta_kind(sig, MetaContext(), parse_meta_type("ctx -> type", sig, msig), msig).ok

    def test_unknown_rule_set(self, sig, msig):
        with pytest.raises(ParseError):
            parse_meta_type("Pi psi:ctx. ([psi] =>* nope [psi]) -> type", sig, msig)


class TestTerms:
    def test_polymorphic_identity(self, sig, msig):
        tt = MTraceType((CtxVar("psi"),), "gen", "*", (CtxVar("psi"),))
        ty = MPiCtx("psi", MPi("x", tt, tt))
        m = MLam("psi", MLam("x", MRoot("x")))
        r = check_meta_term(sig, MetaContext(), m, ty, msig)
        assert r.ok, r.diagnostics

    def test_identity_at_wrong_type(self, sig, msig):
        a = MTraceType((CtxVar("psi"),), "gen", "*", (CtxVar("psi"),))
        b = MTraceType((CtxVar("psi"),), "step", "*", (CtxVar("psi"),))
        m = MLam("psi", MLam("x", MRoot("x")))
        assert not check_meta_term(sig, MetaContext(), m, MPiCtx("psi", MPi("x", a, b)), msig).ok


class TestTraces:
    def psi(self):
        return MetaContext().with_ctx("psi")

    def test_empty_trace_at_identity(self, sig, msig):
        tt = MTraceType((CtxVar("psi"),), "gen", "*", (CtxVar("psi"),))
        assert check_meta_trace(sig, self.psi(), EMPTY, tt, msig).ok

    def test_empty_trace_is_not_one_step(self, sig, msig):
        tt = MTraceType((CtxVar("psi"),), "step", "1", (CtxVar("psi"),))
        assert not check_meta_trace(sig, self.psi(), EMPTY, tt, msig).ok

    def test_two_steps_are_not_one_step(self, sig, msig):
        ctx = MetaContext().with_name("d").with_name("x").with_name("y").with_name("z")
        pre = parse_context("[!d : dest, x : eval (lam (\\u. u)) d]", sig)
        post = parse_context("[!d : dest, z : ret (lam (\\u. u)) d]", sig)
        tr = parse_trace("{ let {^y : ret (lam (\\u. u)) d} = step/eval (lam (\\u. u)) d ^x "
                         "(value/lam (\\u. u)) }", sig)
        one = MTraceType(pre, "step", "1", parse_context("[!d : dest, y : ret (lam (\\u. u)) d]", sig))
        assert check_meta_trace(sig, ctx, tr, one, msig).ok
        assert not check_meta_trace(sig, ctx, Trace(tr.steps * 2), MTraceType(pre, "step", "1", post),
                                    msig).ok

    def test_outputs_must_be_declared_names(self, sig, msig):
        pre = parse_context("[!d : dest, x : eval (lam (\\u. u)) d]", sig)
        post = parse_context("[!d : dest, y : ret (lam (\\u. u)) d]", sig)
        tr = parse_trace("{ let {^y : ret (lam (\\u. u)) d} = step/eval (lam (\\u. u)) d ^x "
                         "(value/lam (\\u. u)) }", sig)
        ctx = MetaContext().with_name("d").with_name("x")
        r = check_meta_trace(sig, ctx, tr, MTraceType(pre, "step", "1", post), msig)
        assert not r.ok and "nabla" in r.diagnostics[0].message


class TestDevelopment:
    def test_ret_case_with_wrong_rule(self, sig, safety_text):
        text = mutate(safety_text, "{X1; let {y : ret e d0} = gen/ret e d0 t0 ^g0 H Hv}",
                      "{X1; let {y : ret e d0} = gen/eval e d0 t0 ^g0 H Hv}")
        r = verdict(sig, text)
        assert not r.ok and r.diagnostics[0].location == "tpres/ret"

    def test_beta_case_needs_its_destinations(self, sig, safety_text):
        text = mutate(safety_text, "     let {!d1 : dest} = gen/dest;\n     let {!d2 : dest} = gen/dest}", "}")
        r = verdict(sig, text)
        assert not r.ok and r.diagnostics[0].location == "tpres/beta"

    def test_independent_steps_may_be_written_in_either_order(self, sig, safety_text):
        a = "     let {x1 : eval e1 d1} = gen/eval e1 d1 (arr t2 t0) ^g1 H1;\n"
        b = "     let {x2 : eval e2 d2} = gen/eval e2 d2 t2 ^g2 H2}"
        text = mutate(safety_text, a + b, b[:-1] + ";\n" + a[:-2] + "}")
        assert verdict(sig, text).ok

    def test_frame_on_the_wrong_side(self, sig, safety_text):
        text = mutate(safety_text, "(res/step [psi2, !d:dest", "(res/step [psi1, !d:dest")
        assert not verdict(sig, text).ok

    def test_missing_name_declaration_is_a_parse_or_check_error(self, sig, safety_text):
        text = mutate(safety_text, "tpres : Pihat t:tp. nabla d g.", "tpres : Pihat t:tp. nabla g.")
        try:
            r = verdict(sig, text)
        except ParseError:
            return
        assert not r.ok

    def test_open_postconditions_are_recorded_as_assumptions(self, sig, msig):
        r = check_meta_signature(msig, sig)
        assert r.assumptions and all("maximality" in a for a in r.assumptions)


def test_every_single_point_mutant_is_killed(sig, msig):
    muts = meta_mutants(msig)
    assert len(muts) >= 30
    assert {k for k, _, _ in muts} == {"swap-rule", "drop-step", "swap-ctx", "rename-output"}
    survivors = [label for _, label, m in muts if check_meta_signature(m, sig).ok]
    assert survivors == []


# ---------------------------------------------------------------- substitution and equality


def _ctx_binders(t):
    out = []
    while isinstance(t, (MPiCtx, MPi, MNabla)) or type(t).__name__ == "MPiHat":
        if isinstance(t, MPiCtx):
            out.append(t.name)
        t = t.body
    return out


def _strip_to(t, psi):
    while not (isinstance(t, MPiCtx) and t.name == psi):
        t = t.body
    return t.body


def test_context_substitution_matches_reference(sig, msig):
    rng = random.Random(11)
    decls = [(n, t) for n, t in msig.decls() if _ctx_binders(t)]
    dest = Atom("dest")
    count = 0
    while count < 100:
        name, ty = rng.choice(decls)
        psi = rng.choice(_ctx_binders(ty))
        body = _strip_to(ty, psi)
        delta = []
        for i in range(rng.randint(0, 3)):
            if rng.random() < 0.3:
                delta.append(CtxVar(f"phi{i}"))
            else:
                delta.append(Decl(rng.choice([LIN, PER]), f"q{i}", dest))
        delta = tuple(delta)
        assert msubst(body, ctxs={psi: delta}) == subst_ctxvar(body, psi, delta), (name, psi)
        count += 1


def test_context_equality_is_multiset_equality():
    a, b = CtxVar("a"), CtxVar("b")
    x = Decl(LIN, "x", Atom("dest"))
    assert ctx_equal((a, x, b), (b, a, x))
    assert not ctx_equal((a, a), (a,))
    assert not ctx_equal((a, x), (a, Decl(PER, "x", Atom("dest"))))


def test_trace_equality_up_to_independent_reordering(sig):
    t = parse_trace("{ let {^y : ret (lam (\\u. u)) d} = step/eval (lam (\\u. u)) d ^x (value/lam (\\u. u)) ;"
                    " let {^z : ret (lam (\\u. u)) e} = step/eval (lam (\\u. u)) e ^w (value/lam (\\u. u)) }",
                    sig, env={"d": Atom("dest"), "e": Atom("dest")})
    swapped = Trace(t.steps[::-1])
    assert trace_meq(t, swapped)
    assert not trace_meq(t, Trace(t.steps[:1]))


def test_fresh_names_are_distinct(sig, msig):
    mc = MetaChecker(sig, msig)
    ctx = MetaContext().with_name("a#0")
    tt = MTraceType((CtxVar("psi"),), "gen", "*", (CtxVar("psi"),))
    names = {mc.fresh_name(ctx, tt) for _ in range(5)}
    assert len(names) == 5 and "a#0" not in names
    out = mc.spine(MetaContext().with_ctx("psi"), (NameArg("#"),),
                   MNabla("n", MTraceType((Decl(PER, "n", Atom("dest")),), "gen", "*",
                                          (Decl(PER, "n", Atom("dest")),))))
    assert out.pre[0].name not in {"n", "#"}
