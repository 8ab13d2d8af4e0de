"""End-to-end acceptance criteria.

Each test prints one `criterion N: PASS|FAIL` line (also collected into the
terminal summary) and must finish within the time limit. Run this file
directly with python to get just those lines.
"""

import itertools
import os
import random
import re
import subprocess
import sys
import tempfile
import time
from pathlib import Path

from clfkit.checker import LinearityState, check_trace, frame_check
from clfkit.engine import Scheduler, System, make_state, run
from clfkit.fuzz import CORPUS, CampaignConfig, cmd_safety_fuzz, corpus_path, eval_context, load_layers, run_program
from clfkit.generative import generate_state
from clfkit.hsubst import hsubst
from clfkit.metacheck import check_meta_signature
from clfkit.parser import parse_meta_signature, parse_program
from clfkit.stlc import encode, encode_type, random_inhabited_type, random_program, term_size
from clfkit.syntax import EMPTY, LIN, PER, Arg, Atom, Decl, Root, Trace, Var, bound_names, has_redex
from clfkit.traces import canonical_form, independent, trace_equal

sys.path.insert(0, str(Path(__file__).parent))

from gens import random_subst_instance, random_trace, rename_outputs, topological_shuffle  # noqa: E402
from mutants import CLF_FILES, CLF_MUTANTS, check_clf_mutant, meta_mutants, run_cli  # noqa: E402
from oracles import (  # noqa: E402
    alpha_key, cbv, clf_exp_db, closure_keys, naive_subst, stlc_db, steps_independent, to_db,
)

LIMIT = 60.0
LINES: list = []


def _layers():
    return load_layers([corpus_path(f) for f in CORPUS])


def report(n: int, what: str, ok: bool, detail: str, start: float) -> None:
    elapsed = time.perf_counter() - start
    ok = ok and elapsed <= LIMIT
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {what} ({detail}; {elapsed:.1f}s)"
    LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1


def test_criterion_1_object_checker_and_mutants():
    start = time.perf_counter()
    code, doc = run_cli(["check", *(corpus_path(f) for f in CLF_FILES)])
    base_ok = code == 0 and doc["verdict"] == "accept"
    survivors = []
    with tempfile.TemporaryDirectory() as d:
        for m in CLF_MUTANTS:
            code, doc = check_clf_mutant(Path(d), m)
            if code != 1:
                survivors.append(m[3])
    kinds = {m[0] for m in CLF_MUTANTS}
    ok = base_ok and len(CLF_MUTANTS) >= 15 and kinds == {"modality", "premise", "codomain"} \
        and not survivors
    report(1, "clf check accepts the corpus and rejects every mutant", ok,
           f"{len(CLF_MUTANTS) - len(survivors)}/{len(CLF_MUTANTS)} mutants rejected", start)


# ---------------------------------------------------------------- 2


def _seq(*ts):
    return Trace(tuple(s for t in ts for s in t.steps))


def _laws_hold(rng, t) -> bool:
    n = len(t.steps)
    if not (trace_equal(_seq(t, EMPTY), t) and trace_equal(_seq(EMPTY, t), t)):
        return False
    i, j = sorted(rng.randint(0, n) for _ in range(2))
    a, b, c = Trace(t.steps[:i]), Trace(t.steps[i:j]), Trace(t.steps[j:])
    if not trace_equal(_seq(_seq(a, b), c), _seq(a, _seq(b, c))):
        return False
    # an independent pair of adjacent segments may be exchanged in place
    i, j, k = sorted(rng.randint(0, n) for _ in range(3))
    a, b = Trace(t.steps[i:j]), Trace(t.steps[j:k])
    if independent(a, b):
        swapped = Trace(t.steps[:i] + b.steps + a.steps + t.steps[k:])
        if not trace_equal(t, swapped):
            return False
    if not trace_equal(t, rename_outputs(topological_shuffle(t, rng), rng)):
        return False
    # exchanging a dependent adjacent pair must be observable
    dep = [p for p in range(n - 1) if not steps_independent(t.steps[p], t.steps[p + 1])]
    if dep:
        p = rng.choice(dep)
        s = list(t.steps)
        s[p], s[p + 1] = s[p + 1], s[p]
        if trace_equal(t, Trace(tuple(s))):
            return False
    return True


def test_criterion_2_trace_laws_and_closure_oracle():
    start = time.perf_counter()
    rng = random.Random(2024)
    laws = sum(_laws_hold(rng, random_trace(rng, rng.randint(0, 8))) for _ in range(10_000))
    compared = disagreements = 0
    for n in range(7):
        for _ in range(15 if n >= 4 else 5):
            t = random_trace(rng, n)
            keys = closure_keys(t)
            for perm in itertools.permutations(t.steps):
                u = Trace(perm)
                if rng.random() < 0.3:
                    u = rename_outputs(u, rng)
                compared += 1
                if trace_equal(t, u) != (alpha_key(u) in keys):
                    disagreements += 1
    ok = laws == 10_000 and disagreements == 0
    report(2, "trace monoid/permutation laws and closure-oracle agreement", ok,
           f"{laws}/10000 traces, {compared - disagreements}/{compared} comparisons agree", start)


# ---------------------------------------------------------------- 3


def _random_frame(rng, taken: set) -> tuple:
    out = []
    dests = []
    k = 0

    def name(base):
        nonlocal k
        while f"{base}{k}" in taken:
            k += 1
        k += 1
        return f"{base}{k - 1}"

    for _ in range(rng.randint(0, 5)):
        r = rng.random()
        if r < 0.3 or not dests:
            d = name("fe")
            dests.append(d)
            out.append(Decl(PER, d, Atom("dest")))
            continue
        d = Root(Var(rng.choice(dests)), ())
        if r < 0.5:
            e, _ = random_program(rng, 8)
            out.append(Decl(LIN, name("fx"), Atom("eval", (Arg(PER, encode(e)), Arg(PER, d)))))
        elif r < 0.65:
            e, _ = random_program(rng, 6)
            out.append(Decl(LIN, name("fr"), Atom("ret", (Arg(PER, encode(e)), Arg(PER, d)))))
        elif r < 0.8:
            ty = encode_type(random_inhabited_type(rng, 3))
            out.append(Decl(LIN, name("fg"), Atom("gen", (Arg(PER, ty), Arg(PER, d)))))
        else:
            args = tuple(Arg(PER, Root(Var(rng.choice(dests)), ())) for _ in range(2))
            out.append(Decl(LIN, name("ff"), Atom("fapp", args + (Arg(PER, d),))))
    return tuple(out)


def _corpus_traces(sig, layers):
    """Witness directives plus engine runs of the step and generation rules."""
    prog = parse_program(corpus_path("witness.clf").read_text(), sig)
    out = [(q.pre, q.trace, q.post) for q in prog.queries]
    step, gen = System(sig, layers[1]), System(sig, layers[2])
    rng = random.Random(3)
    for k in range(20):
        e, _ = random_program(rng, 15)
        res = run(make_state(eval_context(e)), step, Scheduler(k))
        out.append((eval_context(e), res.trace, res.state.facts))
    for k in range(20):
        ty = encode_type(random_inhabited_type(rng, 3))
        seed = (Decl(PER, "d", Atom("dest")), Decl(LIN, "g", Atom("gen", (Arg(PER, ty), Arg(PER, Root(Var("d")))))))
        res = generate_state(gen, seed, Scheduler(k))
        out.append((seed, res.trace, res.state.facts))
    return out


def test_criterion_3_frame_property():
    start = time.perf_counter()
    sig, layers = _layers()
    rng = random.Random(33)
    traces = [t for t in _corpus_traces(sig, layers)
              if check_trace(sig, LinearityState(t[0]), t[1])[1].ok]
    checks = held = 0
    for pre, tr, post in traces:
        taken = {d.name for d in pre} | set(bound_names(tr))
        for _ in range(200):
            extra = _random_frame(rng, taken)
            checks += 1
            held += frame_check(sig, extra, tr, pre, post)
    ok = len(traces) >= 40 and held == checks
    report(3, "frame property on accepted corpus traces", ok,
           f"{held}/{checks} framings over {len(traces)} traces", start)


# ---------------------------------------------------------------- 4


def test_criterion_4_hereditary_substitution_oracle():
    start = time.perf_counter()
    rng = random.Random(44)
    n = 2000
    agree = 0
    for _ in range(n):
        term, x, value, shape = random_subst_instance(rng, 30)
        out = hsubst(term, x, value, shape)
        agree += to_db(out) == naive_subst(term, x, value) and not has_redex(out)
    report(4, "hereditary substitution agrees with substitute-then-normalize", agree == n,
           f"{agree}/{n} instances", start)


# ---------------------------------------------------------------- 5


def test_criterion_5_adequacy():
    start = time.perf_counter()
    sig, layers = _layers()
    step = System(sig, layers[1])
    rng = random.Random(55)
    good = 0
    for i in range(500):
        e, _ = random_program(rng, 25)
        assert term_size(e) <= 25
        want = cbv(stlc_db(e))
        forms = set()
        fine = True
        for s in range(20):
            got, res = run_program(e, step, i * 1000 + s)
            if got is None or clf_exp_db(encode(got)) != want:
                fine = False
                break
            forms.add(canonical_form(res.trace))
        good += fine and len(forms) == 1
    report(5, "lambda-calculus adequacy with schedule-independent traces", good == 500,
           f"{good}/500 terms x 20 seeds", start)


# ---------------------------------------------------------------- 6


def test_criterion_6_preservation_and_progress():
    start = time.perf_counter()
    rep = cmd_safety_fuzz(CampaignConfig(seed_base=0, runs=1000))
    checked = rep.final_states + rep.stepped_states
    ok = rep.generated == 1000 and checked == 1000 and not rep.preservation_failures \
        and not rep.progress_failures
    report(6, "preservation and progress on generated states", ok,
           f"{checked} states, {len(rep.preservation_failures)} preservation / "
           f"{len(rep.progress_failures)} progress failures", start)


# ---------------------------------------------------------------- 7


def test_criterion_7_meta_checker_and_mutants():
    start = time.perf_counter()
    code, doc = run_cli(["check-meta", corpus_path("safety.mclf")])
    sig, _ = _layers()
    msig = parse_meta_signature(corpus_path("safety.mclf").read_text(), sig)
    muts = meta_mutants(msig)
    survivors = [label for _, label, m in muts if check_meta_signature(m, sig).ok]
    ok = code == 0 and doc["verdict"] == "accept" and len(muts) >= 30 and not survivors
    report(7, "clf check-meta accepts the safety proofs and kills every mutant", ok,
           f"{len(muts) - len(survivors)}/{len(muts)} mutants killed", start)


# ---------------------------------------------------------------- 8


WALL = re.compile(rb'^\s*"wallTime": .*\n', re.M)


def _cli_out(argv, hashseed: str) -> bytes:
    env = dict(os.environ, PYTHONHASHSEED=hashseed, CLF_COLOR="0")
    p = subprocess.run([sys.executable, "-m", "clfkit.cli", *map(str, argv)],
                       capture_output=True, env=env)
    return WALL.sub(b"", p.stdout) + f"exit {p.returncode}".encode()


def test_criterion_8_determinism():
    start = time.perf_counter()
    core = [corpus_path(f) for f in CORPUS]
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        (d / "state.ctx").write_text(
            "[!d : dest, !d#0 : dest, !d#1 : dest, x#2 : fapp d#0 d#1 d, "
            "x#5 : ret (lam (\\x1. x1)) d#1, x#6 : eval (lam (\\x1. lam (\\x2. x1))) d#0]")
        s1 = "let {^y : ret (lam (\\u. u)) d} = step/eval (lam (\\u. u)) d ^x (value/lam (\\u. u))"
        s2 = "let {^z : ret (lam (\\u. u)) e} = step/eval (lam (\\u. u)) e ^w (value/lam (\\u. u))"
        (d / "a.tr").write_text(f"{{ {s1} ; {s2} }}")
        (d / "b.tr").write_text(f"{{ {s2} ; {s1} }}")
        commands = [
            ["check", *(corpus_path(f) for f in CLF_FILES)],
            ["check-meta", corpus_path("safety.mclf")],
            ["run", "--sig", *core[:2], "--term", "app (app (lam (\\x. x)) (lam (\\y. y))) (lam (\\z. z))",
             "--seed", "7"],
            ["gen", "--grammar", core[2], "--type", "arr (arr o o) (arr o o)", "--seed", "11"],
            ["validate", "--grammar", core[2], "--type", "arr o o", "--state", d / "state.ctx"],
            ["trace-eq", d / "a.tr", d / "b.tr", "--explain"],
            ["safety-fuzz", "--runs", "15", "--seed", "3"],
        ]
        same = 0
        for argv in commands:
            a, b = _cli_out(argv, "1"), _cli_out(argv, "2")
            same += a == b and a.startswith(b"{")
    report(8, "repeated commands give byte-identical JSON", same == len(commands),
           f"{same}/{len(commands)} commands", start)


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
