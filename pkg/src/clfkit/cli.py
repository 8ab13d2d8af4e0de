"""The `clf` command line.

Every verb prints one JSON document on standard output (sorted keys) and
exits 0 on success, 1 on a reject or failed check, 2 on usage or I/O errors.
Human-readable diagnostics go to standard error; set CLF_COLOR=0 to turn
off ANSI colour there.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .checker import LinearityState, check_signature, check_trace, ctx_equiv
from .engine import EngineError, Scheduler, System, make_state, run
from .fuzz import CampaignConfig, corpus_path, cmd_safety_fuzz, load_layers
from .generative import GrammarError, Sampler, generate_state, validate_state
from .hsubst import HSubstError
from .metacheck import check_meta_signature
from .parser import ParseError, parse_context, parse_meta_signature, parse_program, parse_term, parse_trace
from .printer import show
from .syntax import LIN, PER, Arg, Atom, Decl, Root, Signature, Var
from .traces import dag_sexp, trace_equal

SCHEMA_VERSION = 1

OK, REJECT, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _color(code: str, text: str) -> str:
    if os.environ.get("CLF_COLOR", "1") == "0" or not sys.stderr.isatty():
        return text
    return f"\x1b[{code}m{text}\x1b[0m"


def _diag(file: str, where: str, message: str) -> None:
    print(f"{file}: {_color('1;31', 'error')} in {where}: {message}", file=sys.stderr)


def _emit(command: str, payload: dict) -> None:
    doc = {"command": command, "version": SCHEMA_VERSION, **payload}
    print(json.dumps(doc, sort_keys=True, indent=2))


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _load(paths) -> Signature:
    sig = Signature()
    for p in paths:
        try:
            sig = parse_program(_read(p), sig).signature
        except ParseError as e:
            raise UsageError(f"{p}: {e}") from None
    return sig


def _rules_of(paths, base: Signature) -> tuple[Signature, list]:
    """Extend `base` with `paths`; the monadic constants they declare are the rules."""
    for p in paths:
        _read(p)
    try:
        sig, layers = load_layers(paths, base)
    except ParseError as e:
        raise UsageError(str(e)) from None
    return sig, [n for layer in layers for n in layer]


def _default_sig_paths() -> list:
    return [corpus_path("stlc.clf"), corpus_path("step.clf"), corpus_path("gen.clf")]


def _ctx_json(ctx) -> list:
    return [show(d) for d in ctx]


# ---------------------------------------------------------------- check


def cmd_check(args) -> int:
    """Check the files cumulatively: each sees the declarations of the ones before."""
    results = []
    sig = Signature()
    owner: dict = {}
    queries = []
    failed = False
    for path in args.files:
        try:
            prog = parse_program(_read(path), sig)
        except ParseError as e:
            where = f"line {e.line}" if e.line else "parse"
            results.append({"file": str(path), "constant": None, "verdict": "reject",
                            "diagnostics": [{"location": where, "message": e.msg}]})
            _diag(str(path), where, e.msg)
            failed = True
            break
        for name, _ in prog.signature.entries[len(sig):]:
            owner[name] = str(path)
        queries += [(str(path), q) for q in prog.queries]
        sig = prog.signature
    report = check_signature(sig)
    by_name: dict = {}
    for d in report.diagnostics:
        by_name.setdefault(d.location, []).append(d.to_json())
    for name, path in owner.items():
        diags = by_name.get(name, [])
        results.append({"file": path, "constant": name,
                        "verdict": "reject" if diags else "accept", "diagnostics": diags})
        for d in diags:
            _diag(path, name, d["message"])
    failed |= not report.ok
    for path, q in queries:
        diags = _check_query(sig, q)
        where = f"@trace line {q.line}"
        results.append({"file": path, "constant": where,
                        "verdict": "reject" if diags else "accept", "diagnostics": diags})
        for d in diags:
            _diag(path, where, d["message"])
        failed |= bool(diags)
    _emit("check", {"verdict": "reject" if failed else "accept", "results": results})
    return REJECT if failed else OK


def _check_query(sig: Signature, q) -> list:
    try:
        ctx, report = check_trace(sig, LinearityState(tuple(q.pre)), q.trace)
    except (EngineError, HSubstError) as e:
        return [{"location": "trace", "message": str(e)}]
    if not report.ok:
        return [d.to_json() for d in report.diagnostics]
    if q.post is not None and not ctx_equiv(ctx, q.post):
        return [{"location": "post", "message": f"trace produces {show(ctx)}, not {show(q.post)}"}]
    return []


# ---------------------------------------------------------------- check-meta


def cmd_check_meta(args) -> int:
    sig = _load(args.clf_sig or _default_sig_paths())
    path = str(args.file)
    try:
        msig = parse_meta_signature(_read(args.file), sig)
    except ParseError as e:
        where = f"line {e.line}" if e.line else "parse"
        _diag(path, where, e.msg)
        _emit("check-meta", {"verdict": "reject", "assumptions": [], "results": [
            {"file": path, "constant": None, "verdict": "reject",
             "diagnostics": [{"location": where, "message": e.msg}]}]})
        return REJECT
    report = check_meta_signature(msig, sig)
    by_name: dict = {}
    for d in report.diagnostics:
        by_name.setdefault(d.location, []).append(d.to_json())
    results = []
    for e in msig.entries:
        name = e.name if hasattr(e, "name") else e[0]
        diags = by_name.get(name, [])
        results.append({"file": path, "constant": name,
                        "verdict": "reject" if diags else "accept", "diagnostics": diags})
        for d in diags:
            _diag(path, name, d["message"])
    _emit("check-meta", {"verdict": report.verdict, "assumptions": list(report.assumptions),
                         "results": results})
    return OK if report.ok else REJECT


# ---------------------------------------------------------------- run


def _term_state(sig: Signature, text: str) -> tuple:
    try:
        e = parse_term(text, sig, expected=Atom("exp"))
    except ParseError as err:
        raise UsageError(f"--term: {err}") from None
    return (Decl(PER, "d", Atom("dest")),
            Decl(LIN, "x", Atom("eval", (Arg(PER, e), Arg(PER, Root(Var("d"), ()))))))


def _state_file(sig: Signature, path) -> tuple:
    try:
        return tuple(parse_context(_read(path), sig))
    except ParseError as e:
        raise UsageError(f"{path}: {e}") from None


def cmd_run(args) -> int:
    sig, rules = _rules_of(args.sig, Signature())
    if args.rules:
        rules = [r.strip() for r in args.rules.split(",") if r.strip()]
    if (args.state is None) == (args.term is None):
        raise UsageError("give exactly one of --state and --term")
    pre = _state_file(sig, args.state) if args.state else _term_state(sig, args.term)
    try:
        system = System(sig, rules)
        res = run(make_state(pre), system, Scheduler(args.seed), args.max_steps)
    except EngineError as e:
        raise UsageError(str(e)) from None
    if args.emit_trace:
        text = f"@trace {show(pre)}\n  {show(res.trace)}\n  {show(res.state.facts)}.\n"
        try:
            Path(args.emit_trace).write_text(text)
        except OSError as e:
            raise UsageError(f"cannot write {args.emit_trace}: {e.strerror}") from None
    done = res.reason == "maximal"
    _emit("run", {"verdict": "ok" if done else res.reason, "reason": res.reason,
                  "steps": res.steps, "seed": args.seed,
                  "state": _ctx_json(res.state.facts), "trace": show(res.trace)})
    return OK if done else REJECT


# ---------------------------------------------------------------- gen and validate


def _grammar(args):
    base = _load(args.sig) if args.sig else _load(_default_sig_paths()[:2])
    sig, rules = _rules_of(args.grammar, base)
    return sig, System(sig, rules)


def _seed_ctx(sig: Signature, args) -> tuple:
    if args.start:
        try:
            return tuple(parse_context(args.start, sig))
        except ParseError as e:
            raise UsageError(f"--start: {e}") from None
    if args.type is None:
        raise UsageError("give --type or --start")
    try:
        ty = parse_term(args.type, sig, expected=Atom("tp"))
    except ParseError as e:
        raise UsageError(f"--type: {e}") from None
    return (Decl(PER, "d", Atom("dest")),
            Decl(LIN, "g", Atom("gen", (Arg(PER, ty), Arg(PER, Root(Var("d"), ()))))))


def cmd_gen(args) -> int:
    sig, system = _grammar(args)
    seed = _seed_ctx(sig, args)
    try:
        res = generate_state(system, seed, Scheduler(args.seed), args.max_steps,
                             sampler=Sampler(max_size=args.max_size))
    except (GrammarError, EngineError) as e:
        raise UsageError(str(e)) from None
    ok = res.maximal
    _emit("gen", {"verdict": "ok" if ok else res.reason, "seed": args.seed,
                  "state": _ctx_json(res.state.facts), "trace": show(res.trace),
                  "stats": {"steps": len(res.trace.steps), "facts": len(res.state.facts)}})
    return OK if ok else REJECT


def cmd_validate(args) -> int:
    sig, system = _grammar(args)
    seed = _seed_ctx(sig, args)
    state = _state_file(sig, args.state)
    try:
        res = validate_state(make_state(state), system, seed, args.budget)
    except (GrammarError, EngineError) as e:
        raise UsageError(str(e)) from None
    out = {"verdict": "accept" if res.ok else "reject", "reason": res.reason,
           "stats": {"nodes": res.nodes}}
    if res.trace is not None:
        out["trace"] = show(res.trace)
    if res.message:
        out["message"] = res.message
        _diag(str(args.state), "state", res.message)
    _emit("validate", out)
    return OK if res.ok else REJECT


# ---------------------------------------------------------------- trace-eq


def cmd_trace_eq(args) -> int:
    sig = _load(args.sig or _default_sig_paths())
    traces = []
    for p in (args.a, args.b):
        try:
            traces.append(parse_trace(_read(p), sig))
        except ParseError as e:
            raise UsageError(f"{p}: {e}") from None
    equal = trace_equal(*traces)
    out = {"equal": equal}
    if args.explain:
        out["dags"] = [dag_sexp(t) for t in traces]
    _emit("trace-eq", out)
    return OK if equal else REJECT


# ---------------------------------------------------------------- safety-fuzz


def cmd_fuzz(args) -> int:
    try:
        cfg = CampaignConfig(seed_base=args.seed, runs=args.runs, max_expr_size=args.max_size,
                             max_steps=args.max_steps, grammar_path=args.grammar,
                             step_sig_path=args.step_sig, adequacy_seeds=args.adequacy_seeds)
    except ValueError as e:
        raise UsageError(str(e)) from None
    for p in cfg.paths():
        _read(p)
    report = cmd_safety_fuzz(cfg)
    _emit("safety-fuzz", {"config": cfg.to_json(), "report": report.to_json()})
    return OK if report.ok else REJECT


# ---------------------------------------------------------------- driver


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clf", description="Check, run and test CLF signatures.")
    sub = ap.add_subparsers(dest="verb", required=True, metavar="VERB")

    p = sub.add_parser("check", help="check signatures and @trace directives")
    p.add_argument("files", nargs="+", help="files, checked cumulatively in order")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("check-meta", help="check a meta-level signature")
    p.add_argument("file")
    p.add_argument("--clf-sig", nargs="+", help="object-level signature files (default: bundled corpus)")
    p.set_defaults(fn=cmd_check_meta)

    p = sub.add_parser("run", help="rewrite a state until no rule applies")
    p.add_argument("--sig", nargs="+", required=True, help="signature files; their monadic constants fire")
    p.add_argument("--rules", help="comma-separated rule names to use instead")
    p.add_argument("--state", help="file holding a bracketed context")
    p.add_argument("--term", help="expression to evaluate, started as eval TERM d")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--emit-trace", metavar="PATH", help="write the trace as a checkable @trace directive")
    p.set_defaults(fn=cmd_run)

    for verb, fn, helptext in (("gen", cmd_gen, "generate a state from a grammar"),
                               ("validate", cmd_validate, "find a generation trace for a state")):
        p = sub.add_parser(verb, help=helptext)
        p.add_argument("--grammar", nargs="+", required=True, help="grammar files; their monadic constants are the rules")
        p.add_argument("--sig", nargs="+", help="files the grammar builds on (default: bundled stlc.clf and step.clf)")
        p.add_argument("--type", help="object type T, seeding [!d : dest, g : gen T d]")
        p.add_argument("--start", help="explicit seed context instead of --type")
        if verb == "gen":
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--max-steps", type=int, default=200)
            p.add_argument("--max-size", type=int, default=8, help="largest sampled term")
        else:
            p.add_argument("--state", required=True, help="file holding a bracketed context")
            p.add_argument("--budget", type=int, default=20000, help="search node budget")
        p.set_defaults(fn=fn)

    p = sub.add_parser("trace-eq", help="decide trace equality up to independent reordering")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--sig", nargs="+", help="signature files (default: bundled corpus)")
    p.add_argument("--explain", action="store_true", help="include both dependence DAGs")
    p.set_defaults(fn=cmd_trace_eq)

    p = sub.add_parser("safety-fuzz", help="test preservation, progress and adequacy on random states")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--max-size", type=int, default=8)
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--adequacy-seeds", type=int, default=2)
    p.add_argument("--grammar", help="grammar file (default: bundled gen.clf)")
    p.add_argument("--step-sig", help="step signature (default: bundled step.clf)")
    p.set_defaults(fn=cmd_fuzz)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:  # argparse reports usage errors (and --help) this way
        return e.code if isinstance(e.code, int) else USAGE
    try:
        return args.fn(args)
    except UsageError as e:
        ap.print_usage(sys.stderr)
        print(f"clf {args.verb}: {_color('1;31', 'error')}: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
