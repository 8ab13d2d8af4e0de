"""Different schedules give different step orders but the same trace."""

from clfkit.engine import Scheduler, System, make_state, run
from clfkit.fuzz import CORPUS, corpus_path, eval_context, load_layers
from clfkit.stlc import Ap, Fn, V
from clfkit.traces import dag_sexp, trace_equal

sig, layers = load_layers([corpus_path(f) for f in CORPUS])
step = System(sig, layers[1])

ident = Fn("x", V("x"))
term = Ap(Ap(ident, ident), Ap(ident, ident))  # two independent redexes
runs = [run(make_state(eval_context(term)), step, Scheduler(seed)) for seed in range(6)]

orders = {tuple(st.const for st in r.trace.steps) for r in runs}
print(f"{len(orders)} distinct step orders over {len(runs)} seeds")
for o in sorted(orders)[:3]:
    print("  ", " ".join(o))

first = runs[0].trace
print("all equal to seed 0:", all(trace_equal(first, r.trace) for r in runs))
print("dependence DAG:", dag_sexp(first)[:200], "...")
