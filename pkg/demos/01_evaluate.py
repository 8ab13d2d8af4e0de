"""Evaluate a lambda term with the destination-passing rules and re-check the trace."""

from clfkit.checker import LinearityState, check_trace, ctx_equiv
from clfkit.engine import Scheduler, System, make_state, run
from clfkit.fuzz import CORPUS, corpus_path, eval_context, load_layers
from clfkit.printer import show
from clfkit.stlc import Ap, Fn, V

sig, layers = load_layers([corpus_path(f) for f in CORPUS])
step = System(sig, layers[1])

# (\x. x) ((\y. y) (\z. z)): the argument is itself a redex
term = Ap(Fn("x", V("x")), Ap(Fn("y", V("y")), Fn("z", V("z"))))
pre = eval_context(term)
print("initial state:", show(pre))

res = run(make_state(pre), step, Scheduler(seed=1))
print(f"{res.steps} steps, stopped because the state is {res.reason}")
for st in res.trace.steps:
    print("  ", show(st))
print("final state:", show(res.state.facts))

post, report = check_trace(sig, LinearityState(pre), res.trace)
print("trace re-checks:", report.ok and ctx_equiv(post, res.state.facts))
