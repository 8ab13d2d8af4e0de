"""Generate well-typed states from the grammar, then recover their derivations."""

from clfkit.engine import Scheduler, System
from clfkit.fuzz import CORPUS, corpus_path, load_layers
from clfkit.generative import check_progress, classify_symbols, generate_state, validate_state
from clfkit.parser import parse_context
from clfkit.printer import show

sig, layers = load_layers([corpus_path(f) for f in CORPUS])
step, gen = System(sig, layers[1]), System(sig, layers[2])
print("grammar:", classify_symbols(gen).to_json())

seed = parse_context("[!d : dest, g : gen (arr (arr o o) (arr o o)) d]", sig)
for k in range(3):
    g = generate_state(gen, seed, Scheduler(k))
    v = validate_state(g.state, gen, seed)
    ok, why = check_progress(g.state, step)
    print(f"seed {k}: {show(g.state.facts)}")
    print(f"  validates: {v.ok} ({len(v.trace.steps)} steps, {v.nodes} nodes), progress: {why}")

bad = parse_context("[!d : dest, a : eval (lam (\\x. x)) d, b : eval (lam (\\y. y)) d]", sig)
print("two evaluations for one destination:", validate_state(bad, gen, seed).message)
