"""Check the preservation and progress proofs, then break one and watch it fail."""

from clfkit.fuzz import CORPUS, corpus_path, load_layers
from clfkit.metacheck import check_meta_signature
from clfkit.parser import parse_meta_signature

sig, _ = load_layers([corpus_path(f) for f in CORPUS])
text = corpus_path("safety.mclf").read_text()

report = check_meta_signature(parse_meta_signature(text, sig), sig)
print("safety proofs:", report.verdict)
for a in report.assumptions:
    print("  assumed:", a)

# the value case must rebuild the state with gen/ret, not gen/eval
broken = text.replace("{X1; let {y : ret e d0} = gen/ret e d0 t0 ^g0 H Hv}",
                      "{X1; let {y : ret e d0} = gen/eval e d0 t0 ^g0 H Hv}")
report = check_meta_signature(parse_meta_signature(broken, sig), sig)
print("broken proof:", report.verdict)
for d in report.diagnostics:
    print(f"  {d.location}: {d.message}")
