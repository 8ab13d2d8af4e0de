import pytest

from clfkit.engine import make_state
from clfkit.fuzz import (
    CampaignConfig, CampaignReport, Failure, Safety, adequacy_failure, cmd_safety_fuzz, corpus_path,
    shrink_term,
)
from clfkit.parser import parse_context
from clfkit.stlc import Ap, Fn, V, term_size


@pytest.mark.parametrize("field", ["runs", "max_expr_size", "max_steps", "adequacy_seeds", "program_size"])
def test_config_rejects_non_positive_values(field):
    with pytest.raises(ValueError):
        CampaignConfig(**{field: 0})


def test_small_campaign_is_clean():
    rep = cmd_safety_fuzz(CampaignConfig(seed_base=100, runs=30))
    assert rep.ok and rep.total == 30
    assert rep.generated + rep.incomplete == 30
    assert rep.final_states + rep.stepped_states == rep.generated


def test_report_json_and_merge():
    a = CampaignReport(total=2, progress_failures=[Failure(1, "[]")])
    b = CampaignReport(total=3, final_states=1)
    m = a.merge(b)
    assert m.total == 5 and len(m.progress_failures) == 1 and not m.ok
    j = m.to_json()
    assert j["ok"] is False and j["progressFailures"][0]["seed"] == 1


@pytest.fixture(scope="module")
def sabotaged(tmp_path_factory):
    """step/beta without its fapp premise: frames are never consumed."""
    text = corpus_path("step.clf").read_text()
    old = "ret e2 d2 -o fapp d1 d2 d -o"
    assert text.count(old) == 1
    p = tmp_path_factory.mktemp("sab") / "step.clf"
    p.write_text(text.replace(old, "ret e2 d2 -o"))
    cfg = CampaignConfig(runs=40, step_sig_path=str(p))
    return cfg, cmd_safety_fuzz(cfg)


def test_sabotage_is_detected(sabotaged):
    _, rep = sabotaged
    assert not rep.ok
    assert rep.progress_failures and rep.adequacy_failures


def test_reported_states_are_shrunk_counterexamples(sabotaged):
    cfg, rep = sabotaged
    safety = Safety.from_config(cfg)
    for f in rep.progress_failures:
        state = make_state(parse_context(f.state, safety.sig))
        seed = parse_context("[!d : dest, g : gen o d]", safety.sig)
        assert safety.progress_fails(state, seed)
        # shrinking collapses every frame that is not needed to get stuck
        assert sum(d.type.head == "fapp" for d in state.linear()) <= 1


def test_adequacy_holds_for_a_small_program(step_system):
    assert adequacy_failure(Ap(Fn("x", V("x")), Fn("y", V("y"))), step_system, [0, 1, 2]) is None


def test_shrink_term_reaches_a_local_minimum():
    big = Ap(Ap(Fn("x", V("x")), Fn("y", V("y"))), Fn("z", Ap(V("z"), V("z"))))
    small = shrink_term(big, lambda t: isinstance(t, Ap))
    assert isinstance(small, Ap) and term_size(small) < term_size(big)
