"""A short safety campaign, then the same campaign against a sabotaged step rule."""

import json
import tempfile
from pathlib import Path

from clfkit.fuzz import CampaignConfig, cmd_safety_fuzz, corpus_path


def summary(rep):
    j = rep.to_json()
    return {k: (len(v) if isinstance(v, list) else v) for k, v in j.items() if k != "wallTime"}


print("intact:", json.dumps(summary(cmd_safety_fuzz(CampaignConfig(runs=100)))))

with tempfile.TemporaryDirectory() as d:
    p = Path(d) / "step.clf"
    # step/beta no longer consumes its fapp frame
    p.write_text(corpus_path("step.clf").read_text().replace("ret e2 d2 -o fapp d1 d2 d -o", "ret e2 d2 -o"))
    rep = cmd_safety_fuzz(CampaignConfig(runs=100, step_sig_path=str(p)))
    print("sabotaged:", json.dumps(summary(rep)))
    if rep.progress_failures:
        print("smallest stuck state:", min((f.state for f in rep.progress_failures), key=len))
