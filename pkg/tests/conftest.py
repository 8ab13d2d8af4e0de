import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from clfkit.engine import System  # noqa: E402
from clfkit.fuzz import corpus_path, load_layers  # noqa: E402
from clfkit.parser import parse_meta_signature  # noqa: E402

CORPUS = ["stlc.clf", "step.clf", "gen.clf"]


@pytest.fixture(scope="session")
def layers():
    return load_layers([corpus_path(f) for f in CORPUS])


@pytest.fixture(scope="session")
def sig(layers):
    return layers[0]


@pytest.fixture(scope="session")
def step_system(layers):
    return System(layers[0], layers[1][1])


@pytest.fixture(scope="session")
def gen_system(layers):
    return System(layers[0], layers[1][2])


@pytest.fixture(scope="session")
def safety_text():
    return corpus_path("safety.mclf").read_text()


@pytest.fixture(scope="session")
def msig(sig, safety_text):
    return parse_meta_signature(safety_text, sig)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
