import numpy as np
import pytest

from geoprog import ModelConfig, Vocabulary, build_registry, init_model, load_registry, preprocess

# One line per acceptance criterion, filled by tests/test_acceptance.py and
# echoed after the run (capture would otherwise swallow them on success).
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

# Small instance used across decoder tests: two operators, two constants,
# tight limits.  Operand alphabet at the widest step is A, B, #0, eos_operand.
TINY_DOC = {
    "types": ["t0"],
    "operators": [
        {"surface": "U", "types": ["t0"], "min_args": 1, "max_args": 2},
        {"surface": "W", "types": ["t0"], "min_args": 1, "max_args": 2},
    ],
    "constants": [
        {"surface": "A", "value": 1.0, "types": ["t0"]},
        {"surface": "B", "value": 2.0, "types": ["t0"]},
    ],
    "limits": {"max_op": 2, "max_oe": 2},
}


@pytest.fixture(scope="session")
def registry():
    return load_registry()


@pytest.fixture()
def tiny_registry():
    return build_registry(TINY_DOC)


def make_tiny_state(tiny_registry, seed=0, hidden=10):
    problem = tiny_problem()
    vocab = Vocabulary.build([problem])
    cfg = ModelConfig(hidden=hidden, layers=1, patch_dim=4)
    return init_model(cfg, tiny_registry, vocab, seed=seed)


def tiny_problem():
    # No digits and no element phrases on purpose: the symbol table then has
    # no dynamic entries, so decoding draws on constants and caches only.
    return preprocess("combine things carefully", patches=np.zeros((2, 4)))


@pytest.fixture()
def tiny_state(tiny_registry):
    return make_tiny_state(tiny_registry)
