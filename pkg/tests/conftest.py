import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from parsefocus.grammar import SymbolInventory, random_init  # noqa: E402
from parsefocus.synthetic import grammar_from_rules  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture(name):
    return os.path.join(FIXTURES, name)


def small_inventory(nt=3, pt=3, v=4):
    return SymbolInventory(nt, pt, [f"w{k}" for k in range(v - 1)] + ["<unk>"])


@pytest.fixture
def toy():
    """S -> A : 1, A -> T T : 1, T -> a : 1."""
    g, _ = grammar_from_rules(["A"], ["T"], {"A": 1.0}, {("A", "T", "T"): 1.0}, {"T": {"a": 1.0}})
    return g


@pytest.fixture
def rgrammar():
    return random_init(small_inventory(), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.line(k))
