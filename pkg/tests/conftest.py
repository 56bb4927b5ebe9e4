from __future__ import annotations

import numpy as np
import pytest
import torch

from fragflow.app.toy import toy_corpus
from fragflow.chem import parse_smiles

torch.set_num_threads(1)

DRUGLIKE = [
    "CCO",
    "c1ccccc1",
    "CCc1ccccc1",
    "CC(=O)Nc1ccc(O)cc1",
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1CCCC1c1cccnc1",
    "O=C(O)c1ccccc1O",
    "Cc1ccc(S(=O)(=O)N)cc1",
    "COc1ccc2[nH]ccc2c1",
    "C1CCNCC1",
    "FC(F)(F)c1ccc(OCC)cc1",
    "CC(C)Cc1ccc(C(C)C(=O)O)cc1",
    "c1ccc2ccccc2c1",
    "N#Cc1ccc(Br)s1",
]


@pytest.fixture(scope="session")
def small_corpus() -> list[str]:
    return toy_corpus(120, seed=7)


@pytest.fixture(scope="session")
def corpus_1k() -> list[str]:
    return toy_corpus(1000, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def parse_all(smiles):
    return [parse_smiles(s) for s in smiles]


# (criterion, passed, detail) lines collected by the acceptance suite.
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
