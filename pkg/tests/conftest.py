from __future__ import annotations

from pathlib import Path

import pytest

from rmmcheck import parse_program

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"

CORPUS_NAMES = [
    "mp", "mp_fenced", "dekker_nofence", "dekker_fenced",
    "lamport_nofence", "lockfree_stack", "clh_lock",
]

# exploration bounds per corpus program: large enough to contain a violation
# for the non-robust entries and to cover full runs where exhaustion is cheap
ORACLE_BOUNDS = {
    "mp": (2, 14),
    "mp_fenced": (3, 20),
    "dekker_nofence": (2, 14),
    "dekker_fenced": (2, 14),
    "lamport_nofence": (2, 14),
    "lockfree_stack": (2, 14),
    "clh_lock": (2, 14),
}


def corpus_path(name: str) -> Path:
    return CORPUS / f"{name}.prog"


def load(name: str):
    return parse_program(corpus_path(name).read_text())


@pytest.fixture(scope="session")
def corpus():
    return {name: load(name) for name in CORPUS_NAMES}


@pytest.fixture(scope="session")
def mp(corpus):
    return corpus["mp"]


@pytest.fixture(scope="session")
def mp_fenced(corpus):
    return corpus["mp_fenced"]
