import json
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from phaseless.fockspace import enumerate_sector, ground_state
from phaseless.hamiltonians import CUBR2_CHAIN, build_hubbard_chain, read_fcidump

DATA = Path(__file__).parent / "data"


@lru_cache(maxsize=None)
def molecular_references() -> dict:
    return json.loads((DATA / "molecular_references.json").read_text())


@lru_cache(maxsize=None)
def fcidump(name: str):
    with open(DATA / name) as fh:
        return read_fcidump(fh)


@lru_cache(maxsize=None)
def chain(L: int = 6):
    return build_hubbard_chain(CUBR2_CHAIN.with_length(L))


@lru_cache(maxsize=None)
def chain_ground_state(L: int = 6):
    ham = chain(L)
    return ground_state(ham, enumerate_sector(L, ham.nup, ham.ndn))


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_orbitals(rng, M, N, complex_=True):
    a = rng.normal(size=(M, N))
    if complex_:
        a = a + 1j * rng.normal(size=(M, N))
    q, _ = np.linalg.qr(a)
    return q
