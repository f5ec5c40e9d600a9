import pathlib

import pytest

from mmpd.codes import load_alist

CODES_DIR = pathlib.Path(__file__).resolve().parent.parent / "codes"


@pytest.fixture(scope="session")
def hamming():
    return load_alist(CODES_DIR / "hamming_7_4.alist")


@pytest.fixture(scope="session")
def ldpc49():
    return load_alist(CODES_DIR / "ldpc_49_24.alist")


@pytest.fixture(scope="session")
def ldpc121_60():
    return load_alist(CODES_DIR / "ldpc_121_60.alist")


@pytest.fixture(scope="session")
def ldpc121_80():
    return load_alist(CODES_DIR / "ldpc_121_80.alist")


@pytest.fixture(scope="session")
def codes_dir():
    return CODES_DIR
