import pytest

from stpa_workbench.pipeline import load_project


@pytest.fixture(scope="session")
def acc():
    return load_project("@acc")


@pytest.fixture(scope="session")
def acc_mutant():
    return load_project("@acc_guard_mutant")
