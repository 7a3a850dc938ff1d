import pytest

from helpers import fig1_chain, psi_formula

from pctlfg.modelcheck import ModelChecker


@pytest.fixture
def fig1():
    return fig1_chain()


@pytest.fixture
def psi():
    return psi_formula()


@pytest.fixture
def fig1_checker(fig1):
    return ModelChecker(fig1)
