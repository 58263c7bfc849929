import copy

import pytest

from contaski.config import load_json, validate_scenario

C = ["C1", "C2", "C3", "C4"]


@pytest.fixture
def fig2_raw():
    return copy.deepcopy(load_json("fig2.json"))


@pytest.fixture
def fig3_raw():
    return copy.deepcopy(load_json("fig3.json"))


@pytest.fixture
def fig2(fig2_raw):
    return validate_scenario(fig2_raw)


@pytest.fixture
def fig3(fig3_raw):
    return validate_scenario(fig3_raw)
