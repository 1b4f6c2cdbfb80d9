import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chainforge.dsl import parse_model, parse_properties, parse_state_set

BENCHES = Path(__file__).parent.parent / "benches"

CRUISE_INPUTS = ("gas", "brake", "button", "acc", "dec")

BROKEN_CHAIN_PROPS = """
property p1 { assume mode == OFF && !enable && button; assert next(enable); }
property p2 { assume mode == ON && brake; assert next(mode) == DIS; }
"""


@pytest.fixture(scope="session")
def cruise_model():
    text = (BENCHES / "cruise1" / "model.rsys").read_text()
    model, diags = parse_model(text, filename="model.rsys")
    assert model is not None, [str(d) for d in diags]
    return model


@pytest.fixture(scope="session")
def cruise_props(cruise_model):
    text = (BENCHES / "cruise1" / "props.props").read_text()
    props, diags = parse_properties(text, cruise_model, filename="props.props")
    assert not any(d.severity == "error" for d in diags)
    return props


@pytest.fixture(scope="session")
def cruise_final(cruise_model):
    expr, diags = parse_state_set("mode == OFF && speed == 0 && !enable", cruise_model)
    assert expr is not None
    return expr


@pytest.fixture(scope="session")
def broken_chain_props(cruise_model):
    props, diags = parse_properties(BROKEN_CHAIN_PROPS, cruise_model)
    assert not any(d.severity == "error" for d in diags)
    return props


def cruise_input(name):
    """One-hot cruise input vector."""
    return {k: (k == name) for k in CRUISE_INPUTS}


@pytest.fixture(scope="session")
def iv():
    return cruise_input
