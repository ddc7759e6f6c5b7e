import numpy as np
import pytest

from twomass.plant import FrictionModel, OscillatorParams
from twomass.presets import NOMINAL_PLANT, REFERENCE_TRAJECTORY


@pytest.fixture
def rig():
    """Identified rig constants, frictionless."""
    return NOMINAL_PLANT


@pytest.fixture
def rig_with_friction():
    return OscillatorParams(
        I1=NOMINAL_PLANT.I1,
        I2=NOMINAL_PLANT.I2,
        k=NOMINAL_PLANT.k,
        d=NOMINAL_PLANT.d,
        friction=FrictionModel(0.15),
    )


@pytest.fixture
def reference():
    return REFERENCE_TRAJECTORY


def assert_close(actual, expected, rel=1e-12, floor=1.0):
    """|actual - expected| <= rel * max(floor, |expected|), elementwise."""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    bound = rel * np.maximum(floor, np.abs(expected))
    assert np.all(np.abs(actual - expected) <= bound), (
        f"max deviation {np.max(np.abs(actual - expected))} exceeds {np.max(bound)}"
    )
