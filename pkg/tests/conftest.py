"""Shared fixtures and the acceptance-criteria summary hook."""

import numpy as np
import pytest

from bprp.geometry import Beacon, GeometricElement, Layout, Rect
from bprp.inference import McmcConfig
from bprp.prp_model import LinkParams, PrpModel, Standardization


@pytest.fixture
def fast_config():
    # small but enough to stabilise the adapted scale
    return McmcConfig(draws=400, burn_in=400, chains=2, seed=0)


@pytest.fixture
def small_layout():
    """10 x 6 m room: one stack, one corridor strip, four beacons."""
    return Layout(
        width=10.0,
        length=6.0,
        stacks=(Rect(3.0, 2.5, 4.0, 0.5),),
        corridors=(Rect(0.0, 0.0, 1.0, 6.0),),
        beacons=(
            Beacon(id="a", x=2.0, y=1.0),
            Beacon(id="b", x=8.0, y=1.0),
            Beacon(id="c", x=2.0, y=5.0),
            Beacon(id="d", x=8.0, y=5.0),
        ),
    )


def _link(w0):
    return LinkParams(w0=w0, w=(-0.8, 0.0, 0.0), w_pair=(-0.05, 0.0, 0.0, 0.0, 0.0, 0.0))


@pytest.fixture
def toy_model():
    """Distance-only link on raw meters; reception drops with range."""
    return PrpModel(
        elements={
            GeometricElement.FREE_SPACE: _link(3.0),
            GeometricElement.ONE_STACK: _link(2.0),
            GeometricElement.TWO_STACK: _link(1.0),
            GeometricElement.CORRIDOR: _link(2.5),
        },
        standardization=Standardization(mean=(4.0, 10.0, -15.0), sd=(2.0, 1.0, 1.0)),
        prior_sigma=10.0,
    )


# ---------------------------------------------------------------------------
# acceptance reporting: one visible line per criterion in the summary

_CRITERIA = []


def record_criterion(number: int, description: str, ok: bool, detail: str = ""):
    _CRITERIA.append((number, description, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number, description, ok, detail in sorted(_CRITERIA):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {number:2d} {status}  {description}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
