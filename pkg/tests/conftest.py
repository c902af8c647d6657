import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from swnoon.fock import FockVector, ModeLayout

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile("default")

MODE_NAMES = ("SWa", "SWb", "S_H", "S_V", "AS_H", "AS_V")


@st.composite
def layouts(draw, max_modes=3, max_cutoff=3):
    m = draw(st.integers(1, max_modes))
    modes = tuple(draw(st.permutations(MODE_NAMES))[:m])
    return ModeLayout(modes, draw(st.integers(1, max_cutoff)))


@st.composite
def states(draw, layout=None, normalized=True, max_modes=3, max_cutoff=3):
    """Random dense states; amplitudes come from a numpy stream keyed by a drawn seed."""
    layout = layout or draw(layouts(max_modes, max_cutoff))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    amps = rng.normal(size=layout.shape) + 1j * rng.normal(size=layout.shape)
    s = FockVector(layout, amps)
    return s.normalize() if normalized else s


# -- acceptance summary --------------------------------------------------------------

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one ``PASS/FAIL criterion: detail`` line; printed again in the terminal summary."""

    def _report(criterion: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
