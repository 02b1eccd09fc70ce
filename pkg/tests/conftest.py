import numpy as np
import pytest

from nvmagsim.nvmodel import AXIS_LABELS, ResonanceLine, ResonanceSet, SpinSystemParams


def isolated_line_set(center: float, n_at_center: int = 1, spacing: float = 0.0,
                      park: float = 5e8) -> ResonanceSet:
    """24-line set with a controllable foreground group, the rest parked far away.

    With spacing > 0 the foreground is a hyperfine-like multiplet around
    ``center``; parked lines sit ``park`` Hz higher where their tails are
    negligible for any linewidth used in the tests.
    """
    lines = []
    offsets = [(-1, -spacing), (0, 0.0), (1, spacing)] if spacing else [(0, 0.0)]
    fore = offsets * ((n_at_center + len(offsets) - 1) // len(offsets))
    fore = fore[:n_at_center] if spacing == 0 else offsets
    for i, (m_i, off) in enumerate(fore):
        lines.append(ResonanceLine(axis=AXIS_LABELS[i % 4], branch=+1, m_i=m_i,
                                   center=center + off))
    while len(lines) < 24:
        i = len(lines)
        lines.append(
            ResonanceLine(axis=AXIS_LABELS[i % 4], branch=-1, m_i=0,
                          center=center + park + 10e6 * i)
        )
    return ResonanceSet(tuple(sorted(lines, key=lambda ln: ln.center)))


@pytest.fixture
def narrow_spin():
    """Spin params with a line much narrower than the hyperfine splitting."""
    return SpinSystemParams(hwhm=40e3, contrast=0.015, p_sat=10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
