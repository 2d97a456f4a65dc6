import functools

import numpy as np
import pytest

from cutdg import dg
from cutdg.cutcomplex import build_complex
from cutdg.geometry import get_case
from cutdg.mesh import build_box_mesh


@functools.lru_cache(maxsize=None)
def case_complex(name: str, level: int, halfwidth: float | None = None):
    """Cut complex of a builtin case on its level-``level`` mesh (cached)."""
    tc = get_case(name)
    a = tc.bounding_halfwidth if halfwidth is None else halfwidth
    return build_complex(build_box_mesh((0.0, 0.0, 0.0), a, 5 * 2 ** level), tc.level_set)


@functools.lru_cache(maxsize=None)
def case_system(name: str, level: int, beta_e=50.0, beta_f=50.0, gamma=0.01, mean_factor=0.5):
    return dg.assemble_system(case_complex(name, level), get_case(name), beta_e, beta_f, gamma,
                              mean_factor)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
