import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wedgelayer.line_method import march  # noqa: E402
from wedgelayer.scenario import Scenario  # noqa: E402

PERTURBED = dict(a1_coeffs=(0.1,), v1_coeffs=(0.05,))
M_SET = (0.2, 0.5, 1.0, 2.0)


@functools.lru_cache(maxsize=None)
def marched(variant="planar", m=1.0, perturbed=False, **kw):
    """Cached march so several test modules can share one solve."""
    extra = dict(PERTURBED) if perturbed else {}
    extra.update(kw)
    return march(Scenario(variant=variant, m=m, **extra))


@pytest.fixture(scope="session")
def field_m1():
    return marched("planar", 1.0)


@pytest.fixture(scope="session")
def field_pert_half():
    return marched("planar", 0.5, True)
