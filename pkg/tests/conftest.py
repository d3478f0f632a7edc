import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from strainmap.config import RunConfig
from strainmap.model import ColorScale
from strainmap.phantom import PhantomScene, rainbow_colormap, render

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cmap():
    return rainbow_colormap()


@pytest.fixture(scope="session")
def scale(cmap):
    return ColorScale(cmap.astype(np.float64))


def small_scene(**kw) -> PhantomScene:
    base = dict(width=160, height=140, standoff_thickness=24, bar_margin=24)
    base.update(kw)
    return PhantomScene(**base)


def config_for(truth, **kw) -> RunConfig:
    return RunConfig(colorbar=truth.colorbar_roi, **kw)


@pytest.fixture(scope="session")
def homogeneous():
    frame, truth = render(small_scene())
    return frame, truth


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
