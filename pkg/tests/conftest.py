import numpy as np
import pytest

from spgc.circuit import RegionGraphSpec
from spgc.graph import DatasetSchema
from spgc.model import build_spgc

TOY = DatasetSchema(n_max=3, m_max=2, n_V=2, n_E=2)


def toy_model(seed=0, scale=None, **spec):
    kw = dict(kind="BT", n_L=1, n_S=3, n_I=3, n_R=1, n_c=3, seed=seed)
    kw.update(spec)
    model = build_spgc(TOY, RegionGraphSpec(**kw), random_state=seed)
    if scale is not None:
        model.circuit.params = [p * scale for p in model.circuit.params]
    return model


@pytest.fixture
def toy():
    return toy_model(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS, key=lambda k: (int(str(k).split("-")[0].rstrip("ab")), str(k))):
        terminalreporter.write_line(mod.RESULTS[key])
