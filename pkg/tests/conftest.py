import sys

import numpy as np
import pytest

from vesselpath import synth
from vesselpath.annd import distance_matrix, path_from_voyage


@pytest.fixture(scope="session")
def labeled():
    return synth.generate(synth.default_config(0))


@pytest.fixture(scope="session")
def truth(labeled):
    return {lv.voyage.id: lv.class_label for lv in labeled}


@pytest.fixture(scope="session")
def proj():
    return synth.default_projection()


@pytest.fixture(scope="session")
def paths(labeled, proj):
    return [path_from_voyage(lv.voyage, proj) for lv in labeled]


@pytest.fixture(scope="session")
def dm(paths):
    return distance_matrix(paths)


@pytest.fixture(scope="session")
def class_pair_annd(dm, truth):
    """Mean symmetric ANND between (and within) classes, diagonal pairs excluded."""
    labels = np.array([truth[v] for v in dm.ids])
    out = {}
    for a in synth.CLASS_ORDER:
        for b in synth.CLASS_ORDER:
            block = dm.values[np.ix_(labels == a, labels == b)]
            if a == b:
                n = block.shape[0]
                vals = block[~np.eye(n, dtype=bool)]
            else:
                vals = block.ravel()
            out[a, b] = float(vals.mean()) if vals.size else 0.0
    return out



def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
