import numpy as np
import pytest
from hypothesis import strategies as st

from osrb.prob import Alphabet, Channel, JointPmf, Pmf


def _weight(zeros):
    # exact zeros are interesting; subnormal weights only exercise float underflow
    pos = st.floats(1e-3, 1.0)
    return st.one_of(st.just(0.0), pos) if zeros else pos


def _normalize(weights):
    w = np.asarray(weights, dtype=float)
    return w / w.sum()


@st.composite
def joint_pmfs(draw, max_axes=3, max_size=3, names=None, zeros=True):
    k = draw(st.integers(1, max_axes)) if names is None else len(names)
    sizes = [draw(st.integers(1, max_size)) for _ in range(k)]
    cells = int(np.prod(sizes))
    w = draw(st.lists(_weight(zeros), min_size=cells, max_size=cells).filter(lambda v: sum(v) > 1e-3))
    names = names or [f"A{i}" for i in range(k)]
    return JointPmf([Alphabet(n, s) for n, s in zip(names, sizes)], _normalize(w).reshape(sizes))


@st.composite
def pmfs(draw, size=None, name="X", max_size=4, zeros=True):
    k = size or draw(st.integers(1, max_size))
    w = draw(st.lists(_weight(zeros), min_size=k, max_size=k).filter(lambda v: sum(v) > 1e-3))
    return Pmf(_normalize(w), name)


@st.composite
def channels(draw, k=None, out=None, max_size=3):
    k = k or draw(st.integers(1, max_size))
    out = out or draw(st.integers(1, max_size))
    rows = []
    for _ in range(k):
        w = draw(st.lists(_weight(True), min_size=out, max_size=out).filter(lambda v: sum(v) > 1e-3))
        rows.append(_normalize(w))
    return Channel(np.array(rows))


@pytest.fixture
def bsc_joint():
    """Uniform input through BSC(0.25), axes (X, Y)."""
    return Channel.bsc(0.25).joint(Pmf.uniform(2))


@st.composite
def binning_instances(draw, max_parts=2, max_size=3, max_bins=3, max_z=2, zeros=True):
    """(source over X1.., Z; spec) on the small grid the exact oracles can enumerate."""
    from osrb.binning import BinningSpec

    k = draw(st.integers(1, max_parts))
    names = [f"X{i + 1}" for i in range(k)]
    sizes = [draw(st.integers(1, max_size)) for _ in range(k)]
    zsize = draw(st.integers(1, max_z))
    cells = int(np.prod(sizes)) * zsize
    w = draw(st.lists(_weight(zeros), min_size=cells, max_size=cells).filter(lambda v: sum(v) > 1e-3))
    source = JointPmf([Alphabet(n, s) for n, s in zip(names + ["Z"], sizes + [zsize])], _normalize(w).reshape(sizes + [zsize]))
    spec = BinningSpec([(n, s, draw(st.integers(1, max_bins))) for n, s in zip(names, sizes)])
    return source, spec


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
