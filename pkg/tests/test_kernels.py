import math
import os
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from porcti import _kernels_py, kernels

compiled = pytest.importorskip("porcti._kernels", reason="compiled kernels not built")

probs = st.floats(0.0, 1.0)
vectors = st.integers(0, 16).flatmap(
    lambda k: st.tuples(
        probs,
        st.lists(st.integers(0, 1), min_size=k, max_size=k),
        st.lists(probs, min_size=k, max_size=k),
        st.lists(probs, min_size=k, max_size=k),
    )
)


@settings(max_examples=500)
@given(vectors)
def test_posterior_backends_agree(v):
    a = _kernels_py.posterior(*v)
    b = compiled.posterior(*v)
    assert (math.isnan(a) and math.isnan(b)) or a == b


@settings(max_examples=300)
@given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=30), st.floats(0.0, 1.0, exclude_max=True))
def test_weighted_pick_backends_agree(weights, u):
    assert _kernels_py.weighted_pick(weights, u) == compiled.weighted_pick(weights, u)


@pytest.mark.parametrize("mod", [_kernels_py, compiled], ids=["python", "cython"])
def test_degenerate_and_certain_cases(mod):
    assert math.isnan(mod.posterior(0.5, [1], [0.0], [0.0]))
    assert mod.posterior(0.5, [1], [1.0], [0.0]) == 1.0
    assert mod.posterior(0.5, [1], [0.0], [1.0]) == 0.0
    assert mod.posterior(0.0, [], [], []) == 0.0


@pytest.mark.parametrize("mod", [_kernels_py, compiled], ids=["python", "cython"])
def test_weighted_pick_edges(mod):
    assert mod.weighted_pick([75.0, 25.0], 0.0) == 0
    assert mod.weighted_pick([75.0, 25.0], 0.7499) == 0
    assert mod.weighted_pick([75.0, 25.0], 0.75) == 1
    assert mod.weighted_pick([75.0, 25.0], 0.9999999) == 1


def test_compiled_backend_selected_by_default():
    assert kernels.BACKEND == "cython"


def test_environment_forces_fallback():
    env = dict(os.environ, PORCTI_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from porcti import kernels; print(kernels.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "python"
