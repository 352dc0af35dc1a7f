"""The numba and numpy variants of every kernel must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairrl import _accel, kernels
from fairrl.envs.graph import small_world

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def gae_inputs(rng, n):
    seg_end = rng.random(n) < 0.2
    seg_end[-1] = True
    return rng.normal(size=n), rng.normal(size=n), seg_end, rng.normal(size=n) * seg_end


@needs_numba
@given(st.integers(0, 2**32 - 1), st.integers(1, 60))
def test_gae_parity(seed, n):
    rng = np.random.default_rng(seed)
    args = gae_inputs(rng, n)
    a = kernels._gae_nb(*args, 0.97, 0.9)
    b = kernels._gae_np(*args, 0.97, 0.9)
    assert np.array_equal(a, b)


@needs_numba
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_w1_parity(seed, n):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    support = np.cumsum(rng.random(n) + 0.1)
    assert kernels._w1_nb(p, q, support) == pytest.approx(kernels._w1_np(p, q, support), abs=1e-12)


@needs_numba
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 12))
def test_allocation_parity(seed, k, n_units):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(k))
    if rng.random() < 0.3:
        probs = np.full(k, 1.0 / k)  # all ties
    a = kernels._build_allocation_nb(probs, n_units)
    b = kernels._build_allocation_np(probs, n_units)
    assert np.array_equal(a, b) and a.sum() == n_units


@needs_numba
@pytest.mark.parametrize("seed", range(5))
def test_graph_kernels_parity(seed):
    g = small_world(30, 4, 0.2, seed)
    rng = np.random.default_rng(seed)
    infected = rng.random(g.n) < 0.3
    assert np.array_equal(
        kernels._infected_neighbor_counts_nb(g.indptr, g.indices, infected),
        kernels._infected_neighbor_counts_np(g.indptr, g.indices, infected),
    )
    active = rng.random(g.n_edges) < 0.85
    a = kernels._edge_betweenness_nb(g.indptr, g.indices, g.edge_of, active, g.n_edges)
    b = kernels._edge_betweenness_np(g.indptr, g.indices, g.edge_of, active, g.n_edges)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    assert not a[~active].any()


@needs_numba
def test_compiled_and_interpreted_agree():
    rng = np.random.default_rng(0)
    args = gae_inputs(rng, 40)
    assert np.array_equal(kernels._gae_nb(*args, 0.9, 0.8), kernels._gae_nb.py_func(*args, 0.9, 0.8))


def test_gae_monte_carlo_case():
    adv = kernels.gae([1.0, 1.0], [0.0, 0.0], [False, True], [0.0, 0.0], 1.0, 1.0)
    assert np.array_equal(adv, [2.0, 1.0])


def test_allocation_lowest_index_on_ties():
    assert list(kernels.build_allocation(np.full(4, 0.25), 2)) == [1, 1, 0, 0]


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("", "numba" if _accel.HAVE_NUMBA else "numpy")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, FAIRRL_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from fairrl import _accel; print(_accel.backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected
