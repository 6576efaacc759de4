import numpy as np
import pytest

from twmlab import algebra as A
from twmlab import frame as F
from twmlab.grid import Grid


@pytest.fixture(scope="session")
def su2():
    return A.builtin_algebra("su2")


@pytest.fixture(scope="session")
def su2xsu2():
    return A.builtin_algebra("su2xsu2")


@pytest.fixture(scope="session")
def abelian3():
    return A.builtin_algebra("abelian(3)")


@pytest.fixture(scope="session")
def pair_vectors():
    """Unit-normalized commuting pair in su2 x su2 (third axis of each factor)."""
    pv = np.zeros(6)
    qv = np.zeros(6)
    pv[2] = qv[5] = 2.0 ** -0.5
    return pv, qv


@pytest.fixture(scope="session")
def su2_geom(su2):
    g = A.cartan_killing(su2)
    p = A.natural_p(su2, g, np.array([0.0, 0.0, 1.0]))
    return A.build_geometry(su2, g, p)


@pytest.fixture(scope="session")
def pair_geom(su2xsu2, pair_vectors):
    g = A.cartan_killing(su2xsu2)
    p = A.commuting_pair_p(su2xsu2, g, *pair_vectors)
    return A.build_geometry(su2xsu2, g, p)


@pytest.fixture
def circle64():
    return Grid("circle", 64, 0.0, 2.0 * np.pi)


@pytest.fixture
def circle128():
    return Grid("circle", 128, 0.0, 2.0 * np.pi)


def standard_su2_data(alg, coupling, grid):
    """Single-direction zero-mean E profile plus mode B profile; the workhorse
    constrained data set of the frame tests (any algebra dimension)."""
    u = 0.3 + np.sin(1.7 * np.arange(alg.dim) + 0.4)
    u = u / np.linalg.norm(u)
    e_terms = [F.ProfileTerm("mode", 0.12, u, k=1, phase=0.3),
               F.ProfileTerm("mode", 0.05, u, k=2, phase=1.1)]
    b_terms = [F.ProfileTerm("mode", 0.08, np.eye(alg.dim)[0], k=1),
               F.ProfileTerm("mode", 0.05, np.eye(alg.dim)[1 % alg.dim], k=2, phase=0.7)]
    h0 = 0.06 * np.ones(alg.dim)
    h0[0] = 0.05
    state = F.make_initial_data(e_terms, b_terms, h0, alg, coupling, grid)
    return state, e_terms, b_terms, h0
