import numpy as np
import pytest
from hypothesis import given, strategies as st

from clifmorse._linalg import expm
from clifmorse.centriole_chains import (
    CentrioleChain,
    GeodesicSpec,
    connect_minimal,
    extend_chain,
    membership,
    midpoint,
    reference_geodesic,
    tangent_check,
)
from clifmorse.clifford_core import build_irreducible, direct_sum
from clifmorse.errors import ValidationError
from clifmorse.geodesic_index import spec_from_ks


@pytest.fixture(scope="module")
def chain7():
    return CentrioleChain(build_irreducible(7))


def test_membership_examples(chain7):
    for j in range(1, 8):
        jj = chain7.structure(j)
        assert membership(jj, chain7, j)
        assert membership(-jj, chain7, j)
        if j > 1:
            assert not membership(chain7.structure(j - 1), chain7, j)


def test_membership_range(chain7):
    with pytest.raises(ValidationError):
        membership(np.eye(8), chain7, 0)
    assert not membership(np.eye(8), chain7, 1)


def test_tangent_check_examples(chain7):
    for j in range(1, 7):
        a = np.pi * chain7.structure(j + 1) @ chain7.structure(j)
        # oracle: anticommutes with J_j, commutes with lower ones
        jj = chain7.structure(j)
        assert np.allclose(a @ jj, -jj @ a)
        assert tangent_check(a, chain7, j)
        assert not tangent_check(jj, chain7, j)
    assert tangent_check(np.zeros((8, 8)), chain7, 3)


@pytest.mark.parametrize("level", range(0, 7))
def test_reference_geodesic_is_minimal_and_stays(chain7, level):
    g = reference_geodesic(chain7, level)
    assert abs(g.energy - np.pi**2) < 1e-12
    assert np.allclose(expm(np.pi * g.A), -np.eye(8), atol=1e-8)
    m = midpoint(g)
    assert membership(m, chain7, level + 1)
    if level:
        for t in np.linspace(0, 1, 64):
            assert membership(g(t), chain7, level, tol=1e-8)


def test_midpoint_examples(chain7):
    g = reference_geodesic(chain7, 2)
    assert np.allclose(midpoint(g), chain7.structure(3))
    # spectrum (3, 1): the midpoint diag(-J, J) is still a complex structure,
    # but the minimal geodesic through it is a different geodesic
    g31 = spec_from_ks([3, 1])
    m = midpoint(g31)
    j = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert np.allclose(m, np.block([[-j, np.zeros((2, 2))], [np.zeros((2, 2)), j]]))
    c = CentrioleChain(build_irreducible(3))
    assert membership(m, c, 1)
    short = connect_minimal(np.eye(4), -np.eye(4), c, 0, m)
    assert short.energy < g31.energy
    assert not np.allclose(short.A, g31.A)


def test_connect_minimal_examples(chain7):
    j2, j3 = chain7.structure(2), chain7.structure(3)
    g = connect_minimal(j2, -j2, chain7, 2, j3)
    assert np.allclose(np.abs(np.linalg.eigvals(g.A).imag), 1.0)
    assert abs(g.energy - np.pi**2) < 1e-12
    gneg = connect_minimal(j2, -j2, chain7, 2, -j3)
    assert np.allclose(gneg.A, -g.A)
    c1 = CentrioleChain(build_irreducible(1))
    j = c1.structure(1)
    g0 = connect_minimal(np.eye(2), -np.eye(2), c1, 0, j)
    assert np.allclose(g0.A, j)
    with pytest.raises(ValidationError):
        connect_minimal(j2, j2, chain7, 2, j3)


def test_spec_validation():
    with pytest.raises(ValidationError):
        GeodesicSpec(np.zeros((4, 4)), np.eye(4))  # exp(0) != -I
    j = build_irreducible(3).mats[0]
    with pytest.raises(ValidationError):
        GeodesicSpec(j, np.eye(4), level=1)  # chain missing


def test_spec_round_trip(chain7):
    g = reference_geodesic(chain7, 3)
    again = GeodesicSpec.from_dict(g.to_dict(), chain=chain7)
    assert np.array_equal(again.A, g.A) and again.level == 3
    s = g.sample(8)
    assert s.shape == (9, 8, 8) and np.array_equal(s[-1], -g.J)


@given(st.lists(st.sampled_from([1, -1, 3, -3]), min_size=1, max_size=4))
def test_endpoint_invariant(ks):
    g = spec_from_ks(ks)
    assert np.max(np.abs(expm(np.pi * g.A) + np.eye(g.p))) < 1e-8


@given(st.integers(1, 3), st.integers(0, 5))
def test_chain_structures_members(copies, level):
    fam = direct_sum(*([build_irreducible(7)] * copies))
    ch = CentrioleChain(fam)
    g = reference_geodesic(ch, level)
    assert membership(midpoint(g), ch, level + 1)


def test_extend_chain_examples():
    fam = build_irreducible(3)
    j, r = extend_chain(fam.mats[:2])
    assert j is not None and r < 1e-8
    assert np.allclose(j @ j, -np.eye(4), atol=1e-8)
    for m in fam.mats[:2]:
        assert np.allclose(j @ m, -m @ j, atol=1e-10)
    # a full irreducible Cl_3 module admits no fourth structure
    j, r = extend_chain(fam.mats)
    assert j is None and r > 0.1


def test_extend_chain_balanced_splitting():
    c2 = build_irreducible(2)
    j1, j2 = direct_sum(c2, c2).mats
    for signs, feasible in (((1, -1), True), ((1, 1), False)):
        j3 = np.zeros((8, 8))
        for b, sg in enumerate(signs):
            j3[4 * b : 4 * b + 4, 4 * b : 4 * b + 4] = sg * c2[0] @ c2[1]
        assert (extend_chain([j1, j2, j3])[0] is not None) == feasible
