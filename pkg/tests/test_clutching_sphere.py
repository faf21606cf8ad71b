import numpy as np
import pytest

from clifmorse import _kernels as K
from clifmorse.clifford_core import build_irreducible, direct_sum, trivial_family
from clifmorse.clutching_sphere import (
    ClutchingTriple,
    _hom_dim,
    direct_sum_triples,
    hopf_eta,
    hopf_triple,
    stable_invariants,
    stable_invariants_full,
    stably_isomorphic,
    trivial_triple,
    twist_decompose_fiber,
)
import clifmorse.clutching_sphere as cs
from clifmorse.errors import PaddingCapError, ValidationError
from clifmorse.path_flow import MeridianGrid, sphere_points
from conftest import random_rotation


@pytest.fixture(scope="module")
def hopf4():
    return hopf_triple(build_irreducible(4))


def test_trivial_bundle():
    assert stable_invariants(trivial_triple(4)) == (4, 0)


def test_hopf_bundle_n4(hopf4):
    assert hopf4.p == 4 and hopf4.sigma is not None
    assert stable_invariants(hopf4) == (4, 2)
    assert hopf_eta(build_irreducible(4)) == 2


def test_hopf_bundle_n8_analytic():
    t = hopf_triple(build_irreducible(8))
    assert t.sigma is None
    assert stable_invariants(t) == (8, 4)
    with pytest.raises(ValidationError):
        t.grid()


def test_direct_sum_doubles_eta(hopf4):
    two = direct_sum_triples(hopf4, hopf4)
    assert stable_invariants(two) == (8, 4)
    mixed = direct_sum_triples(hopf4, trivial_triple(4))
    assert stable_invariants(mixed) == (8, 2)


def test_perturbed_hopf_same_invariants(hopf4):
    g = hopf4.grid()
    rng = np.random.default_rng(11)
    bs = [x - x.T for x in rng.standard_normal((4, 4, 4))]
    pts = sphere_points(3, g.shape)
    # smooth and based: X(e_0) = 0, so seams and poles stay consistent
    xs = np.einsum("...a,aij->...ij", pts - np.array([1.0, 0, 0, 0]), np.array(bs))
    vals = np.array([K.exp_skew(0.05 * x) @ v for x, v in zip(xs.reshape(-1, 4, 4), g.values.reshape(-1, 4, 4))])
    noisy = ClutchingTriple(4, 4, 4, MeridianGrid(vals.reshape(g.values.shape)), reference=hopf4.hopf)
    assert stably_isomorphic(noisy, hopf4)


def test_conjugation_invariance(hopf4, rng):
    q = random_rotation(rng, 4)
    assert stable_invariants(hopf4.conjugate(q)) == (4, 2)


def test_padding_for_d1(hopf4):
    r = stable_invariants_full(hopf4, d=1)
    assert (r.rank, r.eta) == (4, 2)
    assert r.padding.size(4) == 16 and r.eta_padded == 4


def test_padding_cap(hopf4):
    with pytest.raises(PaddingCapError):
        stable_invariants_full(hopf4, d=1, cap=8)


def test_triple_validation():
    with pytest.raises(ValidationError):
        ClutchingTriple(4, 4, 6, hopf=positive4())
    with pytest.raises(ValidationError):
        ClutchingTriple(4, 4, 4)
    with pytest.raises(ValidationError):
        stable_invariants(trivial_triple(4, n=2, resolution=8))


def positive4():
    return hopf_triple(build_irreducible(4)).hopf


def test_triple_save_load(tmp_path, hopf4):
    hopf4.save(tmp_path / "t.json")
    back = ClutchingTriple.load(tmp_path / "t.json")
    assert np.array_equal(back.sigma.values, hopf4.sigma.values)
    assert back.p == 4


@pytest.mark.parametrize(
    "n,field", [(1, "complex"), (2, "quaternionic"), (4, "quaternionic"), (6, "real"), (8, "real")]
)
def test_twist_decompose_fiber(n, field):
    s = build_irreducible(n)
    assert twist_decompose_fiber(s) == (1, field)
    assert twist_decompose_fiber(direct_sum(s, s, s)) == (3, field)


def test_twist_rejects_two_class_case():
    with pytest.raises(ValidationError):
        twist_decompose_fiber(build_irreducible(3))


def test_character_pairing_matches_dense(monkeypatch):
    cases = [(build_irreducible(n), direct_sum(build_irreducible(n), build_irreducible(n))) for n in (1, 2, 4, 5, 6)]
    cases.append((build_irreducible(3), build_irreducible(3, negative=True)))
    cases.append((build_irreducible(7), direct_sum(build_irreducible(7), build_irreducible(7, negative=True))))
    dense = [_hom_dim(a, b) for a, b in cases]
    monkeypatch.setattr(cs, "DENSE_HOM_LIMIT", 0)
    assert [_hom_dim(a, b) for a, b in cases] == dense
    assert dense[-2] == 0


def test_field_dim_of_trivial():
    assert _hom_dim(trivial_family(2), trivial_family(3)) == 6
