from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from clifmorse.clifford_core import build_irreducible, trivial_family
from clifmorse.errors import AliasingError, CliffordRelationError, ValidationError
from clifmorse.hopf_geometry import (
    AffineHopfMap,
    HopfMap,
    affine_direct_sum,
    embed_centriole_in_unitary,
    evaluate_hopf,
    evaluate_hopf_batch,
    family_from_great_sphere,
    pure_hopf,
    stable_winding_of_affine_hopf,
    winding_number_det,
)
from conftest import random_rotation


def _unit(rng, m):
    x = rng.standard_normal(m)
    return x / np.linalg.norm(x)


def _unitary(rng, q):
    z = rng.standard_normal((q, q)) + 1j * rng.standard_normal((q, q))
    u, _ = np.linalg.qr(z)
    return u


def test_evaluate_hopf_examples():
    fam = build_irreducible(3)
    h = HopfMap(fam)
    assert np.array_equal(h(np.array([1.0, 0, 0, 0])), np.eye(4))
    assert np.array_equal(h(np.array([0.0, 1, 0, 0])), fam[0])
    m = h(np.array([1.0, 1.0, 0, 0]) / np.sqrt(2))
    assert np.allclose(m, (np.eye(4) + fam[0]) / np.sqrt(2))
    assert np.allclose(m.T @ m, np.eye(4))


def test_evaluate_rejects_bad_points():
    h = HopfMap(build_irreducible(3))
    with pytest.raises(ValidationError):
        h(np.array([1.0, 0, 0]))
    with pytest.raises(ValidationError):
        h(np.array([1.0, 1.0, 0, 0]))


@pytest.mark.parametrize("n", [1, 3, 4, 7, 8])
def test_hopf_values_orthogonal(n, rng):
    h = HopfMap(build_irreducible(n))
    pts = rng.standard_normal((1000, n + 1))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    vals = evaluate_hopf_batch(h, pts)
    gram = np.einsum("nji,njk->nik", vals, vals)
    assert np.max(np.abs(gram - np.eye(h.p))) < 1e-12
    assert np.allclose(vals[17], evaluate_hopf(h, pts[17]))


def test_affine_hopf_values(rng):
    fam = build_irreducible(3)
    q = random_rotation(rng, 6)
    h = AffineHopfMap(q[:, :2], q[:, 2:], fam, 3)
    assert h.dim_l1 == 4 and h.eta == 2
    x = _unit(rng, 4)
    m = h(x)
    assert np.allclose(m.T @ m, np.eye(6))
    assert np.allclose(m @ q[:, :2], q[:, :2])
    assert np.allclose(evaluate_hopf_batch(h, x[None])[0], m)
    back = AffineHopfMap.from_dict(h.to_dict())
    assert np.allclose(back(x), m)


def test_affine_rejects_negative_family():
    with pytest.raises(ValidationError):
        AffineHopfMap(np.zeros((4, 0)), np.eye(4), build_irreducible(3, negative=True), 3)
    with pytest.raises(ValidationError):
        AffineHopfMap(np.eye(4)[:, :1], np.eye(4)[:, :2], None, 3)


@pytest.mark.parametrize("n", [1, 2, 3, 7])
def test_great_sphere_round_trip(n, rng):
    fam = build_irreducible(n)
    h = HopfMap(fam)
    u = random_rotation(rng, fam.p)
    frame = random_rotation(rng, n + 1)
    samples = [u @ h(f) @ u.T for f in frame]
    rec = family_from_great_sphere(samples, frame)
    for a, b in zip(rec.mats, fam.mats):
        assert np.allclose(a, u @ b @ u.T, atol=1e-10)


def test_great_sphere_rejects_non_skew():
    mu = np.diag([1.0, -1.0])
    with pytest.raises(CliffordRelationError):
        family_from_great_sphere([np.eye(2), mu])
    j = build_irreducible(1)[0]
    with pytest.raises(CliffordRelationError):
        family_from_great_sphere([np.eye(2), j + 1e-4 * mu])


def test_winding_constant_and_diag():
    ts = np.linspace(0, 1, 65)
    const = np.repeat(np.eye(3, dtype=complex)[None], 65, axis=0)
    assert winding_number_det(const) == 0
    loop = np.array([np.diag([np.exp(2j * np.pi * t), 1, 1]) for t in ts])
    assert winding_number_det(loop) == 1
    assert winding_number_det(loop[::-1]) == -1


@given(st.lists(st.sampled_from([-3, -1, 1, 3]), min_size=1, max_size=4))
def test_winding_of_geodesic_path(ks):
    ts = np.linspace(0, 1, 129)
    path = np.array([np.diag(np.exp(1j * np.pi * t * np.array(ks))) for t in ts])
    assert winding_number_det(path, path=True) == Fraction(sum(ks), 2)


def test_winding_invariances(rng):
    ts = np.linspace(0, 1, 257)
    loop = np.array([np.diag([np.exp(4j * np.pi * t), np.exp(-2j * np.pi * t)]) for t in ts])
    w = winding_number_det(loop)
    assert w == 1
    u = _unitary(rng, 2)
    assert winding_number_det(u @ loop @ u.conj().T) == w
    reparam = np.array([np.diag([np.exp(4j * np.pi * s), np.exp(-2j * np.pi * s)]) for s in ts**2])
    assert winding_number_det(reparam) == w
    doubled = np.concatenate([loop, loop[1:]])
    assert winding_number_det(doubled) == 2 * w


def test_winding_aliasing_and_closure():
    ts = np.linspace(0, 1, 3)
    loop = np.array([np.diag([np.exp(2j * np.pi * t)]) for t in ts])
    with pytest.raises(AliasingError):
        winding_number_det(loop)
    with pytest.raises(ValidationError):
        winding_number_det(np.array([np.eye(2), 1j * np.eye(2)]))


def test_embed_centriole_examples():
    fam = build_irreducible(3)
    j2 = fam[1]
    assert np.allclose(embed_centriole_in_unitary(j2, fam, 2), np.eye(2))
    assert np.allclose(embed_centriole_in_unitary(-j2, fam, 2), -np.eye(2))
    z = embed_centriole_in_unitary(fam[2], fam, 2)
    assert np.allclose(z.conj().T @ z, np.eye(2))
    with pytest.raises(ValidationError):
        embed_centriole_in_unitary(fam[0], fam, 2)
    with pytest.raises(ValidationError):
        embed_centriole_in_unitary(j2, fam, 3)


def test_stable_winding_of_affine_hopf():
    for n in (3, 7):
        h = pure_hopf(build_irreducible(n))
        assert stable_winding_of_affine_hopf(h) == h.p // 2
    triv = AffineHopfMap(np.eye(4), np.zeros((4, 0)), None, 3)
    assert triv.eta == 0
    a = pure_hopf(build_irreducible(3))
    s = affine_direct_sum(a, affine_direct_sum(a, triv))
    assert s.eta == 2 * a.eta and s.p == 12


def test_trivial_family_hopf_is_identity():
    h = HopfMap(trivial_family(3))
    assert np.array_equal(h(np.array([1.0])), np.eye(3))


def test_winding_many_eigenvalues_turning_together():
    ts = np.linspace(0, 1, 10)
    loop = np.array([np.exp(2j * np.pi * t) * np.eye(6) for t in ts])
    # det turns by 6 * 2pi / 9 > pi per step; the eigenvalue steps stay small
    assert winding_number_det(loop) == 6
    path = np.array([np.exp(1j * np.pi * t) * np.eye(5) for t in np.linspace(0, 1, 8)])
    assert winding_number_det(path, path=True) == Fraction(5, 2)


def test_winding_non_unitary_fallback():
    ts = np.linspace(0, 1, 33)
    loop = np.array([np.diag([2.0 * np.exp(2j * np.pi * t), 0.5]) for t in ts])
    assert winding_number_det(loop) == 1
