"""Clifford algebras, irreducible orthogonal modules and Clifford families.

Conventions
-----------
* ``Cl_n`` is generated by ``e_1..e_n`` with ``e_i e_j + e_j e_i = -2 delta_ij``.
* A *family* is an ordered list of anticommuting orthogonal complex
  structures ``J_1..J_k`` on ``R^p``; it is the image of ``e_1..e_k``.
* Octonions use Cayley-Dickson doubling ``(a, b)(c, d) = (ac - conj(d) b,
  d a + b conj(c))`` on pairs of quaternions, with basis
  ``1, i, j, k, l, il, jl, kl`` so that ``e_i * e_4 = e_{i+4}`` for ``i = 1..3``.
* For ``n = 3 mod 4`` the two irreducible modules differ by the sign of the
  volume element ``w = J_1..J_n``.  The *positive* one has ``w = -id``,
  equivalently ``J_n = J_1 .. J_{n-1}``.  It is the default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import CliffordRelationError, ValidationError

DEFAULT_TOL = 1e-10

_BASE_DIMS = (1, 2, 4, 4, 8, 8, 8, 8, 16)
# s_n grows like 16^(n/8); beyond this the dense matrices stop fitting in memory
MAX_BUILD_N = 20


def irreducible_dim(n: int) -> int:
    """Dimension ``s_n`` of an irreducible real ``Cl_n``-module."""
    if n < 0:
        raise ValidationError("n must be nonnegative")
    q, r = divmod(n, 8)
    return _BASE_DIMS[r] * 16**q


def n_classes(n: int) -> int:
    """Number of irreducible ``Cl_n``-module classes (2 iff n = 3 mod 4)."""
    return 2 if n % 4 == 3 else 1


# ---------------------------------------------------------------------------
# Basis elements


@dataclass(frozen=True)
class CliffordBasisElement:
    """Signed product ``sign * e_{i1} ... e_{ir}`` with ``i1 < ... < ir``."""

    index_set: tuple[int, ...] = ()
    sign: int = 1

    def __post_init__(self) -> None:
        idx = tuple(sorted(int(i) for i in self.index_set))
        if len(set(idx)) != len(idx):
            raise ValidationError("repeated index in basis element")
        if idx and idx[0] < 1:
            raise ValidationError("indices start at 1")
        if self.sign not in (1, -1):
            raise ValidationError("sign must be +1 or -1")
        object.__setattr__(self, "index_set", idx)


def clifford_product(
    a: CliffordBasisElement, b: CliffordBasisElement, n: int
) -> CliffordBasisElement:
    """Product of two signed basis elements in ``Cl_n``."""
    for i in a.index_set + b.index_set:
        if i > n:
            raise ValidationError(f"index {i} exceeds n = {n}")
    swaps = sum(1 for i in a.index_set for j in b.index_set if i > j)
    common = len(set(a.index_set) & set(b.index_set))
    sign = a.sign * b.sign * (-1) ** (swaps + common)
    return CliffordBasisElement(tuple(set(a.index_set) ^ set(b.index_set)), sign)


# ---------------------------------------------------------------------------
# Octonions


def _quat_mul(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    a1, b1, c1, d1 = x
    a2, b2, c2, d2 = y
    return np.array(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ]
    )


def _quat_conj(x: np.ndarray) -> np.ndarray:
    return x * np.array([1.0, -1.0, -1.0, -1.0])


def _cayley_dickson(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    a, b = x[:4], x[4:]
    c, d = y[:4], y[4:]
    first = _quat_mul(a, c) - _quat_mul(_quat_conj(d), b)
    second = _quat_mul(d, a) + _quat_mul(b, _quat_conj(c))
    return np.concatenate([first, second])


@dataclass(frozen=True, eq=False)
class OctonionTable:
    """Multiplication table ``e_a e_b = sign[a, b] * e_{index[a, b]}``."""

    index: np.ndarray
    sign: np.ndarray

    @classmethod
    def cayley_dickson(cls) -> "OctonionTable":
        return _octonions()

    def multiply(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        out = np.zeros(8)
        for a in range(8):
            for b in range(8):
                out[self.index[a, b]] += self.sign[a, b] * x[a] * y[b]
        return out

    def left(self, xi: np.ndarray) -> np.ndarray:
        """Matrix of left translation ``y -> xi * y``."""
        m = np.zeros((8, 8))
        for a in range(8):
            for b in range(8):
                m[self.index[a, b], b] += self.sign[a, b] * xi[a]
        return m

    def right(self, xi: np.ndarray) -> np.ndarray:
        """Matrix of right translation ``y -> y * xi``."""
        m = np.zeros((8, 8))
        for a in range(8):
            for b in range(8):
                m[self.index[a, b], a] += self.sign[a, b] * xi[b]
        return m


@lru_cache(maxsize=1)
def _octonions() -> OctonionTable:
    eye = np.eye(8)
    index = np.zeros((8, 8), dtype=np.int64)
    sign = np.zeros((8, 8), dtype=np.int64)
    for a in range(8):
        for b in range(8):
            prod = _cayley_dickson(eye[a], eye[b])
            c = int(np.argmax(np.abs(prod)))
            index[a, b] = c
            sign[a, b] = int(round(prod[c]))
    index.setflags(write=False)
    sign.setflags(write=False)
    return OctonionTable(index, sign)


# ---------------------------------------------------------------------------
# Families


def _frozen(m: np.ndarray) -> np.ndarray:
    a = np.array(m, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CliffordFamily:
    """Anticommuting orthogonal complex structures ``J_1..J_k`` on ``R^p``.

    Construction validates the three relations unless ``check=False``.
    The stored arrays are read-only.
    """

    mats: tuple[np.ndarray, ...]
    p: int = 0
    tol: float = DEFAULT_TOL
    check: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        mats = tuple(_frozen(m) for m in self.mats)
        p = self.p
        if mats:
            p = mats[0].shape[0]
        if p <= 0:
            raise ValidationError("an empty family needs an explicit p >= 1")
        for m in mats:
            if m.shape != (p, p):
                raise ValidationError("all matrices must be p x p")
        if self.tol < 0:
            raise ValidationError("tol must be nonnegative")
        object.__setattr__(self, "mats", mats)
        object.__setattr__(self, "p", int(p))
        if self.check:
            self.validate()

    @property
    def k(self) -> int:
        return len(self.mats)

    def __len__(self) -> int:
        return len(self.mats)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.mats[i]

    @property
    def stack(self) -> np.ndarray:
        if not self.mats:
            return np.zeros((0, self.p, self.p))
        return np.array(self.mats)

    def residuals(self) -> dict[str, float]:
        eye = np.eye(self.p)
        orth = square = anti = 0.0
        for i, a in enumerate(self.mats):
            orth = max(orth, float(np.max(np.abs(a.T @ a - eye))))
            square = max(square, float(np.max(np.abs(a @ a + eye))))
            for b in self.mats[i + 1 :]:
                anti = max(anti, float(np.max(np.abs(a @ b + b @ a))))
        return {"orthogonal": orth, "square": square, "anticommute": anti}

    def validate(self) -> None:
        res = self.residuals()
        bad = {k: v for k, v in res.items() if v > self.tol}
        if bad:
            raise CliffordRelationError(f"Clifford relations violated: {bad}")

    def is_valid(self) -> bool:
        return all(v <= self.tol for v in self.residuals().values())

    def restrict(self, k: int) -> "CliffordFamily":
        """The first ``k`` structures."""
        return CliffordFamily(self.mats[:k], p=self.p, tol=self.tol, check=False)

    def conjugate(self, q: np.ndarray) -> "CliffordFamily":
        """Family ``Q^T J_i Q`` for an orthogonal ``Q``."""
        return CliffordFamily(tuple(q.T @ m @ q for m in self.mats), p=self.p, tol=self.tol)

    def with_matrices(self, mats: Sequence[np.ndarray]) -> "CliffordFamily":
        return CliffordFamily(tuple(mats), p=self.p, tol=self.tol)

    def to_dict(self) -> dict:
        return {"p": self.p, "mats": [m.reshape(-1).tolist() for m in self.mats]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, tol: float = DEFAULT_TOL) -> "CliffordFamily":
        try:
            p = int(data["p"])
            mats = [np.asarray(m, dtype=float).reshape(p, p) for m in data["mats"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed family: {exc!r}") from exc
        return cls(tuple(mats), p=p, tol=tol)

    @classmethod
    def from_json(cls, text: str, tol: float = DEFAULT_TOL) -> "CliffordFamily":
        return cls.from_dict(json.loads(text), tol=tol)


def direct_sum(*fams: CliffordFamily) -> CliffordFamily:
    """Block-diagonal sum of families of equal length."""
    if not fams:
        raise ValidationError("need at least one family")
    k = fams[0].k
    if any(f.k != k for f in fams):
        raise ValidationError("families must have the same length")
    mats = tuple(scipy.linalg.block_diag(*(f.mats[i] for f in fams)) for i in range(k))
    p = sum(f.p for f in fams)
    return CliffordFamily(mats, p=p, tol=max(f.tol for f in fams))


def trivial_family(p: int) -> CliffordFamily:
    return CliffordFamily((), p=p)


# ---------------------------------------------------------------------------
# Irreducible modules


def _quaternion_left(u: np.ndarray) -> np.ndarray:
    return np.array([_quat_mul(u, e) for e in np.eye(4)]).T


def _quaternion_right(u: np.ndarray) -> np.ndarray:
    return np.array([_quat_mul(e, u) for e in np.eye(4)]).T


def _base_family(n: int, negative: bool) -> list[np.ndarray]:
    eye4 = np.eye(4)
    eye8 = np.eye(8)
    if n == 0:
        return []
    if n == 1:
        return [np.array([[0.0, -1.0], [1.0, 0.0]])]
    if n <= 3:
        trans = _quaternion_right if negative and n == 3 else _quaternion_left
        return [trans(eye4[i]) for i in range(1, n + 1)]
    oct_ = _octonions()
    trans = oct_.right if negative and n == 7 else oct_.left
    return [trans(eye8[i]) for i in range(1, n + 1)]


def _raw_irreducible(n: int, negative: bool) -> list[np.ndarray]:
    if n < 8:
        return _base_family(n, negative)
    inner = _raw_irreducible(n - 8, negative)
    s = irreducible_dim(n - 8)
    oct_ = _octonions()
    eye8 = np.eye(8)
    eye_s = np.eye(s)
    z = np.zeros((8 * s, 8 * s))
    out = []
    for j in inner:
        x = np.kron(eye8, j)
        out.append(np.block([[x, z], [z, -x]]))
    for a in range(8):
        lx = np.kron(oct_.left(eye8[a]), eye_s)
        out.append(np.block([[z, -lx.T], [lx, z]]))
    return out


@lru_cache(maxsize=64)
def _irreducible_cached(n: int, negative: bool) -> CliffordFamily:
    mats = _raw_irreducible(n, negative)
    fam = CliffordFamily(tuple(mats), p=irreducible_dim(n))
    if n % 4 == 3:
        want = 1.0 if negative else -1.0
        w = volume_element(fam)
        if np.max(np.abs(w - want * np.eye(fam.p))) > fam.tol:
            # the recursion may flip the sign of the base module
            mats = _raw_irreducible(n, not negative)
            fam = CliffordFamily(tuple(mats), p=irreducible_dim(n))
            w = volume_element(fam)
            if np.max(np.abs(w - want * np.eye(fam.p))) > fam.tol:
                raise CliffordRelationError("could not realize the requested class")
    return fam


def build_irreducible(n: int, negative: bool = False) -> CliffordFamily:
    """Irreducible orthogonal ``Cl_n``-module as a family of ``n`` matrices.

    For ``n = 3 mod 4``, ``negative=False`` gives the class with volume
    element ``-id`` (the positive family) and ``negative=True`` the class
    with ``+id``.  The flag is ignored for other ``n``.
    """
    if not 1 <= n <= MAX_BUILD_N:
        raise ValidationError(f"n must be in 1..{MAX_BUILD_N}")
    return _irreducible_cached(int(n), bool(negative) and n % 4 == 3)


# ---------------------------------------------------------------------------
# Volume element and derived constructions


def volume_element(fam: CliffordFamily) -> np.ndarray:
    """``w = J_1 ... J_k``; checks ``w^2 = (-1)^{k(k+1)/2} I``."""
    w = np.eye(fam.p)
    for m in fam.mats:
        w = w @ m
    k = fam.k
    expect = (-1.0) ** ((k * (k + 1) // 2) % 2)
    if np.max(np.abs(w @ w - expect * np.eye(fam.p))) > max(fam.tol, 1e-12) * max(1, k):
        raise CliffordRelationError("volume element has the wrong square")
    return w


def split_by_volume(fam: CliffordFamily) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases (columns) of the +1 and -1 eigenspaces of ``w``."""
    if fam.k == 0 or fam.k % 4:
        raise ValidationError("splitting needs k = 0 mod 4, k >= 4")
    w = volume_element(fam)
    evals, evecs = np.linalg.eigh(0.5 * (w + w.T))
    tol = max(fam.tol, 1e-9)
    if np.any(np.minimum(np.abs(evals - 1), np.abs(evals + 1)) > tol):
        raise ValidationError("volume element eigenvalues are not +-1")
    plus = evecs[:, evals > 0]
    minus = evecs[:, evals < 0]
    return plus, minus


def positive_part_family(fam: CliffordFamily) -> CliffordFamily:
    """Family ``e_i -> -J_1 J_{i+1}`` restricted to the +1 eigenspace of ``w``."""
    plus, _ = split_by_volume(fam)
    j1 = fam.mats[0]
    mats = tuple(plus.T @ (-j1 @ fam.mats[i]) @ plus for i in range(1, fam.k))
    out = CliffordFamily(mats, p=plus.shape[1], tol=fam.tol)
    if not is_positive(out):
        raise CliffordRelationError("restricted family is not positive")
    return out


def is_positive(fam: CliffordFamily) -> bool:
    """True iff ``J_k = J_1 ... J_{k-1}`` within tolerance (needs k = 3 mod 4)."""
    if fam.k % 4 != 3:
        raise ValidationError("positivity is defined for k = 3 mod 4")
    prod = np.eye(fam.p)
    for m in fam.mats[:-1]:
        prod = prod @ m
    return bool(np.max(np.abs(fam.mats[-1] - prod)) <= max(fam.tol, 1e-12))


def decompose_module(fam: CliffordFamily):
    """Multiplicities of the irreducible classes in a ``Cl_k``-module.

    For ``k = 3 mod 4`` the vector is ``(positive, negative)``, i.e. the
    counts of summands with volume element ``-id`` and ``+id``.
    """
    from .ktheory_tables import ModuleClass

    n = fam.k
    s = irreducible_dim(n)
    if fam.p % s:
        raise ValidationError(f"p = {fam.p} is not a multiple of s_{n} = {s}")
    total = fam.p // s
    if n % 4 != 3:
        return ModuleClass(n, (total,))
    tr = float(np.trace(volume_element(fam))) / s
    diff = int(round(tr))
    if abs(tr - diff) > 1e-6 or (total + diff) % 2:
        raise ValidationError("volume trace inconsistent with integer multiplicities")
    neg = (total + diff) // 2
    pos = total - neg
    if pos < 0 or neg < 0:
        raise ValidationError("volume trace inconsistent with integer multiplicities")
    return ModuleClass(n, (pos, neg))


def family_from_mats(mats: Iterable[np.ndarray], tol: float = DEFAULT_TOL) -> CliffordFamily:
    return CliffordFamily(tuple(mats), tol=tol)
