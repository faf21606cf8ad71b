"""Poles, midpoint sets and iterated minimal centrioles in SO_p.

Level ``j`` of a chain ``J_1..J_k`` is the set ``P_j`` of complex structures
anticommuting with ``J_1..J_{j-1}``; level 0 is the whole group with poles
``I`` and ``-I``.  Geodesics are ``t -> exp(pi t A) J`` on ``[0, 1]``; the stored
``A`` has eigenvalues ``+-i k`` with odd integers ``k`` so ``exp(pi A) = -I``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from ._linalg import anticommutant_projector, expm, maxabs, orthonormalize, skew_basis
from .clifford_core import CliffordFamily
from .errors import ValidationError

DEFAULT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CentrioleChain:
    """A Clifford family viewed as a chain of iterated centrioles."""

    fam: CliffordFamily

    @property
    def p(self) -> int:
        return self.fam.p

    @property
    def k(self) -> int:
        return self.fam.k

    def structure(self, j: int) -> np.ndarray:
        """``J_j`` for ``j >= 1``; level 0 returns ``I``."""
        if j == 0:
            return np.eye(self.p)
        if not 1 <= j <= self.k:
            raise ValidationError(f"level {j} outside 0..{self.k}")
        return self.fam.mats[j - 1]

    def below(self, j: int) -> tuple[np.ndarray, ...]:
        """``J_1..J_{j-1}``."""
        return self.fam.mats[: max(j - 1, 0)]

    def level_stack(self, j: int) -> np.ndarray:
        """``J_1..J_{j-1}`` as a 3-d array (a dummy slice when empty)."""
        mats = self.below(j)
        if not mats:
            return np.zeros((1, self.p, self.p))
        return np.array(mats)


def _as_chain(chain) -> CentrioleChain:
    if isinstance(chain, CentrioleChain):
        return chain
    if isinstance(chain, CliffordFamily):
        return CentrioleChain(chain)
    raise ValidationError("expected a CentrioleChain or CliffordFamily")


def membership(j_mat: np.ndarray, chain, j: int, tol: float = DEFAULT_TOL) -> bool:
    """Is ``j_mat`` an orthogonal complex structure anticommuting with ``J_1..J_{j-1}``?"""
    chain = _as_chain(chain)
    if not 1 <= j <= chain.k + 1:
        raise ValidationError(f"level {j} outside 1..{chain.k + 1}")
    m = np.asarray(j_mat, dtype=float)
    eye = np.eye(chain.p)
    if m.shape != (chain.p, chain.p):
        return False
    if maxabs(m.T @ m - eye) > tol or maxabs(m @ m + eye) > tol:
        return False
    return all(maxabs(m @ b + b @ m) <= tol for b in chain.below(j))


def tangent_check(a: np.ndarray, chain, j: int, tol: float = DEFAULT_TOL, samples: int = 8) -> bool:
    """Does ``exp(tA) J_j`` stay in level ``j``?

    Checks that ``A`` anticommutes with ``J_j`` and commutes with ``J_i``,
    ``i < j``, then cross-checks membership at a few sampled ``t``.
    """
    chain = _as_chain(chain)
    a = np.asarray(a, dtype=float)
    if maxabs(a + a.T) > tol:
        raise ValidationError("A must be skew-symmetric")
    jj = chain.structure(j)
    if maxabs(a @ jj + jj @ a) > tol:
        return False
    if any(maxabs(a @ b - b @ a) > tol for b in chain.below(j)):
        return False
    for t in np.linspace(0.0, 1.0, samples):
        if not membership(expm(t * a) @ jj, chain, j, tol=max(tol, 1e-8)):
            return False
    return True


@dataclass(frozen=True, eq=False)
class GeodesicSpec:
    """Geodesic ``t -> exp(pi t A) J`` from ``J`` to ``-J`` at a given level.

    Level 0 means the rotation group itself with ``J = I``.  At level
    ``l >= 1`` a chain is required and ``A`` must anticommute with ``J`` and
    commute with ``J_1..J_{l-1}``.
    """

    A: np.ndarray
    J: np.ndarray
    level: int = 0
    chain: CentrioleChain | None = field(default=None, repr=False)
    tol: float = DEFAULT_TOL

    def __post_init__(self) -> None:
        a = np.array(self.A, dtype=float)
        jm = np.array(self.J, dtype=float)
        a.setflags(write=False)
        jm.setflags(write=False)
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "J", jm)
        if self.chain is not None and not isinstance(self.chain, CentrioleChain):
            object.__setattr__(self, "chain", _as_chain(self.chain))
        self.validate()

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def validate(self) -> None:
        a, jm, p = self.A, self.J, self.A.shape[0]
        if a.shape != (p, p) or jm.shape != (p, p):
            raise ValidationError("A and J must be square of equal size")
        if maxabs(a + a.T) > self.tol:
            raise ValidationError("A must be skew-symmetric")
        if maxabs(expm(np.pi * a) + np.eye(p)) > self.tol:
            raise ValidationError("exp(pi A) != -I: not a pole-to-pole geodesic")
        if self.level == 0:
            if maxabs(jm - np.eye(p)) > self.tol:
                raise ValidationError("level-0 geodesics start at I")
            return
        if self.chain is None:
            raise ValidationError("a chain is required at positive level")
        if not membership(jm, self.chain, self.level, tol=self.tol):
            raise ValidationError("J is not in the level set")
        if maxabs(a @ jm + jm @ a) > self.tol:
            raise ValidationError("A must anticommute with J")
        for b in self.chain.below(self.level):
            if maxabs(a @ b - b @ a) > self.tol:
                raise ValidationError("A must commute with the lower structures")

    def __call__(self, t: float) -> np.ndarray:
        return expm(np.pi * t * self.A) @ self.J

    def sample(self, n: int) -> np.ndarray:
        """Values at ``t = 0, 1/n, ..., 1`` (``n + 1`` matrices)."""
        step = expm(np.pi * self.A / n)
        out = np.empty((n + 1, self.p, self.p))
        out[0] = self.J
        for i in range(1, n + 1):
            out[i] = step @ out[i - 1]
        out[n] = -self.J
        return out

    @property
    def energy(self) -> float:
        """``pi^2 |A|^2`` under the normalized trace metric."""
        return float(np.pi**2 * np.sum(self.A * self.A) / self.p)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "J": self.J.tolist(), "level": self.level}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, chain=None, tol: float = DEFAULT_TOL) -> "GeodesicSpec":
        return cls(
            np.asarray(data["A"], dtype=float),
            np.asarray(data["J"], dtype=float),
            int(data.get("level", 0)),
            chain=_as_chain(chain) if chain is not None else None,
            tol=tol,
        )


def midpoint(g: GeodesicSpec) -> np.ndarray:
    """The point ``exp(pi A / 2) J`` halfway between the poles."""
    return expm(0.5 * np.pi * g.A) @ g.J


def connect_minimal(
    j_a: np.ndarray,
    j_b: np.ndarray,
    chain,
    level: int,
    mid: np.ndarray,
    tol: float = DEFAULT_TOL,
) -> GeodesicSpec:
    """Minimal geodesic from ``J_a`` to ``J_b = -J_a`` through ``mid``.

    ``mid`` must be a complex structure at level ``level + 1`` (relative to
    the chain with ``J_level`` replaced by ``J_a``).  The generator is
    ``A = mid J_a^{-1}``, a complex structure, so the geodesic has energy
    ``pi^2``.
    """
    chain = _as_chain(chain)
    j_a = np.asarray(j_a, dtype=float)
    if maxabs(np.asarray(j_b) + j_a) > tol:
        raise ValidationError("endpoints must be antipodal: J_b = -J_a")
    if level >= 1 and not membership(j_a, chain, level, tol):
        raise ValidationError("J_a is not in the level set")
    mid = np.asarray(mid, dtype=float)
    if level >= 1:
        ok = membership(mid, chain, level, tol) and maxabs(mid @ j_a + j_a @ mid) <= tol
    else:
        eye = np.eye(chain.p)
        ok = maxabs(mid.T @ mid - eye) <= tol and maxabs(mid @ mid + eye) <= tol
    if not ok:
        raise ValidationError("midpoint is not a valid next-level structure")
    a = mid @ j_a.T
    a = 0.5 * (a - a.T)
    return GeodesicSpec(a, j_a, level, chain=chain if level >= 1 else None, tol=tol)


def reference_geodesic(chain, level: int) -> GeodesicSpec:
    """Geodesic ``cos(pi t) J_l + sin(pi t) J_{l+1}`` (``exp(pi t J_1)`` at level 0)."""
    chain = _as_chain(chain)
    j_a = chain.structure(level)
    return connect_minimal(j_a, -j_a, chain, level, chain.structure(level + 1))


def extend_chain(
    mats, tol: float = 1e-8, restarts: int = 8, seed: int = 0
) -> tuple[np.ndarray | None, float]:
    """Look for a complex structure anticommuting with every matrix in ``mats``.

    Least squares on ``X^2 + I`` over the skew matrices anticommuting with
    ``mats``, from ``restarts`` random starts.  Returns ``(J, residual)`` with
    ``J = None`` when the best residual (trace norm) is not below ``tol``.
    """
    mats = [np.asarray(m, dtype=float) for m in mats]
    if not mats:
        raise ValidationError("need at least one structure")
    p = mats[0].shape[0]
    eye = np.eye(p)
    basis = orthonormalize(np.array([anticommutant_projector(mats, x) for x in skew_basis(p)]), p)
    if len(basis) == 0:
        return None, 1.0

    def resid(c):
        x = np.tensordot(c, basis, 1)
        return ((x @ x + eye) / np.sqrt(p)).ravel()

    def jac(c):
        x = np.tensordot(c, basis, 1)
        return (np.einsum("aij,jk->aik", basis, x) + x @ basis).reshape(len(basis), -1).T / np.sqrt(p)

    rng = np.random.default_rng(seed)
    best, best_x = np.inf, None
    for _ in range(restarts):
        c0 = rng.standard_normal(len(basis))
        c0 /= np.linalg.norm(c0)
        sol = least_squares(resid, c0, jac=jac, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        r = float(np.linalg.norm(resid(sol.x)))
        if r < best:
            best, best_x = r, np.tensordot(sol.x, basis, 1)
        if best < tol:
            break
    return (best_x if best < tol else None), best
