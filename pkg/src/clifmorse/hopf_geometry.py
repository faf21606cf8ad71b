"""Hopf maps of Clifford families, affine Hopf maps and determinant windings."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernels as K
from ._linalg import complex_basis, maxabs, to_complex
from .centriole_chains import membership
from .clifford_core import CliffordFamily, is_positive
from .errors import AliasingError, CliffordRelationError, ValidationError

UNIT_TOL = 1e-9
GREAT_SPHERE_MARGIN = 1e-6
ROUNDING_RESIDUE = 0.1


@dataclass(frozen=True, eq=False)
class HopfMap:
    """``(t, v) -> t I + sum v_i J_i`` on the unit sphere of ``R^{1+k}``."""

    fam: CliffordFamily

    @property
    def k(self) -> int:
        return self.fam.k

    @property
    def p(self) -> int:
        return self.fam.p

    def __call__(self, point: np.ndarray) -> np.ndarray:
        return evaluate_hopf(self, point)


@dataclass(frozen=True, eq=False)
class AffineHopfMap:
    """Identity on ``L_0`` plus the Hopf map of a positive family on ``L_1``.

    ``basis0`` and ``basis1`` hold orthonormal columns spanning ``L_0`` and
    ``L_1``; ``fam1`` acts on ``L_1`` in the ``basis1`` coordinates and is
    ``None`` when ``L_1 = 0``.
    """

    basis0: np.ndarray
    basis1: np.ndarray
    fam1: CliffordFamily | None
    k: int

    def __post_init__(self) -> None:
        b0 = np.array(self.basis0, dtype=float).reshape(self.basis0.shape[0], -1)
        b1 = np.array(self.basis1, dtype=float).reshape(b0.shape[0], -1)
        for b in (b0, b1):
            b.setflags(write=False)
        object.__setattr__(self, "basis0", b0)
        object.__setattr__(self, "basis1", b1)
        full = np.concatenate([b0, b1], axis=1)
        if full.shape[1] != full.shape[0] or maxabs(full.T @ full - np.eye(full.shape[0])) > 1e-8:
            raise ValidationError("L_0 and L_1 bases must form an orthonormal basis of R^p")
        d1 = b1.shape[1]
        if d1 == 0:
            if self.fam1 is not None and self.fam1.k:
                raise ValidationError("family given on an empty L_1")
            object.__setattr__(self, "fam1", None)
            return
        if self.fam1 is None or self.fam1.p != d1 or self.fam1.k != self.k:
            raise ValidationError("fam1 must have k matrices of size dim L_1")
        if self.k % 4 == 3 and not is_positive(self.fam1):
            raise ValidationError("the family on L_1 must be positive")

    @property
    def p(self) -> int:
        return self.basis0.shape[0]

    @property
    def dim_l1(self) -> int:
        return self.basis1.shape[1]

    @property
    def eta(self) -> int:
        return stable_winding_of_affine_hopf(self)

    def __call__(self, point: np.ndarray) -> np.ndarray:
        return evaluate_hopf(self, point)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "p": self.p,
            "eta": self.eta,
            "dim_L0": self.basis0.shape[1],
            "dim_L1": self.dim_l1,
            "basis0": self.basis0.tolist(),
            "basis1": self.basis1.tolist(),
            "fam1": self.fam1.to_dict() if self.fam1 is not None else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "AffineHopfMap":
        p = int(data["p"])
        b0 = np.asarray(data["basis0"], dtype=float).reshape(p, -1)
        b1 = np.asarray(data["basis1"], dtype=float).reshape(p, -1)
        fam = CliffordFamily.from_dict(data["fam1"], tol=1e-8) if data.get("fam1") else None
        return cls(b0, b1, fam, int(data["k"]))


def pure_hopf(fam: CliffordFamily) -> AffineHopfMap:
    """The Hopf map of ``fam`` as an affine Hopf map with ``L_0 = 0``."""
    p = fam.p
    return AffineHopfMap(np.zeros((p, 0)), np.eye(p), fam, fam.k)


def affine_direct_sum(a: AffineHopfMap, b: AffineHopfMap) -> AffineHopfMap:
    """Block sum on ``R^{p_a} + R^{p_b}``."""
    if a.k != b.k:
        raise ValidationError("affine Hopf maps over different spheres")
    pa, pb = a.p, b.p

    def embed(m: np.ndarray, top: bool) -> np.ndarray:
        out = np.zeros((pa + pb, m.shape[1]))
        if top:
            out[:pa] = m
        else:
            out[pa:] = m
        return out

    b0 = np.concatenate([embed(a.basis0, True), embed(b.basis0, False)], axis=1)
    b1 = np.concatenate([embed(a.basis1, True), embed(b.basis1, False)], axis=1)
    fams = [f for f in (a.fam1, b.fam1) if f is not None]
    if not fams:
        fam = None
    elif len(fams) == 1:
        fam = fams[0]
    else:
        from .clifford_core import direct_sum

        fam = direct_sum(*fams)
    return AffineHopfMap(b0, b1, fam, a.k)


def _check_point(point: np.ndarray, k: int) -> np.ndarray:
    x = np.asarray(point, dtype=float).reshape(-1)
    if x.shape[0] != k + 1:
        raise ValidationError(f"point must lie in R^{k + 1}")
    if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
        raise ValidationError("point is not a unit vector")
    return x


def evaluate_hopf(h: HopfMap | AffineHopfMap, point: np.ndarray) -> np.ndarray:
    """Value of a (affine) Hopf map at a unit vector ``(t, v)``."""
    x = _check_point(point, h.k)
    if isinstance(h, HopfMap):
        out = x[0] * np.eye(h.p)
        for vi, j in zip(x[1:], h.fam.mats):
            out = out + vi * j
        return out
    out = h.basis0 @ h.basis0.T
    if h.fam1 is not None:
        inner = evaluate_hopf(HopfMap(h.fam1), x)
        out = out + h.basis1 @ inner @ h.basis1.T
    return out


def evaluate_hopf_batch(h: HopfMap | AffineHopfMap, points: np.ndarray) -> np.ndarray:
    """Vectorized evaluation on an array of unit vectors (last axis ``k + 1``)."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != h.k + 1:
        raise ValidationError(f"points must lie in R^{h.k + 1}")
    if np.any(np.abs(np.linalg.norm(pts, axis=-1) - 1.0) > UNIT_TOL):
        raise ValidationError("points must be unit vectors")
    if isinstance(h, HopfMap):
        gens = np.concatenate([np.eye(h.p)[None], h.fam.stack])
        return np.einsum("...a,aij->...ij", pts, gens)
    out = np.broadcast_to(h.basis0 @ h.basis0.T, pts.shape[:-1] + (h.p, h.p)).copy()
    if h.fam1 is not None:
        inner = evaluate_hopf_batch(HopfMap(h.fam1), pts)
        out += np.einsum("ia,...ab,jb->...ij", h.basis1, inner, h.basis1)
    return out


def family_from_great_sphere(
    samples: Sequence[np.ndarray],
    frame: np.ndarray | None = None,
    margin: float = GREAT_SPHERE_MARGIN,
) -> CliffordFamily:
    """Recover a Clifford family from the values of an isometric linear sphere map.

    ``samples[b]`` is the value at the frame vector ``frame[b]`` (rows of an
    orthogonal matrix, the standard basis by default).  The map is extended
    linearly; it is a great-sphere embedding into the rotation group iff the
    value at ``e_0`` is ``I`` and ``A^T B + B^T A = 2 <A, B> I`` for every pair
    of basis values.  Any residual above ``margin`` is rejected.
    """
    vals = np.asarray(samples, dtype=float)
    if vals.ndim != 3 or vals.shape[1] != vals.shape[2]:
        raise ValidationError("samples must be a stack of square matrices")
    m, p = vals.shape[0], vals.shape[1]
    if frame is not None:
        f = np.asarray(frame, dtype=float)
        if f.shape != (m, m) or maxabs(f @ f.T - np.eye(m)) > 1e-9:
            raise ValidationError("frame must be an orthogonal matrix")
        vals = np.einsum("ba,bij->aij", f, vals)
    eye = np.eye(p)
    worst = 0.0
    for a in range(m):
        worst = max(worst, maxabs(vals[a].T @ vals[a] - eye))
    worst = max(worst, maxabs(vals[0] - eye))
    for a in range(m):
        for b in range(a, m):
            ip = float(np.sum(vals[a] * vals[b]) / p)
            sym = vals[a].T @ vals[b] + vals[b].T @ vals[a]
            worst = max(worst, maxabs(sym - 2.0 * ip * eye))
            target = 1.0 if a == b else 0.0
            worst = max(worst, abs(ip - target))
    if worst > margin:
        raise CliffordRelationError(f"not a great-sphere embedding (residual {worst:.3e})")
    return CliffordFamily(tuple(vals[1:]), p=p, tol=max(margin, 1e-10) * 10)


# ---------------------------------------------------------------------------
# Winding numbers


def _as_unitary_stack(loop) -> np.ndarray:
    arr = np.asarray(loop)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValidationError("loop must be a stack of square matrices")
    if len(arr) < 2:
        raise ValidationError("need at least two samples")
    return arr.astype(complex)


def _phase_total(dets: np.ndarray) -> float:
    if np.any(np.abs(dets) < 1e-12):
        raise ValidationError("singular matrix in loop")
    total, big = K.unwrap_det_phase(np.ascontiguousarray(dets))
    if big >= np.pi * (1.0 - 1e-9):
        raise AliasingError("determinant phase advances by pi or more between samples")
    return float(total)


def _is_unitary_stack(arr: np.ndarray, tol: float = 1e-8) -> bool:
    eye = np.eye(arr.shape[1])
    return bool(np.all(np.abs(np.conj(np.swapaxes(arr, 1, 2)) @ arr - eye) <= tol))


def _step_phase_total(arr: np.ndarray) -> float:
    """Phase of ``det`` along the piecewise-geodesic interpolant of unitary samples.

    Each step contributes ``Im tr log(z_j^* z_{j+1})`` with the principal
    logarithm, so the total is exact as long as no step rotates an
    eigenvector by pi.  Unlike unwrapping the determinant itself this does
    not alias when many eigenvalues turn together.
    """
    steps = np.conj(np.swapaxes(arr[:-1], 1, 2)) @ arr[1:]
    angles = np.angle(np.linalg.eigvals(steps))
    if np.max(np.abs(angles)) >= np.pi * (1.0 - 1e-9):
        raise AliasingError("an eigenvalue turns by pi or more between samples")
    return float(angles.sum())


def _round_winding(x: float) -> int:
    n = int(round(x))
    if abs(x - n) > ROUNDING_RESIDUE:
        raise AliasingError(f"winding {x:.4f} is not near an integer")
    return n


def winding_number_det(loop, path: bool = False, close_tol: float = 1e-8) -> int | Fraction:
    """Degree of ``det`` along a sampled loop of unitary matrices.

    Unitary samples are joined by geodesics and each step's phase is read off
    the eigenvalues of ``z_j^* z_{j+1}``; other invertible samples fall back
    to unwrapping ``det`` directly.  With ``path=True`` the samples run from ``M`` to ``-M``; the path is closed
    up by the reverse of ``exp(i pi t) M`` and the winding of that reference
    path, ``q / 2``, is added back.  The result is then a multiple of ``1/2``.
    """
    arr = _as_unitary_stack(loop)
    q = arr.shape[1]
    unitary = _is_unitary_stack(arr)
    if not path:
        if maxabs(arr[0] - arr[-1]) > close_tol:
            raise ValidationError("loop does not close")
        total = _step_phase_total(arr) if unitary else _phase_total(np.linalg.det(arr))
        return _round_winding(total / (2 * np.pi))
    if maxabs(arr[-1] + arr[0]) > close_tol:
        raise ValidationError("path does not end at -M")
    if unitary:
        return Fraction(_round_winding(_step_phase_total(arr) / np.pi), 2)
    dets = np.linalg.det(arr)
    n_ref = max(8, 4 * q)
    ts = np.linspace(1.0, 0.0, n_ref + 1)
    ref = np.exp(1j * np.pi * ts * q) * dets[0]
    closed = np.concatenate([dets, ref[1:]])
    closed[-1] = dets[0]
    w = _round_winding(_phase_total(closed) / (2 * np.pi))
    return Fraction(2 * w + q, 2)


def complexify_chain(chain_mats: Sequence[np.ndarray]) -> np.ndarray:
    """``J_1 ... J_{l-1}``, the complex structure used at level ``l = 4m - 2``."""
    if not chain_mats:
        raise ValidationError("need at least one structure")
    out = np.eye(chain_mats[0].shape[0])
    for m in chain_mats:
        out = out @ m
    return out


def embed_centriole_in_unitary(
    j_mat: np.ndarray, chain: CliffordFamily, ell: int, tol: float = 1e-8
) -> np.ndarray:
    """Complex matrix of ``J J_l^{-1} = -J J_l`` for ``J`` at level ``l = 4m - 2``."""
    if ell % 4 != 2:
        raise ValidationError("the unitary embedding needs l = 2 mod 4")
    if ell > chain.k:
        raise ValidationError("chain too short")
    if not membership(j_mat, chain, ell, tol):
        raise ValidationError("J is not in the level set")
    i_op = complexify_chain(chain.mats[: ell - 1])
    m = -np.asarray(j_mat) @ chain.mats[ell - 1]
    if maxabs(m @ i_op - i_op @ m) > tol:
        raise ValidationError("J J_l does not commute with the complex structure")
    basis = complex_basis(i_op)
    z = to_complex(m, basis, i_op)
    if maxabs(z.conj().T @ z - np.eye(z.shape[0])) > 10 * tol:
        raise ValidationError("embedded matrix is not unitary")
    return z


def embed_loop_in_unitary(mats: np.ndarray, chain: CliffordFamily, ell: int, tol: float = 1e-8) -> np.ndarray:
    """Embed a stack of level-``l`` structures with a shared complex basis."""
    i_op = complexify_chain(chain.mats[: ell - 1])
    basis = complex_basis(i_op)
    j_ell = chain.mats[ell - 1]
    out = []
    for m in mats:
        if not membership(m, chain, ell, tol):
            raise ValidationError("loop leaves the level set")
        out.append(to_complex(-m @ j_ell, basis, i_op))
    return np.array(out)


def stable_winding_of_affine_hopf(h: AffineHopfMap) -> int:
    d1 = h.dim_l1
    if d1 % 2:
        raise ValidationError("L_1 must be even-dimensional")
    return d1 // 2
