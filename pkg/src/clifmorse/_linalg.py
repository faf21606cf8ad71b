"""Small dense linear-algebra helpers used across modules."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ValidationError


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Trace inner product <A, B> = Re tr(A^* B) / p."""
    return float(np.real(np.vdot(a, b)) / a.shape[0])


def norm(a: np.ndarray) -> float:
    return float(np.sqrt(inner(a, a)))


def maxabs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def skew(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - a.T)


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    return scipy.linalg.expm(a)


def logm_rotation(r: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Real logarithm of a rotation via Schur-based inverse scaling and squaring.

    Raises when exp(log(R)) misses R by more than ``tol``.
    """
    x = scipy.linalg.logm(r)
    x = np.real_if_close(x, tol=1000)
    if np.iscomplexobj(x):
        raise ValidationError("rotation has no real principal logarithm")
    x = skew(np.asarray(x, dtype=float))
    if maxabs(expm(x) - r) > tol:
        raise ValidationError("matrix logarithm failed its round-trip check")
    return x


def skew_basis(p: int) -> np.ndarray:
    """Orthonormal basis of so(p) under the trace inner product."""
    out = []
    scale = np.sqrt(p / 2.0)
    for a in range(p):
        for b in range(a + 1, p):
            e = np.zeros((p, p))
            e[b, a] = scale
            e[a, b] = -scale
            out.append(e)
    return np.array(out).reshape(-1, p, p)


def orthonormalize(vecs: np.ndarray, p: int, rtol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (trace inner product) of the span of a stack of matrices."""
    if len(vecs) == 0:
        return np.zeros((0, p, p))
    flat = vecs.reshape(len(vecs), -1) / np.sqrt(p)
    u, s, vt = np.linalg.svd(flat, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((0, p, p))
    rank = int(np.sum(s > rtol * max(1.0, s[0])))
    return (vt[:rank] * np.sqrt(p)).reshape(rank, p, p)


def anticommutant_projector(chain, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``x`` onto matrices anticommuting with each of ``chain``."""
    for j in chain:
        x = 0.5 * (x + j @ x @ j)
    return x


def commutant_projector(chain, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto matrices commuting with each complex structure in ``chain``."""
    for j in chain:
        x = 0.5 * (x - j @ x @ j)
    return x


def complex_basis(i_op: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Real p x q matrix B whose columns b_a give a complex orthonormal basis.

    The real vectors b_1, i b_1, ..., b_q, i b_q are orthonormal.  Seeds are
    taken from the standard basis in order, so the result is deterministic.
    """
    p = i_op.shape[0]
    if p % 2:
        raise ValidationError("a complex structure needs even dimension")
    cols: list[np.ndarray] = []
    span: list[np.ndarray] = []
    for e in np.eye(p):
        v = e.copy()
        for u in span:
            v -= (u @ v) * u
        nv = np.linalg.norm(v)
        if nv < tol:
            continue
        v /= nv
        iv = i_op @ v
        iv -= (v @ iv) * v
        for u in span:
            iv -= (u @ iv) * u
        niv = np.linalg.norm(iv)
        if niv < tol:
            raise ValidationError("operator is not a complex structure")
        iv /= niv
        cols.append(v)
        span.extend([v, iv])
        if len(cols) == p // 2:
            break
    return np.array(cols).T


def to_complex(m: np.ndarray, basis: np.ndarray, i_op: np.ndarray) -> np.ndarray:
    """Complex matrix of a complex-linear real operator in the given basis."""
    cols = m @ basis
    return basis.T @ cols + 1j * ((i_op @ basis).T @ cols)


def from_complex(z: np.ndarray, basis: np.ndarray, i_op: np.ndarray) -> np.ndarray:
    """Real operator with complex matrix ``z`` in the given basis."""
    full = np.concatenate([basis, i_op @ basis], axis=1)
    blk = np.block([[z.real, -z.imag], [z.imag, z.real]])
    return full @ blk @ full.T


def standard_complex_structure(p: int) -> np.ndarray:
    """Block diagonal complex structure with 2x2 blocks [[0, -1], [1, 0]]."""
    if p % 2:
        raise ValidationError("even dimension required")
    return np.kron(np.eye(p // 2), np.array([[0.0, -1.0], [1.0, 0.0]]))


def polar_complex_structure(x: np.ndarray, chain=()) -> np.ndarray:
    """Nearest complex structure to ``x`` anticommuting with ``chain``."""
    y = skew(anticommutant_projector(chain, np.asarray(x, dtype=float)))
    w, v = np.linalg.eigh(y.T @ y)
    if w[0] <= 1e-12:
        raise ValidationError("no nearby complex structure in the constrained set")
    return skew(y @ (v / np.sqrt(w)) @ v.T)
