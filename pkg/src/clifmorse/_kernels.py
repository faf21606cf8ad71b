"""Hot numerical kernels on orthogonal matrices.

Every function here is written in the subset of Python that numba can compile.
When numba is importable and the environment variable ``CLIFMORSE_NO_JIT`` is
unset (or ``0``), the kernels are compiled with ``numba.njit``; otherwise the
same source runs as plain numpy code.  ``JIT_ENABLED`` reports which path is
active.

The matrix logarithm of a rotation ``R = exp(X)`` is computed from the
symmetric part ``C = cos X`` and the skew part ``S = sin X`` as
``X = g(C) S`` with ``g(c) = arccos(c) / sqrt(1 - c**2)``, which only needs a
real symmetric eigendecomposition.  The exponential of a skew matrix uses the
eigendecomposition of ``-X @ X``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_ENABLED = numba is not None and os.environ.get("CLIFMORSE_NO_JIT", "0") in ("", "0")

# Rotation angles above this are too close to pi for a unique logarithm.
ANGLE_LIMIT = np.pi - 1e-6


def _jit(fn):
    if JIT_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


@_jit
def theta_over_sin(c):
    """Return (theta, theta / sin(theta)) for theta = arccos(c)."""
    if c > 1.0:
        c = 1.0
    if c < -1.0:
        c = -1.0
    s = np.sqrt((1.0 - c) * (1.0 + c))
    th = np.arctan2(s, c)
    if th < 1e-4:
        t2 = th * th
        return th, 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    return th, th / np.sin(th)


@_jit
def log_orthogonal(r):
    """Principal logarithm of a rotation matrix (all angles below pi)."""
    p = r.shape[0]
    c = 0.5 * (r + r.T)
    s = 0.5 * (r - r.T)
    w, v = np.linalg.eigh(np.ascontiguousarray(c))
    g = np.empty(p)
    for i in range(p):
        th, gi = theta_over_sin(w[i])
        if th > ANGLE_LIMIT:
            raise ValueError("rotation angle too close to pi for a unique logarithm")
        g[i] = gi
    x = ((v * g) @ v.T) @ s
    return 0.5 * (x - x.T)


@_jit
def max_angle(r):
    """Largest rotation angle of an orthogonal matrix."""
    c = 0.5 * (r + r.T)
    w = np.linalg.eigvalsh(np.ascontiguousarray(c))
    lo = w[0]
    if lo < -1.0:
        lo = -1.0
    if lo > 1.0:
        lo = 1.0
    return np.arccos(lo)


@_jit
def exp_skew(x):
    """Exponential of a real skew-symmetric matrix."""
    y = -(x @ x)
    y = 0.5 * (y + y.T)
    w, v = np.linalg.eigh(np.ascontiguousarray(y))
    p = x.shape[0]
    f1 = np.empty(p)
    f2 = np.empty(p)
    for i in range(p):
        mu = w[i]
        if mu < 0.0:
            mu = 0.0
        th = np.sqrt(mu)
        if th < 1e-4:
            f1[i] = 1.0 - mu / 2.0 + mu * mu / 24.0
            f2[i] = 1.0 - mu / 6.0 + mu * mu / 120.0
        else:
            f1[i] = np.cos(th)
            f2[i] = np.sin(th) / th
    return (v * f1) @ v.T + ((v * f2) @ v.T) @ x


@_jit
def dist2(a, b):
    """Squared geodesic distance under <X, Y> = tr(X^T Y) / p."""
    x = log_orthogonal(a.T @ b)
    return np.sum(x * x) / a.shape[0]


@_jit
def segment_dist2(verts):
    n = verts.shape[0] - 1
    out = np.empty(n)
    for k in range(n):
        out[k] = dist2(verts[k], verts[k + 1])
    return out


@_jit
def polygon_energy(verts):
    """Discrete energy n * sum_k d(v_{k-1}, v_k)^2 of a polygon."""
    d2 = segment_dist2(verts)
    return (verts.shape[0] - 1) * np.sum(d2)


@_jit
def project_complex_structure(m, chain, n_chain):
    """Nearest complex structure anticommuting with chain[0..n_chain-1].

    Returns (projected matrix, smallest singular value squared of the
    constrained skew part); a tiny second value signals failure.
    """
    x = m.copy()
    for i in range(n_chain):
        j = chain[i]
        x = 0.5 * (x + j @ x @ j)
    x = 0.5 * (x - x.T)
    h = x.T @ x
    h = 0.5 * (h + h.T)
    w, v = np.linalg.eigh(np.ascontiguousarray(h))
    lo = w[0]
    if lo <= 1e-12:
        return m.copy(), lo
    inv = 1.0 / np.sqrt(w)
    u = x @ ((v * inv) @ v.T)
    u = 0.5 * (u - u.T)
    return u, lo


@_jit
def birkhoff_sweep(verts, d2, omega, chain, n_chain, project):
    """One Gauss-Seidel sweep of geodesic-midpoint updates, in place.

    ``d2`` holds the current squared segment lengths and is kept in sync.
    A vertex is replaced only when the two adjacent squared lengths strictly
    decrease, which makes the energy monotone in floating point.  With
    ``omega > 1`` the midpoint is over-relaxed first and the plain midpoint is
    tried when the over-relaxed point is rejected.  Returns the number of
    accepted updates, or -1 when a constraint projection failed.
    """
    n = verts.shape[0] - 1
    accepted = 0
    for k in range(1, n):
        a = verts[k - 1]
        b = verts[k + 1]
        v = verts[k]
        mid = a @ exp_skew(0.5 * log_orthogonal(a.T @ b))
        old = d2[k - 1] + d2[k]
        done = False
        if omega != 1.0:
            cand = v @ exp_skew(omega * log_orthogonal(v.T @ mid))
            if project:
                cand, lo = project_complex_structure(cand, chain, n_chain)
                if lo <= 1e-12:
                    return -1
            da = dist2(a, cand)
            db = dist2(cand, b)
            if da + db < old:
                verts[k] = cand
                d2[k - 1] = da
                d2[k] = db
                accepted += 1
                done = True
        if not done:
            cand = mid
            if project:
                cand, lo = project_complex_structure(cand, chain, n_chain)
                if lo <= 1e-12:
                    return -1
            da = dist2(a, cand)
            db = dist2(cand, b)
            if da + db < old:
                verts[k] = cand
                d2[k - 1] = da
                d2[k] = db
                accepted += 1
    return accepted


@_jit
def unwrap_det_phase(dets):
    """Accumulated argument of a sequence of nonzero complex numbers.

    Returns (total phase, largest absolute single step).
    """
    total = 0.0
    big = 0.0
    for i in range(1, dets.shape[0]):
        z = dets[i] / dets[i - 1]
        step = np.arctan2(z.imag, z.real)
        total += step
        if abs(step) > big:
            big = abs(step)
    return total, big


@_jit
def log_orthogonal_batch(rs):
    out = np.empty_like(rs)
    for i in range(rs.shape[0]):
        out[i] = log_orthogonal(rs[i])
    return out


def log_orthogonal_stack(rs: np.ndarray) -> np.ndarray:
    """Vectorized logarithm for a stack of rotations (numpy path).

    Same formula as :func:`log_orthogonal`, using batched ``eigh``.
    """
    rs = np.asarray(rs, dtype=float)
    c = 0.5 * (rs + np.swapaxes(rs, -1, -2))
    s = 0.5 * (rs - np.swapaxes(rs, -1, -2))
    w, v = np.linalg.eigh(c)
    w = np.clip(w, -1.0, 1.0)
    sn = np.sqrt((1.0 - w) * (1.0 + w))
    th = np.arctan2(sn, w)
    if np.any(th > ANGLE_LIMIT):
        raise ValueError("rotation angle too close to pi for a unique logarithm")
    t2 = th * th
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(th < 1e-4, 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0, th / np.sin(th))
    x = np.einsum("...ij,...j,...kj->...ik", v, g, v) @ s
    return 0.5 * (x - np.swapaxes(x, -1, -2))


def exp_skew_stack(xs: np.ndarray) -> np.ndarray:
    """Vectorized exponential for a stack of skew matrices."""
    xs = np.asarray(xs, dtype=float)
    y = -(xs @ xs)
    y = 0.5 * (y + np.swapaxes(y, -1, -2))
    w, v = np.linalg.eigh(y)
    mu = np.clip(w, 0.0, None)
    th = np.sqrt(mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(th < 1e-4, 1.0 - mu / 2.0 + mu * mu / 24.0, np.cos(th))
        f2 = np.where(th < 1e-4, 1.0 - mu / 6.0 + mu * mu / 120.0, np.sin(th) / th)
    a = np.einsum("...ij,...j,...kj->...ik", v, f1, v)
    b = np.einsum("...ij,...j,...kj->...ik", v, f2, v)
    return a + b @ xs


def log_stack(rs: np.ndarray) -> np.ndarray:
    """Logarithms of a stack of rotations on whichever path is active."""
    rs = np.ascontiguousarray(rs, dtype=float)
    if JIT_ENABLED:
        return log_orthogonal_batch(rs)
    return log_orthogonal_stack(rs)
