"""Spectral invariants and Morse index data of pole-to-pole geodesics.

Contexts
--------
``so``
    Level 0 in ``SO_p``; spectrum is ``|k|`` per rotation plane.
``unitary``
    Level 0 in ``U_{p/2}`` realified with the block complex structure
    ``[[0, -1], [1, 0]]``; spectrum is signed, one ``k`` per complex line.
``centriole_a``
    Level ``l != 2 mod 4``; ``|k|`` per irreducible ``Cl_{l+1}`` block.
``centriole_b``
    Level ``l = 2 mod 4``; signed ``k`` per irreducible ``Cl_l`` block, read
    off with the complex structure ``J_1 ... J_{l-1}``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels as K
from ._linalg import (
    anticommutant_projector,
    commutant_projector,
    complex_basis,
    maxabs,
    orthonormalize,
    skew_basis,
    standard_complex_structure,
    to_complex,
)
from .centriole_chains import GeodesicSpec
from .clifford_core import irreducible_dim
from .errors import GuardError, ValidationError
from .hopf_geometry import (
    complexify_chain,
    embed_loop_in_unitary,
    winding_number_det,
)

CONTEXTS = ("so", "unitary", "centriole_a", "centriole_b")
ROUND_TOL = 1e-6
NEGATIVE_CUTOFF = -1e-7
SYMMETRY_TOL = 1e-6
HESSIAN_STEP = 1e-4
SEGMENT_LIMIT = np.pi / 2


@dataclass(frozen=True)
class KSpectrum:
    """Odd integers ``k_j``, one per invariant block of real dimension ``block_dim``."""

    ks: tuple[int, ...]
    block_dim: int
    signed: bool

    def __post_init__(self) -> None:
        ks = tuple(sorted((int(k) for k in self.ks), reverse=True))
        if any(k % 2 == 0 for k in ks):
            raise ValidationError("k values must be odd")
        object.__setattr__(self, "ks", ks)

    @property
    def p(self) -> int:
        return len(self.ks) * self.block_dim

    @property
    def multiplicities(self) -> dict[int, int]:
        return dict(Counter(self.ks))

    def as_list(self) -> list[int]:
        return list(self.ks)


def default_context(g: GeodesicSpec) -> str:
    if g.level == 0:
        return "so"
    return "centriole_b" if g.level % 4 == 2 else "centriole_a"


def _check_context(g: GeodesicSpec, context: str | None) -> str:
    ctx = context or default_context(g)
    if ctx not in CONTEXTS:
        raise ValidationError(f"unknown context {ctx!r}")
    if ctx in ("so", "unitary") and g.level != 0:
        raise ValidationError(f"context {ctx} needs a level-0 geodesic")
    if ctx.startswith("centriole"):
        if g.level < 1 or g.chain is None:
            raise ValidationError("centriole contexts need a positive level and a chain")
        if (ctx == "centriole_b") != (g.level % 4 == 2):
            raise ValidationError(f"context {ctx} does not match level {g.level}")
    return ctx


def _odd_ints(vals: np.ndarray) -> np.ndarray:
    r = np.rint(vals)
    if np.any(np.abs(vals - r) > ROUND_TOL) or np.any(r.astype(np.int64) % 2 == 0):
        raise ValidationError("eigenvalues are not odd integers: not a pole-to-pole geodesic")
    return r.astype(np.int64)


def _group(ks: np.ndarray, per_block: int) -> list[int]:
    out = []
    for k, c in Counter(ks.tolist()).items():
        if c % per_block:
            raise ValidationError("eigenvalue multiplicities do not fit the block size")
        out.extend([k] * (c // per_block))
    return out


def _complex_structure(g: GeodesicSpec, ctx: str) -> np.ndarray:
    if ctx == "unitary":
        return standard_complex_structure(g.p)
    return complexify_chain(g.chain.below(g.level))


def _signed_eigs(g: GeodesicSpec, ctx: str) -> np.ndarray:
    i_op = _complex_structure(g, ctx)
    if maxabs(g.A @ i_op - i_op @ g.A) > g.tol:
        raise ValidationError("A is not complex linear for this context")
    z = to_complex(g.A, complex_basis(i_op), i_op)
    return _odd_ints(np.linalg.eigvalsh(-1j * z))


def k_spectrum(g: GeodesicSpec, context: str | None = None) -> KSpectrum:
    """Odd integers ``k_j`` with ``A = +-i k_j`` on the invariant blocks."""
    ctx = _check_context(g, context)
    if g.p % 2:
        raise ValidationError("odd dimension has no pole-to-pole geodesic")
    if ctx in ("so", "centriole_a"):
        ev = np.linalg.eigvalsh(1j * g.A)[g.p // 2 :]
        ks = _odd_ints(ev)
        if ctx == "so":
            return KSpectrum(tuple(ks), 2, False)
        s = irreducible_dim(g.level + 1)
        return KSpectrum(tuple(_group(ks, s // 2)), s, False)
    ks = _signed_eigs(g, ctx)
    if ctx == "unitary":
        return KSpectrum(tuple(ks), 2, True)
    s = irreducible_dim(g.level)
    return KSpectrum(tuple(_group(ks, s // 2)), s, True)


def is_minimal(g: GeodesicSpec, context: str | None = None) -> bool:
    spec = k_spectrum(g, context)
    minimal = all(abs(k) == 1 for k in spec.ks)
    if minimal != (abs(g.energy - np.pi**2) <= 1e-8 * np.pi**2):
        raise ValidationError("energy disagrees with the spectrum")
    return minimal


def _complex_ks(g: GeodesicSpec, ctx: str) -> np.ndarray:
    return _signed_eigs(g, ctx)


def winding_of_geodesic(g: GeodesicSpec, context: str = "unitary") -> Fraction:
    """``(1/2) sum k`` over complex eigenvalues (``1/2 dim_C S_l sum_j k_j`` per block)."""
    if context == "centriole":
        context = "centriole_b"
    if context not in ("unitary", "centriole_b"):
        raise ValidationError("winding is defined in the unitary and centriole_b contexts")
    ctx = _check_context(g, context)
    return Fraction(int(np.sum(_complex_ks(g, ctx))), 2)


def winding_det_of_geodesic(g: GeodesicSpec, context: str = "unitary", samples: int | None = None) -> Fraction:
    """Winding of the geodesic computed from determinants of sampled values."""
    if context == "centriole":
        context = "centriole_b"
    ctx = _check_context(g, context)
    ks = np.abs(_complex_ks(g, ctx))
    n = samples or max(64, 4 * int(ks.sum()))
    vals = g.sample(n)
    if ctx == "unitary":
        i_op = standard_complex_structure(g.p)
        basis = complex_basis(i_op)
        loop = np.array([to_complex(v, basis, i_op) for v in vals])
    else:
        loop = embed_loop_in_unitary(vals, g.chain.fam, g.level)
    return Fraction(winding_number_det(loop, path=True))


def _pair_sum(ks) -> int:
    total = 0
    for a in ks:
        for b in ks:
            if a > b:
                total += (a - b) // 2 - 1
    return total


def index_lower_bound(g: GeodesicSpec, context: str | None = None) -> int:
    ctx = _check_context(g, context)
    spec = k_spectrum(g, ctx)
    if all(abs(k) == 1 for k in spec.ks):
        return 0
    if ctx == "so":
        return g.p - 2
    if ctx == "unitary":
        return 2 * _pair_sum(spec.ks)
    if ctx == "centriole_b":
        return _pair_sum(spec.ks)
    return g.p // irreducible_dim(g.level + 1) - 1


def threshold_check(g: GeodesicSpec, context: str, d: int) -> bool:
    """Does the winding threshold hypothesis hold for this ``d``?

    Unitary: ``q - 2|w| >= 2d`` with ``q = p/2`` the complex dimension.
    Centriole (``l = 2 mod 4``): ``p - 4|w| >= 4 d s_l``.
    """
    if context == "centriole":
        context = "centriole_b"
    if context not in ("unitary", "centriole_b"):
        raise ValidationError("threshold needs a context with a winding number")
    w = abs(winding_of_geodesic(g, context))
    if context == "unitary":
        return g.p // 2 - 2 * w >= 2 * d
    return g.p - 4 * w >= 4 * d * irreducible_dim(g.level)


# ---------------------------------------------------------------------------
# Hessian oracle


@dataclass(frozen=True)
class OracleResult:
    index: int
    nullity: int
    eigenvalues: np.ndarray
    asymmetry: float


def _tangent_basis(g: GeodesicSpec, ctx: str, v: np.ndarray) -> np.ndarray:
    base = skew_basis(g.p)
    if ctx == "so":
        return base
    if ctx == "unitary":
        i_op = standard_complex_structure(g.p)
        proj = np.array([commutant_projector([i_op], x) for x in base])
        return orthonormalize(proj, g.p)
    below = g.chain.below(g.level)
    proj = np.array([commutant_projector(below, anticommutant_projector([v], x)) for x in base])
    return orthonormalize(proj, g.p)


def _gradients(verts: np.ndarray) -> np.ndarray:
    """Left-trivialized energy gradients ``G_k`` at the interior vertices."""
    n = verts.shape[0] - 1
    fwd = K.log_stack(np.swapaxes(verts[1:-1], 1, 2) @ verts[2:])
    bwd = K.log_stack(np.swapaxes(verts[1:-1], 1, 2) @ verts[:-2])
    return -2.0 * n * (fwd + bwd)


def _gradient_coords(verts: np.ndarray, bases: list[np.ndarray]) -> np.ndarray:
    g = _gradients(verts)
    p = verts.shape[1]
    return np.concatenate([np.einsum("ij,aij->a", g[i], b) / p for i, b in enumerate(bases)])


def _perturbed(verts, bases, color, a, s):
    out = verts.copy()
    for k in range(1 + color, verts.shape[0] - 1, 3):
        b = bases[k - 1]
        if a < len(b):
            out[k] = verts[k] @ K.exp_skew(s * b[a])
    return out


def hessian_matrix(g: GeodesicSpec, n_segments: int, context: str | None = None) -> np.ndarray:
    """Hessian of the polygon energy at the broken-geodesic discretization of ``g``."""
    ctx = _check_context(g, context)
    if n_segments < 2:
        raise GuardError("need at least two segments")
    seg = np.sqrt(g.energy) / n_segments
    angle = np.pi * np.max(np.abs(np.linalg.eigvalsh(1j * g.A))) / n_segments
    if seg >= SEGMENT_LIMIT or angle >= SEGMENT_LIMIT:
        raise GuardError("discretization too coarse: segments exceed the convexity bound")
    verts = g.sample(n_segments)
    bases = [_tangent_basis(g, ctx, verts[k]) for k in range(1, n_segments)]
    dims = [len(b) for b in bases]
    offsets = np.concatenate([[0], np.cumsum(dims)])
    size = int(offsets[-1])
    h = np.zeros((size, size))
    step = HESSIAN_STEP

    def diff(color, a, s):
        plus = _gradient_coords(_perturbed(verts, bases, color, a, s), bases)
        minus = _gradient_coords(_perturbed(verts, bases, color, a, -s), bases)
        return (plus - minus) / (2 * s)

    for color in range(3):
        for a in range(max(dims)):
            coarse = diff(color, a, step)
            fine = diff(color, a, step / 2)
            col = (4.0 * fine - coarse) / 3.0
            for k in range(1 + color, n_segments, 3):
                if a >= dims[k - 1]:
                    continue
                c = offsets[k - 1] + a
                lo = offsets[max(k - 2, 0)]
                hi = offsets[min(k + 1, n_segments - 1)]
                h[lo:hi, c] = col[lo:hi]
    return h


def hessian_spectrum(g: GeodesicSpec, n_segments: int, context: str | None = None) -> OracleResult:
    h = hessian_matrix(g, n_segments, context)
    asym = maxabs(h - h.T)
    if asym > SYMMETRY_TOL:
        raise ValidationError(f"Hessian failed the symmetry check ({asym:.2e})")
    ev = np.linalg.eigvalsh(0.5 * (h + h.T))
    index = int(np.sum(ev < NEGATIVE_CUTOFF))
    nullity = int(np.sum(np.abs(ev) <= -NEGATIVE_CUTOFF))
    return OracleResult(index, nullity, ev, asym)


def hessian_index_oracle(g: GeodesicSpec, n_segments: int, context: str | None = None) -> int:
    """Number of Hessian eigenvalues below ``-1e-7`` on the polygon space."""
    return hessian_spectrum(g, n_segments, context).index


# ---------------------------------------------------------------------------
# Fixture helpers


def block_generator(ks, p_block: int = 2) -> np.ndarray:
    """Block-diagonal ``diag(k_1 J, k_2 J, ...)`` with ``J = [[0, -1], [1, 0]]``."""
    j = np.array([[0.0, -1.0], [1.0, 0.0]])
    p = 2 * len(ks)
    out = np.zeros((p, p))
    for i, k in enumerate(ks):
        out[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = k * j
    return out


def spec_from_ks(ks) -> GeodesicSpec:
    """Level-0 geodesic with the given (signed) spectrum, complex linear for the block structure."""
    a = block_generator(ks)
    return GeodesicSpec(a, np.eye(a.shape[0]), 0)
