"""Polygon path spaces, curve shortening and the sphere-map deformation pipeline.

Meridian coordinates
--------------------
A grid at level ``l`` samples a map ``S^d -> P_l`` on ``[0, 1]^d``.  With
frame ``f_0..f_d = e_l..e_{l+d}`` a grid point is

    x = cos(pi t_1) f_0 + sin(pi t_1) y(t_2, ..., u),

recursively, where the last sphere is the circle
``cos(2 pi u) f_{d-1} + sin(2 pi u) f_d``.  Axis 0 is the meridian parameter,
the last axis is the circle parameter, and index 0 on every inner axis is the
base meridian.  For ``d = 1`` the grid is a closed loop in ``u``.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from ._linalg import anticommutant_projector, commutant_projector, expm, maxabs, skew
from .centriole_chains import CentrioleChain, GeodesicSpec, membership, reference_geodesic
from .clifford_core import CliffordFamily, irreducible_dim, is_positive
from .errors import ConvergenceError, GuardError, ValidationError
from .hopf_geometry import AffineHopfMap, embed_loop_in_unitary, winding_number_det

CONVEXITY_RADIUS = np.pi / 2
GRID_GUARD = np.pi / 4
ENERGY_TOL = 1e-12
MINIMAL_BAND = 1e-6
KICK = 1e-6
MAX_REFINEMENTS = 2


def _thread_count() -> int:
    raw = os.environ.get("CLIFFORD_MORSE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


# ---------------------------------------------------------------------------
# Polygons


@dataclass(frozen=True, eq=False)
class PolygonPath:
    """Vertices ``v_0..v_n`` joined by short geodesics, optionally at a level."""

    vertices: np.ndarray
    level: int = 0
    chain: CentrioleChain | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 3 or v.shape[1] != v.shape[2] or v.shape[0] < 2:
            raise ValidationError("vertices must be a stack of at least two square matrices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if self.chain is not None and not isinstance(self.chain, CentrioleChain):
            object.__setattr__(self, "chain", CentrioleChain(self.chain))
        if self.level > 0 and self.chain is None:
            raise ValidationError("a chain is required at positive level")
        d = segment_lengths(v)
        if np.any(d >= CONVEXITY_RADIUS):
            raise GuardError("a segment exceeds the convexity radius")

    @property
    def n(self) -> int:
        return self.vertices.shape[0] - 1

    @property
    def p(self) -> int:
        return self.vertices.shape[1]

    def chain_stack(self) -> tuple[np.ndarray, int]:
        if self.level <= 1 or self.chain is None:
            return np.zeros((1, self.p, self.p)), 0
        return self.chain.level_stack(self.level), self.level - 1


def segment_lengths(verts: np.ndarray) -> np.ndarray:
    try:
        d2 = K.segment_dist2(np.ascontiguousarray(verts))
    except ValueError as exc:
        raise GuardError(str(exc)) from exc
    return np.sqrt(d2)


def energy(path: PolygonPath) -> float:
    """``n * sum d(v_{k-1}, v_k)^2``."""
    return float(K.polygon_energy(np.ascontiguousarray(path.vertices)))


def minimal_segments(c: float, radius: float = CONVEXITY_RADIUS) -> int:
    """Smallest ``n`` with ``n > c / R^2``."""
    return int(np.floor(c / radius**2)) + 1


def sample_to_polygon(
    curve: Callable[[float], np.ndarray],
    n: int,
    energy_bound: float | None = None,
    level: int = 0,
    chain=None,
) -> PolygonPath:
    """Polygon through ``curve(k / n)``; enforces ``n > c / R^2`` when ``c`` is given."""
    if n < 1:
        raise GuardError("need at least one segment")
    if energy_bound is not None and not n > energy_bound / CONVEXITY_RADIUS**2:
        raise GuardError(f"n = {n} fails n > c / R^2 for c = {energy_bound}")
    verts = np.array([curve(k / n) for k in range(n + 1)])
    return PolygonPath(verts, level, chain)


def interpolate(verts: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Piecewise-geodesic interpolation at parameters ``ts`` (uniform nodes on [0, 1])."""
    n = verts.shape[0] - 1
    out = np.empty((len(ts), verts.shape[1], verts.shape[2]))
    for i, t in enumerate(ts):
        x = min(max(float(t), 0.0), 1.0) * n
        j = min(int(np.floor(x)), n - 1)
        frac = x - j
        if frac <= 0.0:
            out[i] = verts[j]
        elif frac >= 1.0:
            out[i] = verts[j + 1]
        else:
            a = verts[j]
            out[i] = a @ K.exp_skew(frac * K.log_orthogonal(a.T @ verts[j + 1]))
    return out


def resample_arclength(verts: np.ndarray, m: int) -> np.ndarray:
    """``m + 1`` points equally spaced by arclength along the geodesic polygon."""
    lens = segment_lengths(verts)
    total = float(lens.sum())
    if total == 0.0:
        return np.repeat(verts[:1], m + 1, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    out = np.empty((m + 1,) + verts.shape[1:])
    out[0] = verts[0]
    out[m] = verts[-1]
    for i in range(1, m):
        s = total * i / m
        j = int(np.searchsorted(cum, s, side="right") - 1)
        j = min(max(j, 0), len(lens) - 1)
        while lens[j] == 0.0 and j < len(lens) - 1:
            j += 1
        frac = (s - cum[j]) / lens[j] if lens[j] > 0 else 0.0
        frac = min(max(frac, 0.0), 1.0)
        a = verts[j]
        out[i] = a @ K.exp_skew(frac * K.log_orthogonal(a.T @ verts[j + 1]))
    return out


def refine(path: PolygonPath) -> PolygonPath:
    """Insert geodesic midpoints; the energy is unchanged up to rounding."""
    v = path.vertices
    mids = np.array([a @ K.exp_skew(0.5 * K.log_orthogonal(a.T @ b)) for a, b in zip(v[:-1], v[1:])])
    out = np.empty((2 * path.n + 1,) + v.shape[1:])
    out[0::2] = v
    out[1::2] = mids
    return PolygonPath(out, path.level, path.chain)


@dataclass
class FlowResult:
    path: PolygonPath
    energies: list[float]
    iterations: int
    converged: bool
    perturbations: int = 0


def _tangent_kick(v: np.ndarray, below: Sequence[np.ndarray], level: int, rng) -> np.ndarray:
    x = skew(rng.standard_normal(v.shape))
    if level >= 1:
        x = commutant_projector(below, anticommutant_projector([v], x))
    nx = np.linalg.norm(x)
    return x / nx if nx > 0 else x


def _project(m: np.ndarray, stack: np.ndarray, n_chain: int) -> np.ndarray:
    u, lo = K.project_complex_structure(m, stack, n_chain)
    if lo <= 1e-12:
        raise ValidationError("constraint projection failed: no nearby valid point")
    return u


def shorten_run(
    path: PolygonPath,
    step: float | None = None,
    max_iters: int = 5000,
    mode: str = "birkhoff",
    tol: float = ENERGY_TOL,
    escape_saddles: bool = False,
    target_energy: float = np.pi**2,
    seed: int = 0,
    max_kicks: int = 20,
) -> FlowResult:
    """Curve shortening with full history.

    ``birkhoff`` mode runs Gauss-Seidel geodesic-midpoint sweeps; ``step`` is
    the over-relaxation factor (default ``2 / (1 + sin(pi / n))``).
    ``gradient`` mode takes Riemannian gradient steps of size ``step`` with
    backtracking.  Both accept a change only when the energy drops, so the
    recorded energies never increase unless ``escape_saddles`` injects a
    kick of size ``1e-6`` at a stall above ``target_energy``.
    """
    if mode not in ("birkhoff", "gradient"):
        raise ValidationError(f"unknown mode {mode!r}")
    verts = np.array(path.vertices, dtype=float)
    n = path.n
    stack, n_chain = path.chain_stack()
    project = path.level >= 1
    below = path.chain.below(path.level) if path.chain is not None and path.level >= 1 else ()
    d2 = K.segment_dist2(verts)
    e = n * float(d2.sum())
    energies = [e]
    kicks = 0
    converged = False
    rng = np.random.default_rng(seed)
    omega = step if (mode == "birkhoff" and step is not None) else 2.0 / (1.0 + np.sin(np.pi / max(n, 2)))
    gstep = step if (mode == "gradient" and step is not None) else 0.5 / n
    it = 0
    while it < max_iters:
        it += 1
        if n < 2:
            converged = True
            break
        if mode == "birkhoff":
            acc = K.birkhoff_sweep(verts, d2, omega, stack, n_chain, project)
            if acc < 0:
                raise ValidationError("constraint projection failed: no nearby valid point")
        else:
            acc = _gradient_step(verts, d2, gstep, stack, n_chain, project)
        e_new = n * float(d2.sum())
        energies.append(e_new)
        drop = e - e_new
        e = e_new
        if acc == 0 or drop < tol:
            if escape_saddles and e > target_energy + MINIMAL_BAND and kicks < max_kicks:
                for k in range(1, n):
                    x = _tangent_kick(verts[k], below, path.level, rng)
                    cand = verts[k] @ K.exp_skew(KICK * x)
                    verts[k] = _project(cand, stack, n_chain) if project else cand
                d2 = K.segment_dist2(verts)
                e = n * float(d2.sum())
                energies.append(e)
                kicks += 1
                continue
            converged = True
            break
    out = PolygonPath(verts, path.level, path.chain)
    return FlowResult(out, energies, it, converged, kicks)


def _gradient_step(verts, d2, step, stack, n_chain, project) -> int:
    n = verts.shape[0] - 1
    inner = verts[1:-1]
    fwd = K.log_stack(np.swapaxes(inner, 1, 2) @ verts[2:])
    bwd = K.log_stack(np.swapaxes(inner, 1, 2) @ verts[:-2])
    grad = -2.0 * n * (fwd + bwd) / verts.shape[1]
    e0 = n * float(d2.sum())
    tau = step
    for _ in range(30):
        cand = verts.copy()
        for k in range(1, n):
            c = verts[k] @ K.exp_skew(-tau * grad[k - 1])
            cand[k] = _project(c, stack, n_chain) if project else c
        try:
            d2c = K.segment_dist2(cand)
        except ValueError:
            tau *= 0.5
            continue
        if n * float(d2c.sum()) < e0:
            verts[:] = cand
            d2[:] = d2c
            return n - 1
        tau *= 0.5
    return 0


def shorten(path: PolygonPath, step: float | None = None, max_iters: int = 5000, **kwargs) -> PolygonPath:
    """Shortened polygon (see :func:`shorten_run`)."""
    return shorten_run(path, step, max_iters, **kwargs).path


# ---------------------------------------------------------------------------
# Grids


def sphere_points(d: int, shape: Sequence[int]) -> np.ndarray:
    """Unit vectors in ``R^{d+1}`` at the meridian-coordinate grid nodes."""
    if d < 1 or len(shape) != d:
        raise ValidationError("shape must have one entry per sphere dimension")
    axes = [np.linspace(0.0, 1.0, s) for s in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    out = np.zeros(tuple(shape) + (d + 1,))
    u = mesh[-1]
    prefix = np.ones(tuple(shape))
    for i in range(d - 1):
        t = mesh[i]
        out[..., i] = prefix * np.cos(np.pi * t)
        prefix = prefix * np.sin(np.pi * t)
    out[..., d - 1] = prefix * np.cos(2 * np.pi * u)
    out[..., d] = prefix * np.sin(2 * np.pi * u)
    return out


@dataclass(frozen=True, eq=False)
class MeridianGrid:
    """Samples of a map ``S^k -> P_level`` in meridian coordinates."""

    values: np.ndarray
    level: int = 0

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.ndim < 3 or v.shape[-1] != v.shape[-2]:
            raise ValidationError("values must have shape (n_1, ..., n_k, p, p)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return self.values.ndim - 2

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[:-2]

    @property
    def resolution(self) -> int:
        return self.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[-1]

    @property
    def is_uniform(self) -> bool:
        return len(set(self.shape)) == 1

    def base_value(self) -> np.ndarray:
        return self.values[(0,) * self.k]

    def base_meridian(self) -> np.ndarray:
        return self.values[(slice(None),) + (0,) * (self.k - 1)]

    def max_adjacent_angle(self) -> float:
        v = self.values
        p = self.p
        worst = 0.0
        for ax in range(self.k):
            a = np.moveaxis(v, ax, 0)
            left = a[:-1].reshape(-1, p, p)
            right = a[1:].reshape(-1, p, p)
            for x, y in zip(left, right):
                worst = max(worst, float(K.max_angle(x.T @ y)))
        return worst

    def check_guard(self, limit: float = GRID_GUARD) -> None:
        ang = self.max_adjacent_angle()
        if ang >= limit:
            raise GuardError(f"adjacent grid values differ by angle {ang:.3f} >= {limit:.3f}")


def grid_from_function(
    f: Callable[[np.ndarray], np.ndarray], k: int, resolution: int | Sequence[int], level: int = 0
) -> MeridianGrid:
    """Sample ``f`` (a function of unit vectors in ``R^{k+1}``) on the meridian grid."""
    shape = (resolution,) * k if np.isscalar(resolution) else tuple(resolution)
    pts = sphere_points(k, shape)
    flat = pts.reshape(-1, k + 1)
    vals = np.array([f(x) for x in flat])
    return MeridianGrid(vals.reshape(tuple(shape) + vals.shape[1:]), level)


def hopf_grid(fam: CliffordFamily, resolution: int, level: int = 0) -> MeridianGrid:
    """Level-``l`` Hopf data ``x -> sum_i x_i J_{l+i}`` (``J_0 = I``)."""
    d = fam.k - level
    gens = [np.eye(fam.p) if level == 0 else fam.mats[level - 1]] + list(fam.mats[level:])
    gens = np.array(gens)
    pts = sphere_points(d, (resolution,) * d)
    return MeridianGrid(np.einsum("...a,aij->...ij", pts, gens), level)


def write_grid(grid: MeridianGrid, path) -> None:
    """Binary container: int64 header (k, resolution, p, level), then float64 row-major values."""
    if not grid.is_uniform:
        raise ValidationError("only uniform grids can be serialized")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4q", grid.k, grid.resolution, grid.p, grid.level))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def read_grid(path) -> MeridianGrid:
    with open(path, "rb") as fh:
        head = fh.read(32)
        if len(head) != 32:
            raise ValidationError("truncated grid header")
        k, res, p, level = struct.unpack("<4q", head)
        if k < 1 or res < 2 or p < 1 or level < 0:
            raise ValidationError("invalid grid header")
        data = np.frombuffer(fh.read(), dtype="<f8")
    expect = res**k * p * p
    if data.size != expect:
        raise ValidationError(f"grid payload has {data.size} values, expected {expect}")
    return MeridianGrid(data.reshape((res,) * k + (p, p)).astype(float), int(level))


def refine_grid(grid: MeridianGrid, axes: Sequence[int] | None = None, chain=None) -> MeridianGrid:
    """Insert geodesic midpoints between neighbours along ``axes`` (default: all).

    Between two structures of the same level the group midpoint is also the
    midpoint in the level set, so refined grids stay at their level.
    """
    axes = list(range(grid.k)) if axes is None else list(axes)
    vals = grid.values
    p = grid.p
    project = grid.level >= 1 and chain is not None
    if project:
        chain = chain if isinstance(chain, CentrioleChain) else CentrioleChain(chain)
        stack, n_chain = chain.level_stack(grid.level), grid.level - 1
    for ax in axes:
        a = np.moveaxis(vals, ax, 0)
        left = a[:-1].reshape(-1, p, p)
        right = a[1:].reshape(-1, p, p)
        mids = np.array([x @ K.exp_skew(0.5 * K.log_orthogonal(x.T @ y)) for x, y in zip(left, right)])
        if project:
            mids = np.array([_project(m, stack, n_chain) for m in mids])
        out = np.empty((2 * a.shape[0] - 1,) + a.shape[1:])
        out[0::2] = a
        out[1::2] = mids.reshape(a[1:].shape)
        vals = np.moveaxis(out, 0, ax)
    return MeridianGrid(vals, grid.level)


# ---------------------------------------------------------------------------
# Normalization and desuspension


def _reverse(verts: np.ndarray) -> np.ndarray:
    return verts[::-1]


def _concat(*pieces: np.ndarray) -> np.ndarray:
    out = [pieces[0]]
    for p_ in pieces[1:]:
        out.append(p_[1:])
    return np.concatenate(out)


def straighten_loop(loop: np.ndarray, reference: GeodesicSpec) -> np.ndarray:
    """Path ``reverse(loop) * gamma`` from the loop's base point to ``-J``."""
    loop = np.asarray(loop, dtype=float)
    if maxabs(loop[0] - reference.J) > 1e-8 or maxabs(loop[-1] - loop[0]) > 1e-8:
        raise ValidationError("loop must start and end at the reference start point")
    return _concat(_reverse(loop), reference.sample(max(loop.shape[0] - 1, 2)))


def _meridian_length_nodes(grid: MeridianGrid) -> int:
    return grid.resolution


def is_normalized(grid: MeridianGrid, reference: GeodesicSpec, tol: float = 1e-10) -> bool:
    base = grid.base_meridian()
    ref = reference.sample(base.shape[0] - 1)
    return maxabs(base - ref) <= tol


def _conjugation_lift(c: np.ndarray) -> np.ndarray:
    """Rotations ``g_j`` with ``g_0 = I`` and ``g_j c_0 g_j^T = c_j``.

    Each step is ``exp(log(c_{j+1} c_j^T) / 2)``, the half-rotation along
    the symmetric-space geodesic between neighbouring complex structures.  It
    commutes with every structure both endpoints anticommute with.
    """
    out = np.empty_like(c)
    out[0] = np.eye(c.shape[1])
    for j in range(c.shape[0] - 1):
        step = K.exp_skew(0.5 * K.log_orthogonal(c[j + 1] @ c[j].T))
        out[j + 1] = step @ out[j]
    return out


def _gauge(grid: MeridianGrid, reference: GeodesicSpec) -> tuple[np.ndarray, np.ndarray]:
    """Left and right factors along the meridian parameter.

    Level 0: ``phi -> phi c^T gamma`` (left factor ``I``).  Higher levels:
    ``phi -> g phi g^T`` with ``g = g_gamma g_c^T`` in the centralizer of the
    lower structures.
    """
    n = grid.shape[0]
    c = grid.base_meridian()
    gamma = reference.sample(n - 1)
    if grid.level == 0:
        left = np.broadcast_to(np.eye(grid.p), c.shape).copy()
        right = np.einsum("nji,njk->nik", c, gamma)
        return left, right
    g_gamma = np.array([expm(0.5 * np.pi * t * reference.A) for t in np.linspace(0.0, 1.0, n)])
    g = np.einsum("nij,nkj->nik", g_gamma, _conjugation_lift(c))
    return g, np.transpose(g, (0, 2, 1)).copy()


def _apply_gauge(values: np.ndarray, left: np.ndarray, right: np.ndarray, k: int) -> np.ndarray:
    shape = (left.shape[0],) + (1,) * k + left.shape[1:]
    return np.matmul(np.matmul(left.reshape(shape), values), right.reshape(shape))


def normalize_meridian(
    grid: MeridianGrid,
    reference: GeodesicSpec,
    homotopy_frames: int = 0,
):
    """Homotope a grid so its base meridian is the reference geodesic.

    The correction depends only on the meridian parameter ``t``.  At level 0
    each value is right-multiplied by ``c(t)^T gamma(t)`` (``c`` the base
    meridian, ``gamma`` the reference).  At higher levels each value is
    conjugated by ``g(t) = g_gamma(t) g_c(t)^T``, where ``g_c`` lifts ``c``
    through conjugation and ``g_gamma(t) = exp(pi t A / 2)``.  The poles stay
    put, the grid shape is unchanged, and ``s -> g(s t)`` is the homotopy.
    With ``homotopy_frames > 0`` the intermediate grids are returned too.
    """
    if grid.k < 1:
        raise ValidationError("grid must have positive dimension")
    if maxabs(grid.base_value() - reference.J) > 1e-8:
        raise ValidationError("grid base value differs from the reference start point")
    if grid.k == 1:
        return MeridianGrid(straighten_loop(grid.values, reference), grid.level)
    if is_normalized(grid, reference):
        return (grid, [grid]) if homotopy_frames else grid
    left, right = _gauge(grid, reference)
    vals = _apply_gauge(grid.values, left, right, grid.k - 1)
    vals[0] = reference.J
    vals[-1] = -reference.J
    result = MeridianGrid(vals, grid.level)
    if not homotopy_frames:
        return result
    frames = []
    n = grid.shape[0]
    ts = np.linspace(0.0, 1.0, n)
    lgs = K.log_stack(np.einsum("nji,njk->nik", left[:-1], left[1:]))
    rgs = K.log_stack(np.einsum("nij,nkj->nik", right[:-1], right[1:]))
    for f in range(homotopy_frames + 1):
        s = f / homotopy_frames
        # g(s t) by geodesic interpolation between neighbouring nodes
        lf, rf = np.empty_like(left), np.empty_like(right)
        for j, t in enumerate(ts):
            x = s * t * (n - 1)
            i = min(int(np.floor(x)), n - 2)
            frac = x - i
            lf[j] = left[i] @ K.exp_skew(frac * lgs[i])
            rf[j] = K.exp_skew(frac * rgs[i]) @ right[i]
        frames.append(MeridianGrid(_apply_gauge(grid.values, lf, rf, grid.k - 1), grid.level))
    return result, frames


@dataclass
class StageReport:
    stage: str
    level: int
    energies: list[list[float]]
    final: np.ndarray
    perturbations: int

    def rows(self, offset: int = 0) -> list[tuple]:
        """Trace rows (iteration, stage, max_energy, mean_energy, perturbations_applied)."""
        length = max(len(h) for h in self.energies)
        padded = np.array([h + [h[-1]] * (length - len(h)) for h in self.energies])
        return [
            (offset + i, self.stage, float(padded[:, i].max()), float(padded[:, i].mean()), self.perturbations)
            for i in range(length)
        ]


def _shorten_meridian(args):
    verts, level, chain, seed, escape, max_iters = args
    poly = PolygonPath(verts, level, chain)
    return shorten_run(poly, max_iters=max_iters, escape_saddles=escape, seed=seed)


def _run_meridians(polys: list[np.ndarray], level: int, chain, seed: int, escape: bool, max_iters: int):
    """Shorten many meridians; identical inputs are computed once."""
    keys = {}
    order = []
    jobs = []
    for i, v in enumerate(polys):
        key = v.tobytes()
        if key not in keys:
            keys[key] = len(jobs)
            jobs.append((v, level, chain, seed + 7919 * len(jobs), escape, max_iters))
        order.append(keys[key])
    threads = min(_thread_count(), len(jobs))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_shorten_meridian, jobs))
    else:
        results = [_shorten_meridian(j) for j in jobs]
    return [results[i] for i in order], results


def suspension_invert(
    grid: MeridianGrid,
    chain,
    seed: int = 0,
    escape_saddles: bool = True,
    max_iters: int = 5000,
    report: list | None = None,
) -> MeridianGrid:
    """Shorten every meridian to a minimal geodesic and keep its midpoint."""
    chain = chain if isinstance(chain, CentrioleChain) else CentrioleChain(chain)
    ell = grid.level
    if grid.k < 2:
        raise ValidationError("need a grid of dimension at least 2")
    if ell + 1 > chain.k:
        raise ValidationError("chain too short for the next level")
    ref = reference_geodesic(chain, ell)
    if not is_normalized(grid, ref, tol=1e-8):
        raise ValidationError("grid is not meridian-normalized")
    n_mer = grid.shape[0] - 1
    inner = grid.shape[1:]
    polys = []
    for idx in np.ndindex(*inner):
        v = np.ascontiguousarray(grid.values[(slice(None),) + idx])
        if n_mer % 2:
            v = refine(PolygonPath(v, ell, chain if ell else None)).vertices
        polys.append(np.ascontiguousarray(v))
    results, unique = _run_meridians(polys, ell, chain if ell else None, seed, escape_saddles, max_iters)
    stack, n_chain = chain.level_stack(ell + 1), ell
    mids = np.empty((len(results), grid.p, grid.p))
    finals = np.empty(len(results))
    for i, (idx, res) in enumerate(zip(np.ndindex(*inner), results)):
        e = res.energies[-1]
        finals[i] = e
        if abs(e - np.pi**2) > MINIMAL_BAND:
            raise ConvergenceError(f"meridian {idx} stalled at energy {e:.9f} (minimum pi^2 = {np.pi**2:.9f})")
        v = res.path.vertices
        mids[i] = _project(v[v.shape[0] // 2], stack, n_chain)
    if report is not None:
        report.append(
            StageReport(
                f"level{ell}",
                ell,
                [r.energies for r in unique],
                finals,
                sum(r.perturbations for r in unique),
            )
        )
    out = MeridianGrid(mids.reshape(inner + (grid.p, grid.p)), ell + 1)
    for m in out.values.reshape(-1, grid.p, grid.p)[:1]:
        if not membership(m, chain, ell + 1, tol=1e-8):
            raise ConvergenceError("midpoint failed membership at the next level")
    return out


def geodesic_suspension(grid: MeridianGrid, chain, meridian_nodes: int | None = None) -> MeridianGrid:
    """Grid at level ``l - 1`` with meridians ``cos(pi t) J_{l-1} + sin(pi t) psi(v)``."""
    chain = chain if isinstance(chain, CentrioleChain) else CentrioleChain(chain)
    ell = grid.level
    if ell < 1:
        raise ValidationError("cannot suspend a level-0 grid")
    base = chain.structure(ell - 1)
    n = meridian_nodes or _meridian_length_nodes(grid)
    ts = np.linspace(0.0, 1.0, n)
    c, s = np.cos(np.pi * ts), np.sin(np.pi * ts)
    vals = c[(slice(None),) + (None,) * (grid.k + 2)] * base + s[(slice(None),) + (None,) * (grid.k + 2)] * grid.values[None]
    vals[0] = base
    vals[-1] = -base
    return MeridianGrid(vals, ell - 1)


# ---------------------------------------------------------------------------
# Endgame and full pipeline


def loop_winding(loop: np.ndarray, chain: CentrioleChain, ell: int) -> int:
    """Determinant winding of a closed loop at level ``l = 2 mod 4``."""
    z = embed_loop_in_unitary(loop, chain.fam, ell)
    return int(winding_number_det(z))


@dataclass
class DeformResult:
    affine: AffineHopfMap
    eta: int
    eta_det: int
    trace: list[tuple]
    stages: list[StageReport]
    loop: MeridianGrid


def descend(
    grid: MeridianGrid,
    fam: CliffordFamily,
    seed: int = 0,
    escape_saddles: bool = True,
    max_iters: int = 5000,
    report: list | None = None,
) -> MeridianGrid:
    """Normalize and desuspend a level-0 grid down to a loop at level ``k - 1``."""
    chain = CentrioleChain(fam)
    if grid.level != 0:
        raise ValidationError("descent starts from a level-0 grid")
    if grid.k != fam.k:
        raise ValidationError("grid dimension must equal the family length")
    if maxabs(grid.base_value() - np.eye(grid.p)) > 1e-8:
        raise ValidationError("grid must be based at I")
    if grid.p != fam.p:
        raise ValidationError("grid and family act on different spaces")
    grid.check_guard()
    g = grid
    for ell in range(fam.k - 1):
        g = normalize_meridian(g, reference_geodesic(chain, ell))
        for attempt in range(MAX_REFINEMENTS + 1):
            stage: list = []
            mids = suspension_invert(g, chain, seed=seed + 104729 * ell, escape_saddles=escape_saddles,
                                     max_iters=max_iters, report=stage)
            # the flow can stretch the map; undersampled midpoints carry no homotopy information
            if mids.max_adjacent_angle() < GRID_GUARD:
                break
            if attempt == MAX_REFINEMENTS:
                raise GuardError(
                    f"level-{ell + 1} grid still violates the adjacency guard after "
                    f"{MAX_REFINEMENTS} refinements; sample the input more finely"
                )
            g = refine_grid(g, axes=range(1, g.k), chain=chain)
        if report is not None:
            report.extend(stage)
        g = mids
    return g


def stable_winding_number(grid: MeridianGrid, fam: CliffordFamily, seed: int = 0) -> int:
    """Stable winding of a level-0 grid via descent to a loop."""
    if fam.k % 4 != 3:
        raise ValidationError("stable winding needs k = 3 mod 4")
    loop = descend(grid, fam, seed=seed)
    return loop_winding(loop.values, CentrioleChain(fam), fam.k - 1)


def deform_to_affine_hopf(
    grid: MeridianGrid,
    fam: CliffordFamily,
    d: int | None = None,
    seed: int = 0,
    max_iters: int = 5000,
    escape_saddles: bool = True,
    tol: float = 1e-6,
) -> DeformResult:
    """Deform a based map ``S^k -> SO_p`` (``k = 3 mod 4``) to affine Hopf form.

    When ``d`` is given the winding must satisfy ``s_k d <= eta <= p/4``.
    """
    k = fam.k
    if k % 4 != 3:
        raise ValidationError("the endgame needs k = 3 mod 4")
    if not is_positive(fam):
        raise ValidationError("the family must be positive")
    chain = CentrioleChain(fam)
    stages: list[StageReport] = []
    loop = descend(grid, fam, seed=seed, escape_saddles=escape_saddles, max_iters=max_iters, report=stages)
    ell = k - 1
    eta_det = loop_winding(loop.values, chain, ell)
    if d is not None and not irreducible_dim(k) * d <= eta_det <= grid.p / 4:
        raise ValidationError(f"winding {eta_det} outside [s_k d, p/4] = [{irreducible_dim(k) * d}, {grid.p / 4}]")
    path = straighten_loop(loop.values, reference_geodesic(chain, ell))
    poly = PolygonPath(resample_arclength(path, 2 * (path.shape[0] - 1)), ell, chain)
    res = shorten_run(poly, max_iters=max_iters, escape_saddles=escape_saddles, seed=seed + 1)
    e = res.energies[-1]
    stages.append(StageReport("endgame", ell, [res.energies], np.array([e]), res.perturbations))
    if abs(e - np.pi**2) > MINIMAL_BAND:
        raise ConvergenceError(f"endgame path stalled at energy {e:.9f}")
    v = res.path.vertices
    mid = _project(v[v.shape[0] // 2], chain.level_stack(ell + 1), ell)
    j_ell = chain.structure(ell)
    a_tilde = skew(mid @ j_ell.T)
    i_op = np.eye(grid.p)
    for m in chain.below(ell):
        i_op = i_op @ m
    sym = 0.5 * (a_tilde @ i_op + (a_tilde @ i_op).T)
    evals, evecs = np.linalg.eigh(sym)
    if np.any(np.minimum(np.abs(evals - 1), np.abs(evals + 1)) > 1e-4):
        raise ConvergenceError("endgame generator is not a complex structure commuting with i")
    b1 = evecs[:, evals > 0]
    b0 = evecs[:, evals < 0]
    proj1 = b1 @ b1.T
    worst = max(maxabs(proj1 @ j - j @ proj1) for j in fam.mats)
    if worst > tol:
        raise ConvergenceError(f"splitting is not Clifford-invariant (residual {worst:.2e})")
    # exact invariant subspace: re-orthonormalize the projector
    fam1 = None
    if b1.shape[1]:
        fam1 = CliffordFamily(tuple(b1.T @ j @ b1 for j in fam.mats), tol=max(tol, 1e-8))
    affine = AffineHopfMap(b0, b1, fam1, k)
    eta = affine.eta
    if eta != eta_det:
        raise ConvergenceError(f"winding not conserved: det {eta_det} vs splitting {eta}")
    trace = []
    offset = 0
    for st in stages:
        rows = st.rows(offset)
        trace.extend(rows)
        offset += len(rows)
    return DeformResult(affine, eta, eta_det, trace, stages, loop)


# ---------------------------------------------------------------------------
# Fixtures


def perturbed_affine_fixture(
    p: int = 8, eps: float = 0.05, resolution: int = 16, seed: int = 0
) -> tuple[MeridianGrid, CliffordFamily]:
    """Identity on the first half plus a quaternion Hopf map on the second, perturbed.

    The family is left multiplication by i, j, k on ``H^{p/4}``; the map is
    ``exp(eps X(x)) (I + mu(x))`` with ``X(x) = (1 - x_0) B_0 + sum x_i B_i``.
    """
    from .clifford_core import build_irreducible, direct_sum

    if p % 8:
        raise ValidationError("p must be a multiple of 8")
    fam = direct_sum(*([build_irreducible(3)] * (p // 4)))
    half = p // 2
    rng = np.random.default_rng(seed)
    bs = [skew(rng.standard_normal((p, p))) for _ in range(4)]
    bs = [b / np.linalg.norm(b, 2) for b in bs]

    def f(x: np.ndarray) -> np.ndarray:
        hop = x[0] * np.eye(half)
        for xi, j in zip(x[1:], fam.mats):
            hop = hop + xi * j[half:, half:]
        m = np.eye(p)
        m[half:, half:] = hop
        xm = (1.0 - x[0]) * bs[0] + sum(xi * b for xi, b in zip(x[1:], bs[1:]))
        return K.exp_skew(eps * xm) @ m

    return grid_from_function(f, 3, resolution), fam
