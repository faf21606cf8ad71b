"""Vector bundles over ``S^n`` (``n = 4m``) as clutching triples ``(E+, sigma, E-)``.

Both halves are trivialized with fiber ``R^p``; ``sigma`` is a based map
``S^{n-1} -> SO_p`` sampled on a meridian grid, or given analytically as the
Hopf map of a positive family.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import null_space

from .clifford_core import (
    CliffordFamily,
    build_irreducible,
    direct_sum,
    irreducible_dim,
    is_positive,
    positive_part_family,
    split_by_volume,
)
from .errors import PaddingCapError, ValidationError
from .path_flow import (
    MeridianGrid,
    deform_to_affine_hopf,
    hopf_grid,
    read_grid,
    sphere_points,
    write_grid,
)
from ._linalg import maxabs

DEFAULT_RESOLUTION = 12
DEFAULT_PADDING_CAP = 64
# sampled grids of S^{n-1} are only built for n = 4
MAX_SAMPLED_DIM = 3


@dataclass(frozen=True, eq=False)
class ClutchingTriple:
    """Bundle over ``S^n`` glued from two trivial halves by ``sigma``.

    ``hopf`` (when set) is a positive ``Cl_{n-1}``-family whose Hopf map
    ``x -> x_0 I + sum x_i J_i`` is the clutching map; ``sigma`` may then be
    omitted and is sampled on demand.  ``reference`` is the positive family
    whose chain the deformation descends along; it defaults to ``hopf``.  The
    descent is only reliable when the reference matches the data near the
    base meridian, so sums keep the references of their summands.
    """

    n: int
    e_plus_dim: int
    e_minus_dim: int
    sigma: MeridianGrid | None = None
    hopf: CliffordFamily | None = None
    reference: CliffordFamily | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValidationError("base sphere dimension must be positive")
        if self.e_plus_dim != self.e_minus_dim:
            raise ValidationError("both halves must have the same fiber dimension")
        p = self.e_plus_dim
        if self.sigma is None and self.hopf is None:
            raise ValidationError("need a sampled clutching map or a Hopf family")
        if self.sigma is not None:
            s = self.sigma
            if s.level != 0 or s.k != self.n - 1 or s.p != p:
                raise ValidationError("sigma must be a level-0 grid of S^{n-1} in SO_p")
            if maxabs(s.base_value() - np.eye(p)) > 1e-8:
                raise ValidationError("sigma must be based: sigma(e_1) = I")
        if self.hopf is not None:
            if self.hopf.k != self.n - 1 or self.hopf.p != p:
                raise ValidationError("Hopf family must have length n - 1 on R^p")
        ref = self.reference
        if ref is not None and (ref.k != self.n - 1 or ref.p != p or not is_positive(ref)):
            raise ValidationError("reference must be a positive family of length n - 1 on R^p")

    def descent_family(self) -> CliffordFamily | None:
        """Reference family for the descent, when one is known."""
        if self.reference is not None:
            return self.reference
        if self.hopf is not None and is_positive(self.hopf):
            return self.hopf
        s = irreducible_dim(self.n - 1)
        if self.p % s == 0:
            return direct_sum(*[build_irreducible(self.n - 1)] * (self.p // s))
        return None

    @property
    def p(self) -> int:
        return self.e_plus_dim

    def grid(self, resolution: int = DEFAULT_RESOLUTION) -> MeridianGrid:
        if self.sigma is not None:
            return self.sigma
        if self.n - 1 > MAX_SAMPLED_DIM:
            raise ValidationError(f"sampling S^{self.n - 1} is out of reach; use the analytic form")
        return hopf_grid(self.hopf, resolution)

    def conjugate(self, q: np.ndarray) -> "ClutchingTriple":
        """Triple with ``sigma`` replaced by ``q sigma q^T``."""
        q = np.asarray(q, dtype=float)
        sig = None if self.sigma is None else MeridianGrid(q @ self.sigma.values @ q.T)
        hop = None if self.hopf is None else self.hopf.conjugate(q)
        ref = None if self.reference is None else self.reference.conjugate(q)
        return ClutchingTriple(self.n, self.p, self.p, sig, hop, ref)

    def to_dict(self, grid_path: str | None = None) -> dict:
        out: dict = {"n": self.n, "e_plus_dim": self.e_plus_dim, "e_minus_dim": self.e_minus_dim}
        if self.hopf is not None:
            out["hopf"] = self.hopf.to_dict()
        if self.reference is not None:
            out["reference"] = self.reference.to_dict()
        if self.sigma is not None:
            if grid_path is None:
                raise ValidationError("a grid path is needed to serialize sigma")
            write_grid(self.sigma, grid_path)
            out["sigma"] = str(grid_path)
        return out

    def save(self, path, grid_path=None) -> None:
        path = Path(path)
        if self.sigma is not None and grid_path is None:
            grid_path = path.with_suffix(".grid")
        data = self.to_dict(str(grid_path) if grid_path else None)
        if grid_path is not None:
            # relative reference keeps the container portable
            data["sigma"] = str(Path(grid_path).name) if Path(grid_path).parent == path.parent else str(grid_path)
        path.write_text(json.dumps(data, indent=2, sort_keys=True))

    @classmethod
    def from_dict(cls, data: dict, root=None) -> "ClutchingTriple":
        try:
            n = int(data["n"])
            ep, em = int(data["e_plus_dim"]), int(data["e_minus_dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed triple: {exc}") from exc
        hop = CliffordFamily.from_dict(data["hopf"]) if "hopf" in data else None
        ref = CliffordFamily.from_dict(data["reference"]) if "reference" in data else None
        sig = None
        if "sigma" in data:
            gp = Path(data["sigma"])
            if root is not None and not gp.is_absolute():
                gp = Path(root) / gp
            sig = read_grid(gp)
        return cls(n, ep, em, sig, hop, ref)

    @classmethod
    def load(cls, path) -> "ClutchingTriple":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), root=path.parent)


def trivial_triple(p: int, n: int = 4, resolution: int = DEFAULT_RESOLUTION) -> ClutchingTriple:
    vals = np.broadcast_to(np.eye(p), (resolution,) * (n - 1) + (p, p))
    return ClutchingTriple(n, p, p, MeridianGrid(vals))


def hopf_triple(fam: CliffordFamily, resolution: int | None = DEFAULT_RESOLUTION) -> ClutchingTriple:
    """Hopf bundle of a ``Cl_n``-module in the gauge ``mu(e_1)^{-1} mu``.

    The clutching map is the Hopf map of the positive family
    ``e_i -> -J_1 J_{i+1}`` on the ``+1`` eigenspace of the volume element.
    It is sampled for ``n = 4`` (unless ``resolution`` is None) and kept
    analytic otherwise.
    """
    n = fam.k
    if n == 0 or n % 4:
        raise ValidationError("Hopf bundles need n = 0 mod 4")
    plus = positive_part_family(fam)
    sig = None
    if resolution is not None and n - 1 <= MAX_SAMPLED_DIM:
        sig = hopf_grid(plus, resolution)
    return ClutchingTriple(n, plus.p, plus.p, sig, plus)


def hopf_eta(fam: CliffordFamily) -> int:
    """Winding of the Hopf bundle of ``fam``: a quarter of the module dimension."""
    if fam.k == 0 or fam.k % 4:
        raise ValidationError("Hopf bundles need n = 0 mod 4")
    plus, minus = split_by_volume(fam)
    if plus.shape[1] != minus.shape[1]:
        raise ValidationError("volume eigenspaces have different dimensions")
    return fam.p // 4


def _block_grid(values: np.ndarray, blocks: list[np.ndarray]) -> np.ndarray:
    """Block-diagonal sum over the grid nodes."""
    shape = values.shape[:-2]
    sizes = [values.shape[-1]] + [b.shape[-1] for b in blocks]
    total = sum(sizes)
    out = np.zeros(shape + (total, total))
    off = 0
    for v in [values] + blocks:
        s = v.shape[-1]
        out[..., off : off + s, off : off + s] = v
        off += s
    return out


@dataclass(frozen=True)
class Padding:
    trivial: int
    hopf_blocks: int
    block_dim: int
    block_eta: int

    @property
    def eta(self) -> int:
        return self.hopf_blocks * self.block_eta

    def size(self, p: int) -> int:
        return p + self.trivial + self.hopf_blocks * self.block_dim


def _required_padding(p: int, eta: int, d: int, k: int) -> Padding:
    """Smallest padding with ``s_k d <= eta' <= p'/4`` and ``s_k | p'``."""
    s = irreducible_dim(k)
    half = s // 2
    b = max(0, math.ceil((s * d - eta) / half))
    eta2 = eta + b * half
    size = p + b * s
    target = max(size, 4 * eta2)
    target = -(-target // s) * s
    return Padding(target - size, b, s, half)


def _padded_setup(t: ClutchingTriple, pad: Padding, resolution: int):
    k = t.n - 1
    grid = t.grid(resolution)
    irr = build_irreducible(k)
    pts = sphere_points(k, grid.shape)
    gens = np.array([np.eye(irr.p)] + list(irr.mats))
    hop_vals = np.einsum("...a,aij->...ij", pts, gens)
    blocks = [np.broadcast_to(np.eye(pad.trivial), grid.shape + (pad.trivial,) * 2)] if pad.trivial else []
    blocks += [hop_vals] * pad.hopf_blocks
    vals = _block_grid(grid.values, blocks) if blocks else grid.values
    size = vals.shape[-1]
    base_fam = t.descent_family()
    rest = size - t.p if base_fam is not None else size
    if rest % irr.p:
        raise ValidationError("padded size is not a multiple of the irreducible dimension")
    parts = ([base_fam] if base_fam is not None else []) + [irr] * (rest // irr.p)
    fam = direct_sum(*parts)
    return MeridianGrid(vals), fam


@dataclass
class StableInvariants:
    rank: int
    eta: int
    padding: Padding
    eta_padded: int


def stable_invariants_full(
    t: ClutchingTriple,
    d: int = 0,
    resolution: int = DEFAULT_RESOLUTION,
    cap: int = DEFAULT_PADDING_CAP,
    seed: int = 0,
    max_iters: int = 5000,
) -> StableInvariants:
    """Stable invariants with the padding bookkeeping exposed.

    The winding is measured once at the smallest admissible size.  If the
    deformation hypotheses ``s_k d <= eta <= p/4`` fail there, trivial and
    Hopf blocks are added and the deformation is rerun with the check on.
    The padding's own winding is subtracted at the end.
    """
    if t.n % 4:
        raise ValidationError("stable invariants need n = 0 mod 4")
    if d < 0:
        raise ValidationError("d must be non-negative")
    k = t.n - 1
    s = irreducible_dim(k)
    if t.sigma is None and t.hopf is not None and is_positive(t.hopf):
        eta = t.p // 2
        pad = _required_padding(t.p, eta, d, k)
        if pad.size(t.p) > cap:
            raise PaddingCapError(f"padding to {pad.size(t.p)} exceeds the cap {cap}")
        return StableInvariants(t.p, eta, pad, eta + pad.eta)
    first = Padding((-t.p) % s, 0, s, s // 2)
    if first.size(t.p) > cap:
        raise PaddingCapError(f"padding to {first.size(t.p)} exceeds the cap {cap}")
    grid, fam = _padded_setup(t, first, resolution)
    eta = deform_to_affine_hopf(grid, fam, seed=seed, max_iters=max_iters).eta
    pad = _required_padding(t.p, eta, d, k)
    if pad.size(t.p) > cap:
        raise PaddingCapError(f"hypotheses need size {pad.size(t.p)}, above the cap {cap}")
    if pad != first:
        grid, fam = _padded_setup(t, pad, resolution)
        eta2 = deform_to_affine_hopf(grid, fam, d=d, seed=seed, max_iters=max_iters).eta
        if eta2 - pad.eta != eta:
            raise ValidationError(f"winding changed under padding: {eta} vs {eta2 - pad.eta}")
    return StableInvariants(t.p, eta, pad, eta + pad.eta)


def stable_invariants(t: ClutchingTriple, d: int = 0, **kwargs) -> tuple[int, int]:
    """``(rank, eta)``; equal pairs mean stably isomorphic at a point."""
    r = stable_invariants_full(t, d, **kwargs)
    return r.rank, r.eta


def stably_isomorphic(a: ClutchingTriple, b: ClutchingTriple, d: int = 0, **kwargs) -> bool:
    return stable_invariants(a, d, **kwargs) == stable_invariants(b, d, **kwargs)


def direct_sum_triples(*ts: ClutchingTriple) -> ClutchingTriple:
    if not ts:
        raise ValidationError("need at least one triple")
    n = ts[0].n
    if any(t.n != n for t in ts):
        raise ValidationError("triples live over different spheres")
    p = sum(t.p for t in ts)
    hop = None
    if all(t.hopf is not None for t in ts):
        hop = direct_sum(*(t.hopf for t in ts))
    refs = [t.descent_family() for t in ts]
    ref = direct_sum(*refs) if all(r is not None for r in refs) else None
    sig = None
    if any(t.sigma is not None for t in ts) or hop is None:
        grids = [t.grid() for t in ts]
        if len({g.shape for g in grids}) != 1:
            raise ValidationError("grids have different shapes")
        sig = MeridianGrid(_block_grid(grids[0].values, [g.values for g in grids[1:]]))
    return ClutchingTriple(n, p, p, sig, hop, ref)


# ---------------------------------------------------------------------------
# Twisting bundle of a module


def _field_dim(k: int) -> int:
    s = build_irreducible(k)
    return _hom_dim(s, s)


# the dense commutant system has a*b unknowns and k*a*b equations
DENSE_HOM_LIMIT = 1024


def _volume(fam: CliffordFamily) -> np.ndarray:
    w = np.eye(fam.p)
    for m in fam.mats:
        w = w @ m
    return w


def _hom_dim(src: CliffordFamily, dst: CliffordFamily, tol: float = 1e-8) -> int:
    """Real dimension of ``{X : dst_i X = X src_i}``.

    Small cases solve the commutant equations directly.  Larger ones use the
    character pairing over the group ``{+-J_I}``: every ``J_I`` except ``I``
    and the full volume element anticommutes with some generator and is
    traceless, so only two terms survive.
    """
    a, b, k = src.p, dst.p, src.k
    if k == 0:
        return a * b
    if a * b <= DENSE_HOM_LIMIT:
        rows = [np.kron(np.eye(a), dj) - np.kron(sj.T, np.eye(b)) for sj, dj in zip(src.mats, dst.mats)]
        return null_space(np.vstack(rows), rcond=tol).shape[1]
    total = float(a * b)
    if k % 2:
        total += float(np.trace(_volume(src))) * float(np.trace(_volume(dst)))
    value = total / 2**k
    if abs(value - round(value)) > 1e-6:
        raise ValidationError("character pairing is not an integer")
    return int(round(value))


FIELD_NAMES = {1: "real", 2: "complex", 4: "quaternionic"}


def twist_decompose_fiber(fam: CliffordFamily) -> tuple[int, str]:
    """Dimension of ``Hom_{Cl_n}(S_n, L)`` over the commutant field of ``S_n``."""
    n = fam.k
    if n % 4 == 3:
        raise ValidationError("two irreducible classes for n = 3 mod 4; decompose by class instead")
    fdim = _field_dim(n)
    field = FIELD_NAMES[fdim]
    if fam.p == 0:
        return 0, field
    s = build_irreducible(n)
    real = _hom_dim(s, fam)
    if real % fdim:
        raise ValidationError(f"intertwiner space of real dimension {real} is not a {field} space")
    e_dim = real // fdim
    if e_dim * s.p != fam.p:
        raise ValidationError(f"intertwiners give {e_dim} copies of S_{n}, not {fam.p}/{s.p}")
    return e_dim, field

