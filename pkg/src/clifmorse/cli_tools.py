"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 no convergence, 64 usage error.
JSON and CSV outputs are deterministic for a fixed configuration and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .errors import ConvergenceError, ValidationError

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_USAGE = 64

TRACE_COLUMNS = ("iteration", "stage", "max_energy", "mean_energy", "perturbations_applied")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    tol: float = 1e-8
    resolution: int = 16
    segments: int = 24
    step: float | None = None
    max_iters: int = 5000
    seed: int = 0
    out_dir: str = "."

    def __post_init__(self) -> None:
        for name in ("tol", "resolution", "segments", "max_iters"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.step is not None and not self.step > 0:
            raise ValidationError("step must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")

    @classmethod
    def from_sources(cls, args: argparse.Namespace) -> "RunConfig":
        values: dict = {}
        if getattr(args, "config", None):
            try:
                data = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ValidationError(f"cannot read config: {exc}") from exc
            known = {f.name for f in fields(cls)}
            unknown = set(data) - known
            if unknown:
                raise ValidationError(f"unknown config keys: {sorted(unknown)}")
            values.update(data)
        for f in fields(cls):
            v = getattr(args, f.name, None)
            if v is not None:
                values[f.name] = v
        return cls(**values)

    def path(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else Path(self.out_dir) / p


# ---------------------------------------------------------------------------
# Serialization helpers


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return str(obj) if obj.denominator != 1 else obj.numerator
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"


def emit(data, cfg: RunConfig, out: str | None, stream) -> None:
    text = dumps(data)
    if out:
        target = cfg.path(out)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    else:
        stream.write(text)


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def write_trace(rows: Sequence[tuple], cfg: RunConfig, out: str | None) -> None:
    if out:
        target = cfg.path(out)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(csv_text(TRACE_COLUMNS, rows))


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def read_loop(path: str) -> np.ndarray:
    """Loop container: ``{"samples": n, "real": [...], "imag": [...]}``."""
    data = _read_json(path)
    try:
        z = np.asarray(data["real"], dtype=float) + 1j * np.asarray(data.get("imag", 0.0), dtype=float)
        n = int(data["samples"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed loop: {exc}") from exc
    if z.ndim != 3 or z.shape[0] != n or z.shape[1] != z.shape[2]:
        raise ValidationError("loop must hold `samples` square matrices")
    return z


def write_loop(loop: np.ndarray, path) -> None:
    z = np.asarray(loop, dtype=complex)
    Path(path).write_text(dumps({"samples": int(z.shape[0]), "real": z.real, "imag": z.imag}))


def _load_family(path: str):
    from .clifford_core import CliffordFamily

    return CliffordFamily.from_dict(_read_json(path))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_clifford(args, cfg: RunConfig, out) -> int:
    from .clifford_core import build_irreducible, decompose_module, volume_element

    if args.action == "build":
        fam = build_irreducible(args.n, negative=args.negative)
        emit(fam.to_dict(), cfg, args.out, out)
        return EXIT_OK
    fam = _load_family(args.family)
    res = fam.residuals()
    report = {
        "k": fam.k,
        "p": fam.p,
        "residuals": res,
        "valid": fam.is_valid(),
        "classes": list(decompose_module(fam).multiplicities),
    }
    if fam.k:
        w = volume_element(fam)
        report["volume_square_sign"] = int(np.sign(np.trace(w @ w)))
    emit(report, cfg, args.out, out)
    return EXIT_OK if report["valid"] else EXIT_VALIDATION


def cmd_hopf(args, cfg: RunConfig, out) -> int:
    from .clifford_core import build_irreducible, direct_sum
    from .hopf_geometry import HopfMap, evaluate_hopf, winding_number_det
    from .path_flow import hopf_grid, stable_winding_number

    if args.action == "evaluate":
        fam = _load_family(args.family)
        pt = np.array([float(x) for x in args.point.split(",")])
        emit({"value": evaluate_hopf(HopfMap(fam), pt)}, cfg, args.out, out)
        return EXIT_OK
    if args.action == "winding":
        loop = read_loop(args.input)
        emit({"samples": int(loop.shape[0]), "winding": winding_number_det(loop)}, cfg, args.out, out)
        return EXIT_OK
    fam = direct_sum(*([build_irreducible(args.n)] * args.copies))
    grid = hopf_grid(fam, cfg.resolution)
    eta = stable_winding_number(grid, fam, seed=cfg.seed)
    emit({"n": args.n, "p": fam.p, "eta": eta, "expected": fam.p // 2}, cfg, args.out, out)
    return EXIT_OK


def cmd_centriole(args, cfg: RunConfig, out) -> int:
    from .centriole_chains import CentrioleChain, GeodesicSpec, membership, reference_geodesic
    from .geodesic_index import k_spectrum, winding_of_geodesic

    fam = _load_family(args.family)
    chain = CentrioleChain(fam)
    if args.action == "reference":
        g = reference_geodesic(chain, args.level)
        emit(g.to_dict(), cfg, args.out, out)
        return EXIT_OK
    g = GeodesicSpec.from_dict(_read_json(args.geodesic), chain=chain, tol=cfg.tol)
    report = {
        "level": g.level,
        "energy": g.energy,
        "k_spectrum": k_spectrum(g).as_list(),
        "endpoint_member": bool(membership(g.J, chain, g.level, cfg.tol)) if g.level else True,
    }
    if g.level % 4 == 2 or g.level == 0:
        report["winding"] = winding_of_geodesic(g, "centriole_b" if g.level else "unitary")
    emit(report, cfg, args.out, out)
    return EXIT_OK


def cmd_index(args, cfg: RunConfig, out) -> int:
    from .centriole_chains import CentrioleChain, GeodesicSpec
    from .geodesic_index import hessian_spectrum, index_lower_bound, k_spectrum, spec_from_ks, winding_of_geodesic

    if args.ks:
        g = spec_from_ks([int(x) for x in args.ks.split(",")])
    else:
        chain = CentrioleChain(_load_family(args.family)) if args.family else None
        g = GeodesicSpec.from_dict(_read_json(args.geodesic), chain=chain, tol=cfg.tol)
    ctx = args.context
    res = hessian_spectrum(g, cfg.segments, ctx)
    report = {
        "context": ctx,
        "k_spectrum": k_spectrum(g, ctx).as_list(),
        "lower_bound": index_lower_bound(g, ctx),
        "oracle": res.index,
        "nullity": res.nullity,
        "segments": cfg.segments,
    }
    if ctx in ("unitary", "centriole_b"):
        report["winding"] = winding_of_geodesic(g, ctx)
    emit(report, cfg, args.out, out)
    return EXIT_OK if res.index >= report["lower_bound"] else EXIT_FAIL


def cmd_flow(args, cfg: RunConfig, out) -> int:
    from .centriole_chains import GeodesicSpec
    from .geodesic_index import spec_from_ks
    from .path_flow import PolygonPath, shorten_run
    from ._linalg import skew
    from . import _kernels as K

    if args.ks:
        g = spec_from_ks([int(x) for x in args.ks.split(",")])
    else:
        g = GeodesicSpec.from_dict(_read_json(args.geodesic), tol=cfg.tol)
    if g.level != 0:
        raise ValidationError("the flow subcommand works on level-0 geodesics")
    verts = g.sample(cfg.segments)
    rng = np.random.default_rng(cfg.seed)
    for i in range(1, cfg.segments):
        x = skew(rng.standard_normal(verts[i].shape))
        verts[i] = verts[i] @ K.exp_skew(args.noise * x / np.linalg.norm(x))
    res = shorten_run(PolygonPath(verts), step=cfg.step, max_iters=cfg.max_iters, mode=args.mode)
    e = np.array(res.energies)
    monotone = bool(np.all(np.diff(e) <= 0.0))
    rows = [(i, "shorten", float(v), float(v), res.perturbations) for i, v in enumerate(res.energies)]
    write_trace(rows, cfg, args.trace)
    report = {
        "initial_energy": float(e[0]),
        "final_energy": float(e[-1]),
        "iterations": res.iterations,
        "converged": res.converged,
        "monotone": monotone,
    }
    emit(report, cfg, args.out, out)
    if abs(e[-1] - g.energy) > args.energy_tol:
        raise ConvergenceError(f"final energy {e[-1]:.12g} differs from {g.energy:.12g}")
    return EXIT_OK


def cmd_deform(args, cfg: RunConfig, out) -> int:
    from .path_flow import deform_to_affine_hopf, perturbed_affine_fixture, read_grid

    if args.grid:
        if not args.family:
            raise ValidationError("--grid needs --family")
        grid, fam = read_grid(args.grid), _load_family(args.family)
    else:
        grid, fam = perturbed_affine_fixture(args.p, args.eps, cfg.resolution, seed=cfg.seed)
    res = deform_to_affine_hopf(grid, fam, d=args.d, seed=cfg.seed, max_iters=cfg.max_iters)
    write_trace(res.trace, cfg, args.trace)
    if args.emit_trace:
        offset = 0
        for st in res.stages:
            rows = st.rows(offset)
            offset += len(rows)
            write_trace(rows, cfg, str(Path(args.emit_trace) / f"{st.stage}.csv"))
    data = res.affine.to_dict()
    data["eta"] = res.eta
    data["eta_det"] = res.eta_det
    emit(data, cfg, args.out, out)
    return EXIT_OK


def cmd_bundle(args, cfg: RunConfig, out) -> int:
    from .clifford_core import build_irreducible
    from .clutching_sphere import ClutchingTriple, hopf_triple, stable_invariants_full, twist_decompose_fiber

    if args.action == "hopf":
        t = hopf_triple(build_irreducible(args.n), resolution=cfg.resolution)
        if not args.out:
            raise ValidationError("bundle hopf needs --out")
        target = cfg.path(args.out)
        target.parent.mkdir(parents=True, exist_ok=True)
        t.save(target)
        return EXIT_OK
    if args.action == "fiber":
        e_dim, field = twist_decompose_fiber(_load_family(args.family))
        emit({"E_dim": e_dim, "field": field}, cfg, args.out, out)
        return EXIT_OK
    t = ClutchingTriple.load(args.triple)
    r = stable_invariants_full(t, args.d, resolution=cfg.resolution, cap=args.cap, seed=cfg.seed,
                               max_iters=cfg.max_iters)
    data = {
        "rank": r.rank,
        "eta": r.eta,
        "padding": {"trivial": r.padding.trivial, "hopf_blocks": r.padding.hopf_blocks},
        "eta_padded": r.eta_padded,
    }
    emit(data, cfg, args.out, out)
    return EXIT_OK


def cmd_ktheory(args, cfg: RunConfig, out) -> int:
    from .ktheory_tables import restriction_matrix, table_rows

    if args.action == "restriction":
        emit({"n": args.n, "matrix": restriction_matrix(args.n)}, cfg, args.out, out)
        return EXIT_OK
    rows = table_rows(args.max)
    if args.format == "json":
        emit(rows, cfg, args.out, out)
        return EXIT_OK
    header = ("n", "s_n", "classes", "rank", "torsion", "group")
    text = csv_text(
        header,
        [(r["n"], r["s_n"], r["classes"], r["rank"], " ".join(map(str, r["torsion"])), r["group"]) for r in rows],
    )
    if args.out:
        target = cfg.path(args.out)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    else:
        out.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Self test


def _selftest_checks() -> list[tuple[str, Callable[[], bool]]]:
    from .clifford_core import build_irreducible, irreducible_dim, volume_element
    from .clutching_sphere import twist_decompose_fiber
    from .geodesic_index import hessian_index_oracle, index_lower_bound, spec_from_ks
    from .hopf_geometry import winding_number_det
    from .ktheory_tables import cokernel_table, dimension_table
    from .path_flow import PolygonPath, shorten_run
    from ._linalg import skew
    from . import _kernels as K

    def relations() -> bool:
        return all(build_irreducible(n).is_valid() and build_irreducible(n).p == irreducible_dim(n) for n in range(1, 17))

    def volume() -> bool:
        for n in range(1, 13):
            w = volume_element(build_irreducible(n))
            sign = (-1) ** (n * (n + 1) // 2)
            if np.max(np.abs(w @ w - sign * np.eye(w.shape[0]))) > 1e-10:
                return False
        return True

    def tables() -> bool:
        t = cokernel_table(16)
        return all(str(t[n]) == str(t[n + 8]) for n in range(9)) and all(
            t[n].is_trivial for n in range(17) if n % 4 == 3
        ) and dimension_table(16) == [irreducible_dim(n) for n in range(17)]

    def winding() -> bool:
        ts = np.linspace(0.0, 1.0, 65)
        loop = np.array([np.diag(np.exp(2j * np.pi * t * np.array([1, 2]))) for t in ts])
        return winding_number_det(loop) == 3

    def index() -> bool:
        g = spec_from_ks([3, 1])
        return hessian_index_oracle(g, 24, "so") >= index_lower_bound(g, "so") == 2

    def flow() -> bool:
        g = spec_from_ks([1, 1, 1, 1])
        verts = g.sample(16)
        rng = np.random.default_rng(0)
        for i in range(1, 16):
            x = skew(rng.standard_normal((8, 8)))
            verts[i] = verts[i] @ K.exp_skew(1e-2 * x / np.linalg.norm(x))
        res = shorten_run(PolygonPath(verts))
        e = np.array(res.energies)
        return bool(np.all(np.diff(e) <= 0.0)) and abs(e[-1] - np.pi**2) < 1e-8

    def fiber() -> bool:
        return twist_decompose_fiber(build_irreducible(4)) == (1, "quaternionic")

    return [
        ("clifford relations n <= 16", relations),
        ("volume element squares n <= 12", volume),
        ("periodicity tables", tables),
        ("determinant winding", winding),
        ("index oracle vs bound", index),
        ("monotone shortening", flow),
        ("fiber decomposition", fiber),
    ]


def cmd_selftest(args, cfg: RunConfig, out) -> int:
    failures = 0
    checks = _selftest_checks()
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok = bool(fn())
            detail = ""
        except (ValidationError, ConvergenceError) as exc:
            ok, detail = False, f" ({exc})"
        failures += not ok
        out.write(f"{'PASS' if ok else 'FAIL'} {name} [{time.perf_counter() - t0:.2f}s]{detail}\n")
    out.write(f"{len(checks) - failures}/{len(checks)} checks passed\n")
    return EXIT_OK if failures == 0 else EXIT_FAIL


# ---------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--tol", type=float)
    p.add_argument("--resolution", type=int)
    p.add_argument("--segments", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clifmorse", description="Clifford modules, centrioles and energy flows on SO_p.")
    parser.add_argument("--version", action="version", version=f"clifmorse {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("clifford", help="build or check Clifford families")
    _common(p)
    p.add_argument("action", choices=["build", "check"])
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--negative", action="store_true")
    p.add_argument("--family")
    p.set_defaults(func=cmd_clifford)

    p = sub.add_parser("hopf", help="evaluate Hopf maps or measure their winding")
    _common(p)
    p.add_argument("action", choices=["evaluate", "winding", "sphere"])
    p.add_argument("--family")
    p.add_argument("--input", help="loop JSON: samples, real, imag")
    p.add_argument("--point")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--copies", type=int, default=1)
    p.set_defaults(func=cmd_hopf)

    p = sub.add_parser("centriole", help="reference geodesics and membership checks")
    _common(p)
    p.add_argument("action", choices=["reference", "check"])
    p.add_argument("--family", required=True)
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--geodesic")
    p.set_defaults(func=cmd_centriole)

    p = sub.add_parser("index", help="Morse index oracle vs lower bound")
    _common(p)
    p.add_argument("--geodesic", "--spec", dest="geodesic")
    p.add_argument("--family")
    p.add_argument("--ks", help="comma-separated odd integers, e.g. 3,1")
    p.add_argument("--context", default="so", choices=["so", "unitary", "centriole_a", "centriole_b"])
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("flow", help="shorten a perturbed geodesic polygon")
    _common(p)
    p.add_argument("--geodesic")
    p.add_argument("--ks")
    p.add_argument("--noise", type=float, default=1e-2)
    p.add_argument("--mode", choices=["birkhoff", "gradient"], default="birkhoff")
    p.add_argument("--energy-tol", dest="energy_tol", type=float, default=1e-8)
    p.add_argument("--trace")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("deform", help="deform a sphere map to affine Hopf form")
    _common(p)
    p.add_argument("--grid", "--input", dest="grid")
    p.add_argument("--family")
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--d", type=int)
    p.add_argument("--trace", help="combined trace CSV")
    p.add_argument("--emit-trace", dest="emit_trace", help="directory for per-stage trace CSVs")
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("bundle", help="clutching triples over spheres")
    _common(p)
    p.add_argument("action", choices=["invariants", "hopf", "fiber"])
    p.add_argument("--triple")
    p.add_argument("--family")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--d", type=int, default=0)
    p.add_argument("--cap", type=int, default=64)
    p.set_defaults(func=cmd_bundle)

    p = sub.add_parser("ktheory", help="restriction matrices and periodicity tables")
    _common(p)
    p.add_argument("action", choices=["table", "restriction"])
    p.add_argument("--max", type=int, default=16)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_ktheory)

    p = sub.add_parser("selftest", help="run the built-in property checks")
    _common(p)
    p.set_defaults(func=cmd_selftest)
    return parser


_REQUIRED = {
    ("clifford", "check"): ("family",),
    ("hopf", "evaluate"): ("family", "point"),
    ("hopf", "winding"): ("input",),
    ("centriole", "check"): ("geodesic",),
    ("bundle", "invariants"): ("triple",),
    ("bundle", "fiber"): ("family",),
}


def run_subcommand(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
        for key in _REQUIRED.get((args.command, getattr(args, "action", None)), ()):
            if getattr(args, key, None) is None:
                raise UsageError(f"{parser.format_usage()}{args.command}: --{key} is required")
        if args.command in ("index", "flow") and not (args.ks or args.geodesic):
            raise UsageError(f"{args.command}: give --ks or --geodesic")
    except UsageError as exc:
        err.write(f"{exc}\n")
        return EXIT_USAGE
    try:
        cfg = RunConfig.from_sources(args)
        return args.func(args, cfg, out)
    except ConvergenceError as exc:
        err.write(f"convergence failure: {exc}\n")
        return EXIT_CONVERGENCE
    except ValidationError as exc:
        err.write(f"invalid input: {exc}\n")
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run_subcommand())


if __name__ == "__main__":
    main()
