"""Grothendieck groups of Clifford modules, restriction maps and cokernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy
from sympy.matrices.normalforms import smith_normal_form

from .clifford_core import (
    CliffordFamily,
    build_irreducible,
    decompose_module,
    irreducible_dim,
    n_classes,
)
from .errors import ValidationError

MAX_TABLE_N = 16


@dataclass(frozen=True)
class ModuleClass:
    """Integer multiplicity vector over the irreducible ``Cl_n`` classes.

    For ``n = 3 mod 4`` the entries are (positive class, negative class).
    """

    n: int
    multiplicities: tuple[int, ...]

    def __post_init__(self) -> None:
        mult = tuple(int(m) for m in self.multiplicities)
        if len(mult) != n_classes(self.n):
            raise ValidationError("wrong number of classes for this n")
        object.__setattr__(self, "multiplicities", mult)

    def __add__(self, other: "ModuleClass") -> "ModuleClass":
        if other.n != self.n:
            raise ValidationError("classes over different algebras")
        return ModuleClass(self.n, tuple(a + b for a, b in zip(self.multiplicities, other.multiplicities)))

    def __neg__(self) -> "ModuleClass":
        return ModuleClass(self.n, tuple(-a for a in self.multiplicities))

    def __sub__(self, other: "ModuleClass") -> "ModuleClass":
        return self + (-other)

    @property
    def is_honest(self) -> bool:
        return all(m >= 0 for m in self.multiplicities)

    @property
    def dim(self) -> int:
        return sum(self.multiplicities) * irreducible_dim(self.n)


@dataclass(frozen=True)
class GroupDescriptor:
    """Finitely generated abelian group ``Z^rank + sum Z/t``."""

    rank: int
    torsion: tuple[int, ...] = ()

    def __str__(self) -> str:
        parts = ["Z"] * self.rank + [f"Z/{t}" for t in self.torsion]
        return " + ".join(parts) if parts else "0"

    @property
    def is_trivial(self) -> bool:
        return self.rank == 0 and not self.torsion


def restriction_matrix(n: int) -> np.ndarray:
    """Integer matrix of restriction ``M_{n+1} -> M_n``.

    Column ``c`` lists the ``Cl_n`` multiplicities of irreducible class ``c``
    of ``Cl_{n+1}``.  ``n = 0`` restricts to the trivial algebra ``R``.
    """
    if not 0 <= n <= MAX_TABLE_N:
        raise ValidationError(f"n must lie in 0..{MAX_TABLE_N}")
    cols = []
    flags = (False, True) if n_classes(n + 1) == 2 else (False,)
    for neg in flags:
        fam = build_irreducible(n + 1, negative=neg)
        sub = CliffordFamily(fam.mats[:n], p=fam.p, tol=fam.tol, check=False)
        cols.append(decompose_module(sub).multiplicities)
    return np.array(cols, dtype=np.int64).T


def cokernel(mat: np.ndarray) -> GroupDescriptor:
    """Cokernel of an integer matrix via Smith normal form."""
    rows, cols = mat.shape
    if cols == 0 or not np.any(mat):
        return GroupDescriptor(rows)
    snf = smith_normal_form(sympy.Matrix(mat.tolist()), domain=sympy.ZZ)
    diag = [abs(int(snf[i, i])) for i in range(min(rows, cols))]
    nonzero = [d for d in diag if d != 0]
    rank = rows - len(nonzero)
    torsion = tuple(sorted(d for d in nonzero if d > 1))
    return GroupDescriptor(rank, torsion)


def cokernel_table(max_n: int) -> list[GroupDescriptor]:
    """Row ``n`` is the cokernel of restriction ``M_n -> M_{n-1}``; row 0 is ``M_0``."""
    if not 0 <= max_n <= MAX_TABLE_N:
        raise ValidationError(f"max_n must lie in 0..{MAX_TABLE_N}")
    rows = [GroupDescriptor(1)]
    for n in range(1, max_n + 1):
        rows.append(cokernel(restriction_matrix(n - 1)))
    for n in range(0, max_n - 7):
        if rows[n] != rows[n + 8]:
            raise AssertionError(f"periodicity fails at n = {n}")
    return rows


def dimension_table(max_n: int) -> list[int]:
    if max_n < 0:
        raise ValidationError("max_n must be nonnegative")
    return [irreducible_dim(n) for n in range(max_n + 1)]


def table_rows(max_n: int) -> list[dict]:
    """Combined rows used by the CSV and JSON emitters."""
    coks = cokernel_table(max_n)
    dims = dimension_table(max_n)
    return [
        {
            "n": n,
            "s_n": dims[n],
            "classes": n_classes(n),
            "rank": coks[n].rank,
            "torsion": list(coks[n].torsion),
            "group": str(coks[n]),
        }
        for n in range(max_n + 1)
    ]
