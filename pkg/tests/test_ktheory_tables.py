import numpy as np
import pytest
from hypothesis import given, strategies as st

from clifmorse.clifford_core import build_irreducible, irreducible_dim
from clifmorse.ktheory_tables import (
    GroupDescriptor,
    ModuleClass,
    cokernel,
    cokernel_table,
    dimension_table,
    restriction_matrix,
    table_rows,
)
from clifmorse.errors import ValidationError


def _restriction_oracle(n):
    """Independent decomposition: trace of the central volume element on each block."""
    cols = []
    for neg in ([False, True] if (n + 1) % 4 == 3 else [False]):
        fam = build_irreducible(n + 1, negative=neg)
        mats = fam.mats[:n]
        p = fam.p
        s = irreducible_dim(n)
        if n % 4 == 3:
            w = np.eye(p)
            for m in mats:
                w = w @ m
            minus = int(round((p - np.trace(w)) / 2))  # eigenvalue -1 count -> positive class
            cols.append([minus // s, (p - minus) // s])
        else:
            cols.append([p // s])
    return np.array(cols).T


@pytest.mark.parametrize("n", range(0, 17))
def test_restriction_matches_oracle(n):
    assert np.array_equal(restriction_matrix(n), _restriction_oracle(n))


def test_restriction_examples():
    assert restriction_matrix(3).tolist() == [[1], [1]]
    assert restriction_matrix(7).tolist() == [[1], [1]]
    assert restriction_matrix(1).tolist() == [[2]]


@pytest.mark.parametrize("n", range(0, 17))
def test_column_dimension_sums(n):
    m = restriction_matrix(n)
    s_lo, s_hi = irreducible_dim(n), irreducible_dim(n + 1)
    assert np.all(m.sum(axis=0) * s_lo == s_hi)


def test_cokernel_table_values():
    t = cokernel_table(16)
    assert [str(g) for g in t[:9]] == ["Z", "Z/2", "Z/2", "0", "Z", "0", "0", "0", "Z"]
    assert all(t[n].is_trivial for n in range(17) if n % 4 == 3)
    for n in range(9):
        assert (t[n].rank, t[n].torsion) == (t[n + 8].rank, t[n + 8].torsion)


def test_cokernel_smith_form():
    assert cokernel(np.array([[2]])) == GroupDescriptor(0, (2,))
    assert cokernel(np.array([[1], [1]])) == GroupDescriptor(1, ())
    assert cokernel(np.array([[1, 1]])).is_trivial


def test_dimension_table():
    d = dimension_table(16)
    assert d[0] == 1 and d[6] == 8 and d[12] == 128
    assert d[:9] == [1, 2, 4, 4, 8, 8, 8, 8, 16]
    assert all(d[n + 8] == 16 * d[n] for n in range(9))
    assert d[1:] == [build_irreducible(n).p for n in range(1, 17)]


def test_table_rows_shape():
    rows = table_rows(16)
    assert len(rows) == 17
    assert set(rows[0]) >= {"n", "s_n", "rank", "torsion", "group"}


def test_module_class_arithmetic():
    a = ModuleClass(3, (1, 2))
    b = ModuleClass(3, (2, 0))
    assert (a + b).multiplicities == (3, 2)
    assert (a - b).multiplicities == (-1, 2)
    assert not (a - b).is_honest and a.is_honest
    assert a.dim == 12
    with pytest.raises(ValidationError):
        ModuleClass(3, (1,))
    with pytest.raises(ValidationError):
        a + ModuleClass(4, (1,))


@given(st.integers(0, 16), st.lists(st.integers(-5, 5), min_size=1, max_size=1))
def test_module_group_laws(n, m):
    size = 2 if n % 4 == 3 else 1
    a = ModuleClass(n, tuple(m * size))
    zero = a - a
    assert all(x == 0 for x in zero.multiplicities)
    assert (a + zero).multiplicities == a.multiplicities
