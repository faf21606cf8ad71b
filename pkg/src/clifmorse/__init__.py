"""Clifford representations, centriole chains and energy flows on rotation groups."""

from ._kernels import JIT_ENABLED
from .clifford_core import (
    CliffordBasisElement,
    CliffordFamily,
    OctonionTable,
    build_irreducible,
    clifford_product,
    decompose_module,
    direct_sum,
    irreducible_dim,
    is_positive,
    positive_part_family,
    split_by_volume,
    volume_element,
)
from .errors import ConvergenceError, ValidationError
from .ktheory_tables import ModuleClass, cokernel_table, dimension_table, restriction_matrix

__version__ = "0.1.0"
