"""Moment-matching model order reduction for large RLC circuit models.

Pipeline: parse or synthesize a circuit, assemble its sparse descriptor
form, regularize it if the capacitance structure makes it singular, build a
standard or extended Krylov projection basis per input port, project, and
compare reduced against original transfer functions over a frequency grid.
"""

from .analysis import (
    ErrorReport,
    FrequencyGrid,
    ResponseSet,
    build_error_report,
    error_reduction,
    eval_original,
    eval_reduced,
    eval_regularized,
    max_error,
)
from .krylov import (
    OperatorPair,
    ProjectionBasis,
    ReducedModel,
    extended_basis,
    make_operators,
    moments,
    project,
    standard_basis,
)
from .netlist import (
    Circuit,
    DescriptorModel,
    NetlistError,
    assemble_mna,
    augment_capacitance,
    load_model_dir,
    parse_netlist,
    save_model_dir,
    split_ports,
    write_netlist,
)
from .regularize import (
    PartitionedModel,
    RegularizationError,
    apply_A,
    bordered_solve,
    build_dense_A,
    build_rhs,
    detect_and_partition,
    feedthrough,
    partition,
    recover_v2,
)
from .sparse_core import (
    Factorization,
    SingularMatrixError,
    SparseMatrix,
    factorize,
    orth_wrt,
    qr_orth,
    read_matrix_market,
    solve,
    spmm,
    write_matrix_market,
)
from .superpose import (
    PortDecomposition,
    PortReduction,
    assemble_H,
    load_decomposition,
    reduce_all_ports,
    save_decomposition,
)

__version__ = "0.1.0"
