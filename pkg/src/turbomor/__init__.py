"""turbomor: moment-matching model order reduction for passive RC networks."""

from .config import DEFAULT_CONFIG, ReduceConfig, Tolerances
from .errors import (
    BundleError,
    NetlistError,
    NotPositiveDefiniteError,
    NumericalError,
    PromotionOverflowError,
    TurboMORError,
)
from .ingest import (
    DescriptorSystem,
    Element,
    Netlist,
    load_matrix_bundle,
    parse_netlist,
    save_matrix_bundle,
    stamp,
    unstamp,
)
from .partition import PartitionTree, nested_dissection, reduce_partitioned
from .prima import KrylovBasis, block_arnoldi, prima_reduce
from .reduce import (
    ReducedModel,
    ReductionReport,
    export_rom,
    load_rom_bundle,
    turbomor_reduce,
)

__version__ = "0.1.0"

__all__ = [
    "BundleError",
    "DEFAULT_CONFIG",
    "DescriptorSystem",
    "Element",
    "KrylovBasis",
    "Netlist",
    "NetlistError",
    "NotPositiveDefiniteError",
    "NumericalError",
    "PartitionTree",
    "PromotionOverflowError",
    "ReduceConfig",
    "ReducedModel",
    "ReductionReport",
    "Tolerances",
    "TurboMORError",
    "block_arnoldi",
    "export_rom",
    "load_matrix_bundle",
    "load_rom_bundle",
    "nested_dissection",
    "parse_netlist",
    "prima_reduce",
    "reduce_partitioned",
    "save_matrix_bundle",
    "stamp",
    "turbomor_reduce",
    "unstamp",
]
