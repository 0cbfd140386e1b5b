"""Mixed-precision validation and tuning toolkit.

Emulated floating-point formats with correct rounding, three-sample
stochastic arithmetic for digit estimates, error-free transformations,
a small program language with mixed-precision and stochastic evaluators,
a delta-debugging precision tuner, and mixed-precision linear solvers.
"""

from .chunked import ChunkedF64, decode_at_level, encode
from .eft import dot2, twoprod, twosum
from .precision import (
    BINARY16,
    BINARY32,
    BINARY64,
    DEFAULT_LATTICE,
    PrecisionSpec,
    prec_arith,
    round_to_precision,
)
from .program import Program, eval_dsa, eval_mixed, load_program, parse_program
from .stochastic import StochasticValue, common_digits, estimate_digits, sto_arith
from .tuner import TuneReport, TuneRequest, compute_reference, estimate_cost, tune

__version__ = "0.1.0"

__all__ = [
    "BINARY16",
    "BINARY32",
    "BINARY64",
    "ChunkedF64",
    "DEFAULT_LATTICE",
    "PrecisionSpec",
    "Program",
    "StochasticValue",
    "TuneReport",
    "TuneRequest",
    "common_digits",
    "compute_reference",
    "decode_at_level",
    "dot2",
    "encode",
    "estimate_cost",
    "estimate_digits",
    "eval_dsa",
    "eval_mixed",
    "load_program",
    "parse_program",
    "prec_arith",
    "round_to_precision",
    "sto_arith",
    "tune",
    "twoprod",
    "twosum",
]
