"""Learned pruning of ineffective node-level transformations in AIG logic synthesis."""
from .aig import Aig, AigBuilder, AigError, AigerFormatError, parse_aiger, read_aiger, write_aiger
from .resub import ResubParams, run_operator
from .sim import circuits_equivalent

__version__ = "0.1.0"

__all__ = [
    "Aig",
    "AigBuilder",
    "AigError",
    "AigerFormatError",
    "ResubParams",
    "circuits_equivalent",
    "parse_aiger",
    "read_aiger",
    "run_operator",
    "write_aiger",
]
