"""Exact deciders for leader/contributor reachability and bounded-stage reachability
in shared-memory programs, with brute-force oracles and reduction-based generators."""

from __future__ import annotations

from .bsr import StageTrace, check_stage_trace, reach_unrestricted, solve_bsr
from .dp import explicit_graph_reach, solve_lcr_dp
from .model import (
    BsrInstance,
    LcrInstance,
    ParseError,
    SemanticError,
    Thread,
    parse_program,
    serialize_program,
)
from .scc import check_scc_validity, solve_lcr_scc
from .verdict import BudgetExceeded, Verdict
from .witness import check_validity, solve_lcr_witness

__all__ = [
    "BsrInstance",
    "BudgetExceeded",
    "LcrInstance",
    "ParseError",
    "SemanticError",
    "StageTrace",
    "Thread",
    "Verdict",
    "check_scc_validity",
    "check_stage_trace",
    "check_validity",
    "explicit_graph_reach",
    "parse_program",
    "reach_unrestricted",
    "serialize_program",
    "solve_bsr",
    "solve_lcr_dp",
    "solve_lcr_scc",
    "solve_lcr_witness",
]
