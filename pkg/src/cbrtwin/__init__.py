"""Case-based reasoning digital twin for an injection molding machine.

Models are written in three small languages: domain models (``.dm``), case
bases (``.cb``) and similarity models (``.cs``). A PDDL planner serves as
fallback when no case applies, and :mod:`cbrtwin.runtime` runs the loop
against a simulated or replayed machine.
"""

from .casebase import Case, CaseBase, parse_case_base, print_case_base
from .domain import DomainModel, Situation, parse_domain_model, print_domain_model, resolve_path
from .engine import EngineConfig, reuse, retain, retrieve, revise
from .errors import CbrError, ParseError
from .similarity import SimilaritySpec, extract_reference, global_similarity, parse_similarity_spec

__version__ = "0.1.0"

__all__ = [
    "Case", "CaseBase", "CbrError", "DomainModel", "EngineConfig", "ParseError", "SimilaritySpec", "Situation",
    "extract_reference", "global_similarity", "parse_case_base", "parse_domain_model", "parse_similarity_spec",
    "print_case_base", "print_domain_model", "resolve_path", "retain", "retrieve", "reuse", "revise",
]
