"""STRIPS-subset PDDL planning used as the fallback when no case applies."""

from .bridge import KnowledgeBase, Ladder, MachineMapping, MappingError, goal_from_fallback, parse_mapping, plan_to_writes
from .model import Atom, GroundAction, GroundLiteral, Plan, PddlDomain, PddlProblem
from .parser import UnsupportedFeature, parse_goal_literals, parse_pddl_domain, parse_pddl_problem
from .planner import LimitExceeded, PlanningError, Unsolvable, Validation, ground, plan, validate_plan

__all__ = [
    "Atom", "GroundAction", "GroundLiteral", "KnowledgeBase", "Ladder", "LimitExceeded", "MachineMapping",
    "MappingError", "Plan", "PddlDomain", "PddlProblem", "PlanningError", "UnsupportedFeature", "Unsolvable",
    "Validation", "goal_from_fallback", "ground", "parse_goal_literals", "parse_mapping", "parse_pddl_domain",
    "parse_pddl_problem", "plan", "plan_to_writes", "validate_plan",
]
