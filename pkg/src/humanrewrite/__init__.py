"""Neural-guided term rewriting for algebraic reasoning."""

__version__ = "0.1.0"

from .terms import Position, Term, parse, positions, replace_at, subterm_at, to_text
from .rewriting import (
    RewriteRule,
    RuleSet,
    Scheme,
    SearchFailure,
    SearchLimits,
    Step,
    apply_rule_at,
    apply_substitution,
    applicable_actions,
    bfs_search,
    load_rules,
    one_way_match,
    replay,
)

__all__ = [
    "Position",
    "RewriteRule",
    "RuleSet",
    "Scheme",
    "SearchFailure",
    "SearchLimits",
    "Step",
    "Term",
    "applicable_actions",
    "apply_rule_at",
    "apply_substitution",
    "bfs_search",
    "load_rules",
    "one_way_match",
    "parse",
    "positions",
    "replace_at",
    "replay",
    "subterm_at",
    "to_text",
]
