"""Rewrite rules, one-way matching, rule application and breadth-first scheme search."""

from __future__ import annotations

import json
import re
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path

from .terms import (
    OPERATORS,
    Position,
    Term,
    format_position,
    is_fresh_constant,
    parse,
    replace_at,
    subterm_at,
    to_text,
)

Substitution = dict[str, Term]
Action = tuple[str, Position]

DEFAULT_MAX_FRESH = 8

_CALCULUS_HEADS = frozenset({"D", "Integral"})


class RuleSyntaxError(ValueError):
    pass


class SearchFailure(Exception):
    """Breadth-first search gave up; ``reason`` says which limit was hit."""

    DEPTH = "depth-exhausted"
    NODES = "node-budget-exhausted"
    SPACE = "space-exhausted"

    def __init__(self, reason: str, explored: int = 0):
        super().__init__(f"search failed: {reason} after {explored} states")
        self.reason = reason
        self.explored = explored


def is_numeral_sorted(var: str) -> bool:
    """Pattern variables spelled ``n``, ``n1``, ``m``... match numerals only."""
    return var[0] in "nm"


@dataclass(frozen=True)
class RewriteRule:
    name: str
    lhs: Term
    rhs: Term

    @property
    def fresh_variables(self) -> tuple[str, ...]:
        """rhs-only variables, in order of first occurrence in the rhs."""
        lhs_vars = self.lhs.variables()
        seen: list[str] = []
        for _, t in self.rhs.walk():
            if t.is_variable and t.head not in lhs_vars and t.head not in seen:
                seen.append(t.head)
        return tuple(seen)

    def __str__(self):
        return f"{self.name} : {to_text(self.lhs)} => {to_text(self.rhs)}"


# ---------------------------------------------------------------- goals


def is_ground_numeric(t: Term) -> bool:
    if not t.args:
        return t.head.isdigit()
    return t.head in OPERATORS and t.head != "=" and all(is_ground_numeric(a) for a in t.args)


def linear_solved(t: Term) -> bool:
    """``V = e`` with ``V`` an unknown constant and ``e`` built from numerals only."""
    if t.head != "=" or len(t.args) != 2:
        return False
    lhs, rhs = t.args
    unknown = not lhs.args and lhs.head[0].isupper()
    return unknown and is_ground_numeric(rhs)


def calculus_solved(t: Term) -> bool:
    return all(s.head not in _CALCULUS_HEADS for _, s in t.walk())


def algebra_solved(t: Term) -> bool:
    if t.head == "=":
        return linear_solved(t)
    return calculus_solved(t)


GOALS: dict[str, Callable[[Term, "RuleSet"], bool]] = {
    "algebra": lambda t, rs: algebra_solved(t),
    "linear": lambda t, rs: linear_solved(t),
    "calculus": lambda t, rs: calculus_solved(t),
    "normal-form": lambda t, rs: not any(True for _ in iter_actions(t, rs)),
}


@dataclass
class RuleSet:
    rules: list[RewriteRule]
    goal: str = "algebra"
    max_fresh: int = DEFAULT_MAX_FRESH
    _by_head: dict[tuple[str, int], list[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [r.name for r in self.rules]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise RuleSyntaxError(f"duplicate rule names: {sorted(dupes)}")
        if self.goal not in GOALS:
            raise RuleSyntaxError(f"unknown goal predicate {self.goal!r}")
        self._by_head = {}
        for i, rule in enumerate(self.rules):
            if rule.lhs.is_variable:
                raise RuleSyntaxError(f"rule {rule.name}: lhs may not be a lone variable")
            key = (rule.lhs.head, len(rule.lhs.args))
            self._by_head.setdefault(key, []).append(i)
        self._index = {r.name: i for i, r in enumerate(self.rules)}

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.rules]

    def index(self, name: str) -> int:
        return self._index[name]

    def rule(self, name: str) -> RewriteRule:
        return self.rules[self._index[name]]

    def candidates(self, t: Term) -> list[int]:
        return self._by_head.get((t.head, len(t.args)), [])

    def is_solved(self, t: Term) -> bool:
        return GOALS[self.goal](t, self)

    def symbols(self) -> set[str]:
        """Non-variable tokens mentioned by any rule."""
        out = set()
        for r in self.rules:
            for side in (r.lhs, r.rhs):
                out |= {s.head for _, s in side.walk() if not s.is_variable}
        return out


_RULE_RE = re.compile(r"^\s*([^\s:]+)\s*:\s*(.+?)\s*=>\s*(.+?)\s*$")
_GOAL_RE = re.compile(r"^#\s*goal\s*:\s*(\S+)\s*$")


def parse_rules(text: str, goal: str | None = None) -> RuleSet:
    """Read ``NAME : LHS => RHS`` lines; ``#`` starts a comment.

    A comment of the form ``# goal: <name>`` selects the solved-form predicate
    unless ``goal`` is given explicitly.
    """
    rules = []
    file_goal = "algebra"
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            m = _GOAL_RE.match(stripped)
            if m:
                file_goal = m.group(1)
            continue
        m = _RULE_RE.match(line)
        if not m:
            raise RuleSyntaxError(f"line {lineno}: expected 'NAME : LHS => RHS'")
        name, lhs, rhs = m.groups()
        try:
            rules.append(RewriteRule(name, parse(lhs), parse(rhs)))
        except ValueError as exc:
            raise RuleSyntaxError(f"line {lineno}: {exc}") from exc
    return RuleSet(rules, goal=goal or file_goal)


def load_rules(path: str | Path, goal: str | None = None) -> RuleSet:
    return parse_rules(Path(path).read_text(encoding="utf-8"), goal=goal)


def dump_rules(rs: RuleSet) -> str:
    lines = [f"# goal: {rs.goal}"] + [str(r) for r in rs.rules]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- matching


def one_way_match(pattern: Term, t: Term) -> Substitution | None:
    """Most general substitution ``θ`` with ``pattern[θ] == t``, or None.

    Only pattern variables are bound; ``t`` is treated as ground even if it
    contains lower-case symbols.
    """
    theta: Substitution = {}
    if _match(pattern, t, theta):
        return theta
    return None


def _match(p: Term, t: Term, theta: Substitution) -> bool:
    if p.is_variable:
        bound = theta.get(p.head)
        if bound is not None:
            return bound == t
        if is_numeral_sorted(p.head) and not t.is_numeral:
            return False
        theta[p.head] = t
        return True
    if p.head != t.head or len(p.args) != len(t.args):
        return False
    return all(_match(pa, ta, theta) for pa, ta in zip(p.args, t.args))


def apply_substitution(t: Term, theta: Substitution) -> Term:
    if not theta:
        return t
    if not t.args:
        return theta.get(t.head, t) if t.is_variable else t
    return Term(t.head, [apply_substitution(a, theta) for a in t.args])


def next_fresh_index(t: Term) -> int:
    used = [int(s.head[1:]) for _, s in t.walk() if is_fresh_constant(s.head)]
    return max(used, default=0) + 1


def apply_rule_at(
    t: Term, rule: RewriteRule, p: Position, max_fresh: int = DEFAULT_MAX_FRESH
) -> Term | None:
    """Rewrite the subterm of ``t`` at ``p`` with ``rule``; None when the lhs does not match.

    Fresh rhs variables become the next unused constants ``u<k>``, numbered after
    the largest ``u<k>`` already in ``t``, so the result depends on ``t`` alone.
    Returns None if that would exceed ``max_fresh``.
    """
    theta = one_way_match(rule.lhs, subterm_at(t, p))
    if theta is None:
        return None
    fresh = rule.fresh_variables
    if fresh:
        k = next_fresh_index(t)
        if k + len(fresh) - 1 > max_fresh:
            return None
        for offset, v in enumerate(fresh):
            theta[v] = Term(f"u{k + offset}")
    return replace_at(t, p, apply_substitution(rule.rhs, theta))


def iter_actions(t: Term, rs: RuleSet) -> Iterator[tuple[int, Position, Term]]:
    """(rule index, position, result) for every applicable action, in (rule, position) order."""
    found = []
    for pos, sub in t.walk():
        for i in rs.candidates(sub):
            r = apply_rule_at(t, rs.rules[i], pos, rs.max_fresh)
            if r is not None:
                found.append((i, pos, r))
    # walk() is pre-order, so a stable sort by rule index keeps position order within a rule
    found.sort(key=lambda x: x[0])
    return iter(found)


def applicable_actions(t: Term, rs: RuleSet) -> list[Action]:
    return [(rs.rules[i].name, pos) for i, pos, _ in iter_actions(t, rs)]


# -------------------------------------------------------------- schemes


@dataclass(frozen=True)
class Step:
    source: Term
    rule_name: str
    position: Position
    target: Term

    def to_json(self) -> dict:
        return {
            "source": to_text(self.source),
            "rule": self.rule_name,
            "position": list(self.position),
            "target": to_text(self.target),
        }

    @classmethod
    def from_json(cls, d: dict) -> Step:
        return cls(parse(d["source"]), d["rule"], tuple(d["position"]), parse(d["target"]))

    def __str__(self):
        return f"{self.source}  --{self.rule_name}@{format_position(self.position)}-->  {self.target}"


@dataclass(frozen=True)
class Scheme:
    question: Term
    steps: tuple[Step, ...]
    answer: Term

    def to_json(self, **extra) -> dict:
        d = {
            "question": to_text(self.question),
            "answer": to_text(self.answer),
            "steps": [s.to_json() for s in self.steps],
        }
        d.update(extra)
        return d

    @classmethod
    def from_json(cls, d: dict) -> Scheme:
        return cls(parse(d["question"]), tuple(Step.from_json(s) for s in d["steps"]), parse(d["answer"]))

    @property
    def actions(self) -> list[Action]:
        return [(s.rule_name, s.position) for s in self.steps]


def write_schemes(path: str | Path, schemes: Iterable[Scheme | dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in schemes:
            d = s.to_json() if isinstance(s, Scheme) else s
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def read_schemes(path: str | Path) -> list[Scheme]:
    with open(path, encoding="utf-8") as fh:
        return [Scheme.from_json(json.loads(line)) for line in fh if line.strip()]


def replay(scheme: Scheme, rs: RuleSet) -> int | None:
    """Return None if the scheme replays, else the index of the first bad step.

    A chaining break between the question and step 0 reports 0; a final target
    that differs from the answer reports ``len(steps)``.
    """
    current = scheme.question
    for i, step in enumerate(scheme.steps):
        if step.source != current or step.rule_name not in rs._index:
            return i
        try:
            result = apply_rule_at(step.source, rs.rule(step.rule_name), step.position, rs.max_fresh)
        except LookupError:
            return i
        if result is None or result != step.target:
            return i
        current = step.target
    if current != scheme.answer:
        return len(scheme.steps)
    return None


# ------------------------------------------------------------------ BFS


@dataclass(frozen=True)
class SearchLimits:
    max_depth: int = 25
    max_nodes: int = 200_000
    max_term_size: int = 60

    def __post_init__(self):
        if min(self.max_depth, self.max_nodes, self.max_term_size) <= 0:
            raise ValueError("search limits must be positive")


def bfs_search(
    question: Term,
    rs: RuleSet,
    limits: SearchLimits = SearchLimits(),
    goal: Callable[[Term], bool] | None = None,
) -> Scheme:
    """Shortest scheme from ``question`` to a solved form.

    Successors are generated in (rule index, position) order and states are
    deduplicated by syntactic equality, so among shortest derivations the one
    with the lexicographically smallest action sequence is returned.
    """
    is_goal = goal if goal is not None else rs.is_solved
    if is_goal(question):
        return Scheme(question, (), question)
    parent: dict[Term, tuple[Term, int, Position] | None] = {question: None}
    frontier = [question]
    for _ in range(limits.max_depth):
        nxt = []
        for state in frontier:
            for i, pos, target in iter_actions(state, rs):
                if target in parent or target.size > limits.max_term_size:
                    continue
                parent[target] = (state, i, pos)
                if is_goal(target):
                    return _unwind(target, parent, rs)
                if len(parent) >= limits.max_nodes:
                    raise SearchFailure(SearchFailure.NODES, len(parent))
                nxt.append(target)
        if not nxt:
            raise SearchFailure(SearchFailure.SPACE, len(parent))
        frontier = nxt
    raise SearchFailure(SearchFailure.DEPTH, len(parent))


def _unwind(goal: Term, parent: dict, rs: RuleSet) -> Scheme:
    steps = []
    node = goal
    while parent[node] is not None:
        src, i, pos = parent[node]
        steps.append(Step(src, rs.rules[i].name, pos, node))
        node = src
    steps.reverse()
    return Scheme(steps[0].source, tuple(steps), goal)
