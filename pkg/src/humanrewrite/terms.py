"""Algebraic expression trees: parsing, printing and position-addressed surgery.

Terms are immutable.  Positions are tuples of 1-based branch indices and the
root is ``(1,)``, so the first child of the root is ``(1, 1)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Sequence

Position = tuple[int, ...]

ROOT: Position = (1,)
DEFAULT_BREADTH = 2

CONSTANT = "constant"
VARIABLE = "variable"
FUNCTOR = "functor"
NUMERAL = "numeral"

# Infix operators with their precedence.  All are left-associative.
OPERATORS = {"=": 1, "+": 2, "-": 2, "*": 3, "/": 3, "^": 4}

_FRESH_RE = re.compile(r"u[0-9]+\Z")


class ParseError(ValueError):
    """Malformed expression text; ``offset`` is the 0-based character index."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class InvalidPosition(LookupError):
    pass


def is_fresh_constant(text: str) -> bool:
    """Reserved constants ``u1``, ``u2``, ... introduced by fresh rhs variables."""
    return bool(_FRESH_RE.match(text))


def symbol_kind(text: str, arity: int = 0) -> str:
    if arity > 0 or text in OPERATORS:
        return FUNCTOR
    if text.isdigit():
        return NUMERAL
    if text[0].islower() and not is_fresh_constant(text):
        return VARIABLE
    return CONSTANT


@dataclass(frozen=True)
class Symbol:
    text: str
    kind: str


class Term:
    """An immutable expression tree node.

    ``head`` is the token text; ``args`` the ordered children.  Equality is
    purely syntactic and hashing is cached, so terms are cheap dictionary keys.
    """

    __slots__ = ("head", "args", "_hash", "_size")

    def __init__(self, head: str, args: Sequence[Term] = ()):
        args = tuple(args)
        if args and head[0].islower():
            raise ValueError(f"variable {head!r} cannot take arguments")
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "_hash", hash((head, args)))
        object.__setattr__(self, "_size", 1 + sum(a._size for a in args))

    def __setattr__(self, name, value):
        raise AttributeError("Term is immutable")

    def __reduce__(self):
        return (Term, (self.head, self.args))

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Term):
            return NotImplemented
        return self._hash == other._hash and self.head == other.head and self.args == other.args

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Term({to_text(self)!r})"

    def __str__(self):
        return to_text(self)

    @property
    def size(self) -> int:
        return self._size

    @property
    def symbol(self) -> Symbol:
        return Symbol(self.head, symbol_kind(self.head, len(self.args)))

    @property
    def is_variable(self) -> bool:
        return not self.args and symbol_kind(self.head) == VARIABLE

    @property
    def is_numeral(self) -> bool:
        return not self.args and self.head.isdigit()

    def depth(self) -> int:
        return 1 + max((a.depth() for a in self.args), default=0)

    def max_arity(self) -> int:
        return max([len(self.args)] + [a.max_arity() for a in self.args])

    def walk(self) -> Iterator[tuple[Position, Term]]:
        """Pre-order (position, subterm) pairs."""
        stack: list[tuple[Position, Term]] = [(ROOT, self)]
        while stack:
            pos, t = stack.pop()
            yield pos, t
            for j in range(len(t.args), 0, -1):
                stack.append((pos + (j,), t.args[j - 1]))

    def symbols(self) -> set[str]:
        return {t.head for _, t in self.walk()}

    def variables(self) -> set[str]:
        return {t.head for _, t in self.walk() if t.is_variable}


def const(text: str) -> Term:
    return Term(text)


def app(head: str, *args: Term) -> Term:
    return Term(head, args)


def positions(t: Term) -> list[Position]:
    return [p for p, _ in t.walk()]


def subterm_at(t: Term, p: Position) -> Term:
    if not p or p[0] != 1:
        raise InvalidPosition(f"position {list(p)} does not start at the root <1>")
    node = t
    for depth, j in enumerate(p[1:], start=1):
        if not 1 <= j <= len(node.args):
            raise InvalidPosition(f"position {list(p)} invalid at index {depth}")
        node = node.args[j - 1]
    return node


def replace_at(t: Term, p: Position, r: Term) -> Term:
    subterm_at(t, p)
    return _replace(t, p[1:], r)


def _replace(t: Term, path: Position, r: Term) -> Term:
    if not path:
        return r
    j = path[0]
    args = list(t.args)
    args[j - 1] = _replace(args[j - 1], path[1:], r)
    return Term(t.head, args)


def is_valid_position(t: Term, p: Position) -> bool:
    try:
        subterm_at(t, p)
    except InvalidPosition:
        return False
    return True


def format_position(p: Position) -> str:
    return "<" + ",".join(map(str, p)) + ">"


# ---------------------------------------------------------------- printing


def to_text(t: Term) -> str:
    if t.head in OPERATORS and len(t.args) == 2:
        prec = OPERATORS[t.head]
        left, right = t.args
        ls = to_text(left)
        rs = to_text(right)
        if _prec(left) < prec:
            ls = f"({ls})"
        if _prec(right) <= prec:
            rs = f"({rs})"
        return f"{ls}{t.head}{rs}"
    if t.args:
        return f"{t.head}({','.join(to_text(a) for a in t.args)})"
    return t.head


def _prec(t: Term) -> int:
    if t.head in OPERATORS and len(t.args) == 2:
        return OPERATORS[t.head]
    return 99


# ----------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(r"\s*(?:([A-Za-z][A-Za-z0-9_]*|[0-9]+)|(.))")


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].isspace():
            break
        m = _TOKEN_RE.match(text, pos)
        if m.group(1) is not None:
            tokens.append((m.group(1), m.start(1)))
        elif m.group(2) is not None:
            ch = m.group(2)
            if ch == "×":
                ch = "*"
            if ch not in OPERATORS and ch not in "(),":
                raise ParseError(f"unexpected character {ch!r}", m.start(2))
            tokens.append((ch, m.start(2)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, breadth: int):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.breadth = breadth

    def peek(self) -> str | None:
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def offset(self) -> int:
        return self.tokens[self.i][1] if self.i < len(self.tokens) else len(self.text)

    def expect(self, tok: str) -> None:
        if self.peek() != tok:
            found = self.peek()
            raise ParseError(f"expected {tok!r}, found {found!r}" if found else f"expected {tok!r}", self.offset())
        self.i += 1

    def parse(self) -> Term:
        t = self.expr(1)
        if self.peek() is not None:
            raise ParseError(f"unexpected token {self.peek()!r}", self.offset())
        return t

    def expr(self, level: int) -> Term:
        if level > 4:
            return self.atom()
        left = self.expr(level + 1)
        while (op := self.peek()) in OPERATORS and OPERATORS[op] == level:
            self.i += 1
            right = self.expr(level + 1)
            left = Term(op, (left, right))
        return left

    def atom(self) -> Term:
        tok = self.peek()
        start = self.offset()
        if tok is None:
            raise ParseError("unexpected end of input", start)
        if tok == "(":
            self.i += 1
            t = self.expr(1)
            self.expect(")")
            return t
        if not (tok[0].isalnum()):
            raise ParseError(f"unexpected token {tok!r}", start)
        self.i += 1
        if self.peek() != "(":
            return Term(tok)
        if not tok[0].isupper():
            raise ParseError(f"{tok!r} cannot be applied as a functor", start)
        self.i += 1
        args = [self.expr(1)]
        while self.peek() == ",":
            self.i += 1
            args.append(self.expr(1))
        self.expect(")")
        if len(args) > self.breadth:
            raise ParseError(f"{tok} has arity {len(args)} > {self.breadth}", start)
        return Term(tok, args)


def parse(text: str, breadth: int = DEFAULT_BREADTH) -> Term:
    """Parse infix expression text such as ``6*Y=Y+Ln(3)``."""
    return _Parser(text, breadth).parse()
