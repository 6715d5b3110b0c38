"""Fixed-width encodings of terms for the network.

Every node of a term yields one binary input vector made of

    [position block | slot one-hots | SAV block (optional) | RAR block (optional)]

where the slots are the in-order listing of a depth-limited perfect tree
expanded around the node (RPT), or around the node and its parent link
(C-RPT).  ``Empty`` slots are all-zero blocks.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .terms import DEFAULT_BREADTH, Position, Term, format_position

Slot = Optional[str]  # None is Empty

RPT = "rpt"
CRPT = "crpt"


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderOptions:
    mode: str = RPT
    depth: int = 3
    breadth: int = DEFAULT_BREADTH
    max_position_depth: int = 3
    sav: bool = False
    rar: int = 0

    def __post_init__(self):
        if self.mode not in (RPT, CRPT):
            raise ValueError(f"mode must be {RPT!r} or {CRPT!r}, not {self.mode!r}")
        if self.depth < 1:
            raise ValueError("partial tree depth must be >= 1")
        if self.breadth < 1 or self.max_position_depth < 0 or self.rar < 0:
            raise ValueError("breadth >= 1, max_position_depth >= 0 and rar >= 0 required")

    @property
    def expansion_breadth(self) -> int:
        return self.breadth + 1 if self.mode == CRPT else self.breadth

    @property
    def slots(self) -> int:
        return slot_count(self.expansion_breadth, self.depth)

    @property
    def tag(self) -> str:
        """Short model-name fragment, e.g. ``C-RPT2+SAV+RAR``."""
        s = ("C-RPT" if self.mode == CRPT else "RPT") + str(self.depth)
        if self.sav:
            s += "+SAV"
        if self.rar:
            s += "+RAR" if self.rar == 1 else f"+RAR{self.rar}"
        return s

    def to_dict(self) -> dict:
        return asdict(self)


def slot_count(b: int, d: int) -> int:
    if b == 1:
        return d + 1
    return (b ** (d + 1) - 1) // (b - 1)


# -------------------------------------------------------------- vocabulary


class Vocabulary:
    """Ordered token list; ``Empty`` deliberately has no slot."""

    def __init__(self, tokens: Iterable[str]):
        self.tokens = list(dict.fromkeys(tokens))
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, symbols: Iterable[str], numerals: range = range(0, 21), max_fresh: int = 8) -> Vocabulary:
        toks = set(symbols) | {str(n) for n in numerals} | {f"u{i}" for i in range(1, max_fresh + 1)}
        return cls(sorted(toks))

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def lookup(self, tok: str) -> int:
        try:
            return self.index[tok]
        except KeyError:
            raise EncodingError(f"symbol {tok!r} not in vocabulary") from None


# ------------------------------------------------------------ partial trees


@dataclass(frozen=True)
class PartialTreeCode:
    center: Position
    slots: tuple[Slot, ...]


def _expand_down(t: Term | None, d: int, b: int) -> list[Slot]:
    head = t.head if t is not None else None
    if d == 0:
        return [head]
    kids = [t.args[j] if t is not None and j < len(t.args) else None for j in range(b)]
    out = _expand_down(kids[0], d - 1, b) + [head]
    for kid in kids[1:]:
        out += _expand_down(kid, d - 1, b)
    return out


def rpt_encode(t: Term, d: int, k: int = DEFAULT_BREADTH, vocab: Vocabulary | None = None) -> list[PartialTreeCode]:
    """One reduced partial tree per node, in pre-order of the centres."""
    if d < 1:
        raise EncodingError("depth must be >= 1")
    if t.max_arity() > k:
        raise EncodingError(f"term has arity {t.max_arity()} > breadth {k}")
    codes = [PartialTreeCode(pos, tuple(_expand_down(sub, d, k))) for pos, sub in t.walk()]
    if vocab is not None:
        _check_vocab(codes, vocab)
    return codes


def crpt_encode(t: Term, d: int, k: int = DEFAULT_BREADTH, vocab: Vocabulary | None = None) -> list[PartialTreeCode]:
    """Centralised partial trees: branches 1..k are children, branch k+1 the parent.

    The walk never returns along the edge it arrived by; that branch is Empty.
    """
    if d < 1:
        raise EncodingError("depth must be >= 1")
    if t.max_arity() > k:
        raise EncodingError(f"term has arity {t.max_arity()} > breadth {k}")
    nodes = dict(t.walk())

    def expand(pos: Position | None, came: Position | None, depth: int) -> list[Slot]:
        if pos is None:
            return [None] * slot_count(k + 1, depth)
        node = nodes[pos]
        if depth == 0:
            return [node.head]
        branches: list[Position | None] = []
        for j in range(1, k + 1):
            child = pos + (j,)
            branches.append(child if j <= len(node.args) and child != came else None)
        up = pos[:-1] if len(pos) > 1 else None
        branches.append(up if up != came else None)
        out = expand(branches[0], pos, depth - 1) + [node.head]
        for br in branches[1:]:
            out += expand(br, pos, depth - 1)
        return out

    codes = [PartialTreeCode(pos, tuple(expand(pos, None, d))) for pos in nodes]
    if vocab is not None:
        _check_vocab(codes, vocab)
    return codes


def _check_vocab(codes: Sequence[PartialTreeCode], vocab: Vocabulary) -> None:
    for c in codes:
        for s in c.slots:
            if s is not None:
                vocab.lookup(s)


def sav(code: PartialTreeCode | Sequence[Slot]) -> np.ndarray:
    """Flattened L×L matrix: 1 where two distinct slots hold the same non-Empty symbol."""
    slots = code.slots if isinstance(code, PartialTreeCode) else tuple(code)
    L = len(slots)
    ids = {}
    keys = np.array([-1 if s is None else ids.setdefault(s, len(ids)) for s in slots])
    same = (keys[:, None] == keys[None, :]) & (keys[:, None] >= 0)
    np.fill_diagonal(same, False)
    return same.astype(np.float64).reshape(L * L)


# ------------------------------------------------------- positions/targets


class PositionTable:
    """All positions of depth <= ``max_depth`` below the root, breadth-first."""

    def __init__(self, max_depth: int = 3, breadth: int = DEFAULT_BREADTH):
        self.max_depth = max_depth
        self.breadth = breadth
        table: list[Position] = [(1,)]
        level = [(1,)]
        for _ in range(max_depth):
            level = [p + (j,) for p in level for j in range(1, breadth + 1)]
            table += level
        self.positions = table
        self.index = {p: i for i, p in enumerate(table)}

    def __len__(self):
        return len(self.positions)

    def __contains__(self, p):
        return tuple(p) in self.index

    def lookup(self, p: Position) -> int:
        try:
            return self.index[tuple(p)]
        except KeyError:
            raise EncodingError(f"position {format_position(p)} outside the position table") from None


def encode_position(p: Position, max_depth: int = 3, k: int = DEFAULT_BREADTH) -> np.ndarray:
    """Per-level one-hots of the branch indices after the root; absent levels are zero."""
    out = np.zeros(max_depth * k)
    for col in _position_columns(p, max_depth, k):
        out[col] = 1.0
    return out


def _position_columns(p: Position, max_depth: int, k: int, truncate: bool = False) -> list[int]:
    if len(p) > max_depth + 1:
        if not truncate:
            raise EncodingError(f"position {format_position(p)} deeper than {max_depth}")
        p = p[: max_depth + 1]
    cols = []
    for level, j in enumerate(p[1:]):
        if not 1 <= j <= k:
            raise EncodingError(f"branch index {j} outside 1..{k}")
        cols.append(level * k + (j - 1))
    return cols


class ActionCodec:
    """Joint (rule, position) classes: ``class = rule_index * NP + position_index``."""

    def __init__(self, n_rules: int, table: PositionTable):
        self.n_rules = n_rules
        self.table = table

    @property
    def n_positions(self) -> int:
        return len(self.table)

    @property
    def n_classes(self) -> int:
        return self.n_rules * len(self.table)

    def encode(self, rule_index: int, p: Position) -> int:
        if not 0 <= rule_index < self.n_rules:
            raise EncodingError(f"rule index {rule_index} out of range")
        return rule_index * len(self.table) + self.table.lookup(p)

    def decode(self, cls: int) -> tuple[int, Position]:
        if not 0 <= cls < self.n_classes:
            raise EncodingError(f"class {cls} out of range")
        r, i = divmod(int(cls), len(self.table))
        return r, self.table.positions[i]


def encode_target(rule_index: int, p: Position, codec: ActionCodec) -> int:
    return codec.encode(rule_index, p)


def decode_target(cls: int, codec: ActionCodec) -> tuple[int, Position]:
    return codec.decode(cls)


def rar_encode(history: Sequence[tuple[int, Position]], n: int, codec: ActionCodec) -> np.ndarray:
    """Last ``n`` applications, most recent first; missing entries are zero blocks."""
    out = np.zeros(n * codec.n_classes)
    for col in _rar_columns(history, n, codec):
        out[col] = 1.0
    return out


def _rar_columns(history: Sequence[tuple[int, Position]], n: int, codec: ActionCodec) -> list[int]:
    if n < 1:
        raise EncodingError("RAR window must be >= 1")
    recent = list(history)[::-1][:n]
    return [i * codec.n_classes + codec.encode(r, p) for i, (r, p) in enumerate(recent)]


# ---------------------------------------------------------------- examples


@dataclass
class EncodedExample:
    """One input vector per term node, rows in canonical order."""

    inputs: sparse.csr_matrix
    target: int | None = None

    @property
    def n_vectors(self) -> int:
        return self.inputs.shape[0]

    def dense(self) -> np.ndarray:
        return self.inputs.toarray()


def canonical_order(x: np.ndarray) -> np.ndarray:
    """Row permutation sorting rows lexicographically (column 0 most significant)."""
    return np.lexsort(x.T[::-1])


class Encoder:
    """Turns (term, history) pairs into :class:`EncodedExample` objects."""

    def __init__(self, options: EncoderOptions, vocab: Vocabulary, rule_names: Sequence[str]):
        self.options = options
        self.vocab = vocab
        self.rule_names = list(rule_names)
        self.rule_index = {n: i for i, n in enumerate(self.rule_names)}
        self.table = PositionTable(options.max_position_depth, options.breadth)
        self.codec = ActionCodec(len(self.rule_names), self.table)
        L = options.slots
        self.pos_width = options.max_position_depth * options.breadth
        self.slot_offset = self.pos_width
        self.sav_offset = self.slot_offset + L * len(vocab)
        self.rar_offset = self.sav_offset + (L * L if options.sav else 0)
        self.width = self.rar_offset + options.rar * self.codec.n_classes

    @property
    def n_classes(self) -> int:
        return self.codec.n_classes

    def partial_trees(self, t: Term) -> list[PartialTreeCode]:
        o = self.options
        fn = crpt_encode if o.mode == CRPT else rpt_encode
        return fn(t, o.depth, o.breadth)

    def target_class(self, rule: str | int, p: Position) -> int:
        r = self.rule_index[rule] if isinstance(rule, str) else rule
        return self.codec.encode(r, p)

    def encode(self, t: Term, history: Sequence[tuple[str, Position]] = (), target=None) -> EncodedExample:
        """Encode ``t``; ``history`` lists earlier (rule name, position) applications, oldest first.

        ``target`` may be a class number or a (rule, position) pair.
        """
        o = self.options
        V = len(self.vocab)
        rar_cols: list[int] = []
        if o.rar:
            hist = [(self.rule_index[r] if isinstance(r, str) else r, tuple(p)) for r, p in history]
            rar_cols = [self.rar_offset + c for c in _rar_columns(hist, o.rar, self.codec)]
        rows = []
        for code in self.partial_trees(t):
            # nodes below the action cap share the block of their depth-cap ancestor
            cols = _position_columns(code.center, o.max_position_depth, o.breadth, truncate=True)
            for i, s in enumerate(code.slots):
                if s is not None:
                    cols.append(self.slot_offset + i * V + self.vocab.lookup(s))
            if o.sav:
                cols.extend((self.sav_offset + np.flatnonzero(sav(code))).tolist())
            cols.extend(rar_cols)
            rows.append(sorted(cols))
        dense = np.zeros((len(rows), self.width))
        for i, cols in enumerate(rows):
            dense[i, cols] = 1.0
        dense = dense[canonical_order(dense)]
        if isinstance(target, tuple):
            target = self.target_class(*target)
        return EncodedExample(sparse.csr_matrix(dense), target)

    def config(self) -> dict:
        return {
            "options": self.options.to_dict(),
            "vocabulary": self.vocab.tokens,
            "rules": self.rule_names,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> Encoder:
        return cls(EncoderOptions(**cfg["options"]), Vocabulary(cfg["vocabulary"]), cfg["rules"])


def build_example(
    t: Term,
    history: Sequence[tuple[str, Position]],
    options: EncoderOptions,
    vocab: Vocabulary,
    rule_names: Sequence[str],
    target=None,
) -> EncodedExample:
    return Encoder(options, vocab, rule_names).encode(t, history, target)
