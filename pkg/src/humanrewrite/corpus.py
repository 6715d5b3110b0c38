"""Synthetic reasoning-scheme corpus: random questions solved by breadth-first search."""

from __future__ import annotations

import json
import logging
import random
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rewriting import RuleSet, Scheme, SearchFailure, SearchLimits, Step, bfs_search, replay
from .terms import Position, Term, parse, to_text

log = logging.getLogger(__name__)

LINEAR = "linear"
DIFFERENTIAL = "differential"
INTEGRAL = "integral"
TASKS = (LINEAR, DIFFERENTIAL, INTEGRAL)

# 5067 training steps to 1000 test steps
TEST_FRACTION = 1000 / 6067


class InsufficientYield(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    numeral_range: tuple[int, int] = (0, 20)
    depth_range: tuple[int, int] = (1, 3)
    schemes: int = 300
    seed: int = 0

    def __post_init__(self):
        if len(self.weights) != len(TASKS) or min(self.weights) < 0 or abs(sum(self.weights) - 1) > 1e-9:
            raise ValueError("task weights must be three non-negative numbers summing to 1")
        lo, hi = self.numeral_range
        if lo < 0 or hi < lo + 3:
            raise ValueError("numeral range must be non-negative and span at least 4 values")
        if self.depth_range[0] < 1 or self.depth_range[1] < self.depth_range[0]:
            raise ValueError("bad depth range")
        if self.schemes < 1:
            raise ValueError("scheme count must be positive")

    def rng(self, index: int) -> random.Random:
        return random.Random(self.seed * 1_000_003 + index)

    def task_for(self, index: int) -> str:
        return self.rng(index).choices(TASKS, weights=self.weights)[0]


# -------------------------------------------------------------- questions


def _num(rng: random.Random, spec: GeneratorSpec, lo: int = 2) -> Term:
    a, b = spec.numeral_range
    return Term(str(rng.randint(max(a, lo), b)))


def _small(rng: random.Random, spec: GeneratorSpec) -> Term:
    a, b = spec.numeral_range
    return Term(str(rng.randint(max(a, 2), min(b, 9))))


def _linear(rng: random.Random, spec: GeneratorSpec) -> Term:
    v = Term(rng.choice(["X", "Y"]))
    depth = rng.randint(*spec.depth_range)
    e = v
    for _ in range(depth):
        kind = rng.choice(["mul", "mul", "add", "add", "radd", "sub", "div", "rmul"])
        if kind == "mul":
            e = Term("*", (_small(rng, spec), e))
        elif kind == "rmul":
            e = Term("*", (e, _small(rng, spec)))
        elif kind == "add":
            e = Term("+", (e, _num(rng, spec, 1)))
        elif kind == "radd":
            e = Term("+", (_num(rng, spec, 1), e))
        elif kind == "sub":
            e = Term("-", (e, _num(rng, spec, 1)))
        else:
            e = Term("/", (e, _small(rng, spec)))
    rhs = _num(rng, spec, 0)
    shape = rng.random()
    if shape < 0.2:
        # unknown on both sides: a*V+b = c*V+d
        a, c = _small(rng, spec), _small(rng, spec)
        while c == a:
            c = _small(rng, spec)
        return Term("=", (Term("+", (Term("*", (a, v)), _num(rng, spec, 1))), Term("+", (Term("*", (c, v)), rhs))))
    if shape < 0.35:
        return Term("=", (rhs, e))
    return Term("=", (e, rhs))


def _atom(rng: random.Random, spec: GeneratorSpec, x: Term, task: str) -> Term:
    n = lambda: _small(rng, spec)
    choices = [
        lambda: x,
        lambda: Term("*", (n(), x)),
        lambda: Term("^", (x, n())),
        lambda: Term("*", (n(), Term("^", (x, n())))),
        lambda: Term("Sin", (x,)),
        lambda: Term("Cos", (x,)),
        lambda: Term("Exp", (x,)),
        lambda: Term("Sin", (Term("*", (n(), x)),)),
        lambda: Term("Cos", (Term("*", (n(), x)),)),
        lambda: Term("Exp", (Term("*", (n(), x)),)),
        lambda: Term("*", (n(), Term("Sin", (x,)))),
    ]
    if task == DIFFERENTIAL:
        choices += [
            lambda: Term("Ln", (x,)),
            lambda: Term("Sin", (Term("+", (Term("*", (n(), x)), n())),)),
            lambda: Term("^", (Term("+", (Term("*", (n(), x)), n())), n())),
            lambda: Term("*", (x, Term(rng.choice(["Sin", "Cos", "Exp"]), (x,)))),
            lambda: Term("Ln", (Term("+", (x, n())),)),
        ]
    else:
        choices += [
            lambda: n(),
            lambda: Term("/", (Term("1"), x)),
        ]
    return rng.choice(choices)()


def _sum(rng: random.Random, spec: GeneratorSpec, x: Term, task: str) -> Term:
    terms = rng.randint(*spec.depth_range)
    f = _atom(rng, spec, x, task)
    for _ in range(terms - 1):
        f = Term(rng.choice("++-"), (f, _atom(rng, spec, x, task)))
    return f


def gen_question(spec: GeneratorSpec, task: str, rng: random.Random) -> Term:
    """A random question of the given task family."""
    x = Term("X")
    if task == LINEAR:
        return _linear(rng, spec)
    if task == DIFFERENTIAL:
        return Term("/", (Term("D", (_sum(rng, spec, x, task),)), Term("D", (x,))))
    if task == INTEGRAL:
        return Term("Integral", (_sum(rng, spec, x, task), x))
    raise ValueError(f"unknown task {task!r}")


# ------------------------------------------------------------------ corpus


@dataclass(frozen=True)
class StepRecord:
    """A scheme step together with the applications that preceded it."""

    step: Step
    history: tuple[tuple[str, Position], ...]
    task: str
    scheme: int
    index: int

    def to_json(self) -> dict:
        d = self.step.to_json()
        d.update(
            history=[[r, list(p)] for r, p in self.history],
            task=self.task,
            scheme=self.scheme,
            index=self.index,
        )
        return d

    @classmethod
    def from_json(cls, d: dict) -> StepRecord:
        return cls(
            Step.from_json(d),
            tuple((r, tuple(p)) for r, p in d["history"]),
            d["task"],
            d["scheme"],
            d["index"],
        )


@dataclass
class Corpus:
    schemes: list[tuple[str, Scheme]]
    train: list[StepRecord]
    test: list[StepRecord]
    manifest: dict = field(default_factory=dict)

    def step_records(self) -> list[StepRecord]:
        out = []
        for k, (task, s) in enumerate(self.schemes):
            for i, st in enumerate(s.steps):
                out.append(StepRecord(st, tuple(s.actions[:i]), task, k, i))
        return out

    def write(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "schemes.jsonl", "w", encoding="utf-8") as fh:
            for task, s in self.schemes:
                fh.write(json.dumps(s.to_json(task=task), sort_keys=True) + "\n")
        for name, recs in (("train", self.train), ("test", self.test)):
            with open(d / f"{name}.jsonl", "w", encoding="utf-8") as fh:
                for r in recs:
                    fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
        (d / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, directory: str | Path) -> Corpus:
        d = Path(directory)
        schemes = []
        for line in (d / "schemes.jsonl").read_text(encoding="utf-8").splitlines():
            if line.strip():
                obj = json.loads(line)
                schemes.append((obj.get("task", ""), Scheme.from_json(obj)))
        splits = {}
        for name in ("train", "test"):
            lines = (d / f"{name}.jsonl").read_text(encoding="utf-8").splitlines()
            splits[name] = [StepRecord.from_json(json.loads(l)) for l in lines if l.strip()]
        manifest = json.loads((d / "manifest.json").read_text())
        return cls(schemes, splits["train"], splits["test"], manifest)


def split_sizes(n: int) -> tuple[int, int]:
    n_test = round(n * TEST_FRACTION)
    return n - n_test, n_test


def gen_corpus(
    spec: GeneratorSpec,
    rs: RuleSet,
    limits: SearchLimits = SearchLimits(max_depth=12, max_nodes=20_000),
    max_position_depth: int = 3,
) -> Corpus:
    """Solve distinct questions by BFS until ``spec.schemes`` schemes are kept, then split their steps.

    At most twice that many questions are attempted.  Failed searches and schemes acting deeper than ``max_position_depth`` are
    discarded and counted.  Steps are shuffled with the spec seed and split
    by the reference train/test ratio.
    """
    seen: set[Term] = set()
    schemes: list[tuple[str, Scheme]] = []
    failures: dict[str, int] = {}
    too_deep = 0
    duplicates = 0
    index = 0
    attempts = 0
    while len(schemes) < spec.schemes and attempts < 2 * spec.schemes:
        rng = spec.rng(index)
        task = rng.choices(TASKS, weights=spec.weights)[0]
        q = gen_question(spec, task, rng)
        index += 1
        if q in seen or rs.is_solved(q):
            duplicates += 1
            if duplicates > 20 * spec.schemes:
                break
            continue
        seen.add(q)
        attempts += 1
        try:
            s = bfs_search(q, rs, limits)
        except SearchFailure as exc:
            failures[exc.reason] = failures.get(exc.reason, 0) + 1
            continue
        if any(len(st.position) - 1 > max_position_depth for st in s.steps):
            too_deep += 1
            continue
        if replay(s, rs) is not None:
            raise AssertionError(f"BFS produced a scheme that does not replay: {to_text(q)}")
        schemes.append((task, s))
    if len(schemes) < 0.5 * spec.schemes:
        raise InsufficientYield(f"only {len(schemes)} of {spec.schemes} requested schemes solved")

    corpus = Corpus(schemes, [], [])
    records = corpus.step_records()
    order = np.random.default_rng(spec.seed).permutation(len(records))
    n_train, n_test = split_sizes(len(records))
    corpus.train = [records[i] for i in order[:n_train]]
    corpus.test = [records[i] for i in order[n_train:]]
    by_task = {t: sum(1 for tk, _ in schemes if tk == t) for t in TASKS}
    corpus.manifest = {
        "seed": spec.seed,
        "requested": spec.schemes,
        "solved": len(schemes),
        "discarded": {"search": failures, "position-too-deep": too_deep},
        "discard_rate": 1 - len(schemes) / max(attempts, 1),
        "schemes_by_task": by_task,
        "steps": len(records),
        "ratio": [1 - TEST_FRACTION, TEST_FRACTION],
        "train_indices": order[:n_train].tolist(),
        "test_indices": order[n_train:].tolist(),
        "generator": {
            "weights": list(spec.weights),
            "numeral_range": list(spec.numeral_range),
            "depth_range": list(spec.depth_range),
        },
    }
    log.info("solved %d/%d questions, %d steps", len(schemes), attempts, len(records))
    return corpus


def corpus_symbols(schemes: Sequence[tuple[str, Scheme]]) -> set[str]:
    out: set[str] = set()
    for _, s in schemes:
        out |= s.question.symbols()
        for st in s.steps:
            out |= st.target.symbols()
    return out
