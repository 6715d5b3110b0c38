"""Network-guided ("human-like") rewriting and test-set error rates."""

from __future__ import annotations

import json
import logging
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import StepRecord
from .encoding import Encoder, EncodingError
from .network import NetworkParams, forward, load_model, make_batch, rank_classes, save_model
from .rewriting import RuleSet, apply_rule_at
from .terms import InvalidPosition, Position, Term, format_position, to_text

log = logging.getLogger(__name__)

SOLVED = "solved"
STEP_LIMIT = "step-limit"
STUCK = "stuck"

DEFAULT_MAX_RANK = 50


class NoApplicableAction(RuntimeError):
    pass


@dataclass
class Model:
    """Trained parameters plus the encoder they were trained with."""

    params: NetworkParams
    encoder: Encoder
    meta: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.meta.get("name", f"FNN{len(self.params.hidden)}+{self.encoder.options.tag}")

    def probabilities(self, t: Term, history: Sequence[tuple[str, Position]] = ()) -> np.ndarray:
        return forward(self.params, self.encoder.encode(t, history))

    def ranked(self, t: Term, history: Sequence[tuple[str, Position]] = ()) -> list[int]:
        return rank_classes(self.probabilities(t, history))

    def save(self, path: str | Path) -> None:
        meta = dict(self.meta)
        meta["encoder"] = self.encoder.config()
        meta.setdefault("name", self.name)
        save_model(path, self.params, meta)

    @classmethod
    def load(cls, path: str | Path) -> Model:
        params, meta = load_model(path)
        encoder = Encoder.from_config(meta.pop("encoder"))
        if params.input_width != encoder.width or params.n_classes != encoder.n_classes:
            raise ValueError(f"{path}: network dimensions do not match the stored encoder options")
        return cls(params, encoder, meta)

    def check_rules(self, rs: RuleSet) -> None:
        if rs.names != self.encoder.rule_names:
            raise ValueError("rule set does not match the rule table the model was trained with")


@dataclass
class GuidedStep:
    source: Term
    rule_name: str
    position: Position
    rank: int
    target: Term

    def to_json(self) -> dict:
        return {
            "source": to_text(self.source),
            "rule": self.rule_name,
            "position": list(self.position),
            "rank": self.rank,
            "target": to_text(self.target),
        }

    def __str__(self):
        return f"{self.source}  --{self.rule_name}@{format_position(self.position)}-->  {self.target}"


@dataclass
class GuidedTrace:
    question: Term
    steps: list[GuidedStep]
    outcome: str

    @property
    def answer(self) -> Term:
        return self.steps[-1].target if self.steps else self.question

    def to_json(self) -> dict:
        return {
            "question": to_text(self.question),
            "answer": to_text(self.answer),
            "steps": [s.to_json() for s in self.steps],
            "outcome": self.outcome,
        }


def guide_step(
    model: Model,
    t: Term,
    history: Sequence[tuple[str, Position]],
    rs: RuleSet,
    max_rank: int | None = DEFAULT_MAX_RANK,
) -> tuple[str, Position, int, Term]:
    """Highest-ranked predicted action that actually applies to ``t``.

    Returns (rule name, position, rank, rewritten term); rank 1 is the argmax.
    """
    ranking = model.ranked(t, history)
    if max_rank is not None:
        ranking = ranking[:max_rank]
    codec = model.encoder.codec
    for rank, cls in enumerate(ranking, start=1):
        r, pos = codec.decode(cls)
        if r >= len(rs.rules):
            continue
        try:
            out = apply_rule_at(t, rs.rules[r], pos, rs.max_fresh)
        except InvalidPosition:
            continue
        if out is not None:
            return rs.rules[r].name, pos, rank, out
    raise NoApplicableAction(f"none of the top {len(ranking)} predictions applies to {to_text(t)}")


def human_like_rewrite(model: Model, question: Term, rs: RuleSet, max_steps: int = 25, max_rank: int | None = DEFAULT_MAX_RANK) -> GuidedTrace:
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    current = question
    history: list[tuple[str, Position]] = []
    steps: list[GuidedStep] = []
    while True:
        if rs.is_solved(current):
            return GuidedTrace(question, steps, SOLVED)
        if len(steps) >= max_steps:
            return GuidedTrace(question, steps, STEP_LIMIT)
        try:
            name, pos, rank, nxt = guide_step(model, current, history, rs, max_rank)
        except (NoApplicableAction, EncodingError) as exc:
            log.info("stuck: %s", exc)
            return GuidedTrace(question, steps, STUCK)
        steps.append(GuidedStep(current, name, pos, rank, nxt))
        history.append((name, pos))
        current = nxt


def replay_trace(trace: GuidedTrace, rs: RuleSet) -> int | None:
    """Index of the first step that does not reproduce, or None."""
    current = trace.question
    for i, s in enumerate(trace.steps):
        if s.source != current or s.rule_name not in rs.names:
            return i
        if apply_rule_at(s.source, rs.rule(s.rule_name), s.position, rs.max_fresh) != s.target:
            return i
        current = s.target
    return None


def write_traces(path: str | Path, traces: Sequence[GuidedTrace]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tr in traces:
            fh.write(json.dumps(tr.to_json(), sort_keys=True) + "\n")


# -------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    n_total: int
    n_error: int
    by_task: dict[str, tuple[int, int]]
    rank_histogram: dict[str, int]
    encoding_failures: int = 0

    @property
    def error_rate(self) -> float:
        return 100.0 * self.n_error / self.n_total

    def to_json(self) -> dict:
        return {
            "error_rate": self.error_rate,
            "n_total": self.n_total,
            "n_error": self.n_error,
            "by_task": {k: {"n_total": n, "n_error": e, "error_rate": 100.0 * e / n} for k, (n, e) in self.by_task.items()},
            "rank_histogram": self.rank_histogram,
            "encoding_failures": self.encoding_failures,
        }


def _rank_bucket(rank: int | None) -> str:
    if rank is None:
        return "unranked"
    if rank <= 5:
        return str(rank)
    if rank <= 10:
        return "6-10"
    if rank <= 50:
        return "11-50"
    return ">50"


def evaluate(model: Model, records: Sequence[StepRecord], rs: RuleSet | None = None, any_valid: bool = False) -> EvalReport:
    """Score top-1 predictions against the recorded steps.

    RAR history comes from each record's true preceding steps.  With
    ``any_valid`` (needs ``rs``) a prediction also counts as correct when it
    names any action applicable to the source; that is not the reported metric.
    """
    if not records:
        raise ValueError("empty test set")
    if any_valid and rs is None:
        raise ValueError("any_valid scoring needs the rule set")
    enc = model.encoder
    encoded, targets, ok = [], [], []
    failures = 0
    for rec in records:
        try:
            target = enc.target_class(rec.step.rule_name, rec.step.position)
            encoded.append(enc.encode(rec.step.source, rec.history, target))
            targets.append(target)
            ok.append(True)
        except (EncodingError, KeyError) as exc:
            log.warning("counting unencodable step as an error: %s", exc)
            failures += 1
            ok.append(False)
    preds: list[np.ndarray] = []
    for lo in range(0, len(encoded), 256):
        preds.append(forward(model.params, make_batch(encoded[lo : lo + 256])))
    probs = np.concatenate(preds) if preds else np.zeros((0, enc.n_classes))

    by_task: dict[str, list[int]] = {}
    hist: Counter[str] = Counter()
    n_error = 0
    j = 0
    for rec, good in zip(records, ok):
        task = by_task.setdefault(rec.task or "all", [0, 0])
        task[0] += 1
        if not good:
            n_error += 1
            task[1] += 1
            hist[_rank_bucket(None)] += 1
            continue
        p = probs[j]
        target = targets[j]
        j += 1
        top = int(rank_classes(p)[0])
        rank = 1 + int(np.sum(p > p[target]) + np.sum((p == p[target]) & (np.arange(len(p)) < target)))
        hist[_rank_bucket(rank)] += 1
        correct = top == target
        if not correct and any_valid:
            r, pos = enc.codec.decode(top)
            try:
                correct = r < len(rs.rules) and apply_rule_at(rec.step.source, rs.rules[r], pos, rs.max_fresh) is not None
            except InvalidPosition:
                correct = False
        if not correct:
            n_error += 1
            task[1] += 1
    return EvalReport(len(records), n_error, {k: (v[0], v[1]) for k, v in sorted(by_task.items())}, dict(sorted(hist.items())), failures)


def evaluate_error_rate(model: Model, records: Sequence[StepRecord], rs: RuleSet | None = None, any_valid: bool = False) -> float:
    """Percentage of steps whose top-1 prediction is not the recorded (rule, position)."""
    return evaluate(model, records, rs, any_valid).error_rate
