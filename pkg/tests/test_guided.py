import json

import numpy as np
import pytest

from humanrewrite.config import default_rules_path
from humanrewrite.corpus import StepRecord
from humanrewrite.encoding import Encoder, EncoderOptions, Vocabulary
from humanrewrite.guided import (
    SOLVED,
    STEP_LIMIT,
    STUCK,
    EvalReport,
    Model,
    NoApplicableAction,
    evaluate,
    evaluate_error_rate,
    guide_step,
    human_like_rewrite,
    replay_trace,
    write_traces,
)
from humanrewrite.network import TrainConfig, init_params, train
from humanrewrite.rewriting import SearchLimits, bfs_search, load_rules
from humanrewrite.terms import parse

P = parse


@pytest.fixture(scope="module")
def peano():
    return load_rules(default_rules_path("peano"))


def zero_model(rs, options=EncoderOptions(depth=2, rar=1)):
    vocab = Vocabulary.build(rs.symbols() | {"X", "Y"}, range(0, 3), rs.max_fresh)
    enc = Encoder(options, vocab, rs.names)
    params = init_params(enc.width, 1, 4, enc.n_classes, np.random.default_rng(0))
    for W, b in params.layers:
        W[:] = 0
        b[:] = 0
    return Model(params, enc, {"name": "zero"})


def records_for(question, rs, task="peano", scheme=0):
    s = bfs_search(question, rs, SearchLimits(max_depth=10))
    history = []
    out = []
    for i, st in enumerate(s.steps):
        out.append(StepRecord(st, tuple(history), task, scheme, i))
        history.append((st.rule_name, st.position))
    return out


@pytest.fixture(scope="module")
def saturated(peano):
    records = records_for(P("S(0)+S(S(0))"), peano)
    model = zero_model(peano)
    exs = [model.encoder.encode(r.step.source, r.history, (r.step.rule_name, r.step.position)) for r in records]
    cfg = TrainConfig(hidden_layers=1, hidden_units=32, init_lr=0.5, halve_threshold=1e-4, stop_threshold=1e-7, batch_size=3, max_epochs=2000)
    params, curve = train(exs, cfg, model.encoder.n_classes)
    assert curve.loss[-1] < 0.01
    return Model(params, model.encoder, {"name": "peano"}), records


def test_saturated_model_first_step(saturated, peano):
    model, _ = saturated
    name, pos, rank, out = guide_step(model, P("S(0)+S(S(0))"), [], peano)
    assert (name, pos, rank) == ("2", (1,), 1)
    assert out == P("S(S(0)+S(0))")


def test_saturated_model_reproduces_derivation(saturated, peano):
    model, records = saturated
    trace = human_like_rewrite(model, P("S(0)+S(S(0))"), peano, max_steps=10)
    assert trace.outcome == SOLVED
    assert [s.target for s in trace.steps] == [r.step.target for r in records]
    assert [s.target for s in trace.steps] == [P("S(S(0)+S(0))"), P("S(S(S(0)+0))"), P("S(S(S(0)))")]
    assert all(s.rank == 1 for s in trace.steps)
    assert replay_trace(trace, peano) is None
    assert evaluate_error_rate(model, records) == 0.0


def test_only_applicable_action_is_found(peano):
    model = zero_model(peano)
    name, pos, _, out = guide_step(model, P("S(0)+0"), [], peano, max_rank=None)
    assert (name, pos, out) == ("1", (1,), P("S(0)"))


def test_no_applicable_action(peano):
    with pytest.raises(NoApplicableAction):
        guide_step(zero_model(peano), P("S(S(0))"), [], peano, max_rank=None)


def test_already_solved_question(peano):
    trace = human_like_rewrite(zero_model(peano), P("S(0)"), peano)
    assert trace.outcome == SOLVED and trace.steps == [] and trace.answer == P("S(0)")


def test_chain_rule_is_bounded_by_step_limit():
    rs = load_rules(default_rules_path("chain"))
    trace = human_like_rewrite(zero_model(rs), P("D(Y)/D(X)"), rs, max_steps=6)
    assert trace.outcome == STEP_LIMIT
    assert len(trace.steps) == 6
    assert replay_trace(trace, rs) is None


def test_stuck_outcome(peano):
    # no prediction in the allowed ranks applies
    trace = human_like_rewrite(zero_model(peano), P("X+S(Y)"), peano, max_rank=0)
    assert trace.outcome == STUCK and trace.steps == []


def test_trace_file(tmp_path, saturated, peano):
    model, _ = saturated
    trace = human_like_rewrite(model, P("S(0)+S(S(0))"), peano)
    path = tmp_path / "t.jsonl"
    write_traces(path, [trace])
    d = json.loads(path.read_text())
    assert d["outcome"] == SOLVED and d["answer"] == "S(S(S(0)))"
    assert [s["rank"] for s in d["steps"]] == [1, 1, 1]


@pytest.mark.parametrize("n, wrong, rate", [(1000, 129, 12.9), (1000, 46, 4.6), (1000, 0, 0.0)])
def test_error_rate_arithmetic(n, wrong, rate):
    assert EvalReport(n, wrong, {}, {}).error_rate == pytest.approx(rate)


def test_error_rate_matches_top1_mismatches(peano):
    rng = np.random.default_rng(0)
    model = zero_model(peano)
    model.params = init_params(model.encoder.width, 2, 16, model.encoder.n_classes, rng)
    records = []
    for k, q in enumerate(["S(0)+S(S(0))", "S(S(0))+S(S(0))", "0+S(S(S(0)))"]):
        records += records_for(P(q), peano, scheme=k)
    mismatches = sum(
        model.ranked(r.step.source, r.history)[0] != model.encoder.target_class(r.step.rule_name, r.step.position)
        for r in records
    )
    report = evaluate(model, records)
    assert report.n_error == mismatches
    assert report.error_rate == pytest.approx(100 * mismatches / len(records))
    shuffled = [records[i] for i in rng.permutation(len(records))]
    assert evaluate(model, shuffled).n_error == report.n_error
    assert sum(report.rank_histogram.values()) == len(records)
    assert evaluate(model, records, peano, any_valid=True).n_error <= report.n_error


def test_model_save_load(tmp_path, saturated):
    model, _ = saturated
    path = tmp_path / "p.model"
    model.save(path)
    again = Model.load(path)
    assert again.name == "peano"
    t = P("S(0)+S(S(0))")
    assert np.array_equal(again.probabilities(t), model.probabilities(t))


def test_rule_table_mismatch(saturated):
    model, _ = saturated
    with pytest.raises(ValueError):
        model.check_rules(load_rules(default_rules_path("chain")))
