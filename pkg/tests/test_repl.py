import io

import pytest

from humanrewrite.config import default_rules_path
from humanrewrite.repl import SchemeSession, SessionError, run_repl
from humanrewrite.rewriting import load_rules, read_schemes, replay
from humanrewrite.terms import parse

Q = parse("D(Sin(2*X))/D(X)")


@pytest.fixture(scope="module")
def algebra():
    return load_rules(default_rules_path("algebra"))


def action_number(session, name):
    return 1 + [n for n, _ in session.actions()].index(name)


def test_manual_step_then_auto(algebra, tmp_path):
    s = SchemeSession(Q, algebra)
    s.apply(action_number(s, "chain_sin"))
    s.auto()
    assert s.solved
    saved = s.save(tmp_path / "s.jsonl")
    assert saved.steps[0].rule_name == "chain_sin"
    [back] = read_schemes(tmp_path / "s.jsonl")
    assert replay(back, algebra) is None


def test_undo_restores_question(algebra):
    s = SchemeSession(Q, algebra)
    s.apply(1)
    s.undo()
    assert s.current == Q and s.steps == []
    with pytest.raises(SessionError):
        s.undo()


def test_unreachable_subgoal_leaves_state(algebra):
    s = SchemeSession(Q, algebra)
    with pytest.raises(SessionError):
        s.subgoal(parse("Y+Y"))
    assert s.current == Q


def test_cannot_save_unsolved(algebra, tmp_path):
    with pytest.raises(SessionError):
        SchemeSession(Q, algebra).save(tmp_path / "x.jsonl")


def test_bad_choice(algebra):
    with pytest.raises(SessionError):
        SchemeSession(Q, algebra).apply(999)


def test_scripted_session(algebra, tmp_path):
    n = action_number(SchemeSession(Q, algebra), "chain_sin")
    path = tmp_path / "out.jsonl"
    script = f"help\nbogus\n999\n{n}\nundo\n{n}\nsubgoal Y+Y\nauto\nsave {path}\nquit\n"
    out = io.StringIO()
    saved = run_repl(SchemeSession(Q, algebra), tmp_path / "unused.jsonl", io.StringIO(script), out)
    text = out.getvalue()
    assert "unknown command" in text and "error: choose an action" in text and "search failed" in text
    assert "(solved)" in text and f"saved {len(saved.steps)}-step scheme" in text
    assert saved.steps[0].rule_name == "chain_sin"
    assert replay(read_schemes(path)[0], algebra) is None
