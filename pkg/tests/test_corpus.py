import filecmp

import pytest

from humanrewrite.config import default_rules_path
from humanrewrite.corpus import (
    DIFFERENTIAL,
    INTEGRAL,
    LINEAR,
    TASKS,
    Corpus,
    GeneratorSpec,
    InsufficientYield,
    gen_corpus,
    gen_question,
    split_sizes,
)
from humanrewrite.rewriting import SearchLimits, load_rules, replay
from humanrewrite.terms import subterm_at


@pytest.fixture(scope="module")
def algebra():
    return load_rules(default_rules_path("algebra"))


@pytest.fixture(scope="module")
def small(algebra):
    return gen_corpus(GeneratorSpec(schemes=60, seed=3), algebra)


def test_question_shapes():
    spec = GeneratorSpec(seed=1)
    for i in range(50):
        lin = gen_question(spec, LINEAR, spec.rng(i))
        assert lin.head == "=" and lin.variables() == set()
        assert {"X", "Y"} & lin.symbols()
        d = gen_question(spec, DIFFERENTIAL, spec.rng(i))
        assert d.head == "/" and d.args[0].head == "D" and subterm_at(d, (1, 2)).head == "D"
        assert sum(1 for _, s in d.walk() if s.head == "D") == 2
        it = gen_question(spec, INTEGRAL, spec.rng(i))
        assert it.head == "Integral" and it.args[1].head == "X"


def test_question_determinism():
    spec = GeneratorSpec(seed=9)
    for task in TASKS:
        assert gen_question(spec, task, spec.rng(4)) == gen_question(spec, task, spec.rng(4))


def test_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec(weights=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        GeneratorSpec(schemes=0)


@pytest.mark.parametrize("n", [1500, 1617, 6067])
def test_split_sizes(n):
    train, test = split_sizes(n)
    assert train + test == n
    assert abs(test - n * 1000 / 6067) <= 1


def test_corpus_split_is_a_partition(small):
    m = small.manifest
    all_idx = m["train_indices"] + m["test_indices"]
    assert sorted(all_idx) == list(range(m["steps"]))
    assert (len(small.train), len(small.test)) == split_sizes(m["steps"])
    keys = lambda recs: {(r.scheme, r.index) for r in recs}
    assert not keys(small.train) & keys(small.test)


def test_every_scheme_replays_and_fits_the_position_cap(small, algebra):
    assert small.manifest["solved"] == len(small.schemes) == 60
    for _, s in small.schemes:
        assert replay(s, algebra) is None
        assert algebra.is_solved(s.answer)
        assert all(len(st.position) <= 4 for st in s.steps)


def test_history_is_the_preceding_steps(small):
    for r in small.train[:50]:
        _, s = small.schemes[r.scheme]
        assert r.history == tuple(s.actions[: r.index])
        assert r.step == s.steps[r.index]


def test_regeneration_is_byte_identical(algebra, small, tmp_path):
    small.write(tmp_path / "a")
    gen_corpus(GeneratorSpec(schemes=60, seed=3), algebra).write(tmp_path / "b")
    for name in ("schemes.jsonl", "train.jsonl", "test.jsonl", "manifest.json"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def test_read_back(small, tmp_path):
    small.write(tmp_path)
    again = Corpus.read(tmp_path)
    assert again.train == small.train and again.test == small.test
    assert [s.steps for _, s in again.schemes] == [s.steps for _, s in small.schemes]


def test_insufficient_yield(algebra):
    with pytest.raises(InsufficientYield):
        gen_corpus(GeneratorSpec(schemes=20, seed=0), algebra, SearchLimits(max_depth=1, max_nodes=50))


def test_discards_are_reported(algebra):
    c = gen_corpus(GeneratorSpec(schemes=40, seed=5), algebra, SearchLimits(max_depth=3, max_nodes=2000))
    m = c.manifest
    assert 0 <= m["discard_rate"] < 1
    assert m["solved"] == len(c.schemes)
