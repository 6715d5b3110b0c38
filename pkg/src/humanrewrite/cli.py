"""Command-line entry point: ``humanrewrite {gen,train,eval,rewrite,repl}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, read_config_file, write_provenance
from .corpus import Corpus, InsufficientYield, corpus_symbols, gen_corpus
from .encoding import Encoder, EncodingError, Vocabulary
from .guided import Model, evaluate, human_like_rewrite, replay_trace, write_traces
from .network import DivergenceError, train
from .repl import SchemeSession, run_repl
from .rewriting import RuleSyntaxError, dump_rules, load_rules, parse_rules
from .terms import ParseError, parse

log = logging.getLogger("humanrewrite")

OUT_ENV = "HUMANREWRITE_OUT"


class UsageError(Exception):
    pass


def _out_dir(cfg: ExperimentConfig, fallback: str) -> Path:
    if cfg.out:
        return Path(cfg.out)
    return Path(os.environ.get(OUT_ENV, "runs")) / fallback


def _load_rules(cfg: ExperimentConfig):
    if not Path(cfg.rules).is_file():
        raise UsageError(f"rule set not found: {cfg.rules}")
    try:
        return load_rules(cfg.rules)
    except RuleSyntaxError as exc:
        raise UsageError(f"{cfg.rules}: {exc}") from exc


# ---------------------------------------------------------------- commands


def cmd_gen(cfg: ExperimentConfig) -> int:
    rs = _load_rules(cfg)
    out = Path(cfg.corpus) if cfg.corpus else _out_dir(cfg, f"corpus-seed{cfg.seed}")
    corpus = gen_corpus(cfg.generator_spec(), rs, cfg.search_limits(), cfg.max_position_depth)
    corpus.write(out)
    (out / "rules.txt").write_text(dump_rules(rs))
    write_provenance(out, "gen", cfg)
    m = corpus.manifest
    print(f"corpus: {out}")
    print(f"schemes solved: {m['solved']} (requested {m['requested']}, discard rate {100 * m['discard_rate']:.1f}%)")
    print(f"by task: {m['schemes_by_task']}")
    print(f"steps: {m['steps']}  train: {len(corpus.train)}  test: {len(corpus.test)}")
    return 0


def _read_corpus(path: str) -> Corpus:
    if not path or not (Path(path) / "manifest.json").is_file():
        raise UsageError(f"no corpus at {path!r} (run gen first)")
    return Corpus.read(path)


def cmd_train(cfg: ExperimentConfig) -> int:
    rs = _load_rules(cfg)
    corpus = _read_corpus(cfg.corpus)
    opts = cfg.encoder_options()
    vocab = Vocabulary.build(rs.symbols() | corpus_symbols(corpus.schemes), range(cfg.numeral_min, cfg.numeral_max + 1), rs.max_fresh)
    encoder = Encoder(opts, vocab, rs.names)
    try:
        examples = [encoder.encode(r.step.source, r.history, (r.step.rule_name, r.step.position)) for r in corpus.train]
    except (EncodingError, KeyError) as exc:
        raise UsageError(f"corpus does not fit the encoder options or rule set: {exc}") from exc
    name = cfg.model_name()
    model_path = Path(cfg.model) if cfg.model else _out_dir(cfg, name) / f"{name}.model"
    model_path.parent.mkdir(parents=True, exist_ok=True)

    def report(epoch, value, lr):
        print(f"epoch {epoch:3d}  loss {value:.4f}  lr {lr:g}", flush=True)

    print(f"training {name} on {len(examples)} examples (input width {encoder.width}, {encoder.n_classes} classes)")
    params, curve = train(examples, cfg.train_config(), encoder.n_classes, on_epoch=report)
    model = Model(params, encoder, {"name": name, "rules_text": dump_rules(rs), "train_config": cfg.train_config().__dict__})
    model.save(model_path)
    curve_path = model_path.with_suffix(".curve.tsv")
    curve_path.write_text(curve.to_tsv())
    write_provenance(model_path.parent, "train", cfg, {"model": str(model_path), "epochs": len(curve)})
    print(f"model: {model_path}")
    print(f"curve: {curve_path}")
    return 0


def _model_rules(model: Model, cfg: ExperimentConfig, explicit_rules: bool):
    if explicit_rules or "rules_text" not in model.meta:
        rs = _load_rules(cfg)
    else:
        rs = parse_rules(model.meta["rules_text"])
    try:
        model.check_rules(rs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return rs


def _load_model(path: str) -> Model:
    if not path or not Path(path).is_file():
        raise UsageError(f"model file not found: {path!r}")
    return Model.load(path)


def cmd_eval(cfg: ExperimentConfig, split: str = "test", any_valid: bool = False, explicit_rules: bool = False) -> int:
    model = _load_model(cfg.model)
    corpus = _read_corpus(cfg.corpus)
    rs = _model_rules(model, cfg, explicit_rules)
    records = corpus.test if split == "test" else corpus.train
    report = evaluate(model, records, rs, any_valid=any_valid)
    if report.encoding_failures == report.n_total:
        raise UsageError("model encoder options do not match this corpus")
    data = report.to_json()
    data.update(model=model.name, split=split, scoring="any-valid" if any_valid else "top-1")
    print(f"{model.name} on {split}: error rate {report.error_rate:.1f}%  (N_Error={report.n_error}, N_Total={report.n_total})")
    for task, d in data["by_task"].items():
        print(f"  {task:13s} {d['error_rate']:5.1f}%  ({d['n_error']}/{d['n_total']})")
    print("  rank of expected action: " + ", ".join(f"{k}:{v}" for k, v in report.rank_histogram.items()))
    out = Path(cfg.out) if cfg.out else Path(cfg.model).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / f"eval-{split}.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    write_provenance(out, "eval", cfg)
    return 0


def cmd_rewrite(cfg: ExperimentConfig, expression: str, max_steps: int, trace_path: str | None, explicit_rules: bool) -> int:
    model = _load_model(cfg.model)
    rs = _model_rules(model, cfg, explicit_rules)
    question = parse(expression)
    trace = human_like_rewrite(model, question, rs, max_steps=max_steps)
    assert replay_trace(trace, rs) is None
    for i, st in enumerate(trace.steps, 1):
        print(f"{i:3d}. {st}   [rank {st.rank}]")
    print(f"outcome: {trace.outcome}")
    print(f"answer: {trace.answer}")
    if trace_path:
        write_traces(trace_path, [trace])
    return 0


def cmd_repl(cfg: ExperimentConfig, question: str, save_path: str) -> int:
    rs = _load_rules(cfg)
    session = SchemeSession(parse(question), rs, cfg.search_limits())
    print("type 'help' for commands")
    run_repl(session, save_path)
    return 0


# ------------------------------------------------------------------ parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--rules", help="rule set file (default: bundled algebra rules)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_encoder(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["rpt", "crpt"])
    p.add_argument("--rpt-depth", type=int, choices=[1, 2, 3])
    p.add_argument("--max-position-depth", type=int)
    p.add_argument("--sav", action="store_const", const=True)
    p.add_argument("--rar", type=int, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="humanrewrite", description="Neural-guided term rewriting.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a corpus of reasoning schemes")
    _add_common(g)
    g.add_argument("--schemes", type=int)
    g.add_argument("--task-weights")
    g.add_argument("--corpus", help="corpus output directory")
    g.add_argument("--max-position-depth", type=int)

    t = sub.add_parser("train", help="train a model on a corpus")
    _add_common(t)
    _add_encoder(t)
    t.add_argument("--corpus")
    t.add_argument("--model", help="model output path")
    t.add_argument("--hidden-layers", type=int, choices=[0, 1, 2, 3, 4, 5, 6, 7, 8])
    t.add_argument("--hidden-units", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--max-epochs", type=int)

    e = sub.add_parser("eval", help="error rate of a model on a corpus split")
    _add_common(e)
    e.add_argument("--model")
    e.add_argument("--corpus")
    e.add_argument("--split", choices=["test", "train"], default="test")
    e.add_argument("--any-valid", action="store_true", help="count any applicable prediction as correct")

    r = sub.add_parser("rewrite", help="rewrite an expression under model guidance")
    _add_common(r)
    r.add_argument("--model")
    r.add_argument("--max-steps", type=int, default=25)
    r.add_argument("--trace", help="write the trace as a JSON line")
    r.add_argument("expression")

    q = sub.add_parser("repl", help="author a scheme interactively")
    _add_common(q)
    q.add_argument("--save", default="scheme.jsonl", help="default path for 'save'")
    q.add_argument("question")
    return parser


_CONFIG_KEYS = {
    "rules", "seed", "out", "mode", "rpt_depth", "max_position_depth", "sav", "rar", "schemes", "task_weights",
    "corpus", "model", "hidden_layers", "hidden_units", "batch_size", "max_epochs",
}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        cfg.update(read_config_file(args.config))
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS and v is not None}
    cfg.update(overrides)
    return cfg.validate()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.split, args.any_valid, args.rules is not None)
        if args.command == "rewrite":
            return cmd_rewrite(cfg, args.expression, args.max_steps, args.trace, args.rules is not None)
        if args.command == "repl":
            return cmd_repl(cfg, args.question, args.save)
    except (UsageError, ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InsufficientYield, DivergenceError, EncodingError, OSError, RuleSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
