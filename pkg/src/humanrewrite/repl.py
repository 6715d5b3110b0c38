"""Interactive scheme authoring: apply rules by hand, let BFS finish, save the scheme."""

from __future__ import annotations

import sys
from pathlib import Path
from typing import TextIO

from .rewriting import (
    RuleSet,
    Scheme,
    SearchFailure,
    SearchLimits,
    Step,
    apply_rule_at,
    applicable_actions,
    bfs_search,
    replay,
    write_schemes,
)
from .terms import ParseError, Term, format_position, parse, to_text

HELP = """\
commands:
  <n>              apply action number n from the list
  auto             search from the current term to a solved form
  subgoal <expr>   search from the current term to <expr>
  undo             take back the last step
  show             list the current term and its actions
  save [path]      write the scheme (must be solved and replay)
  help             this text
  quit             leave without saving
"""


class SessionError(RuntimeError):
    pass


class SchemeSession:
    """Editable derivation state.  Every method leaves the state unchanged on failure."""

    def __init__(self, question: Term, rs: RuleSet, limits: SearchLimits = SearchLimits(max_depth=12, max_nodes=50_000)):
        self.question = question
        self.rs = rs
        self.limits = limits
        self.steps: list[Step] = []

    @property
    def current(self) -> Term:
        return self.steps[-1].target if self.steps else self.question

    @property
    def solved(self) -> bool:
        return self.rs.is_solved(self.current)

    def actions(self):
        return applicable_actions(self.current, self.rs)

    def apply(self, choice: int) -> Step:
        acts = self.actions()
        if not 1 <= choice <= len(acts):
            raise SessionError(f"choose an action between 1 and {len(acts)}")
        name, pos = acts[choice - 1]
        target = apply_rule_at(self.current, self.rs.rule(name), pos, self.rs.max_fresh)
        step = Step(self.current, name, pos, target)
        self.steps.append(step)
        return step

    def undo(self) -> Step:
        if not self.steps:
            raise SessionError("nothing to undo")
        return self.steps.pop()

    def _search(self, goal=None) -> list[Step]:
        try:
            found = bfs_search(self.current, self.rs, self.limits, goal=goal)
        except SearchFailure as exc:
            raise SessionError(f"search failed ({exc.reason}); state unchanged") from exc
        self.steps.extend(found.steps)
        return list(found.steps)

    def auto(self) -> list[Step]:
        return self._search()

    def subgoal(self, goal: Term) -> list[Step]:
        return self._search(lambda t: t == goal)

    def scheme(self) -> Scheme:
        return Scheme(self.question, tuple(self.steps), self.current)

    def save(self, path: str | Path) -> Scheme:
        if not self.solved:
            raise SessionError("current term is not in solved form")
        s = self.scheme()
        bad = replay(s, self.rs)
        if bad is not None:
            raise SessionError(f"scheme does not replay at step {bad}")
        write_schemes(path, [s])
        return s


def run_repl(session: SchemeSession, default_path: str | Path, stdin: TextIO | None = None, stdout: TextIO | None = None) -> Scheme | None:
    """Read commands until ``quit``/EOF.  Returns the last saved scheme, if any."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    out = lambda s="": print(s, file=stdout)
    saved = None

    def show():
        out(f"[{len(session.steps)}] {to_text(session.current)}" + ("   (solved)" if session.solved else ""))
        for i, (name, pos) in enumerate(session.actions(), 1):
            out(f"  {i:3d}. {name} @ {format_position(pos)}")

    show()
    while True:
        stdout.write("> ")
        stdout.flush()
        line = stdin.readline()
        if not line:
            out()
            break
        cmd, _, arg = line.strip().partition(" ")
        try:
            if not cmd:
                continue
            if cmd.isdigit():
                out(str(session.apply(int(cmd))))
            elif cmd == "auto":
                for st in session.auto():
                    out(str(st))
            elif cmd == "subgoal":
                for st in session.subgoal(parse(arg)):
                    out(str(st))
            elif cmd == "undo":
                session.undo()
            elif cmd == "show":
                pass
            elif cmd == "save":
                path = arg.strip() or default_path
                saved = session.save(path)
                out(f"saved {len(saved.steps)}-step scheme to {path}")
                continue
            elif cmd == "help":
                out(HELP)
                continue
            elif cmd in ("quit", "exit"):
                break
            else:
                out(f"unknown command {cmd!r}; try help")
                continue
        except (SessionError, ParseError) as exc:
            out(f"error: {exc}")
            continue
        show()
    return saved
