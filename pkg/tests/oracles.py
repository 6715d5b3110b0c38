"""Independent reference implementations used by the tests."""

import itertools

from humanrewrite.terms import Term


def subterm_closure(t):
    out = {t}
    for a in t.args:
        out |= subterm_closure(a)
    return out


def _vars(t):
    if not t.args and t.head[0].islower() and not (t.head[0] == "u" and t.head[1:].isdigit()):
        return {t.head}
    out = set()
    for a in t.args:
        out |= _vars(a)
    return out


def _subst(t, theta):
    if not t.args:
        return theta.get(t.head, t)
    return Term(t.head, [_subst(a, theta) for a in t.args])


def brute_force_match(pattern, t):
    """Every substitution from pattern variables to subterms of ``t`` that makes them equal.

    Any matching substitution must map each variable to some subterm of ``t``,
    so this enumeration is complete.
    """
    vs = sorted(_vars(pattern))
    cands = sorted(subterm_closure(t), key=repr)
    found = []
    for combo in itertools.product(cands, repeat=len(vs)):
        theta = dict(zip(vs, combo))
        if any(v[0] in "nm" and not (c.head.isdigit() and not c.args) for v, c in theta.items()):
            continue
        if _subst(pattern, theta) == t:
            found.append(theta)
    return found


def all_terms(leaves, unary, binary, depth):
    """Every term of at most ``depth`` levels over the given alphabet."""
    level = [Term(x) for x in leaves]
    for _ in range(depth - 1):
        nxt = [Term(x) for x in leaves]
        nxt += [Term(f, (a,)) for f in unary for a in level]
        nxt += [Term(f, (a, b)) for f in binary for a in level for b in level]
        level = nxt
    return level


def exhaustive_shortest(question, rs, is_goal, max_depth):
    """Plain level-by-level enumeration of all action sequences (no dedup).

    Returns the minimal step count to a goal, or None.
    """
    from humanrewrite.rewriting import iter_actions

    frontier = [question]
    for depth in range(max_depth + 1):
        if any(is_goal(t) for t in frontier):
            return depth
        frontier = [r for t in frontier for _, _, r in iter_actions(t, rs)]
        if not frontier:
            return None
    return None


def centered_tree_slots(t, center, d, k):
    """Expansion around ``center`` over the undirected tree graph.

    Neighbour j (1..k) is child j, neighbour k+1 the parent; the neighbour we
    arrived from is blanked.  Slots are listed child-1-subtree, node, rest.
    """
    nodes = {}
    stack = [((1,), t)]
    while stack:
        p, s = stack.pop()
        nodes[p] = s
        stack.extend((p + (j,), a) for j, a in enumerate(s.args, 1))

    def neighbours(p):
        out = [p + (j,) if p + (j,) in nodes else None for j in range(1, k + 1)]
        out.append(p[:-1] if len(p) > 1 else None)
        return out

    def size(depth):
        return sum((k + 1) ** i for i in range(depth + 1))

    def walk(p, prev, depth):
        if p is None:
            return [None] * size(depth)
        if depth == 0:
            return [nodes[p].head]
        nb = [q if q != prev else None for q in neighbours(p)]
        res = walk(nb[0], p, depth - 1) + [nodes[p].head]
        for q in nb[1:]:
            res += walk(q, p, depth - 1)
        return res

    return walk(center, None, d)
