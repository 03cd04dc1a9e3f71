"""Brute-force mu-calculus semantics and random test-case generators.

The evaluator works on Python sets, handles negation and regular
modalities directly (relation composition and transitive closure) and
recomputes every fixpoint by plain Kleene iteration from scratch.  It
shares no code with the production checker.
"""

from itertools import product

from machina.engine import ActionLabel
from machina.mucalc.ast import (
    AAct, ABin, AFalse, ANot, AQuant, ATrue, AVal, DBin, DConst, DNot, DVar, FAnd, FBox,
    FDiamond, FFalse, FFix, FImp, FNot, FOr, FQuant, FTrue, FVal, FVar, RAct, RAlt, RPlus,
    RSeq, RStar, VarDecl,
)


def data(d, env):
    if isinstance(d, DConst):
        return d.value
    if isinstance(d, DVar):
        return env[d.name]
    if isinstance(d, DNot):
        return not data(d.arg, env)
    if isinstance(d, DBin):
        a, b = data(d.left, env), data(d.right, env)
        return {"&&": lambda: a and b, "||": lambda: a or b, "=>": lambda: (not a) or b,
                "==": lambda: a == b, "!=": lambda: a != b}[d.op]()
    raise TypeError(d)


def matches(af, label, env):
    if isinstance(af, ATrue):
        return True
    if isinstance(af, AFalse):
        return False
    if isinstance(af, AAct):
        return (af.name == label.name and len(af.args) == len(label.args)
                and all(data(a, env) == v for a, v in zip(af.args, label.args)))
    if isinstance(af, AVal):
        return bool(data(af.cond, env))
    if isinstance(af, ANot):
        return not matches(af.arg, label, env)
    if isinstance(af, ABin):
        a, b = matches(af.left, label, env), matches(af.right, label, env)
        return {"&&": a and b, "||": a or b, "=>": (not a) or b}[af.op]
    if isinstance(af, AQuant):
        vals = [dict(env, **dict(zip([d.name for d in af.decls], combo)))
                for combo in product((False, True), repeat=len(af.decls))]
        res = [matches(af.body, label, e) for e in vals]
        return any(res) if af.kind == "exists" else all(res)
    raise TypeError(af)


class Oracle:
    def __init__(self, n, edges):
        """*edges*: ``(src, ActionLabel, dst)`` triples."""
        self.n = n
        self.edges = list(edges)
        self.all = frozenset(range(n))

    def relation(self, r, env):
        if isinstance(r, RAct):
            return {(s, t) for s, l, t in self.edges if matches(r.af, l, env)}
        if isinstance(r, RSeq):
            a, b = self.relation(r.left, env), self.relation(r.right, env)
            return {(s, u) for s, t in a for t2, u in b if t == t2}
        if isinstance(r, RAlt):
            return self.relation(r.left, env) | self.relation(r.right, env)
        if isinstance(r, (RStar, RPlus)):
            step = self.relation(r.arg, env)
            closure = set(step)
            while True:
                more = {(s, u) for s, t in closure for t2, u in step if t == t2} - closure
                if not more:
                    break
                closure |= more
            if isinstance(r, RStar):
                closure |= {(s, s) for s in range(self.n)}
            return closure
        raise TypeError(r)

    def sat(self, f, env=None, fenv=None):
        env = env or {}
        fenv = fenv or {}
        if isinstance(f, FTrue):
            return self.all
        if isinstance(f, FFalse):
            return frozenset()
        if isinstance(f, FVal):
            return self.all if data(f.cond, env) else frozenset()
        if isinstance(f, FNot):
            return self.all - self.sat(f.arg, env, fenv)
        if isinstance(f, FAnd):
            return self.sat(f.left, env, fenv) & self.sat(f.right, env, fenv)
        if isinstance(f, FOr):
            return self.sat(f.left, env, fenv) | self.sat(f.right, env, fenv)
        if isinstance(f, FImp):
            return (self.all - self.sat(f.left, env, fenv)) | self.sat(f.right, env, fenv)
        if isinstance(f, (FBox, FDiamond)):
            body = self.sat(f.body, env, fenv)
            rel = self.relation(f.reg, env)
            if isinstance(f, FBox):
                bad = {s for s, t in rel if t not in body}
                return self.all - bad
            return frozenset(s for s, t in rel if t in body)
        if isinstance(f, FQuant):
            names = [d.name for d in f.decls]
            parts = [self.sat(f.body, dict(env, **dict(zip(names, c))), fenv)
                     for c in product((False, True), repeat=len(names))]
            out = parts[0]
            for p in parts[1:]:
                out = out | p if f.kind == "exists" else out & p
            return out
        if isinstance(f, FFix):
            names = [d.name for d, _ in f.params]
            keys = list(product((False, True), repeat=len(names)))
            start = frozenset() if f.kind == "mu" else self.all
            table = {k: start for k in keys}
            while True:
                inner = dict(fenv)
                inner[f.var] = (names, dict(table))
                new = {k: self.sat(f.body, dict(env, **dict(zip(names, k))), inner) for k in keys}
                if new == table:
                    break
                table = new
            return table[tuple(data(v, env) for _, v in f.params)]
        if isinstance(f, FVar):
            _names, table = fenv[f.name]
            return table[tuple(data(a, env) for a in f.args)]
        raise TypeError(f)

    def holds(self, f):
        return 0 in self.sat(f)


# -- generators ---------------------------------------------------------------
#
# ``ri(lo, hi)`` draws an integer in [lo, hi]; it is backed either by
# hypothesis or by ``random.Random.randint``.

LABEL_POOL = [ActionLabel("a"), ActionLabel("b"), ActionLabel("c", (True,)), ActionLabel("c", (False,))]


def gen_lts(ri, max_states=200):
    n = ri(1, max_states)
    k = ri(1, 4)
    labels = LABEL_POOL[:k]
    m = ri(0, 3 * n)
    edges = [(ri(0, n - 1), labels[ri(0, k - 1)], ri(0, n - 1)) for _ in range(m)]
    return n, edges


def gen_action(ri, dvars, depth=0):
    c = ri(0, 8 if depth < 2 else 4)
    if c == 0:
        return ATrue()
    if c == 1:
        return AAct("a", ())
    if c == 2:
        return AAct("b", ())
    if c == 3:
        return AAct("c", (DConst(bool(ri(0, 1))),))
    if c == 4:
        if dvars:
            return AAct("c", (DVar(dvars[ri(0, len(dvars) - 1)]),))
        return AFalse()
    if c == 5:
        return ANot(gen_action(ri, dvars, depth + 1))
    if c == 6:
        op = ("&&", "||", "=>")[ri(0, 2)]
        return ABin(op, gen_action(ri, dvars, depth + 1), gen_action(ri, dvars, depth + 1))
    if c == 7:
        y = f"y{depth}"
        return AQuant("exists" if ri(0, 1) else "forall", (VarDecl(y, "Bool"),), AAct("c", (DVar(y),)))
    return AFalse()


def gen_regular(ri, dvars):
    c = ri(0, 9)
    if c <= 6:
        return RAct(gen_action(ri, dvars))
    if c == 7:
        return RStar(RAct(gen_action(ri, dvars)))
    if c == 8:
        return RSeq(RAct(gen_action(ri, dvars)), RAct(gen_action(ri, dvars)))
    return RAlt(RAct(gen_action(ri, dvars)), RAct(gen_action(ri, dvars)))


def _data(ri, dvars):
    c = ri(0, 2)
    if c == 0 or not dvars:
        return DConst(bool(ri(0, 1)))
    v = DVar(dvars[ri(0, len(dvars) - 1)])
    return v if c == 1 else DNot(v)


def gen_formula(ri, size=5, bound=(), dvars=(), fix_depth=0, max_fix_depth=2):
    """Closed, monotone formula; fixpoint nesting at most *max_fix_depth*."""
    if size <= 0:
        c = ri(0, 3)
        if c == 0:
            return FTrue()
        if c == 1:
            return FFalse()
        if c == 2 and bound:
            name, arity = bound[ri(0, len(bound) - 1)]
            return FVar(name, tuple(_data(ri, dvars) for _ in range(arity)))
        if dvars:
            return FVal(DVar(dvars[ri(0, len(dvars) - 1)]))
        return FTrue()
    c = ri(0, 9)
    sub = lambda **kw: gen_formula(  # noqa: E731
        ri, kw.get("size", size - 1), kw.get("bound", bound), kw.get("dvars", dvars),
        kw.get("fix_depth", fix_depth), max_fix_depth,
    )
    if c in (0, 1):
        return (FAnd if c == 0 else FOr)(sub(), sub())
    if c in (2, 3):
        return (FBox if c == 2 else FDiamond)(gen_regular(ri, list(dvars)), sub())
    if c in (4, 5) and fix_depth < max_fix_depth:
        name = f"X{len(bound)}"
        params = ()
        new_dvars = dvars
        if ri(0, 2) == 0:
            p = f"p{len(bound)}"
            params = ((VarDecl(p, "Bool"), _data(ri, dvars)),)
            new_dvars = tuple(dvars) + (p,)
        body = sub(bound=tuple(bound) + ((name, len(params)),), dvars=new_dvars, fix_depth=fix_depth + 1)
        return FFix("mu" if c == 4 else "nu", name, params, body)
    if c == 6:
        # negation only over subformulas without free fixpoint variables
        return FNot(gen_formula(ri, size - 1, (), dvars, fix_depth, max_fix_depth))
    if c == 7:
        q = f"q{len(dvars)}"
        return FQuant("exists" if ri(0, 1) else "forall", (VarDecl(q, "Bool"),),
                      sub(dvars=tuple(dvars) + (q,)))
    if c == 8:
        return FImp(gen_formula(ri, size - 1, (), dvars, fix_depth, max_fix_depth), sub())
    return sub(size=0)


def to_lts(n, edges):
    from machina.lts import from_edges

    return from_edges(n, [(s, str(l), t) for s, l, t in edges])


def fix_depth(f):
    if isinstance(f, FFix):
        return 1 + fix_depth(f.body)
    kids = [getattr(f, a) for a in ("arg", "left", "right", "body") if hasattr(f, a)]
    kids = [k for k in kids if not isinstance(k, (RAct, RSeq, RAlt, RStar, RPlus))]
    return max((fix_depth(k) for k in kids), default=0)
