"""Random inputs shared by the property tests and the acceptance suite."""

from __future__ import annotations

import random

from clfkit.hsubst import rename
from clfkit.syntax import LIN, PER, Arg, Atom, Decl, Let, Root, Trace, Var, bound_names, fv


def random_trace(rng: random.Random, n_steps: int, n_lin: int = 3, n_per: int = 2,
                 consts: int = 3) -> Trace:
    """A linearity-respecting trace over untyped atoms.

    Each step consumes up to two available linear names, may read one
    persistent name, and binds one or two fresh outputs.
    """
    lin = [f"x{i}" for i in range(n_lin)]
    per = [f"p{i}" for i in range(n_per)]
    k = 0
    steps = []
    for _ in range(n_steps):
        spine = []
        for _ in range(rng.randint(0, min(2, len(lin)))):
            x = lin.pop(rng.randrange(len(lin)))
            spine.append(Arg(LIN, Root(Var(x))))
        if per and rng.random() < 0.5:
            spine.append(Arg(PER, Root(Var(rng.choice(per)))))
        outs = []
        for _ in range(rng.randint(1, 2)):
            mod = PER if rng.random() < 0.25 else LIN
            name = f"o{k}"
            k += 1
            outs.append(Decl(mod, name, Atom("a")))
            (per if mod is PER else lin).append(name)
        steps.append(Let(tuple(outs), f"c{rng.randrange(consts)}", tuple(spine)))
    return Trace(tuple(steps))


def rename_outputs(tr: Trace, rng: random.Random) -> Trace:
    names = bound_names(tr)
    fresh = [f"r{i}" for i in range(len(names))]
    rng.shuffle(fresh)
    return rename(tr, dict(zip(names, fresh)))


def shuffle_steps(tr: Trace, rng: random.Random) -> Trace:
    steps = list(tr.steps)
    rng.shuffle(steps)
    return Trace(tuple(steps))


def topological_shuffle(tr: Trace, rng: random.Random) -> Trace:
    """A random reordering that keeps every producer before its users."""
    steps = list(tr.steps)
    produced_by = {}
    for i, st in enumerate(steps):
        for d in st.outputs:
            produced_by[d.name] = i
    deps = {i: set() for i in range(len(steps))}
    for i, st in enumerate(steps):
        for a in st.spine:
            for x in fv(a.term):
                if x in produced_by:
                    deps[i].add(produced_by[x])
    done: list[int] = []
    left = set(range(len(steps)))
    while left:
        ready = sorted(i for i in left if deps[i] <= set(done))
        i = rng.choice(ready)
        done.append(i)
        left.remove(i)
    return Trace(tuple(steps[i] for i in done))


def random_exp(rng: random.Random, size: int, bound: tuple = (), free: tuple = ("x",),
               heads: tuple = ("f",), depth: int = 0):
    """An encoded object expression with at most `size` nodes.

    Leaves are bound or free variables. Names in `heads` occur applied to a
    single persistent argument, which is what gives substitution for them
    something to reduce.
    """
    from clfkit.syntax import Const, Lam
    scope = bound + free
    if size <= 1 or rng.random() < 0.2:
        return Root(Var(rng.choice(scope)), ())
    r = rng.random()
    if r < 0.35:
        name = f"z{depth}"
        body = random_exp(rng, size - 1, bound + (name,), free, heads, depth + 1)
        return Root(Const("lam"), (Arg(PER, Lam(PER, name, body)),))
    if r < 0.55 and heads:
        arg = random_exp(rng, size - 1, bound, free, heads, depth)
        return Root(Var(rng.choice(heads)), (Arg(PER, arg),))
    left = rng.randint(1, size - 2) if size > 2 else 1
    a = random_exp(rng, left, bound, free, heads, depth)
    b = random_exp(rng, max(1, size - 1 - left), bound, free, heads, depth)
    return Root(Const("app"), (Arg(PER, a), Arg(PER, b)))


def random_subst_instance(rng: random.Random, max_size: int = 30):
    """(term, name, value, shape) where the name occurs in the term and the
    term and value together have at most `max_size` nodes."""
    from clfkit.hsubst import BASE, Arrow
    from clfkit.syntax import Lam, size
    while True:
        budget = rng.randint(2, max_size)
        vsize = rng.randint(1, max(1, budget // 3))
        term = random_exp(rng, budget - vsize)
        if rng.random() < 0.3:
            x, shape = "x", BASE
            value = random_exp(rng, vsize, free=("w",), heads=())
        else:
            x, shape = "f", Arrow(PER, BASE, BASE)
            value = Lam(PER, "y", random_exp(rng, vsize, bound=("y",), free=("w",), heads=("f",)))
        if x in fv(term) and size(term) + size(value) <= max_size:
            return term, x, value, shape
