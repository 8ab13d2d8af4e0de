"""Trace interfaces, independence, and equality up to independent-step permutation.

Equality is decided by building the dependence DAG of a trace and reading
off a canonical linearization: repeatedly emit the ready step with the least
key, where a key describes the step with its inputs named by the canonical
positions of their producers. Bound names are renumbered along the way, so
the result is also invariant under renaming of step outputs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

from .hsubst import rename
from .printer import show, show_in
from .syntax import LIN, PER, Arg, Decl, Let, Mod, Root, Trace, Var, VarStep, fv


class ScopeError(Exception):
    pass


@dataclass(frozen=True)
class Interface:
    linear: frozenset = frozenset()
    persistent: frozenset = frozenset()

    @property
    def names(self) -> frozenset:
        return self.linear | self.persistent

    def to_json(self) -> dict:
        return {"linear": sorted(self.linear), "persistent": sorted(self.persistent)}


def _ambient_mods(ambient) -> Optional[dict]:
    if ambient is None:
        return None
    if isinstance(ambient, dict):
        return dict(ambient)
    return {d.name: d.mod for d in ambient if isinstance(d, Decl)}


def step_inputs(st) -> dict:
    """Names a step reads, with the modality of their use."""
    out: dict[str, Mod] = {}
    if isinstance(st, Let):
        for a in st.spine:
            t = a.term
            if a.mod is LIN and isinstance(t, Root) and isinstance(t.head, Var) and not t.spine:
                out[t.head.name] = LIN
        for a in st.spine:
            for x in fv(a.term):
                out.setdefault(x, PER)
    else:
        for a in st.spine:
            for x in fv(a):
                out.setdefault(x, PER)
    return out


def step_outputs(st) -> dict:
    if isinstance(st, Let):
        return {d.name: d.mod for d in st.outputs}
    return {}


def _fold(trace: Trace, ambient):
    mods = _ambient_mods(ambient)
    ins: dict[str, Mod] = {}
    outs: dict[str, Mod] = {}
    for st in trace.steps:
        i2 = step_inputs(st)
        o2 = step_outputs(st)
        if mods is not None:
            for x in i2:
                if x not in outs and x not in mods:
                    raise ScopeError(f"unbound name {x}")
        # in(e1;e2) = in1 + (in2 - out1)
        for x, m in i2.items():
            if x not in outs and x not in ins:
                ins[x] = mods.get(x, m) if mods is not None else m
        # out(e1;e2) = out2 + (out1 - in2) + !out1
        kept = {x: m for x, m in outs.items() if x not in i2 or m is PER}
        kept.update(o2)
        outs = kept
    return ins, outs


def _iface(d: dict) -> Interface:
    return Interface(frozenset(x for x, m in d.items() if m is LIN),
                     frozenset(x for x, m in d.items() if m is PER))


def input_interface(trace: Trace, ambient=None) -> Interface:
    """Free names a trace reads. `ambient` (a context or name->modality map)
    fixes the modality of free names and enables the scope check."""
    return _iface(_fold(trace, ambient)[0])


def output_interface(trace: Trace, ambient=None) -> Interface:
    return _iface(_fold(trace, ambient)[1])


def independent(t1: Trace, t2: Trace) -> bool:
    i1, o1 = (set(x) for x in _fold(t1, None))
    i2, o2 = (set(x) for x in _fold(t2, None))
    return not (i1 & o2) and not (o1 & i2)


# ---------------------------------------------------------------- dependence DAG


@dataclass(frozen=True)
class DependenceDag:
    nodes: tuple  # (index, const)
    edges: tuple  # (producer, consumer, name)
    roots: tuple  # names free in the trace

    def preds(self) -> dict:
        out: dict[int, set] = {i: set() for i, _ in self.nodes}
        for a, b, _ in self.edges:
            out[b].add(a)
        return out


def _label(st) -> str:
    return st.const if isinstance(st, Let) else f"${st.var}"


def to_dag(trace: Trace) -> DependenceDag:
    producer: dict[str, int] = {}
    readers: dict[str, list[int]] = {}
    edges = set()
    roots = set()
    for j, st in enumerate(trace.steps):
        for x in step_inputs(st):
            if x in producer:
                edges.add((producer[x], j, x))
            else:
                roots.add(x)
            readers.setdefault(x, []).append(j)
        for x in step_outputs(st):
            # a rebinding must stay after earlier readers and the previous binder
            for r in readers.get(x, []):
                if r != j:
                    edges.add((r, j, x))
            if x in producer:
                edges.add((producer[x], j, x))
            producer[x] = j
            readers[x] = []
    nodes = tuple((j, _label(st)) for j, st in enumerate(trace.steps))
    return DependenceDag(nodes, tuple(sorted(edges)), tuple(sorted(roots)))


# ---------------------------------------------------------------- canonical form


def _render(st, inmap: dict) -> str:
    """Describe a step with bound inputs renamed through `inmap`."""
    if isinstance(st, VarStep):
        ren = {x: inmap[x] for x in step_inputs(st) if x in inmap}
        return f"${st.var} " + " ".join(show(rename(a, ren), canonical=True) for a in st.spine)
    args = []
    for a in st.spine:
        args.append(("^" if a.mod is LIN else "") + show_in(a.term, inmap))
    own = dict(inmap)
    outs = []
    for i, d in enumerate(st.outputs):
        mark = "^" if d.mod is LIN else "!"
        ty = "" if d.type is None else ":" + show_in(d.type, own)
        outs.append(mark + ty)
        own[d.name] = f"$_{i}"
    return f"{st.const}({' '.join(args)})[{','.join(outs)}]"


def _digest(s: str) -> str:
    return hashlib.sha1(s.encode()).hexdigest()[:16]


class _Graph:
    def __init__(self, trace: Trace):
        self.steps = trace.steps
        n = len(self.steps)
        self.dag = to_dag(trace)
        self.preds = {j: set() for j in range(n)}
        self.succ: dict[int, list] = {j: [] for j in range(n)}
        for a, b, x in self.dag.edges:
            self.preds[b].add(a)
            self.succ[a].append((x, b))
        # where each name is bound: (step, output index)
        self.binder: dict[tuple[int, str], int] = {}
        for j, st in enumerate(self.steps):
            for i, x in enumerate(step_outputs(st)):
                self.binder[(j, x)] = i
        self._down: dict[int, str] = {}

    def local(self, j: int) -> str:
        """Label with bound inputs abstracted to the producer's output index."""
        st = self.steps[j]
        inmap = {}
        for p in self.preds[j]:
            for x in step_outputs(self.steps[p]):
                if x in step_inputs(st):
                    inmap[x] = f"@{self.binder[(p, x)]}"
        return _render(st, inmap)

    def down(self, j: int) -> str:
        """A digest of everything downstream of step `j`."""
        if j in self._down:
            return self._down[j]
        parts = []
        for x, c in self.succ[j]:
            idx = self.binder.get((j, x), -1)
            pos = sorted(k for k, a in enumerate(getattr(self.steps[c], "spine", ())) if x in fv(a))
            parts.append(f"{idx}>{pos}>{self.down(c)}")
        d = _digest(self.local(j) + "|" + ";".join(sorted(parts)))
        self._down[j] = d
        return d


def _order(g: _Graph) -> list[tuple[int, str]]:
    """Canonical linearization: (step index, key) pairs."""
    n = len(g.steps)
    names: dict[str, str] = {}
    waiting = {j: set(g.preds[j]) for j in range(n)}
    ready = {j for j in range(n) if not waiting[j]}
    keys: dict[int, str] = {}
    order: list[tuple[int, str]] = []
    done: set[int] = set()
    while ready:
        for j in ready:
            if j not in keys:
                keys[j] = _render(g.steps[j], names)
        least = min(keys[j] for j in ready)
        tied = [j for j in ready if keys[j] == least]
        j = tied[0] if len(tied) == 1 else min(tied, key=lambda j: (g.down(j), j))
        ready.discard(j)
        for i, x in enumerate(step_outputs(g.steps[j])):
            names[x] = f"${len(order)}.{i}"
        order.append((j, keys[j]))
        done.add(j)
        for _, c in g.succ[j]:
            waiting[c].discard(j)
            if not waiting[c] and c not in done:
                ready.add(c)
    return order


def canonical_form(trace: Trace) -> tuple[str, ...]:
    """A representative of the trace's equality class, as a tuple of step keys."""
    return tuple(k for _, k in _order(_Graph(trace)))


def trace_equal(t1: Trace, t2: Trace) -> bool:
    if len(t1.steps) != len(t2.steps):
        return False
    return canonical_form(t1) == canonical_form(t2)


def canonical_order(trace: Trace) -> Trace:
    """The trace's steps in canonical order, names unchanged."""
    g = _Graph(trace)
    return Trace(tuple(g.steps[j] for j, _ in _order(g)))


def alpha_normalize(trace: Trace, prefix: str = "n") -> Trace:
    """Rename bound outputs to `n0, n1, ...` in binding order, keeping step order."""
    mapping: dict[str, str] = {}
    steps = []
    k = 0
    for st in trace.steps:
        ren = {x: mapping[x] for x in step_inputs(st) if x in mapping}
        if isinstance(st, Let):
            spine = tuple(Arg(a.mod, rename(a.term, ren)) for a in st.spine) if ren else st.spine
            outs = []
            own = dict(ren)
            for d in st.outputs:
                ty = None if d.type is None else rename(d.type, own)
                new = f"{prefix}{k}"
                k += 1
                outs.append(Decl(d.mod, new, ty))
                own[d.name] = new
                mapping[d.name] = new
            steps.append(Let(tuple(outs), st.const, spine))
        else:
            steps.append(VarStep(st.var, tuple(rename(a, ren) for a in st.spine)))
    return Trace(tuple(steps))


def dag_sexp(trace: Trace) -> str:
    """Deterministic S-expression dump of the dependence DAG in canonical order."""
    g = _Graph(trace)
    order = [j for j, _ in _order(g)]
    pos = {j: i for i, j in enumerate(order)}
    names: dict[str, str] = {}
    lines = ["(dag", f"  (roots {' '.join(g.dag.roots)})".rstrip() if g.dag.roots else "  (roots)"]
    for i, j in enumerate(order):
        lines.append(f"  (node {i} {_render(g.steps[j], names)!r})".replace("'", '"'))
        for k, x in enumerate(step_outputs(g.steps[j])):
            names[x] = f"${i}.{k}"
    for a, b, x in sorted((pos[a], pos[b], names.get(x, x)) for a, b, x in g.dag.edges):
        lines.append(f"  (edge {a} {b} {x})")
    lines.append(")")
    return "\n".join(lines)
