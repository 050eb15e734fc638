"""Constraint-based learners: PC-Stable and Grow-Shrink."""

from __future__ import annotations

import itertools
import time
from typing import Sequence

from ..criteria import Criterion, TestResult
from ..graph import (
    CycleError,
    InvalidCpdag,
    OrientationConflict,
    Pdag,
    apply_orientation_rules,
    cpdag_from_dag,
    extend_to_dag,
)
from ..model import Dataset
from .outcome import LearnOutcome

Sepsets = dict  # frozenset({a, b}) -> (tuple conditioning set, TestResult | None)


def pc_skeleton(d: Dataset, test: Criterion, max_sepset: int | None = None):
    """Steps 1-2 of PC-Stable: adjacency sets and separating sets.

    Within each level the neighbour sets are frozen before any removal, which
    makes the skeleton independent of the column order.
    """
    nodes = list(d.names)
    pos = {n: i for i, n in enumerate(nodes)}
    adj = {n: set(nodes) - {n} for n in nodes}
    sepsets: Sepsets = {}
    level = 0
    while max_sepset is None or level <= max_sepset:
        frozen = {n: sorted(adj[n], key=pos.__getitem__) for n in nodes}
        tested_any = False
        for x in nodes:
            for y in frozen[x]:
                if y not in adj[x]:
                    continue
                cands = [c for c in frozen[x] if c != y]
                if len(cands) < level:
                    continue
                tested_any = True
                for s in itertools.combinations(cands, level):
                    res = test.test(x, y, s)
                    if res.independent:
                        adj[x].discard(y)
                        adj[y].discard(x)
                        sepsets[frozenset((x, y))] = (s, res)
                        break
        if not tested_any:
            break
        level += 1
    return adj, sepsets


def orient(nodes: Sequence[str], adj: dict, sepsets: Sepsets):
    """Collider detection, rule closure and extensibility check.

    Returns ``(graph, valid, info)``.  Opposite collider demands on one edge
    are settled in favour of the triple whose separating test had the larger
    margin; exact ties, cycles, rule conflicts and non-extensible results all
    produce ``valid=False`` with the diagnostic PDAG.
    """
    pos = {n: i for i, n in enumerate(nodes)}
    demands: dict[tuple[str, str], float] = {}
    for k in nodes:
        nb = sorted(adj[k], key=pos.__getitem__)
        for i, j in itertools.combinations(nb, 2):
            if j in adj[i]:
                continue
            s, res = sepsets.get(frozenset((i, j)), ((), None))
            if k in s:
                continue
            margin = res.margin if isinstance(res, TestResult) else 0.0
            for a in (i, j):
                demands[(a, k)] = max(demands.get((a, k), -float("inf")), margin)
    directed, conflicts = set(), []
    for (a, b), m in demands.items():
        rev = demands.get((b, a))
        if rev is None or m > rev:
            directed.add((a, b))
        elif rev == m and pos[a] < pos[b]:
            conflicts.append((a, b))
    edges = {frozenset((a, b)) for a in nodes for b in adj[a]}
    undirected = edges - {frozenset(e) for e in directed}
    pdag = Pdag(nodes, directed, undirected)
    info = {"collider_conflicts": len(conflicts)}
    if conflicts:
        info["reason"] = "tied collider orientations"
        return pdag, False, info
    try:
        closed = apply_orientation_rules(pdag)
    except CycleError:
        info["reason"] = "colliders form a directed cycle"
        return pdag, False, info
    except OrientationConflict as exc:
        info["reason"] = "orientation rule conflict"
        info["unoriented"] = exc.edges
        return pdag, False, info
    try:
        dag = extend_to_dag(closed)
    except InvalidCpdag as exc:
        info["reason"] = "no consistent extension"
        info["unoriented"] = exc.edges
        return closed, False, info
    return cpdag_from_dag(dag), True, info


def pc_stable(d: Dataset, test: Criterion, max_sepset: int | None = None) -> LearnOutcome:
    start = time.perf_counter()
    before = test.calls
    adj, sepsets = pc_skeleton(d, test, max_sepset)
    graph, valid, info = orient(list(d.names), adj, sepsets)
    return LearnOutcome(graph, valid, test.calls - before, time.perf_counter() - start, info)


def markov_blankets(d: Dataset, test: Criterion, symmetric: bool = True) -> dict[str, list[str]]:
    """Grow-shrink Markov blanket estimates, optionally AND-symmetrised."""
    nodes = list(d.names)
    raw = {}
    for x in nodes:
        mb: list[str] = []
        grown = True
        while grown:
            grown = False
            for y in nodes:
                if y == x or y in mb:
                    continue
                if not test.test(x, y, mb).independent:
                    mb.append(y)
                    grown = True
        shrunk = True
        while shrunk:
            shrunk = False
            for y in list(mb):
                rest = [v for v in mb if v != y]
                if test.test(x, y, rest).independent:
                    mb.remove(y)
                    shrunk = True
        raw[x] = mb
    if not symmetric:
        return raw
    return {x: [y for y in nodes if y in raw[x] and x in raw[y]] for x in nodes}


def blanket_neighbours(d: Dataset, test: Criterion, blankets: dict[str, list[str]],
                       max_sepset: int | None = None):
    """Neighbour sets from blankets: spouses are separated by a subset of the smaller blanket."""
    nodes = list(d.names)
    pos = {n: i for i, n in enumerate(nodes)}
    adj = {n: set() for n in nodes}
    sepsets: Sepsets = {}
    for x, y in itertools.combinations(nodes, 2):
        if y not in blankets[x]:
            rest = tuple(v for v in blankets[x] if v != y)
            sepsets[frozenset((x, y))] = (rest, None)
            continue
        bx = [v for v in blankets[x] if v != y]
        by = [v for v in blankets[y] if v != x]
        base = sorted(bx if len(bx) <= len(by) else by, key=pos.__getitem__)
        top = len(base) if max_sepset is None else min(len(base), max_sepset)
        separated = False
        for size in range(top + 1):
            for s in itertools.combinations(base, size):
                res = test.test(x, y, s)
                if res.independent:
                    sepsets[frozenset((x, y))] = (s, res)
                    separated = True
                    break
            if separated:
                break
        if not separated:
            adj[x].add(y)
            adj[y].add(x)
    return adj, sepsets


def grow_shrink(d: Dataset, test: Criterion, max_sepset: int | None = None) -> LearnOutcome:
    start = time.perf_counter()
    before = test.calls
    blankets = markov_blankets(d, test)
    adj, sepsets = blanket_neighbours(d, test, blankets, max_sepset)
    graph, valid, info = orient(list(d.names), adj, sepsets)
    info["blankets"] = blankets
    return LearnOutcome(graph, valid, test.calls - before, time.perf_counter() - start, info)
