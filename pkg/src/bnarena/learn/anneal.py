"""Simulated annealing over topological orderings."""

from __future__ import annotations

import itertools
import math
import time

import numpy as np

from ..criteria import Criterion
from ..graph import Dag
from ..model import Dataset
from .outcome import AnnealOptions, LearnOutcome


def acceptance_probability(delta: float, beta: float) -> float:
    """Metropolis acceptance min(1, exp(delta / beta)) for a score change ``delta``."""
    if delta >= 0:
        return 1.0
    if beta <= 0:
        return 0.0
    return math.exp(max(delta / beta, -745.0)) if delta / beta > -745.0 else 0.0


class _OrderScorer:
    """Best parent set of a node among a set of predecessors, memoised."""

    def __init__(self, score: Criterion, max_parents: int, candidates=None):
        self.crit = score
        self.max_parents = max_parents
        self.candidates = candidates
        self._local: dict = {}
        self._best: dict = {}

    def local(self, node, parents: tuple) -> float:
        key = (node, parents)
        val = self._local.get(key)
        if val is None:
            val = self._local[key] = self.crit.local_score(node, list(parents))
        return val

    def best(self, node, preds: frozenset, rank) -> tuple[float, tuple]:
        key = (node, preds)
        hit = self._best.get(key)
        if hit is not None:
            return hit
        pool = sorted(preds, key=rank.__getitem__)
        if self.candidates is not None:
            pool = [p for p in pool if p in self.candidates[node]]
        best = (self.local(node, ()), ())
        for size in range(1, min(self.max_parents, len(pool)) + 1):
            for ps in itertools.combinations(pool, size):
                v = self.local(node, ps)
                if v > best[0]:
                    best = (v, ps)
        self._best[key] = best
        return best


def simulated_annealing(d: Dataset, score: Criterion, opts: AnnealOptions = AnnealOptions(), seed: int = 0,
                        candidates: dict[str, set[str]] | None = None) -> LearnOutcome:
    """Anneal over orderings, each scored by its best DAG with bounded in-degree.

    Proposals swap two adjacent nodes, so only those two nodes are rescored.
    """
    t0 = time.perf_counter()
    before = score.calls
    rng = np.random.default_rng(seed)
    nodes = list(d.names)
    rank = {n: i for i, n in enumerate(nodes)}
    N = len(nodes)
    sc = _OrderScorer(score, opts.max_parents, candidates)

    order = list(nodes)
    per = [sc.best(order[k], frozenset(order[:k]), rank)[0] for k in range(N)]
    cur = sum(per)
    best_order, best_total = list(order), cur
    beta = opts.beta0
    accepted = 0
    for _ in range(opts.iterations if N > 1 else 0):
        k = int(rng.integers(N - 1))
        a, b = order[k], order[k + 1]
        prefix = frozenset(order[:k])
        new_b = sc.best(b, prefix, rank)[0]
        new_a = sc.best(a, prefix | {b}, rank)[0]
        delta = (new_a + new_b) - (per[k] + per[k + 1])
        if rng.random() < acceptance_probability(delta, beta):
            order[k], order[k + 1] = b, a
            per[k], per[k + 1] = new_b, new_a
            cur += delta
            accepted += 1
            if cur > best_total + 1e-10 * (1 + abs(best_total)):
                best_order, best_total = list(order), cur
        beta *= opts.cooling
    arcs = []
    for k, node in enumerate(best_order):
        _, ps = sc.best(node, frozenset(best_order[:k]), rank)
        arcs.extend((p, node) for p in ps)
    dag = Dag(nodes, arcs)
    info = {"order": best_order, "score": best_total, "accepted": accepted}
    return LearnOutcome(dag, True, score.calls - before, time.perf_counter() - t0, info)
