"""Greedy search over DAGs: hill climbing, tabu list and random restarts."""

from __future__ import annotations

import time
from collections import deque

import numpy as np

from ..criteria import Criterion
from ..graph import Dag
from ..model import Dataset
from .outcome import GreedyOptions, LearnOutcome

_ADD, _DEL, _REV = 0, 1, 2


def _closure(arcs: np.ndarray) -> np.ndarray:
    reach = arcs.copy()
    while True:
        nxt = reach | ((reach.astype(np.int32) @ reach.astype(np.int32)) > 0)
        if np.array_equal(nxt, reach):
            return reach
        reach = nxt


class _Search:
    """Incremental state: arc matrix, local scores and cached score deltas.

    ``add[j, i]`` / ``rem[j, i]`` hold the change in node i's local score from
    adding / removing parent j.  Only the row of a node whose parent set
    changed is recomputed, one criterion call per entry.
    """

    def __init__(self, score: Criterion, nodes, allowed: np.ndarray, max_parents, arcs: np.ndarray):
        self.crit = score
        self.nodes = list(nodes)
        self.N = len(self.nodes)
        self.allowed = allowed
        self.max_parents = max_parents
        self.arcs = arcs.astype(bool).copy()
        self.local = np.zeros(self.N)
        self.add = np.full((self.N, self.N), np.nan)
        self.rem = np.full((self.N, self.N), np.nan)
        for i in range(self.N):
            self.local[i] = self.crit.local_score(self.nodes[i], self._parents(i))
        for i in range(self.N):
            self._refresh(i)
        self.reach = _closure(self.arcs)

    def _parents(self, i, extra=None, drop=None):
        ps = [j for j in range(self.N) if self.arcs[j, i] and j != drop]
        if extra is not None:
            ps.append(extra)
            ps.sort()
        return [self.nodes[j] for j in ps]

    def _refresh(self, i):
        self.add[:, i] = np.nan
        self.rem[:, i] = np.nan
        npar = int(self.arcs[:, i].sum())
        for j in range(self.N):
            if j == i:
                continue
            if self.arcs[j, i]:
                self.rem[j, i] = self.crit.local_score(self.nodes[i], self._parents(i, drop=j)) - self.local[i]
            elif self.allowed[j, i] and (self.max_parents is None or npar < self.max_parents):
                self.add[j, i] = self.crit.local_score(self.nodes[i], self._parents(i, extra=j)) - self.local[i]

    @property
    def total(self) -> float:
        return float(self.local.sum())

    def key(self) -> bytes:
        return np.packbits(self.arcs).tobytes()

    def moves(self):
        """All legal moves as parallel arrays (delta, kind, tail, head), best first."""
        A = self.arcs
        add_ok = ~A & ~A.T & ~self.reach.T & ~np.isnan(self.add)
        np.fill_diagonal(add_ok, False)
        alt = (A.astype(np.int32) @ self.reach.astype(np.int32)) > 0
        rev_ok = A & ~alt & ~np.isnan(self.add.T)
        out = []
        for kind, mask, vals in (
            (_ADD, add_ok, self.add),
            (_DEL, A, self.rem),
            (_REV, rev_ok, self.rem + self.add.T),
        ):
            j, i = np.nonzero(mask)
            out.append((vals[j, i], np.full(j.size, kind), j, i))
        delta = np.concatenate([o[0] for o in out])
        kinds = np.concatenate([o[1] for o in out])
        tails = np.concatenate([o[2] for o in out])
        heads = np.concatenate([o[3] for o in out])
        order = np.lexsort((heads, tails, kinds, -delta))
        if order.size:
            # score-equivalent moves differ only by rounding; settle them by
            # (kind, tail, head) so the walk does not depend on float noise
            top = int(np.sum(delta[order] >= delta[order[0]] - 1e-9 * (1.0 + abs(self.total))))
            head = order[:top]
            order[:top] = head[np.lexsort((heads[head], tails[head], kinds[head]))]
        return delta[order], kinds[order], tails[order], heads[order]

    def result_key(self, kind, j, i) -> bytes:
        A = self.arcs.copy()
        A[j, i] = kind == _ADD
        if kind == _REV:
            A[i, j] = True
        return np.packbits(A).tobytes()

    def apply(self, kind, j, i, delta):
        if kind == _ADD:
            self.arcs[j, i] = True
            self.local[i] += self.add[j, i]
            self._refresh(i)
        elif kind == _DEL:
            self.arcs[j, i] = False
            self.local[i] += self.rem[j, i]
            self._refresh(i)
        else:
            gain_i, gain_j = self.rem[j, i], self.add[i, j]
            self.arcs[j, i] = False
            self.arcs[i, j] = True
            self.local[i] += gain_i
            self.local[j] += gain_j
            self._refresh(i)
            self._refresh(j)
        self.reach = _closure(self.arcs)

    def dag(self) -> Dag:
        j, i = np.nonzero(self.arcs)
        return Dag(self.nodes, [(self.nodes[a], self.nodes[b]) for a, b in zip(j, i)])


def _eps(score: float) -> float:
    return 1e-10 * (1.0 + abs(score))


def _climb(s: _Search, tabu_steps: int, tabu_memory: int, trace: list | None = None):
    """Hill climbing, continued through a tabu phase when ``tabu_steps`` > 0.

    Returns the best (score, arc matrix) seen.
    """
    best_score, best_arcs = s.total, s.arcs.copy()
    tabu = deque([s.key()], maxlen=tabu_memory) if tabu_memory > 0 else deque(maxlen=0)
    bad = 0
    while True:
        delta, kinds, tails, heads = s.moves()
        pick = None
        for k in range(delta.size):
            if tabu_memory > 0 and s.result_key(kinds[k], tails[k], heads[k]) in tabu:
                continue
            pick = k
            break
        if pick is None:
            break
        d = float(delta[pick])
        if d <= _eps(s.total) and bad >= tabu_steps:
            break
        s.apply(int(kinds[pick]), int(tails[pick]), int(heads[pick]), d)
        if trace is not None:
            trace.append((int(kinds[pick]), s.nodes[tails[pick]], s.nodes[heads[pick]], s.total))
        if tabu_memory > 0:
            tabu.append(s.key())
        if s.total > best_score + _eps(best_score):
            best_score, best_arcs = s.total, s.arcs.copy()
            bad = 0
        else:
            bad += 1
    return best_score, best_arcs


def _perturb(arcs: np.ndarray, allowed: np.ndarray, size: int, rng: np.random.Generator, max_parents) -> np.ndarray:
    A = arcs.copy()
    N = A.shape[0]
    done = tries = 0
    while done < size and tries < 100 * (size + 1):
        tries += 1
        j, i = rng.choice(N, size=2, replace=False)
        B = A.copy()
        if B[j, i]:
            if rng.random() < 0.5:
                B[j, i] = False
            else:
                if not allowed[i, j]:
                    continue
                B[j, i], B[i, j] = False, True
        elif B[i, j] or not allowed[j, i]:
            continue
        else:
            B[j, i] = True
        if max_parents is not None and B.sum(axis=0).max() > max_parents:
            continue
        R = _closure(B)
        if np.any(np.diag(R)):
            continue
        A = B
        done += 1
    return A


def greedy_search(d: Dataset, score: Criterion, opts: GreedyOptions = GreedyOptions(),
                  start: Dag | None = None, candidates: dict[str, set[str]] | None = None,
                  trace: list | None = None) -> LearnOutcome:
    """Score-based search over single-arc additions, deletions and reversals.

    ``candidates`` restricts the parents of each node (used by the hybrid
    learners); a reversal is legal only if the new direction is allowed too.
    """
    t0 = time.perf_counter()
    before = score.calls
    nodes = list(d.names)
    pos = {n: i for i, n in enumerate(nodes)}
    N = len(nodes)
    allowed = np.ones((N, N), dtype=bool)
    if candidates is not None:
        allowed[:] = False
        for child, cset in candidates.items():
            for p in cset:
                allowed[pos[p], pos[child]] = True
    np.fill_diagonal(allowed, False)
    arcs = np.zeros((N, N), dtype=bool)
    if start is not None:
        for a, b in start.arcs:
            arcs[pos[a], pos[b]] = True
    s = _Search(score, nodes, allowed, opts.max_parents, arcs)
    best_score, best_arcs = _climb(s, opts.tabu_steps, opts.tabu_memory, trace)
    rng = np.random.default_rng(opts.seed)
    for _ in range(opts.restarts):
        perturbed = _perturb(best_arcs, allowed, opts.perturbation, rng, opts.max_parents)
        s = _Search(score, nodes, allowed, opts.max_parents, perturbed)
        sc, arcs_r = _climb(s, opts.tabu_steps, opts.tabu_memory)
        if sc > best_score + _eps(best_score):
            best_score, best_arcs = sc, arcs_r
    j, i = np.nonzero(best_arcs)
    dag = Dag(nodes, [(nodes[a], nodes[b]) for a, b in zip(j, i)])
    return LearnOutcome(dag, True, score.calls - before, time.perf_counter() - t0, {"score": best_score})
