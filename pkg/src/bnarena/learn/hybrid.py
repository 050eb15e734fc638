"""Restrict-maximise hybrids: a constraint-based skeleton bounds a score-based search."""

from __future__ import annotations

import time

from ..criteria import Criterion
from ..model import Dataset
from .anneal import simulated_annealing
from .constraint import markov_blankets, pc_skeleton
from .greedy import greedy_search
from .outcome import AnnealOptions, GreedyOptions, LearnOutcome

RESTRICT = ("pc-skeleton", "gs-blanket")
MAXIMISE = ("greedy", "anneal")


def candidate_parents(d: Dataset, test: Criterion, restrict: str = "pc-skeleton",
                      max_sepset: int | None = None) -> dict[str, set[str]]:
    if restrict == "pc-skeleton":
        adj, _ = pc_skeleton(d, test, max_sepset)
        return {n: set(adj[n]) for n in d.names}
    if restrict == "gs-blanket":
        return {n: set(mb) for n, mb in markov_blankets(d, test).items()}
    raise ValueError(f"unknown restrict phase {restrict!r}")


def restrict_maximise(d: Dataset, test: Criterion, score: Criterion, restrict: str = "pc-skeleton",
                      maximise: str = "greedy", greedy: GreedyOptions = GreedyOptions(),
                      anneal: AnnealOptions = AnnealOptions(), seed: int = 0,
                      max_sepset: int | None = None) -> LearnOutcome:
    if maximise not in MAXIMISE:
        raise ValueError(f"unknown maximise phase {maximise!r}")
    t0 = time.perf_counter()
    t_before, s_before = test.calls, score.calls
    cands = candidate_parents(d, test, restrict, max_sepset)
    restrict_calls = test.calls - t_before
    if maximise == "greedy":
        out = greedy_search(d, score, greedy, candidates=cands)
    else:
        out = simulated_annealing(d, score, anneal, seed=seed, candidates=cands)
    calls = score.calls - s_before if test is score else restrict_calls + (score.calls - s_before)
    info = dict(out.info, candidates=cands, restrict_calls=restrict_calls)
    return LearnOutcome(out.graph, True, calls, time.perf_counter() - t0, info)
