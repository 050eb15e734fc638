"""Structure learners and a string-keyed front end for them."""

from __future__ import annotations

from typing import Mapping

from ..criteria import Criterion, parse_criterion
from ..model import Dataset
from .anneal import acceptance_probability, simulated_annealing
from .constraint import blanket_neighbours, grow_shrink, markov_blankets, orient, pc_skeleton, pc_stable
from .greedy import greedy_search
from .hybrid import candidate_parents, restrict_maximise
from .outcome import AnnealOptions, GreedyOptions, LearnOutcome

LEARNERS = ("pc-stable", "gs", "hc", "tabu", "sann", "mmhc", "rsmax2-like")
CONSTRAINT_BASED = ("pc-stable", "gs")

__all__ = [
    "AnnealOptions", "GreedyOptions", "LearnOutcome", "LEARNERS", "CONSTRAINT_BASED",
    "acceptance_probability", "blanket_neighbours", "candidate_parents", "greedy_search",
    "grow_shrink", "learn", "markov_blankets", "orient", "pc_skeleton", "pc_stable",
    "restrict_maximise", "simulated_annealing",
]


def _opt(options, key, default, cast):
    val = options.get(key, default)
    return None if val is None else cast(val)


def greedy_options(key: str, options: Mapping) -> GreedyOptions:
    tabu = key == "tabu"
    return GreedyOptions(
        tabu_steps=_opt(options, "tabu.t0", 10 if tabu else 0, int),
        tabu_memory=_opt(options, "tabu.t1", 10 if tabu else 0, int),
        restarts=_opt(options, "restarts", 0, int),
        perturbation=_opt(options, "perturbation", 3, int),
        max_parents=_opt(options, "max_parents", None, int),
        seed=_opt(options, "seed", 0, int),
    )


def anneal_options(options: Mapping) -> AnnealOptions:
    return AnnealOptions(
        iterations=_opt(options, "sann.iters", 500, int),
        beta0=_opt(options, "sann.beta0", 10.0, float),
        cooling=_opt(options, "sann.cool", 0.99, float),
        max_parents=_opt(options, "max_parents", 3, int),
    )


def learn(key: str, data: Dataset, criterion: str | Criterion, options: Mapping | None = None) -> LearnOutcome:
    """Run learner ``key`` with a fresh, counted instance of ``criterion``.

    Options use the config keys ``tabu.t0``, ``tabu.t1``, ``restarts``,
    ``sann.iters``, ``sann.beta0``, ``sann.cool``, ``max_parents``, ``seed``
    and ``max_sepset``.
    """
    options = dict(options or {})
    crit = criterion.fresh() if isinstance(criterion, Criterion) else parse_criterion(criterion, data)
    max_sepset = _opt(options, "max_sepset", None, int)
    if key == "pc-stable":
        return pc_stable(data, crit, max_sepset)
    if key == "gs":
        return grow_shrink(data, crit, max_sepset)
    if key not in LEARNERS:
        raise ValueError(f"unknown learner {key!r}; choose from {', '.join(LEARNERS)}")
    if not crit.has_score:
        raise ValueError(f"learner {key!r} needs a score; criterion {crit.key!r} is a test only")
    if key in ("hc", "tabu"):
        return greedy_search(data, crit, greedy_options(key, options))
    if key == "sann":
        return simulated_annealing(data, crit, anneal_options(options), seed=_opt(options, "seed", 0, int))
    restrict = "pc-skeleton" if key == "mmhc" else "gs-blanket"
    return restrict_maximise(data, crit, crit, restrict, "greedy", greedy_options(key, options),
                             max_sepset=max_sepset)
