from __future__ import annotations

from dataclasses import dataclass, field

from ..graph import Dag, Pdag


@dataclass
class LearnOutcome:
    """Result of one structure-learning run.

    ``valid`` is False when a constraint-based orientation failed; ``graph``
    then holds the diagnostic PDAG.  ``calls`` counts criterion invocations.
    """

    graph: Dag | Pdag
    valid: bool
    calls: int
    elapsed: float
    info: dict = field(default_factory=dict)

    @property
    def n_edges(self) -> int:
        g = self.graph
        return len(g.arcs) if isinstance(g, Dag) else g.n_edges()


@dataclass(frozen=True)
class GreedyOptions:
    tabu_steps: int = 0        # t0: non-improving steps allowed
    tabu_memory: int = 0       # t1: length of the tabu list
    restarts: int = 0          # r
    perturbation: int = 3      # random arc changes per restart
    max_parents: int | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("tabu_steps", "tabu_memory", "restarts", "perturbation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.max_parents is not None and self.max_parents < 0:
            raise ValueError("max_parents must be non-negative")


@dataclass(frozen=True)
class AnnealOptions:
    iterations: int = 500
    beta0: float = 10.0
    cooling: float = 0.99
    max_parents: int = 3

    def __post_init__(self):
        if self.iterations < 0 or self.max_parents < 0:
            raise ValueError("iterations and max_parents must be non-negative")
        if not self.beta0 > 0:
            raise ValueError("initial temperature must be positive")
        if not 0 < self.cooling < 1:
            raise ValueError("cooling factor must lie in (0, 1)")
